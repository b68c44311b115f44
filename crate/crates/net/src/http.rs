//! Transports for the control service: WebSocket `/ws`, the static UI bundle
//! under `/ui/`, `/render/{viewId}.png`, and optionally raw framed TCP.

use std::future::Future;
use std::io;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Redirect, Response};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc};
use tower_http::services::ServeDir;

use crate::control::ControlService;
use crate::wire::{self, WireMessage};

const PLACEHOLDER: &str = "<!doctype html>\n<title>heprep viewer</title>\n<p>The browser UI bundle is not installed. The control service is available on <code>/ws</code>.</p>\n";

pub fn router(service: Arc<ControlService>, ui_dir: Option<PathBuf>) -> Router {
    let ui = match ui_dir {
        Some(dir) => Router::new().fallback_service(ServeDir::new(dir)),
        None => Router::new().fallback(|| async { Html(PLACEHOLDER) }),
    };
    Router::new()
        .route("/", get(|| async { Redirect::to("/ui/") }))
        .route("/ws", get(ws_upgrade))
        .route("/render/{file}", get(render))
        .nest_service("/ui", ui)
        .with_state(service)
}

async fn render(State(service): State<Arc<ControlService>>, Path(file): Path<String>) -> Response {
    let Some(view_id) = file.strip_suffix(".png").and_then(|s| s.parse::<u64>().ok()) else {
        return (StatusCode::NOT_FOUND, "expected /render/{viewId}.png").into_response();
    };
    match service.render_png(view_id).await {
        Ok(png) => ([(header::CONTENT_TYPE, "image/png")], png).into_response(),
        Err(("bad_view", m)) => (StatusCode::NOT_FOUND, m).into_response(),
        Err(("no_source", m)) => (StatusCode::CONFLICT, m).into_response(),
        Err((_, m)) => (StatusCode::INTERNAL_SERVER_ERROR, m).into_response(),
    }
}

async fn ws_upgrade(State(service): State<Arc<ControlService>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| ws_session(socket, service))
}

/// Next notification to forward; `None` once the service is gone.
async fn next_event(events: &mut broadcast::Receiver<WireMessage>) -> Option<WireMessage> {
    loop {
        match events.recv().await {
            Ok(m) => return Some(m),
            Err(broadcast::error::RecvError::Lagged(n)) => {
                tracing::warn!("client lagged, {n} notifications dropped");
            }
            Err(broadcast::error::RecvError::Closed) => return None,
        }
    }
}

fn decode_request(text: &str) -> Result<WireMessage, WireMessage> {
    WireMessage::from_json(text)
        .map_err(|e| WireMessage::error(wire::salvage_id(text), "bad_request", e.to_string()))
}

async fn ws_session(socket: WebSocket, service: Arc<ControlService>) {
    let (mut sink, mut stream) = socket.split();
    let mut events = service.subscribe();
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<WireMessage>();

    let writer = tokio::spawn(async move {
        loop {
            let msg = tokio::select! {
                m = out_rx.recv() => match m { Some(m) => m, None => break },
                n = next_event(&mut events) => match n { Some(n) => n, None => break },
            };
            if sink.send(Message::Text(msg.to_json().into())).await.is_err() {
                break;
            }
        }
    });

    while let Some(Ok(frame)) = stream.next().await {
        let text = match frame {
            Message::Text(t) => t.to_string(),
            Message::Binary(b) => match String::from_utf8(b.to_vec()) {
                Ok(t) => t,
                Err(_) => break,
            },
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match decode_request(&text) {
            Ok(req) => service.dispatch(req).await,
            Err(e) => e,
        };
        if out_tx.send(reply).is_err() {
            break;
        }
    }
    drop(out_tx);
    writer.abort();
}

async fn tcp_session(mut stream: TcpStream, service: Arc<ControlService>) {
    let (mut rd, mut wr) = stream.split();
    let mut events = service.subscribe();
    loop {
        tokio::select! {
            frame = wire::read_frame_async(&mut rd) => {
                let text = match frame {
                    Ok(Some(t)) => t,
                    Ok(None) => break,
                    Err(e) => {
                        tracing::warn!("closing control connection: {e}");
                        break;
                    }
                };
                let reply = match decode_request(&text) {
                    Ok(req) => service.dispatch(req).await,
                    Err(e) => e,
                };
                if wire::write_message_async(&mut wr, &reply).await.is_err() {
                    break;
                }
            }
            n = next_event(&mut events) => {
                let Some(n) = n else { break };
                if wire::write_message_async(&mut wr, &n).await.is_err() {
                    break;
                }
            }
        }
    }
}

/// Serves the control protocol as raw length-prefixed frames.
pub async fn serve_tcp(
    listener: TcpListener,
    service: Arc<ControlService>,
    shutdown: impl Future<Output = ()>,
) -> io::Result<()> {
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            _ = &mut shutdown => return Ok(()),
            accepted = listener.accept() => match accepted {
                Ok((s, _)) => { tokio::spawn(tcp_session(s, service.clone())); }
                Err(e) => tracing::warn!("accept failed: {e}"),
            }
        }
    }
}

/// Serves the HTTP/WebSocket surface until `shutdown` resolves.
pub async fn serve_http(
    listener: TcpListener,
    service: Arc<ControlService>,
    ui_dir: Option<PathBuf>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    axum::serve(listener, router(service, ui_dir))
        .with_graceful_shutdown(shutdown)
        .await
}

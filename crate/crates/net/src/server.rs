//! Reference event server: serves a directory of HepRep files over framed
//! TCP. The directory is scanned once at startup; file order defines indices.

use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde_json::json;
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::oneshot;

use heprep_core::xmlio::{self, XmlError};

use crate::wire::{self, Kind, WireMessage};

pub const DEFAULT_PORT: u16 = 7544;
pub const PROTOCOL: &str = xmlio::FORMAT_VERSION;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot read directory {}: {source}", path.display())]
    Directory { path: PathBuf, source: io::Error },
    #[error("cannot load {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot load {}: {source}", path.display())]
    BadFile { path: PathBuf, source: XmlError },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
}

impl ServerError {
    pub fn code(&self) -> &'static str {
        match self {
            ServerError::Directory { .. } | ServerError::Read { .. } => "io",
            ServerError::BadFile { source, .. } => source.code(),
            ServerError::Bind { .. } => "bind",
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    /// base64 of the uncompressed canonical serialization
    payload: String,
}

/// The immutable list of served events.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    entries: Vec<Entry>,
}

fn is_heprep_name(name: &str) -> bool {
    name.ends_with(".heprep") || name.ends_with(".heprep.gz")
}

impl Catalog {
    /// Loads every `*.heprep` / `*.heprep.gz` file of `dir`, in lexicographic
    /// file-name order. Any unparseable file fails the whole scan.
    pub fn scan(dir: &Path) -> Result<Self, ServerError> {
        let read_dir = std::fs::read_dir(dir).map_err(|source| ServerError::Directory {
            path: dir.to_owned(),
            source,
        })?;
        let mut files = Vec::new();
        for entry in read_dir {
            let entry = entry.map_err(|source| ServerError::Directory {
                path: dir.to_owned(),
                source,
            })?;
            let Ok(name) = entry.file_name().into_string() else {
                continue;
            };
            if is_heprep_name(&name) && entry.path().is_file() {
                files.push((name, entry.path()));
            }
        }
        files.sort();
        let mut entries = Vec::with_capacity(files.len());
        for (name, path) in files {
            let bytes = std::fs::read(&path).map_err(|source| ServerError::Read {
                path: path.clone(),
                source,
            })?;
            let doc = xmlio::parse(&bytes).map_err(|source| ServerError::BadFile {
                path: path.clone(),
                source,
            })?;
            let canonical = xmlio::serialize(&doc, false)
                .map_err(|source| ServerError::BadFile { path, source })?;
            entries.push(Entry {
                name,
                payload: B64.encode(canonical),
            });
        }
        Ok(Catalog { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }
}

/// Answers one message. Stateless.
pub fn handle(catalog: &Catalog, msg: &WireMessage) -> WireMessage {
    if msg.kind != Kind::Request {
        return WireMessage::error(msg.id, "bad_request", "expected a request");
    }
    let Some(method) = msg.method.as_deref() else {
        return WireMessage::error(msg.id, "bad_request", "request without method");
    };
    match method {
        "hello" => WireMessage::reply(msg.id, json!({ "protocol": PROTOCOL })),
        "list_events" => WireMessage::reply(
            msg.id,
            json!({ "count": catalog.len(), "names": catalog.names() }),
        ),
        "get_event" => {
            let Some(index) = msg.payload.get("index").and_then(|v| v.as_u64()) else {
                return WireMessage::error(
                    msg.id,
                    "bad_request",
                    "get_event needs a non-negative integer `index`",
                );
            };
            match usize::try_from(index).ok().and_then(|i| catalog.entries.get(i)) {
                Some(e) => WireMessage::reply(
                    msg.id,
                    json!({ "name": e.name, "heprep": e.payload }),
                ),
                None => WireMessage::error(
                    msg.id,
                    "range",
                    format!("event {index} out of range (count {})", catalog.len()),
                ),
            }
        }
        other => WireMessage::error(msg.id, "unknown_method", format!("no such method `{other}`")),
    }
}

async fn connection(mut stream: TcpStream, peer: SocketAddr, catalog: Arc<Catalog>) {
    loop {
        let text = match wire::read_frame_async(&mut stream).await {
            Ok(Some(text)) => text,
            Ok(None) => break,
            Err(e) => {
                tracing::warn!(%peer, "closing connection: {e}");
                break;
            }
        };
        let reply = match WireMessage::from_json(&text) {
            Ok(msg) => handle(&catalog, &msg),
            Err(e) => WireMessage::error(wire::salvage_id(&text), "bad_request", e.to_string()),
        };
        if let Err(e) = wire::write_message_async(&mut stream, &reply).await {
            tracing::warn!(%peer, "write failed: {e}");
            break;
        }
    }
}

/// Accepts connections until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    catalog: Arc<Catalog>,
    shutdown: impl Future<Output = ()>,
) -> io::Result<()> {
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            _ = &mut shutdown => return Ok(()),
            accepted = listener.accept() => {
                let (stream, peer) = match accepted {
                    Ok(a) => a,
                    Err(e) => {
                        tracing::warn!("accept failed: {e}");
                        continue;
                    }
                };
                tokio::spawn(connection(stream, peer, catalog.clone()));
            }
        }
    }
}

pub async fn bind(addr: &str) -> Result<TcpListener, ServerError> {
    TcpListener::bind(addr)
        .await
        .map_err(|source| ServerError::Bind {
            addr: addr.to_owned(),
            source,
        })
}

/// A server running on its own thread and runtime. Stops when dropped.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl BackgroundServer {
    pub fn start(catalog: Catalog, addr: &str) -> Result<Self, ServerError> {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .expect("tokio runtime");
        let listener = rt.block_on(bind(addr))?;
        let local = listener.local_addr().expect("bound socket has an address");
        let (tx, rx) = oneshot::channel();
        let catalog = Arc::new(catalog);
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let _ = serve(listener, catalog, async {
                    let _ = rx.await;
                })
                .await;
            });
        });
        Ok(BackgroundServer {
            addr: local,
            stop: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn uri(&self) -> String {
        format!("hep://{}", self.addr)
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

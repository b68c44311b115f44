//! The viewer's remote-control surface: one shared viewer state steered by
//! requests in the wire-message grammar.

use std::sync::{Arc, Mutex};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use tokio::sync::broadcast;

use heprep_core::pipeline::{render_document, OutputFormat};
use heprep_core::scene::{cull, depth_sort, flatten, pick, Camera, ViewProjection};
use heprep_core::{Color, Document, InstanceNode, InstancePath};

use crate::source::{self, EventCursor, EventSource, SourceUri};
use crate::wire::{Kind, WireMessage};

pub const STATE_CHANGED: &str = "state_changed";

/// Background of `render` replies; matches the batch renderer's default.
pub const RENDER_BACKGROUND: Color = Color::BLACK;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViewState {
    pub view_id: u64,
    pub camera: Camera,
    pub layer_order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViewerState {
    pub source: Option<String>,
    pub cursor: Option<EventCursor>,
    pub views: Vec<ViewState>,
    pub focused: u64,
    pub selected: Option<InstancePath>,
}

impl Default for ViewerState {
    fn default() -> Self {
        ViewerState {
            source: None,
            cursor: None,
            views: vec![ViewState {
                view_id: 1,
                camera: Camera::default(),
                layer_order: Vec::new(),
            }],
            focused: 1,
            selected: None,
        }
    }
}

impl ViewerState {
    fn view(&self, id: u64) -> Option<&ViewState> {
        self.views.iter().find(|v| v.view_id == id)
    }

    fn view_mut(&mut self, id: u64) -> Option<&mut ViewState> {
        self.views.iter_mut().find(|v| v.view_id == id)
    }
}

struct Fail {
    code: &'static str,
    message: String,
}

fn fail(code: &'static str, message: impl Into<String>) -> Fail {
    Fail {
        code,
        message: message.into(),
    }
}

type Outcome = Result<(Json, bool), Fail>;

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct OpenSource {
    uri: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ViewRef {
    view_id: u64,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SetCamera {
    view_id: u64,
    camera: Camera,
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct AddView {
    camera: Option<Camera>,
    layer_order: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SetLayers {
    view_id: u64,
    layer_order: Vec<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct Pick {
    view_id: u64,
    x: f64,
    y: f64,
    tol: f64,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct PathArg {
    path: Option<InstancePath>,
}

fn args<T: for<'de> Deserialize<'de>>(payload: &Json) -> Result<T, Fail> {
    let p = if payload.is_null() {
        &Json::Object(Default::default())
    } else {
        payload
    };
    T::deserialize(p).map_err(|e| fail("bad_request", e.to_string()))
}

/// Child counts, type paths and tree names, without points or attributes.
fn skeleton(node: &InstanceNode) -> Json {
    let name = node.type_path.rsplit('/').next().unwrap_or("");
    json!({
        "name": name,
        "typePath": node.type_path,
        "childCount": node.children.len(),
        "children": node.children.iter().map(skeleton).collect::<Vec<_>>(),
    })
}

/// Viewer state plus the open source and current event. All methods are
/// synchronous; [`ControlService`] serializes access.
#[derive(Default)]
pub struct Viewer {
    state: ViewerState,
    source: Option<Box<dyn EventSource>>,
    doc: Option<Arc<Document>>,
    next_view_id: u64,
}

impl Viewer {
    pub fn new() -> Self {
        Viewer {
            next_view_id: 2,
            ..Default::default()
        }
    }

    /// Starts with `uri` open at its first event.
    pub fn with_source(uri: &str) -> Result<Self, WireMessage> {
        let mut v = Viewer::new();
        let reply = v.apply(&WireMessage::request(0, "open_source", json!({ "uri": uri }))).0;
        if reply.kind == Kind::Error {
            return Err(reply);
        }
        Ok(v)
    }

    pub fn state(&self) -> &ViewerState {
        &self.state
    }

    pub fn document(&self) -> Option<&Arc<Document>> {
        self.doc.as_ref()
    }

    /// Applies one request. Returns the reply and whether state changed.
    /// Error replies never change state.
    pub fn apply(&mut self, msg: &WireMessage) -> (WireMessage, bool) {
        if msg.kind != Kind::Request {
            return (WireMessage::error(msg.id, "bad_request", "expected a request"), false);
        }
        let Some(method) = msg.method.as_deref() else {
            return (WireMessage::error(msg.id, "bad_request", "request without method"), false);
        };
        match self.dispatch(method, &msg.payload) {
            Ok((payload, changed)) => (WireMessage::reply(msg.id, payload), changed),
            Err(f) => (WireMessage::error(msg.id, f.code, f.message), false),
        }
    }

    fn dispatch(&mut self, method: &str, payload: &Json) -> Outcome {
        match method {
            "hello" => Ok((json!({ "protocol": crate::server::PROTOCOL }), false)),
            "open_source" => self.open_source(args(payload)?),
            "next_event" => self.step(true),
            "prev_event" => self.step(false),
            "get_tree" => self.get_tree(),
            "get_attributes" => self.get_attributes(args(payload)?),
            "set_camera" => self.set_camera(args(payload)?),
            "add_view" => self.add_view(args(payload)?),
            "remove_view" => self.remove_view(args(payload)?),
            "focus_view" => self.focus_view(args(payload)?),
            "set_layers" => self.set_layers(args(payload)?),
            "pick" => self.pick(args(payload)?),
            "select" => self.select(args(payload)?),
            "render" => self.render(args(payload)?),
            "get_state" => Ok((self.state_json(), false)),
            other => Err(fail("unknown_method", format!("no such method `{other}`"))),
        }
    }

    pub fn state_json(&self) -> Json {
        serde_json::to_value(&self.state).expect("state serializes")
    }

    fn doc(&self) -> Result<&Arc<Document>, Fail> {
        self.doc.as_ref().ok_or_else(|| fail("no_source", "no event source is open"))
    }

    fn view(&self, id: u64) -> Result<&ViewState, Fail> {
        self.state
            .view(id)
            .ok_or_else(|| fail("bad_view", format!("no view {id}")))
    }

    fn open_source(&mut self, a: OpenSource) -> Outcome {
        let source_err = |e: source::SourceError| fail(e.code(), e.to_string());
        let uri: SourceUri = a.uri.parse().map_err(source_err)?;
        let mut src = source::open(&uri).map_err(source_err)?;
        let count = src.count();
        let doc = if count > 0 {
            Some(Arc::new(src.get_event(0).map_err(source_err)?))
        } else {
            None
        };
        self.state.source = Some(uri.to_string());
        self.state.cursor = Some(EventCursor::new(count));
        self.state.selected = None;
        self.source = Some(src);
        self.doc = doc;
        Ok((json!({ "uri": uri.to_string(), "count": count }), true))
    }

    fn step(&mut self, forward: bool) -> Outcome {
        let cursor = self
            .state
            .cursor
            .ok_or_else(|| fail("no_source", "no event source is open"))?;
        let moved = if forward { cursor.next() } else { cursor.prev() };
        if moved == cursor {
            return Ok((json!({ "index": cursor.index }), false));
        }
        let src = self.source.as_mut().expect("cursor implies source");
        let doc = src
            .get_event(moved.index)
            .map_err(|e| fail(e.code(), e.to_string()))?;
        self.doc = Some(Arc::new(doc));
        self.state.cursor = Some(moved);
        self.state.selected = None;
        Ok((json!({ "index": moved.index }), true))
    }

    fn get_tree(&self) -> Outcome {
        let doc = self.doc()?;
        let trees: Vec<Json> = doc
            .instance_trees
            .iter()
            .map(|t| {
                json!({
                    "name": t.name,
                    "typeTree": t.type_tree,
                    "root": skeleton(&t.root),
                })
            })
            .collect();
        Ok((json!({ "trees": trees }), false))
    }

    fn get_attributes(&self, a: PathArg) -> Outcome {
        let doc = self.doc()?;
        let path = a.path.ok_or_else(|| fail("bad_request", "missing `path`"))?;
        let atts = doc
            .resolve_all_attributes(&path)
            .map_err(|e| fail("bad_path", e.to_string()))?;
        Ok((json!({ "path": path, "attributes": atts }), false))
    }

    fn set_camera(&mut self, a: SetCamera) -> Outcome {
        self.view(a.view_id)?;
        a.camera
            .validate()
            .map_err(|e| fail("bad_camera", e.to_string()))?;
        self.state.view_mut(a.view_id).expect("checked").camera = a.camera;
        Ok((json!({}), true))
    }

    fn add_view(&mut self, a: AddView) -> Outcome {
        let base = self.view(self.state.focused)?.clone();
        let camera = a.camera.unwrap_or(base.camera);
        camera
            .validate()
            .map_err(|e| fail("bad_camera", e.to_string()))?;
        let view_id = self.next_view_id;
        self.next_view_id += 1;
        self.state.views.push(ViewState {
            view_id,
            camera,
            layer_order: a.layer_order.unwrap_or(base.layer_order),
        });
        Ok((json!({ "viewId": view_id }), true))
    }

    fn remove_view(&mut self, a: ViewRef) -> Outcome {
        self.view(a.view_id)?;
        if self.state.views.len() == 1 {
            return Err(fail("last_view", "cannot remove the only view"));
        }
        self.state.views.retain(|v| v.view_id != a.view_id);
        if self.state.focused == a.view_id {
            self.state.focused = self.state.views[0].view_id;
        }
        Ok((json!({ "focused": self.state.focused }), true))
    }

    fn focus_view(&mut self, a: ViewRef) -> Outcome {
        self.view(a.view_id)?;
        let changed = self.state.focused != a.view_id;
        self.state.focused = a.view_id;
        Ok((json!({}), changed))
    }

    fn set_layers(&mut self, a: SetLayers) -> Outcome {
        self.view(a.view_id)?;
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = a.layer_order.iter().find(|l| !seen.insert(*l)) {
            return Err(fail("bad_request", format!("layer `{dup}` listed twice")));
        }
        self.state.view_mut(a.view_id).expect("checked").layer_order = a.layer_order;
        Ok((json!({}), true))
    }

    fn pick(&mut self, a: Pick) -> Outcome {
        let view = self.view(a.view_id)?;
        let doc = self.doc()?;
        if !(a.x.is_finite() && a.y.is_finite() && a.tol.is_finite() && a.tol >= 0.0) {
            return Err(fail("bad_request", "x, y and tol must be finite, tol non-negative"));
        }
        let vp = ViewProjection::new(&view.camera).map_err(|e| fail("bad_camera", e.to_string()))?;
        let layers = if view.layer_order.is_empty() {
            &doc.layer_order
        } else {
            &view.layer_order
        };
        let prims = depth_sort(&vp, cull(&vp, flatten(doc).primitives), layers);
        let hit = pick(&vp, &prims, a.x, a.y, a.tol);
        let changed = self.state.selected != hit;
        self.state.selected = hit.clone();
        Ok((json!({ "path": hit }), changed))
    }

    fn select(&mut self, a: PathArg) -> Outcome {
        if let Some(p) = &a.path {
            self.doc()?
                .resolve_path(p)
                .map_err(|e| fail("bad_path", e.to_string()))?;
        }
        let changed = self.state.selected != a.path;
        self.state.selected = a.path;
        Ok((json!({}), changed))
    }

    /// PNG of a view, identical to the batch renderer's output for the same
    /// document, camera and layers.
    pub fn render_png(&self, view_id: u64) -> Result<Vec<u8>, (&'static str, String)> {
        let view = self.view(view_id).map_err(|f| (f.code, f.message))?;
        let doc = self.doc().map_err(|f| (f.code, f.message))?;
        render_document(
            doc,
            &view.camera,
            &view.layer_order,
            RENDER_BACKGROUND,
            OutputFormat::Png,
        )
        .map(|r| r.bytes)
        .map_err(|e| ("bad_camera", e.to_string()))
    }

    fn render(&self, a: ViewRef) -> Outcome {
        let png = self
            .render_png(a.view_id)
            .map_err(|(code, message)| fail(code, message))?;
        Ok((json!({ "viewId": a.view_id, "png": B64.encode(png) }), false))
    }
}

/// Thread-safe wrapper: applies one request at a time and broadcasts a
/// `state_changed` notification (carrying the new state) after each change.
pub struct ControlService {
    viewer: Mutex<Viewer>,
    events: broadcast::Sender<WireMessage>,
}

impl ControlService {
    pub fn new(viewer: Viewer) -> Arc<Self> {
        let (events, _) = broadcast::channel(256);
        Arc::new(ControlService {
            viewer: Mutex::new(viewer),
            events,
        })
    }

    pub fn subscribe(&self) -> broadcast::Receiver<WireMessage> {
        self.events.subscribe()
    }

    /// Blocking dispatch. The notification is sent while the lock is held so
    /// broadcasts follow mutation order.
    pub fn dispatch_blocking(&self, msg: &WireMessage) -> WireMessage {
        let mut viewer = self.viewer.lock().unwrap_or_else(|p| p.into_inner());
        let (reply, changed) = viewer.apply(msg);
        if changed {
            let _ = self
                .events
                .send(WireMessage::notification(STATE_CHANGED, viewer.state_json()));
        }
        reply
    }

    pub async fn dispatch(self: &Arc<Self>, msg: WireMessage) -> WireMessage {
        let this = self.clone();
        tokio::task::spawn_blocking(move || this.dispatch_blocking(&msg))
            .await
            .unwrap_or_else(|e| WireMessage::error(0, "internal", e.to_string()))
    }

    pub async fn render_png(
        self: &Arc<Self>,
        view_id: u64,
    ) -> Result<Vec<u8>, (&'static str, String)> {
        let this = self.clone();
        tokio::task::spawn_blocking(move || {
            this.viewer
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .render_png(view_id)
        })
        .await
        .unwrap_or_else(|e| Err(("internal", e.to_string())))
    }

    pub fn state(&self) -> ViewerState {
        self.viewer
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .state()
            .clone()
    }
}

//! Networking for heprep-kit: the framed wire protocol, the reference event
//! server, event sources, and the viewer control service with its transports.

pub mod control;
pub mod http;
pub mod server;
pub mod source;
pub mod wire;

pub use control::{ControlService, Viewer, ViewerState};
pub use server::{BackgroundServer, Catalog};
pub use source::{EventCursor, EventSource, SourceUri};
pub use wire::WireMessage;

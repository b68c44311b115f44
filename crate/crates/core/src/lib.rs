//! Core of the HepRep event-display toolkit.
//!
//! * [`model`] holds the type/instance hierarchy and attribute inheritance.
//! * [`xmlio`] reads and writes the XML persistency format (optionally gzipped).
//! * [`scene`] flattens a document into wireframe primitives, projects them
//!   through a [`scene::Camera`], culls, depth-sorts and picks.
//! * [`export`] turns an ordered primitive list into PNG, PostScript or SVG.
//! * [`pipeline`] chains the above into the batch render path shared by the
//!   command line and the control service.

pub mod export;
pub mod model;
pub mod pipeline;
pub mod scene;
pub mod xmlio;

pub use model::{
    AttDef, AttValue, Color, Document, InstanceNode, InstancePath, InstanceTree, Origin,
    PathError, Point3, TypeNode, TypeTree, Value, Violation, ViolationCode,
};

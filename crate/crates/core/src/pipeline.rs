//! Batch render path: flatten, cull, depth-sort, export.

use std::str::FromStr;

use crate::export::{encode_png, export_vector, render_raster, ExportError, VectorFormat};
use crate::model::{Color, Document};
use crate::scene::{cull, depth_sort, flatten, Camera, CameraError, FlattenIssue, ViewProjection};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Png,
    PostScript,
    Svg,
}

impl OutputFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            OutputFormat::Png => "png",
            OutputFormat::PostScript => "ps",
            OutputFormat::Svg => "svg",
        }
    }

    /// Guess from a file extension.
    pub fn from_extension(path: &std::path::Path) -> Option<Self> {
        path.extension()?.to_str()?.parse().ok()
    }
}

impl FromStr for OutputFormat {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("png") {
            return Ok(OutputFormat::Png);
        }
        Ok(match s.parse::<VectorFormat>()? {
            VectorFormat::PostScript => OutputFormat::PostScript,
            VectorFormat::Svg => OutputFormat::Svg,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Rendered {
    pub bytes: Vec<u8>,
    /// Primitives produced by flattening.
    pub flattened: usize,
    /// Primitives left after culling (the ones handed to the exporter).
    pub drawn: usize,
    pub issues: Vec<FlattenIssue>,
}

/// Renders `doc` as seen by `cam`. A non-empty `layer_order` replaces the
/// document's own layer order.
pub fn render_document(
    doc: &Document,
    cam: &Camera,
    layer_order: &[String],
    background: Color,
    format: OutputFormat,
) -> Result<Rendered, CameraError> {
    let vp = ViewProjection::new(cam)?;
    let flat = flatten(doc);
    let flattened = flat.primitives.len();
    let layers = if layer_order.is_empty() {
        &doc.layer_order[..]
    } else {
        layer_order
    };
    let prims = depth_sort(&vp, cull(&vp, flat.primitives), layers);
    let bytes = match format {
        OutputFormat::Png => encode_png(&render_raster(&vp, &prims, background)),
        OutputFormat::PostScript => {
            export_vector(&vp, &prims, background, VectorFormat::PostScript)
        }
        OutputFormat::Svg => export_vector(&vp, &prims, background, VectorFormat::Svg),
    };
    Ok(Rendered {
        bytes,
        flattened,
        drawn: prims.len(),
        issues: flat.issues,
    })
}

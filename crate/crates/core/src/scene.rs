//! The representables pipeline: flatten, project, cull, depth-sort, pick.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    lookup, Color, Document, InstanceNode, InstancePath, Point3, TypeNode, Value,
};

pub const DEFAULT_LAYER: &str = "default";
pub const DEFAULT_LINE_WIDTH: f64 = 1.0;
pub const DEFAULT_MARKER_SIZE: f64 = 3.0;

// --- vector helpers -------------------------------------------------------

fn sub(a: Point3, b: Point3) -> Point3 {
    Point3::new(a.x - b.x, a.y - b.y, a.z - b.z)
}

fn dot(a: Point3, b: Point3) -> f64 {
    a.x * b.x + a.y * b.y + a.z * b.z
}

fn cross(a: Point3, b: Point3) -> Point3 {
    Point3::new(
        a.y * b.z - a.z * b.y,
        a.z * b.x - a.x * b.z,
        a.x * b.y - a.y * b.x,
    )
}

fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

fn scale(a: Point3, s: f64) -> Point3 {
    Point3::new(a.x * s, a.y * s, a.z * s)
}

// --- camera ---------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Projection {
    /// Vertical field of view in radians, in `(0, π)`.
    Perspective { fov_y: f64 },
    /// Visible height in world millimeters.
    Orthographic { height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Viewport {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub eye: Point3,
    pub target: Point3,
    pub up: Point3,
    pub projection: Projection,
    pub viewport: Viewport,
    pub near: f64,
    pub far: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CameraError {
    #[error("camera values must be finite")]
    NonFinite,
    #[error("eye and target coincide")]
    EyeAtTarget,
    #[error("up vector is zero or parallel to the view direction")]
    DegenerateUp,
    #[error("field of view must lie in (0, pi)")]
    BadFov,
    #[error("orthographic height must be positive")]
    BadOrthoHeight,
    #[error("clip range must satisfy 0 < near < far")]
    BadClipRange,
    #[error("viewport must be at least 1x1")]
    EmptyViewport,
}

/// Oblique z-up view of a detector about 2 m across, 800x800 pixels.
impl Default for Camera {
    fn default() -> Self {
        Camera {
            eye: Point3::new(3000.0, -2400.0, 1800.0),
            target: Point3::new(0.0, 0.0, 0.0),
            up: Point3::new(0.0, 0.0, 1.0),
            projection: Projection::Perspective {
                fov_y: 40f64.to_radians(),
            },
            viewport: Viewport {
                width: 800,
                height: 800,
            },
            near: 10.0,
            far: 20000.0,
        }
    }
}

impl Camera {
    pub fn validate(&self) -> Result<(), CameraError> {
        let scalars = [self.near, self.far];
        let proj = match self.projection {
            Projection::Perspective { fov_y } => fov_y,
            Projection::Orthographic { height } => height,
        };
        if !(self.eye.is_finite()
            && self.target.is_finite()
            && self.up.is_finite()
            && scalars.iter().all(|v| v.is_finite())
            && proj.is_finite())
        {
            return Err(CameraError::NonFinite);
        }
        let forward = sub(self.target, self.eye);
        if norm(forward) == 0.0 {
            return Err(CameraError::EyeAtTarget);
        }
        let side = cross(forward, self.up);
        if norm(self.up) == 0.0 || norm(side) <= 1e-12 * norm(forward) * norm(self.up) {
            return Err(CameraError::DegenerateUp);
        }
        match self.projection {
            Projection::Perspective { fov_y } => {
                if !(fov_y > 0.0 && fov_y < std::f64::consts::PI) {
                    return Err(CameraError::BadFov);
                }
            }
            Projection::Orthographic { height } => {
                if height <= 0.0 {
                    return Err(CameraError::BadOrthoHeight);
                }
            }
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(CameraError::BadClipRange);
        }
        if self.viewport.width == 0 || self.viewport.height == 0 {
            return Err(CameraError::EmptyViewport);
        }
        Ok(())
    }
}

/// A projected point. `depth` is 0 at the near plane and 1 at the far plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenPoint {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
}

/// View-space point: `x` right, `y` up, `d` distance along the view direction.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ViewPoint {
    x: f64,
    y: f64,
    d: f64,
}

/// Precomputed look-at basis and projection for one camera.
#[derive(Debug, Clone)]
pub struct ViewProjection {
    eye: Point3,
    right: Point3,
    up: Point3,
    forward: Point3,
    perspective: bool,
    /// NDC scale factors: `x_ndc = sx * x / d` (perspective) or `sx * x`.
    sx: f64,
    sy: f64,
    near: f64,
    far: f64,
    width: f64,
    height: f64,
}

impl ViewProjection {
    pub fn new(cam: &Camera) -> Result<Self, CameraError> {
        cam.validate()?;
        let forward = sub(cam.target, cam.eye);
        let forward = scale(forward, 1.0 / norm(forward));
        let right = cross(forward, cam.up);
        let right = scale(right, 1.0 / norm(right));
        let up = cross(right, forward);
        let width = f64::from(cam.viewport.width);
        let height = f64::from(cam.viewport.height);
        let aspect = width / height;
        let (perspective, sy) = match cam.projection {
            // libm keeps tan bit-identical across platforms.
            Projection::Perspective { fov_y } => (true, 1.0 / libm::tan(fov_y / 2.0)),
            Projection::Orthographic { height } => (false, 2.0 / height),
        };
        Ok(ViewProjection {
            eye: cam.eye,
            right,
            up,
            forward,
            perspective,
            sx: sy / aspect,
            sy,
            near: cam.near,
            far: cam.far,
            width,
            height,
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    fn to_view(&self, p: Point3) -> ViewPoint {
        let rel = sub(p, self.eye);
        ViewPoint {
            x: dot(rel, self.right),
            y: dot(rel, self.up),
            d: dot(rel, self.forward),
        }
    }

    fn in_depth_range(&self, v: ViewPoint) -> bool {
        v.d >= self.near && v.d <= self.far
    }

    fn view_to_screen(&self, v: ViewPoint) -> ScreenPoint {
        let (xn, yn, depth) = if self.perspective {
            let depth = self.far * (v.d - self.near) / ((self.far - self.near) * v.d);
            (self.sx * v.x / v.d, self.sy * v.y / v.d, depth)
        } else {
            let depth = (v.d - self.near) / (self.far - self.near);
            (self.sx * v.x, self.sy * v.y, depth)
        };
        ScreenPoint {
            x: (xn + 1.0) * 0.5 * self.width,
            y: (1.0 - yn) * 0.5 * self.height,
            depth,
        }
    }

    /// Screen position, or `None` when the point is outside the near/far range
    /// (which includes every point behind the eye).
    pub fn project(&self, p: Point3) -> Option<ScreenPoint> {
        let v = self.to_view(p);
        self.in_depth_range(v).then(|| self.view_to_screen(v))
    }

    /// Clips a world segment to the near/far slab and projects the remainder.
    pub fn project_segment(&self, a: Point3, b: Point3) -> Option<[ScreenPoint; 2]> {
        let (va, vb) = (self.to_view(a), self.to_view(b));
        let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
        let dd = vb.d - va.d;
        for (num, den) in [(va.d - self.near, dd), (self.far - va.d, -dd)] {
            // inside when num + t * den >= 0
            if den == 0.0 {
                if num < 0.0 {
                    return None;
                }
            } else {
                let t = -num / den;
                if den > 0.0 {
                    t0 = t0.max(t);
                } else {
                    t1 = t1.min(t);
                }
            }
        }
        if t0 > t1 {
            return None;
        }
        let at = |t: f64| {
            if t == 0.0 {
                va
            } else if t == 1.0 {
                vb
            } else {
                ViewPoint {
                    x: va.x + (vb.x - va.x) * t,
                    y: va.y + (vb.y - va.y) * t,
                    d: (va.d + dd * t).clamp(self.near, self.far),
                }
            }
        };
        Some([self.view_to_screen(at(t0)), self.view_to_screen(at(t1))])
    }
}

/// Projects one world point; `None` means clipped.
pub fn project(cam: &Camera, p: Point3) -> Result<Option<ScreenPoint>, CameraError> {
    Ok(ViewProjection::new(cam)?.project(p))
}

// --- primitives -----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// One point.
    Marker,
    /// Two or more points, open.
    Polyline,
    /// Three or more points, closed.
    Loop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Style {
    pub color: Color,
    pub line_width: f64,
    pub marker_size: f64,
}

impl Default for Style {
    fn default() -> Self {
        Style {
            color: Color::WHITE,
            line_width: DEFAULT_LINE_WIDTH,
            marker_size: DEFAULT_MARKER_SIZE,
        }
    }
}

impl Style {
    /// Side in pixels of the square stamped at each rasterized line pixel.
    pub fn stroke_px(&self) -> i64 {
        (self.line_width.round() as i64).max(1)
    }

    /// Side in pixels of a rasterized marker.
    pub fn marker_px(&self) -> i64 {
        (self.marker_size.round() as i64).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub points: Vec<Point3>,
    pub style: Style,
    pub layer: String,
    pub origin: InstancePath,
}

impl Primitive {
    /// World-space segments; loops include the closing edge.
    pub fn segments(&self) -> impl Iterator<Item = (Point3, Point3)> + '_ {
        let closing = match self.shape {
            Shape::Loop => self.points.last().copied().zip(self.points.first().copied()),
            _ => None,
        };
        self.points
            .windows(2)
            .map(|w| (w[0], w[1]))
            .chain(closing)
    }

    /// Largest raster footprint around any point of this primitive, in pixels.
    pub fn footprint_px(&self) -> f64 {
        let side = match self.shape {
            Shape::Marker => self.style.marker_px(),
            _ => self.style.stroke_px(),
        };
        (side / 2 + 1) as f64
    }
}

/// Screen-space geometry of one primitive after depth clipping.
#[derive(Debug, Clone, PartialEq)]
pub enum ScreenGeometry {
    Marker(Option<ScreenPoint>),
    Segments(Vec<[ScreenPoint; 2]>),
}

pub fn project_primitive(vp: &ViewProjection, prim: &Primitive) -> ScreenGeometry {
    match prim.shape {
        Shape::Marker => ScreenGeometry::Marker(prim.points.first().and_then(|&p| vp.project(p))),
        _ => ScreenGeometry::Segments(
            prim.segments()
                .filter_map(|(a, b)| vp.project_segment(a, b))
                .collect(),
        ),
    }
}

// --- flatten --------------------------------------------------------------

/// An instance that could not be turned into primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlattenIssue {
    pub path: InstancePath,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Flattened {
    pub primitives: Vec<Primitive>,
    pub issues: Vec<FlattenIssue>,
}

struct Flattener<'d> {
    /// Type chain (root first) for each type path of the current type tree.
    type_chains: HashMap<&'d str, Vec<&'d TypeNode>>,
    type_root: &'d TypeNode,
    out: Flattened,
}

impl<'d> Flattener<'d> {
    fn types_for(&mut self, path: &'d str) -> Vec<&'d TypeNode> {
        let root = self.type_root;
        self.type_chains
            .entry(path)
            .or_insert_with(|| {
                let mut segments = path.split('/');
                let mut chain = Vec::new();
                if segments.next() == Some(root.name.as_str()) {
                    let mut node = root;
                    chain.push(node);
                    for seg in segments {
                        match node.child(seg) {
                            Some(c) => {
                                node = c;
                                chain.push(node);
                            }
                            None => return Vec::new(),
                        }
                    }
                }
                chain
            })
            .clone()
    }

    fn visit(&mut self, stack: &mut Vec<&'d InstanceNode>, path: &mut InstancePath) {
        let node = *stack.last().expect("visit called with a node");
        let types = self.types_for(&node.type_path);
        let get = |name: &str| lookup(stack, &types, name).map(|(v, _)| &v.value);

        let visible = get("visibility").and_then(Value::as_bool).unwrap_or(true);
        if visible && !node.points.is_empty() {
            let style = Style {
                color: get("color").and_then(Value::as_color).unwrap_or(Color::WHITE),
                line_width: get("linewidth")
                    .and_then(Value::as_f64)
                    .filter(|w| w.is_finite() && *w >= 0.0)
                    .unwrap_or(DEFAULT_LINE_WIDTH),
                marker_size: get("markersize")
                    .and_then(Value::as_f64)
                    .filter(|w| w.is_finite() && *w >= 0.0)
                    .unwrap_or(DEFAULT_MARKER_SIZE),
            };
            let layer = get("layer")
                .and_then(Value::as_str)
                .unwrap_or(DEFAULT_LAYER)
                .to_owned();
            let drawas = get("drawas")
                .and_then(Value::as_str)
                .map(str::to_ascii_lowercase);
            self.emit(node, drawas.as_deref(), style, layer, path);
        }

        for (i, child) in node.children.iter().enumerate() {
            stack.push(child);
            path.indices.push(i);
            self.visit(stack, path);
            path.indices.pop();
            stack.pop();
        }
    }

    fn emit(
        &mut self,
        node: &InstanceNode,
        drawas: Option<&str>,
        style: Style,
        layer: String,
        path: &InstancePath,
    ) {
        let pts = &node.points;
        let prim = |shape, points: Vec<Point3>| Primitive {
            shape,
            points,
            style,
            layer: layer.clone(),
            origin: path.clone(),
        };
        let mut issue = |reason: String| {
            self.out.issues.push(FlattenIssue {
                path: path.clone(),
                reason,
            })
        };
        let emitted: Vec<Primitive> = match drawas {
            Some("point") => pts.iter().map(|&p| prim(Shape::Marker, vec![p])).collect(),
            Some("line") if pts.len() < 2 => {
                return issue(format!("line needs at least 2 points, has {}", pts.len()))
            }
            Some("line") => vec![prim(Shape::Polyline, pts.clone())],
            Some("polygon") if pts.len() < 3 => {
                return issue(format!("polygon needs at least 3 points, has {}", pts.len()))
            }
            Some("polygon") => vec![prim(Shape::Loop, pts.clone())],
            Some("prism") if !pts.len().is_multiple_of(2) || pts.len() < 6 => {
                return issue(format!(
                    "prism needs an even count of at least 6 points, has {}",
                    pts.len()
                ))
            }
            Some("prism") => {
                let n = pts.len() / 2;
                let (bottom, top) = pts.split_at(n);
                let mut v = vec![
                    prim(Shape::Loop, bottom.to_vec()),
                    prim(Shape::Loop, top.to_vec()),
                ];
                v.extend(
                    bottom
                        .iter()
                        .zip(top)
                        .map(|(&b, &t)| prim(Shape::Polyline, vec![b, t])),
                );
                v
            }
            // fallback: an isolated point can only be shown as a marker
            _ if pts.len() == 1 => vec![prim(Shape::Marker, pts.clone())],
            _ => vec![prim(Shape::Polyline, pts.clone())],
        };
        self.out.primitives.extend(emitted);
    }
}

/// Depth-first conversion of every instance tree into styled primitives.
///
/// Recognized attributes: `drawas` (`point`, `line`, `polygon`, `prism`;
/// anything else draws a polyline), `color` (white), `linewidth` (1),
/// `markersize` (3), `visibility` (true, hides only the node itself) and
/// `layer` (`"default"`). Prisms list the bottom face first, then the top face
/// in matching order.
pub fn flatten(doc: &Document) -> Flattened {
    let mut out = Flattened::default();
    for tree in &doc.instance_trees {
        let Some(type_tree) = doc.type_tree(&tree.type_tree) else {
            out.issues.push(FlattenIssue {
                path: InstancePath::root(&tree.name),
                reason: format!("unknown type tree `{}`", tree.type_tree),
            });
            continue;
        };
        let mut f = Flattener {
            type_chains: HashMap::new(),
            type_root: &type_tree.root,
            out,
        };
        let mut stack = vec![&tree.root];
        let mut path = InstancePath::root(&tree.name);
        f.visit(&mut stack, &mut path);
        out = f.out;
    }
    out
}

// --- culling --------------------------------------------------------------

/// Bounding sphere (centroid, max distance to centroid).
fn bounding_sphere(points: &[Point3]) -> (Point3, f64) {
    let n = points.len().max(1) as f64;
    let sum = points
        .iter()
        .fold(Point3::default(), |acc, p| Point3::new(acc.x + p.x, acc.y + p.y, acc.z + p.z));
    let c = scale(sum, 1.0 / n);
    let r = points
        .iter()
        .map(|&p| norm(sub(p, c)))
        .fold(0.0, f64::max);
    (c, r)
}

impl ViewProjection {
    /// Conservative test: false only if the sphere cannot touch any pixel
    /// within `margin_px` of the viewport inside the near/far range.
    fn sphere_visible(&self, center: Point3, radius: f64, margin_px: f64) -> bool {
        let v = self.to_view(center);
        let slack = 1e-9 * (norm(sub(center, self.eye)) + radius + 1.0);
        let r = radius + slack;
        if v.d + r < self.near || v.d - r > self.far {
            return false;
        }
        // half extents of the margin-expanded viewport in NDC-equivalent units
        let ex = (1.0 + 2.0 * margin_px / self.width) / self.sx;
        let ey = (1.0 + 2.0 * margin_px / self.height) / self.sy;
        if self.perspective {
            // side planes through the eye: |x| <= d * ex, |y| <= d * ey
            let nx = (1.0 + ex * ex).sqrt();
            let ny = (1.0 + ey * ey).sqrt();
            (v.d * ex - v.x) / nx >= -r
                && (v.d * ex + v.x) / nx >= -r
                && (v.d * ey - v.y) / ny >= -r
                && (v.d * ey + v.y) / ny >= -r
        } else {
            v.x.abs() - ex <= r && v.y.abs() - ey <= r
        }
    }
}

/// Drops primitives whose bounding sphere lies wholly outside the view frustum.
///
/// The frustum is widened by each primitive's raster footprint so culling
/// never changes rendered pixels.
pub fn cull(vp: &ViewProjection, prims: Vec<Primitive>) -> Vec<Primitive> {
    prims
        .into_iter()
        .filter(|p| {
            let (c, r) = bounding_sphere(&p.points);
            vp.sphere_visible(c, r, p.footprint_px())
        })
        .collect()
}

// --- depth sort -----------------------------------------------------------

/// Mean depth of the vertices that project un-clipped; 1.0 when none do.
pub fn mean_depth(vp: &ViewProjection, prim: &Primitive) -> f64 {
    let (sum, n) = prim
        .points
        .iter()
        .filter_map(|&p| vp.project(p))
        .fold((0.0, 0usize), |(s, n), sp| (s + sp.depth, n + 1));
    if n == 0 {
        1.0
    } else {
        sum / n as f64
    }
}

/// Layer rank: unlisted layers first (by name), then listed layers in order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum LayerRank<'a> {
    Unlisted(&'a str),
    Listed(usize),
}

pub fn layer_rank<'a>(layer: &'a str, order: &[String]) -> LayerRank<'a> {
    match order.iter().position(|l| l == layer) {
        Some(i) => LayerRank::Listed(i),
        None => LayerRank::Unlisted(layer),
    }
}

/// Painter's order: layer rank, then mean depth far-to-near, then input order.
pub fn depth_order(vp: &ViewProjection, prims: &[Primitive], layer_order: &[String]) -> Vec<usize> {
    let keys: Vec<_> = prims
        .iter()
        .map(|p| (layer_rank(&p.layer, layer_order), mean_depth(vp, p)))
        .collect();
    let mut idx: Vec<usize> = (0..prims.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ra, da) = &keys[a];
        let (rb, db) = &keys[b];
        ra.cmp(rb).then_with(|| db.total_cmp(da))
    });
    idx
}

pub fn depth_sort(vp: &ViewProjection, prims: Vec<Primitive>, layer_order: &[String]) -> Vec<Primitive> {
    let order = depth_order(vp, &prims, layer_order);
    let mut slots: Vec<Option<Primitive>> = prims.into_iter().map(Some).collect();
    order
        .into_iter()
        .map(|i| slots[i].take().expect("permutation"))
        .collect()
}

// --- picking --------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PickHit {
    pub index: usize,
    pub distance: f64,
    pub depth: f64,
}

/// Closest approach of `(x, y)` to a screen segment: (distance, depth there).
pub fn segment_approach(seg: &[ScreenPoint; 2], x: f64, y: f64) -> (f64, f64) {
    let [a, b] = seg;
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((x - a.x) * dx + (y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.x + t * dx, a.y + t * dy);
    let dist = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
    (dist, a.depth + t * (b.depth - a.depth))
}

/// Nearest approach of one primitive to the click; ties on distance keep the
/// smaller depth.
fn approach(vp: &ViewProjection, prim: &Primitive, x: f64, y: f64) -> Option<(f64, f64)> {
    match project_primitive(vp, prim) {
        ScreenGeometry::Marker(sp) => {
            sp.map(|p| (((x - p.x).powi(2) + (y - p.y).powi(2)).sqrt(), p.depth))
        }
        ScreenGeometry::Segments(segs) => segs
            .iter()
            .map(|s| segment_approach(s, x, y))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))),
    }
}

/// Among primitives passing within `tolerance_px` of `(x, y)`, the one with the
/// smallest depth at its nearest approach. Ties go to the smaller distance,
/// then to the later primitive (the one drawn on top).
pub fn pick_hit(
    vp: &ViewProjection,
    prims: &[Primitive],
    x: f64,
    y: f64,
    tolerance_px: f64,
) -> Option<PickHit> {
    let mut best: Option<PickHit> = None;
    for (index, prim) in prims.iter().enumerate() {
        let Some((distance, depth)) = approach(vp, prim, x, y) else {
            continue;
        };
        if distance > tolerance_px {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => match depth.total_cmp(&b.depth) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => distance <= b.distance,
            },
        };
        if better {
            best = Some(PickHit {
                index,
                distance,
                depth,
            });
        }
    }
    best
}

pub fn pick(
    vp: &ViewProjection,
    prims: &[Primitive],
    x: f64,
    y: f64,
    tolerance_px: f64,
) -> Option<InstancePath> {
    pick_hit(vp, prims, x, y, tolerance_px).map(|h| prims[h.index].origin.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InstanceTree, TypeTree};
    use std::f64::consts::FRAC_PI_2;

    pub(crate) fn axis_camera() -> Camera {
        Camera {
            eye: Point3::new(0.0, 0.0, 10.0),
            target: Point3::default(),
            up: Point3::new(0.0, 1.0, 0.0),
            projection: Projection::Perspective { fov_y: FRAC_PI_2 },
            viewport: Viewport {
                width: 400,
                height: 400,
            },
            near: 0.1,
            far: 100.0,
        }
    }

    fn doc_with(root: InstanceNode) -> Document {
        Document {
            type_trees: vec![TypeTree {
                name: "T".into(),
                version: String::new(),
                root: TypeNode::new("A"),
            }],
            instance_trees: vec![InstanceTree {
                name: "E".into(),
                version: String::new(),
                type_tree: "T".into(),
                root,
            }],
            layer_order: vec![],
        }
    }

    fn seg(layer: &str, z: f64, tag: usize) -> Primitive {
        Primitive {
            shape: Shape::Polyline,
            points: vec![Point3::new(-1.0, 0.0, z), Point3::new(1.0, 0.0, z)],
            style: Style::default(),
            layer: layer.into(),
            origin: InstancePath::new("E", [tag]),
        }
    }

    #[test]
    fn on_axis_point_hits_center() {
        let sp = project(&axis_camera(), Point3::default()).unwrap().unwrap();
        assert_eq!((sp.x, sp.y), (200.0, 200.0));
        assert!(sp.depth > 0.0 && sp.depth < 1.0);
    }

    #[test]
    fn behind_eye_is_clipped() {
        assert_eq!(project(&axis_camera(), Point3::new(0.0, 0.0, 20.0)), Ok(None));
        // beyond far
        assert_eq!(project(&axis_camera(), Point3::new(0.0, 0.0, -200.0)), Ok(None));
    }

    #[test]
    fn depth_is_zero_at_near_one_at_far() {
        let mut cam = axis_camera();
        cam.near = 0.5;
        cam.far = 64.0;
        let vp = ViewProjection::new(&cam).unwrap();
        let n = vp.project(Point3::new(0.0, 0.0, 9.5)).unwrap();
        let f = vp.project(Point3::new(0.0, 0.0, -54.0)).unwrap();
        assert!(n.depth.abs() < 1e-12);
        assert!((f.depth - 1.0).abs() < 1e-12);
    }

    #[test]
    fn camera_validation() {
        let mut c = axis_camera();
        c.target = c.eye;
        assert_eq!(c.validate(), Err(CameraError::EyeAtTarget));
        let mut c = axis_camera();
        c.up = Point3::new(0.0, 0.0, 1.0);
        assert_eq!(c.validate(), Err(CameraError::DegenerateUp));
        let mut c = axis_camera();
        c.projection = Projection::Perspective { fov_y: 0.0 };
        assert_eq!(c.validate(), Err(CameraError::BadFov));
        let mut c = axis_camera();
        c.near = 0.0;
        assert_eq!(c.validate(), Err(CameraError::BadClipRange));
        let mut c = axis_camera();
        c.viewport.width = 0;
        assert_eq!(c.validate(), Err(CameraError::EmptyViewport));
        let mut c = axis_camera();
        c.projection = Projection::Orthographic { height: -1.0 };
        assert_eq!(c.validate(), Err(CameraError::BadOrthoHeight));
    }

    #[test]
    fn segment_crossing_near_plane_is_trimmed() {
        let vp = ViewProjection::new(&axis_camera()).unwrap();
        let [a, b] = vp
            .project_segment(Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, 50.0))
            .unwrap();
        assert_eq!(a.depth, vp.project(Point3::default()).unwrap().depth);
        assert_eq!(b.depth, 0.0);
        assert!(vp
            .project_segment(Point3::new(0.0, 0.0, 11.0), Point3::new(1.0, 0.0, 12.0))
            .is_none());
    }

    #[test]
    fn flatten_line() {
        let doc = doc_with(
            InstanceNode::new("A")
                .with_value("drawas", Value::String("Line".into()))
                .with_points([Point3::default(); 3]),
        );
        let f = flatten(&doc);
        assert_eq!(f.primitives.len(), 1);
        assert_eq!(f.primitives[0].shape, Shape::Polyline);
        assert_eq!(f.primitives[0].points.len(), 3);
        assert_eq!(f.primitives[0].layer, DEFAULT_LAYER);
        assert_eq!(f.primitives[0].style, Style::default());
    }

    #[test]
    fn flatten_prism_covers_cube_edges() {
        let corners = [
            (0.0, 0.0, 0.0),
            (1.0, 0.0, 0.0),
            (1.0, 1.0, 0.0),
            (0.0, 1.0, 0.0),
            (0.0, 0.0, 1.0),
            (1.0, 0.0, 1.0),
            (1.0, 1.0, 1.0),
            (0.0, 1.0, 1.0),
        ]
        .map(|(x, y, z)| Point3::new(x, y, z));
        let doc = doc_with(
            InstanceNode::new("A")
                .with_value("drawas", Value::String("prism".into()))
                .with_points(corners),
        );
        let prims = flatten(&doc).primitives;
        assert_eq!(prims.len(), 6);
        let loops = prims.iter().filter(|p| p.shape == Shape::Loop).count();
        assert_eq!(loops, 2);

        // oracle: the 12 cube edges are the corner pairs differing in one axis
        let key = |p: Point3| (p.x as i32, p.y as i32, p.z as i32);
        let mut expected = Vec::new();
        for (i, a) in corners.iter().enumerate() {
            for b in &corners[i + 1..] {
                let diff = [a.x != b.x, a.y != b.y, a.z != b.z];
                if diff.iter().filter(|d| **d).count() == 1 {
                    let (ka, kb) = (key(*a), key(*b));
                    expected.push(if ka < kb { (ka, kb) } else { (kb, ka) });
                }
            }
        }
        expected.sort();
        let mut covered: Vec<_> = prims
            .iter()
            .flat_map(|p| p.segments().collect::<Vec<_>>())
            .map(|(a, b)| {
                let (ka, kb) = (key(a), key(b));
                if ka < kb { (ka, kb) } else { (kb, ka) }
            })
            .collect();
        covered.sort();
        covered.dedup();
        assert_eq!(expected.len(), 12);
        assert_eq!(covered, expected);
    }

    #[test]
    fn flatten_bad_prism_is_skipped_with_issue() {
        let doc = doc_with(
            InstanceNode::new("A")
                .with_value("drawas", Value::String("prism".into()))
                .with_points([Point3::default(); 5])
                .with_child(InstanceNode::new("A").with_points([Point3::default(); 2])),
        );
        let f = flatten(&doc);
        // the child inherits drawas=prism from its parent and is skipped too
        assert_eq!(f.issues.len(), 2);
        assert_eq!(f.issues[0].path, InstancePath::root("E"));
        assert_eq!(f.issues[1].path, InstancePath::new("E", [0]));
        assert!(f.primitives.is_empty());
    }

    #[test]
    fn invisible_parent_keeps_children() {
        let doc = doc_with(
            InstanceNode::new("A")
                .with_value("visibility", Value::Bool(false))
                .with_points([Point3::default(); 2])
                .with_child(
                    InstanceNode::new("A")
                        .with_value("visibility", Value::Bool(true))
                        .with_points([Point3::default(); 2]),
                ),
        );
        let prims = flatten(&doc).primitives;
        assert_eq!(prims.len(), 1);
        assert_eq!(prims[0].origin, InstancePath::new("E", [0]));
    }

    #[test]
    fn flatten_points_and_fallback() {
        let doc = doc_with(
            InstanceNode::new("A")
                .with_child(
                    InstanceNode::new("A")
                        .with_value("drawas", Value::String("point".into()))
                        .with_value("markersize", Value::Int(5))
                        .with_points([Point3::default(); 4]),
                )
                .with_child(
                    InstanceNode::new("A")
                        .with_value("drawas", Value::String("helix".into()))
                        .with_value("layer", Value::String("event".into()))
                        .with_points([Point3::default(); 2]),
                )
                .with_child(InstanceNode::new("A").with_points([Point3::default()])),
        );
        let prims = flatten(&doc).primitives;
        let shapes: Vec<_> = prims.iter().map(|p| p.shape).collect();
        assert_eq!(
            shapes,
            vec![
                Shape::Marker,
                Shape::Marker,
                Shape::Marker,
                Shape::Marker,
                Shape::Polyline,
                Shape::Marker
            ]
        );
        assert_eq!(prims[0].style.marker_size, 5.0);
        assert_eq!(prims[4].layer, "event");
    }

    #[test]
    fn painter_draws_far_first() {
        let vp = ViewProjection::new(&axis_camera()).unwrap();
        let prims = vec![seg("default", 5.0, 0), seg("default", -50.0, 1)];
        let sorted = depth_sort(&vp, prims, &[]);
        assert_eq!(sorted[0].origin, InstancePath::new("E", [1]));
    }

    #[test]
    fn layer_overrides_depth() {
        let vp = ViewProjection::new(&axis_camera()).unwrap();
        let prims = vec![seg("event", -50.0, 0), seg("detector", 5.0, 1)];
        let order = vec!["detector".to_string(), "event".to_string()];
        let sorted = depth_sort(&vp, prims, &order);
        assert_eq!(sorted[0].layer, "detector");
        assert_eq!(sorted[1].layer, "event");
    }

    #[test]
    fn unlisted_layers_come_first_by_name() {
        let vp = ViewProjection::new(&axis_camera()).unwrap();
        let prims = vec![
            seg("listed", -50.0, 0),
            seg("zeta", 0.0, 1),
            seg("alpha", 0.0, 2),
        ];
        let order = depth_order(&vp, &prims, &["listed".to_string()]);
        assert_eq!(order, vec![2, 1, 0]);
    }

    #[test]
    fn equal_keys_keep_input_order() {
        let vp = ViewProjection::new(&axis_camera()).unwrap();
        let prims = vec![seg("a", 0.0, 0), seg("a", 0.0, 1), seg("a", 0.0, 2)];
        assert_eq!(depth_order(&vp, &prims, &[]), vec![0, 1, 2]);
    }

    #[test]
    fn cull_removes_behind_and_keeps_center() {
        let vp = ViewProjection::new(&axis_camera()).unwrap();
        let kept = cull(&vp, vec![seg("a", 50.0, 0), seg("a", 0.0, 1)]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].origin, InstancePath::new("E", [1]));
        // far off to the side
        let mut side = seg("a", 0.0, 2);
        for p in &mut side.points {
            p.x += 1000.0;
        }
        assert!(cull(&vp, vec![side]).is_empty());
    }

    #[test]
    fn pick_segment_through_click() {
        let vp = ViewProjection::new(&axis_camera()).unwrap();
        let prims = vec![seg("a", 0.0, 7)];
        assert_eq!(
            pick(&vp, &prims, 200.0, 200.0, 2.0),
            Some(InstancePath::new("E", [7]))
        );
        assert_eq!(pick(&vp, &prims, 200.0, 250.0, 2.0), None);
    }

    #[test]
    fn pick_prefers_nearer_crossing_segment() {
        let vp = ViewProjection::new(&axis_camera()).unwrap();
        let far = seg("a", -5.0, 0);
        let mut near = seg("a", 5.0, 1);
        // vertical segment through the axis, nearer the eye
        near.points = vec![Point3::new(0.0, -1.0, 5.0), Point3::new(0.0, 1.0, 5.0)];
        let prims = vec![near, far];
        assert_eq!(
            pick(&vp, &prims, 200.0, 200.0, 1.0),
            Some(InstancePath::new("E", [1]))
        );
    }

    #[test]
    fn orbit_keeps_target_centered() {
        let mut cam = axis_camera();
        for k in 0..16 {
            let a = k as f64 * 0.39;
            cam.eye = Point3::new(10.0 * a.sin(), 3.0, 10.0 * a.cos());
            let sp = project(&cam, Point3::default()).unwrap().unwrap();
            assert!((sp.x - 200.0).abs() < 1e-6 && (sp.y - 200.0).abs() < 1e-6);
        }
    }
}

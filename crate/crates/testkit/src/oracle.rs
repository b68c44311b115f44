//! Brute-force reference implementations.

use nalgebra::{Matrix4, Point3 as NPoint, Vector3, Vector4};

use heprep_core::model::{Document, InstanceNode, InstancePath, Origin, TypeNode, Value};
use heprep_core::scene::{Camera, Primitive, Projection, ScreenPoint, Shape};

// --- attribute inheritance ------------------------------------------------

/// One entry of the fully materialized lookup chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainEntry {
    pub name: String,
    pub value: Value,
    pub origin: Origin,
}

/// Materializes the whole lookup chain for the instance at `path`: its own
/// values, each ancestor instance's from the parent upward, its type's, then
/// each ancestor type's. `None` if the path or type does not resolve.
pub fn linearize_chain(doc: &Document, path: &InstancePath) -> Option<Vec<ChainEntry>> {
    let tree = doc.instance_trees.iter().find(|t| t.name == path.tree)?;
    let mut nodes: Vec<&InstanceNode> = vec![&tree.root];
    for &i in &path.indices {
        nodes.push(nodes.last().unwrap().children.get(i)?);
    }
    let type_tree = doc.type_trees.iter().find(|t| t.name == tree.type_tree)?;
    let leaf = nodes.last().unwrap();
    let mut types: Vec<&TypeNode> = Vec::new();
    for (k, seg) in leaf.type_path.split('/').enumerate() {
        let next = if k == 0 {
            (type_tree.root.name == seg).then_some(&type_tree.root)
        } else {
            types.last().unwrap().children.iter().find(|c| c.name == seg)
        };
        types.push(next?);
    }

    let mut chain = Vec::new();
    for (up, node) in nodes.iter().rev().enumerate() {
        let origin = if up == 0 {
            Origin::Instance
        } else {
            Origin::AncestorInstance { levels_up: up }
        };
        for v in &node.att_values {
            chain.push(ChainEntry {
                name: v.name.clone(),
                value: v.value.clone(),
                origin,
            });
        }
    }
    for (up, node) in types.iter().rev().enumerate() {
        let origin = if up == 0 {
            Origin::Type
        } else {
            Origin::AncestorType { levels_up: up }
        };
        for v in &node.att_values {
            chain.push(ChainEntry {
                name: v.name.clone(),
                value: v.value.clone(),
                origin,
            });
        }
    }
    Some(chain)
}

/// First chain entry whose name matches case-insensitively.
pub fn scan_chain<'a>(chain: &'a [ChainEntry], name: &str) -> Option<&'a ChainEntry> {
    let key = name.to_lowercase();
    chain.iter().find(|e| e.name.to_lowercase() == key)
}

// --- projection -----------------------------------------------------------

/// Explicit look-at, projection and viewport matrices multiplied together.
/// Returns `None` when the point falls outside the near/far range.
pub fn project_matrix(cam: &Camera, p: heprep_core::Point3) -> Option<ScreenPoint> {
    let eye = NPoint::new(cam.eye.x, cam.eye.y, cam.eye.z);
    let target = NPoint::new(cam.target.x, cam.target.y, cam.target.z);
    let up = Vector3::new(cam.up.x, cam.up.y, cam.up.z);
    let view = Matrix4::look_at_rh(&eye, &target, &up);
    let (w, h) = (
        f64::from(cam.viewport.width),
        f64::from(cam.viewport.height),
    );
    let aspect = w / h;
    let proj = match cam.projection {
        Projection::Perspective { fov_y } => {
            Matrix4::new_perspective(aspect, fov_y, cam.near, cam.far)
        }
        Projection::Orthographic { height } => {
            let half_h = height / 2.0;
            let half_w = half_h * aspect;
            Matrix4::new_orthographic(-half_w, half_w, -half_h, half_h, cam.near, cam.far)
        }
    };
    // NDC [-1,1]^3 -> pixels (y down) and depth [0,1]
    #[rustfmt::skip]
    let viewport = Matrix4::new(
        w / 2.0, 0.0,      0.0, w / 2.0,
        0.0,     -h / 2.0, 0.0, h / 2.0,
        0.0,     0.0,      0.5, 0.5,
        0.0,     0.0,      0.0, 1.0,
    );
    let hom = Vector4::new(p.x, p.y, p.z, 1.0);
    let view_pos = view * hom;
    let distance = -view_pos.z;
    if distance < cam.near || distance > cam.far {
        return None;
    }
    let clip = proj * view_pos;
    let ndc = Vector4::new(clip.x / clip.w, clip.y / clip.w, clip.z / clip.w, 1.0);
    let s = viewport * ndc;
    Some(ScreenPoint {
        x: s.x,
        y: s.y,
        depth: s.z,
    })
}

/// View-space distance of `p` in front of the eye, for boundary filtering.
pub fn view_distance(cam: &Camera, p: heprep_core::Point3) -> f64 {
    let eye = NPoint::new(cam.eye.x, cam.eye.y, cam.eye.z);
    let target = NPoint::new(cam.target.x, cam.target.y, cam.target.z);
    let up = Vector3::new(cam.up.x, cam.up.y, cam.up.z);
    let view = Matrix4::look_at_rh(&eye, &target, &up);
    -(view * Vector4::new(p.x, p.y, p.z, 1.0)).z
}

pub fn close_rel(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

// --- depth sort -----------------------------------------------------------

/// Composite key: (listed?, listed index or name, negated mean depth).
fn sort_key<'a>(
    cam: &Camera,
    prim: &'a Primitive,
    layer_order: &[String],
) -> (bool, usize, &'a str, f64) {
    let listed = layer_order.iter().position(|l| *l == prim.layer);
    let depths: Vec<f64> = prim
        .points
        .iter()
        .filter_map(|&p| heprep_core::scene::project(cam, p).unwrap())
        .map(|s| s.depth)
        .collect();
    let mean = if depths.is_empty() {
        1.0
    } else {
        depths.iter().sum::<f64>() / depths.len() as f64
    };
    match listed {
        Some(i) => (true, i, "", -mean),
        None => (false, 0, prim.layer.as_str(), -mean),
    }
}

/// Selection sort over the composite key; ties resolve to the lower index.
pub fn sort_order(cam: &Camera, prims: &[Primitive], layer_order: &[String]) -> Vec<usize> {
    let keys: Vec<_> = prims
        .iter()
        .map(|p| sort_key(cam, p, layer_order))
        .collect();
    let mut remaining: Vec<usize> = (0..prims.len()).collect();
    let mut out = Vec::with_capacity(prims.len());
    while !remaining.is_empty() {
        let mut best = 0;
        for k in 1..remaining.len() {
            let (a, b) = (&keys[remaining[k]], &keys[remaining[best]]);
            let less = (a.0, a.1, a.2) < (b.0, b.1, b.2)
                || ((a.0, a.1, a.2) == (b.0, b.1, b.2) && a.3 < b.3);
            if less {
                best = k;
            }
        }
        out.push(remaining.remove(best));
    }
    out
}

// --- picking --------------------------------------------------------------

/// Every screen segment of every primitive tagged with its owner. Assumes no
/// vertex is depth-clipped. Markers appear as zero-length segments.
pub fn all_screen_segments(cam: &Camera, prims: &[Primitive]) -> Vec<(usize, ScreenPoint, ScreenPoint)> {
    let mut out = Vec::new();
    for (i, prim) in prims.iter().enumerate() {
        let pts: Vec<ScreenPoint> = prim
            .points
            .iter()
            .map(|&p| heprep_core::scene::project(cam, p).unwrap().expect("in range"))
            .collect();
        match prim.shape {
            Shape::Marker => out.push((i, pts[0], pts[0])),
            Shape::Polyline | Shape::Loop => {
                for k in 0..pts.len() - 1 {
                    out.push((i, pts[k], pts[k + 1]));
                }
                if prim.shape == Shape::Loop {
                    out.push((i, pts[pts.len() - 1], pts[0]));
                }
            }
        }
    }
    out
}

/// Distance from the click to the segment and the interpolated depth there.
pub fn approach(a: &ScreenPoint, b: &ScreenPoint, x: f64, y: f64) -> (f64, f64) {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((x - a.x) * dx + (y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.x + t * dx, a.y + t * dy);
    (
        ((x - cx).powi(2) + (y - cy).powi(2)).sqrt(),
        a.depth + t * (b.depth - a.depth),
    )
}

/// Brute force pick: each primitive's nearest approach over all its segments
/// (ties keep the smaller depth); among those within tolerance, the smallest
/// depth wins, then the smaller distance, then the later primitive.
pub fn pick(cam: &Camera, prims: &[Primitive], x: f64, y: f64, tol: f64) -> Option<usize> {
    let segs = all_screen_segments(cam, prims);
    let mut per_prim: Vec<Option<(f64, f64)>> = vec![None; prims.len()];
    for (i, a, b) in &segs {
        let (d, z) = approach(a, b, x, y);
        let slot = &mut per_prim[*i];
        let replace = match slot {
            None => true,
            Some((bd, bz)) => d < *bd || (d == *bd && z < *bz),
        };
        if replace {
            *slot = Some((d, z));
        }
    }
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, entry) in per_prim.iter().enumerate() {
        let Some((d, z)) = *entry else { continue };
        if d > tol {
            continue;
        }
        let take = match best {
            None => true,
            Some((_, bd, bz)) => z < bz || (z == bz && d <= bd),
        };
        if take {
            best = Some((i, d, z));
        }
    }
    best.map(|(i, _, _)| i)
}

//! Seeded random generators for documents, cameras and primitive scenes.

use rand::seq::SliceRandom;
use rand::Rng as _;

use heprep_core::model::{
    AttDef, AttValue, Color, Document, InstanceNode, InstancePath, InstanceTree, Point3, TypeNode,
    TypeTree, Value,
};
use heprep_core::scene::{Camera, Primitive, Projection, Shape, Style, Viewport};

use crate::Rng;

const ATT_NAMES: &[&str] = &[
    "color", "DrawAs", "layer", "LineWidth", "markersize", "energy", "momentum", "id", "label",
    "visibility", "charge", "Hits", "x:y", "été",
];

const TEXT_PIECES: &[&str] = &[
    "", "a", "Tracker", " spaced out ", "<tag>", "&amp;", "\"quoted\"", "'single'", "tab\there",
    "line\nbreak", "cr\rlf", "μ-on", "日本", "🙂", ">", "]]>", "=", "/",
];

fn text(rng: &mut Rng) -> String {
    let n = rng.gen_range(0..3);
    (0..n).map(|_| *TEXT_PIECES.choose(rng).unwrap()).collect()
}

pub fn real(rng: &mut Rng) -> f64 {
    match rng.gen_range(0..8) {
        0 => 0.0,
        1 => -0.0,
        2 => rng.gen_range(-1.0..1.0) * 1e300,
        3 => rng.gen_range(-1.0..1.0) * 1e-300,
        4 => f64::MIN_POSITIVE * rng.gen_range(0.0..1.0), // subnormals
        5 => rng.gen_range(-1e6..1e6_f64).round(),
        _ => rng.gen_range(-1e4..1e4),
    }
}

fn unit(rng: &mut Rng) -> f64 {
    match rng.gen_range(0..4) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.gen_range(0.0..=1.0),
    }
}

pub fn value(rng: &mut Rng) -> Value {
    match rng.gen_range(0..5) {
        0 => Value::String(text(rng)),
        1 => Value::Int(match rng.gen_range(0..3) {
            0 => i64::MIN,
            1 => i64::MAX,
            _ => rng.gen_range(-1000..1000),
        }),
        2 => Value::Real(real(rng)),
        3 => Value::Bool(rng.gen()),
        _ => Value::Color(Color::rgba(unit(rng), unit(rng), unit(rng), unit(rng))),
    }
}

fn att_values(rng: &mut Rng, max: usize) -> Vec<AttValue> {
    let n = rng.gen_range(0..=max);
    ATT_NAMES
        .choose_multiple(rng, n)
        .map(|name| AttValue::new(name, value(rng)))
        .collect()
}

fn type_node(rng: &mut Rng, name: String, depth: usize) -> TypeNode {
    let n_defs = rng.gen_range(0..3);
    let att_defs = ATT_NAMES
        .choose_multiple(rng, n_defs)
        .map(|n| AttDef::new(n, &text(rng), &text(rng), &text(rng)))
        .collect();
    let n_children = if depth >= 3 { 0 } else { rng.gen_range(0..4) };
    let children = (0..n_children)
        .map(|i| type_node(rng, format!("{name}{i}"), depth + 1))
        .collect();
    TypeNode {
        name,
        att_defs,
        att_values: att_values(rng, 4),
        children,
    }
}

fn type_paths(node: &TypeNode, prefix: &str, out: &mut Vec<String>) {
    let path = if prefix.is_empty() {
        node.name.clone()
    } else {
        format!("{prefix}/{}", node.name)
    };
    for c in &node.children {
        type_paths(c, &path, out);
    }
    out.push(path);
}

fn point(rng: &mut Rng) -> Point3 {
    Point3::new(real(rng), real(rng), real(rng))
}

fn instance(rng: &mut Rng, paths: &[String], depth: usize, budget: &mut usize) -> InstanceNode {
    *budget = budget.saturating_sub(1);
    let n_points = rng.gen_range(0..4);
    let n_children = if depth >= 4 || *budget == 0 {
        0
    } else {
        rng.gen_range(0..4)
    };
    let mut children = Vec::new();
    for _ in 0..n_children {
        if *budget == 0 {
            break;
        }
        children.push(instance(rng, paths, depth + 1, budget));
    }
    InstanceNode {
        type_path: paths.choose(rng).unwrap().clone(),
        points: (0..n_points).map(|_| point(rng)).collect(),
        att_values: att_values(rng, 4),
        children,
    }
}

/// A random document satisfying every model invariant.
pub fn document(rng: &mut Rng) -> Document {
    let n_type_trees = rng.gen_range(1..3);
    let type_trees: Vec<TypeTree> = (0..n_type_trees)
        .map(|i| TypeTree {
            name: format!("types{i}{}", text(rng)),
            version: text(rng),
            root: type_node(rng, format!("R{i}"), 0),
        })
        .collect();
    let n_instance_trees = rng.gen_range(0..3);
    let instance_trees = (0..n_instance_trees)
        .map(|i| {
            let tt = type_trees.choose(rng).unwrap();
            let mut paths = Vec::new();
            type_paths(&tt.root, "", &mut paths);
            let mut budget = 40;
            InstanceTree {
                name: format!("event{i}"),
                version: text(rng),
                type_tree: tt.name.clone(),
                root: instance(rng, &paths, 0, &mut budget),
            }
        })
        .collect();
    let mut layers = ["detector", "event", "hits", "", "Ä layer"];
    layers.shuffle(rng);
    let n_layers = rng.gen_range(0..=layers.len());
    Document {
        type_trees,
        instance_trees,
        layer_order: layers[..n_layers].iter().map(|s| s.to_string()).collect(),
    }
}

/// Every instance path of `doc`, depth first.
pub fn all_paths(doc: &Document) -> Vec<InstancePath> {
    fn walk(n: &InstanceNode, p: InstancePath, out: &mut Vec<InstancePath>) {
        for (i, c) in n.children.iter().enumerate() {
            walk(c, p.child(i), out);
        }
        out.push(p);
    }
    let mut out = Vec::new();
    for t in &doc.instance_trees {
        walk(&t.root, InstancePath::root(&t.name), &mut out);
    }
    out
}

/// Names worth querying: every pool name in a random case, plus an unknown one.
pub fn query_names(rng: &mut Rng) -> Vec<String> {
    let mut names: Vec<String> = ATT_NAMES
        .iter()
        .map(|n| {
            if rng.gen() {
                n.to_uppercase()
            } else {
                n.to_string()
            }
        })
        .collect();
    names.push("nonexistent".into());
    names
}

fn vec_in(rng: &mut Rng, r: f64) -> Point3 {
    Point3::new(
        rng.gen_range(-r..r),
        rng.gen_range(-r..r),
        rng.gen_range(-r..r),
    )
}

/// A valid random camera looking at a point near the origin.
pub fn camera(rng: &mut Rng) -> Camera {
    loop {
        let eye = vec_in(rng, 50.0);
        let target = vec_in(rng, 5.0);
        let up = vec_in(rng, 1.0);
        let projection = if rng.gen_bool(0.6) {
            Projection::Perspective {
                fov_y: rng.gen_range(0.2..2.8),
            }
        } else {
            Projection::Orthographic {
                height: rng.gen_range(5.0..80.0),
            }
        };
        let near = rng.gen_range(0.05..5.0);
        let cam = Camera {
            eye,
            target,
            up,
            projection,
            viewport: Viewport {
                width: rng.gen_range(16..160),
                height: rng.gen_range(16..160),
            },
            near,
            far: near + rng.gen_range(10.0..150.0),
        };
        let dir = Point3::new(eye.x - target.x, eye.y - target.y, eye.z - target.z);
        let dist = (dir.x * dir.x + dir.y * dir.y + dir.z * dir.z).sqrt();
        let c = Point3::new(
            dir.y * up.z - dir.z * up.y,
            dir.z * up.x - dir.x * up.z,
            dir.x * up.y - dir.y * up.x,
        );
        let upn = (up.x * up.x + up.y * up.y + up.z * up.z).sqrt();
        let sin = (c.x * c.x + c.y * c.y + c.z * c.z).sqrt() / (dist * upn);
        if dist > 0.5 && sin > 0.05 && cam.validate().is_ok() {
            return cam;
        }
    }
}

/// A random point anywhere around the camera's working volume.
pub fn world_point(rng: &mut Rng) -> Point3 {
    vec_in(rng, 120.0)
}

fn style(rng: &mut Rng) -> Style {
    Style {
        color: Color::rgba(unit(rng), unit(rng), unit(rng), unit(rng)),
        line_width: *[0.0, 0.5, 1.0, 2.0, 3.0, 4.6].choose(rng).unwrap(),
        marker_size: *[0.0, 1.0, 3.0, 4.0, 7.5].choose(rng).unwrap(),
    }
}

/// Random primitives: markers, polylines and loops of assorted sizes, some
/// behind the camera, some straddling the frustum, some tiny.
pub fn primitives(rng: &mut Rng, n: usize, spread: f64) -> Vec<Primitive> {
    const LAYERS: &[&str] = &["default", "detector", "event", "zeta", "alpha"];
    (0..n)
        .map(|i| {
            let shape = *[Shape::Marker, Shape::Polyline, Shape::Loop]
                .choose(rng)
                .unwrap();
            let count = match shape {
                Shape::Marker => 1,
                Shape::Polyline => rng.gen_range(2..6),
                Shape::Loop => rng.gen_range(3..6),
            };
            let center = vec_in(rng, spread);
            let size = *[0.01, 0.5, 3.0, 20.0, 200.0].choose(rng).unwrap();
            let points = (0..count)
                .map(|_| {
                    let d = vec_in(rng, size);
                    Point3::new(center.x + d.x, center.y + d.y, center.z + d.z)
                })
                .collect();
            Primitive {
                shape,
                points,
                style: style(rng),
                layer: LAYERS.choose(rng).unwrap().to_string(),
                origin: InstancePath::new("scene", [i]),
            }
        })
        .collect()
}

/// Primitives whose vertices all lie strictly inside the camera's near/far
/// range, so no depth clipping happens.
pub fn primitives_in_depth_range(rng: &mut Rng, cam: &Camera, n: usize) -> Vec<Primitive> {
    let fwd = {
        let d = Point3::new(
            cam.target.x - cam.eye.x,
            cam.target.y - cam.eye.y,
            cam.target.z - cam.eye.z,
        );
        let l = (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
        Point3::new(d.x / l, d.y / l, d.z / l)
    };
    let depth_of = |p: &Point3| {
        (p.x - cam.eye.x) * fwd.x + (p.y - cam.eye.y) * fwd.y + (p.z - cam.eye.z) * fwd.z
    };
    let lo = cam.near + 0.01 * (cam.far - cam.near);
    let hi = cam.far - 0.01 * (cam.far - cam.near);
    let mut out = Vec::new();
    while out.len() < n {
        let mut batch = primitives(rng, 1, 60.0);
        let mut p = batch.pop().unwrap();
        if p.points.iter().all(|q| (lo..hi).contains(&depth_of(q))) {
            p.origin = InstancePath::new("scene", [out.len()]);
            out.push(p);
        }
    }
    out
}

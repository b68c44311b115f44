//! Generator for the bundled GLAST-like fixture: a 4x4-tower silicon tracker,
//! a hodoscopic CsI calorimeter and a tiled anticoincidence shield, plus one
//! simple gamma-conversion event. Fully deterministic (no randomness).

use heprep_core::model::{
    AttDef, Color, Document, InstanceNode, InstanceTree, Point3, TypeNode, TypeTree, Value,
};

const TOWER_PITCH: f64 = 374.5;
const TRAY_SIDE: f64 = 362.0;
const TRAY_THICKNESS: f64 = 3.0;
const TRAYS: usize = 19;
const TRAY_PITCH: f64 = 32.0;
const CAL_LAYERS: usize = 8;
const CAL_LOGS: usize = 12;
const LOG_WIDTH: f64 = 27.0;
const LOG_HEIGHT: f64 = 20.0;
const ACD_TOP_Z: f64 = 700.0;

fn s(v: &str) -> Value {
    Value::String(v.into())
}

/// Axis-aligned box as a prism: bottom face (z = z0) then top face (z = z1).
fn boxed(cx: f64, cy: f64, hx: f64, hy: f64, z0: f64, z1: f64) -> Vec<Point3> {
    let face = |z| {
        [
            Point3::new(cx - hx, cy - hy, z),
            Point3::new(cx + hx, cy - hy, z),
            Point3::new(cx + hx, cy + hy, z),
            Point3::new(cx - hx, cy + hy, z),
        ]
    };
    face(z0).into_iter().chain(face(z1)).collect()
}

fn type_tree() -> TypeTree {
    let prism = |name: &str, color: Color| {
        TypeNode::new(name)
            .with_value("drawas", s("Prism"))
            .with_value("color", Value::Color(color))
    };
    let mut tower = TypeNode::new("Tower").with_child(prism("Tray", Color::rgb(0.45, 0.7, 1.0)));
    tower.att_defs.push(AttDef::new("tower", "tower index", "Physics", ""));
    let mut log = prism("Log", Color::rgb(0.3, 0.9, 0.4));
    log.att_defs
        .push(AttDef::new("energy", "deposited energy", "Physics", "MeV"));
    let detector = TypeNode::new("Detector")
        .with_value("layer", s("detector"))
        .with_child(TypeNode::new("TKR").with_child(tower))
        .with_child(TypeNode::new("CAL").with_child(TypeNode::new("Module").with_child(log)))
        .with_child(TypeNode::new("ACD").with_child(prism("Tile", Color::rgb(0.8, 0.8, 0.8))));
    let mut track = TypeNode::new("Track")
        .with_value("drawas", s("Line"))
        .with_value("color", Value::Color(Color::rgb(1.0, 0.2, 0.2)))
        .with_value("linewidth", Value::Real(2.0));
    track
        .att_defs
        .push(AttDef::new("energy", "track energy", "Physics", "MeV"));
    let event = TypeNode::new("Event")
        .with_value("layer", s("event"))
        .with_child(track)
        .with_child(
            TypeNode::new("Hit")
                .with_value("drawas", s("Point"))
                .with_value("color", Value::Color(Color::rgb(1.0, 1.0, 0.0)))
                .with_value("markersize", Value::Int(3)),
        )
        .with_child(
            TypeNode::new("Deposit")
                .with_value("drawas", s("Prism"))
                .with_value("color", Value::Color(Color::rgb(1.0, 0.6, 0.1))),
        );
    let mut root = TypeNode::new("GLAST")
        .with_child(detector)
        .with_child(event);
    root.att_defs
        .push(AttDef::new("drawas", "shape to draw", "Draw", ""));
    root.att_defs
        .push(AttDef::new("color", "line color", "Draw", ""));
    TypeTree {
        name: "GLAST".into(),
        version: "1.0".into(),
        root,
    }
}

fn tower_center(i: usize, j: usize) -> (f64, f64) {
    (
        (i as f64 - 1.5) * TOWER_PITCH,
        (j as f64 - 1.5) * TOWER_PITCH,
    )
}

fn tray_z(k: usize) -> f64 {
    30.0 + k as f64 * TRAY_PITCH
}

fn tracker() -> InstanceNode {
    let mut tkr = InstanceNode::new("GLAST/Detector/TKR");
    for j in 0..4 {
        for i in 0..4 {
            let (cx, cy) = tower_center(i, j);
            let mut tower = InstanceNode::new("GLAST/Detector/TKR/Tower")
                .with_value("tower", Value::Int((4 * j + i) as i64));
            for k in 0..TRAYS {
                let z = tray_z(k);
                let half = TRAY_SIDE / 2.0;
                tower = tower.with_child(
                    InstanceNode::new("GLAST/Detector/TKR/Tower/Tray")
                        .with_points(boxed(cx, cy, half, half, z, z + TRAY_THICKNESS)),
                );
            }
            tkr = tkr.with_child(tower);
        }
    }
    tkr
}

fn calorimeter() -> InstanceNode {
    let mut cal = InstanceNode::new("GLAST/Detector/CAL");
    for j in 0..4 {
        for i in 0..4 {
            let (cx, cy) = tower_center(i, j);
            let mut module = InstanceNode::new("GLAST/Detector/CAL/Module");
            for layer in 0..CAL_LAYERS {
                let z0 = -50.0 - (layer + 1) as f64 * (LOG_HEIGHT + 2.0);
                for n in 0..CAL_LOGS {
                    let offset = (n as f64 - 5.5) * (LOG_WIDTH + 1.0);
                    let half_len = 163.0;
                    // hodoscopic: alternate log orientation per layer
                    let points = if layer % 2 == 0 {
                        boxed(cx, cy + offset, half_len, LOG_WIDTH / 2.0, z0, z0 + LOG_HEIGHT)
                    } else {
                        boxed(cx + offset, cy, LOG_WIDTH / 2.0, half_len, z0, z0 + LOG_HEIGHT)
                    };
                    module = module.with_child(
                        InstanceNode::new("GLAST/Detector/CAL/Module/Log").with_points(points),
                    );
                }
            }
            cal = cal.with_child(module);
        }
    }
    cal
}

fn acd() -> InstanceNode {
    let mut acd = InstanceNode::new("GLAST/Detector/ACD");
    let tile = "GLAST/Detector/ACD/Tile";
    let extent = 2.0 * TOWER_PITCH + 30.0;
    let top_pitch = 2.0 * extent / 5.0;
    for j in 0..5 {
        for i in 0..5 {
            let cx = -extent + (i as f64 + 0.5) * top_pitch;
            let cy = -extent + (j as f64 + 0.5) * top_pitch;
            let h = top_pitch / 2.0 - 4.0;
            acd = acd.with_child(
                InstanceNode::new(tile).with_points(boxed(cx, cy, h, h, ACD_TOP_Z, ACD_TOP_Z + 10.0)),
            );
        }
    }
    // side tiles: four walls, 4 rows x 4 columns
    let row_height = 160.0;
    let col_pitch = 2.0 * extent / 4.0;
    for wall in 0..4 {
        for row in 0..4 {
            for col in 0..4 {
                let along = -extent + (col as f64 + 0.5) * col_pitch;
                let z0 = ACD_TOP_Z - (row + 1) as f64 * row_height;
                let (hx, hy, cx, cy) = match wall {
                    0 => (col_pitch / 2.0 - 4.0, 5.0, along, -extent - 10.0),
                    1 => (col_pitch / 2.0 - 4.0, 5.0, along, extent + 10.0),
                    2 => (5.0, col_pitch / 2.0 - 4.0, -extent - 10.0, along),
                    _ => (5.0, col_pitch / 2.0 - 4.0, extent + 10.0, along),
                };
                acd = acd.with_child(
                    InstanceNode::new(tile).with_points(boxed(cx, cy, hx, hy, z0, z0 + row_height - 6.0)),
                );
            }
        }
    }
    acd
}

fn event() -> InstanceNode {
    let vertex = Point3::new(60.0, -40.0, tray_z(14) + 1.0);
    let tracks = [
        (0.21, -0.12, 1.0, 812.5),
        (-0.15, 0.08, 1.0, 403.25),
        (0.02, 0.31, 1.0, 51.0),
    ];
    let mut ev = InstanceNode::new("GLAST/Event");
    for (dx, dy, _, energy) in tracks {
        let mut points = vec![vertex];
        let mut hits = Vec::new();
        for k in (0..14).rev() {
            let dz = vertex.z - tray_z(k) - 1.0;
            let p = Point3::new(vertex.x + dx * dz, vertex.y + dy * dz, tray_z(k) + 1.0);
            points.push(p);
            hits.push(p);
        }
        let exit_dz = vertex.z + 60.0;
        points.push(Point3::new(
            vertex.x + dx * exit_dz,
            vertex.y + dy * exit_dz,
            -60.0,
        ));
        let mut track = InstanceNode::new("GLAST/Event/Track")
            .with_value("energy", Value::Real(energy))
            .with_points(points);
        for h in hits {
            track = track.with_child(InstanceNode::new("GLAST/Event/Hit").with_points([h]));
        }
        ev = ev.with_child(track);
    }
    for (n, e) in [(0.0, 120.0), (1.0, 64.5), (-1.0, 30.25), (2.0, 8.0)] {
        let x = vertex.x + 0.05 * (vertex.z + 80.0) + n * 28.0;
        let z0 = -50.0 - n.abs().mul_add(22.0, 22.0);
        ev = ev.with_child(
            InstanceNode::new("GLAST/Event/Deposit")
                .with_value("energy", Value::Real(e))
                .with_value("color", Value::Color(Color::rgb(1.0, (0.9 - e / 150.0).max(0.0), 0.1)))
                .with_points(boxed(x, vertex.y, 13.5, 13.5, z0, z0 + LOG_HEIGHT)),
        );
    }
    ev
}

/// The fixture document. Serialized with compression it is the checked-in
/// `glast.heprep.gz`.
pub fn document() -> Document {
    let geometry = InstanceNode::new("GLAST").with_child(
        InstanceNode::new("GLAST/Detector")
            .with_child(tracker())
            .with_child(calorimeter())
            .with_child(acd()),
    );
    let ev = InstanceNode::new("GLAST").with_child(event());
    Document {
        type_trees: vec![type_tree()],
        instance_trees: vec![
            InstanceTree {
                name: "Geometry".into(),
                version: "1.0".into(),
                type_tree: "GLAST".into(),
                root: geometry,
            },
            InstanceTree {
                name: "Event".into(),
                version: "run 1 event 42".into(),
                type_tree: "GLAST".into(),
                root: ev,
            },
        ],
        layer_order: vec!["detector".into(), "event".into()],
    }
}

/// The view the goldens are rendered with. Equal to the command-line tool's
/// built-in default render configuration.
pub fn camera() -> heprep_core::scene::Camera {
    use heprep_core::scene::{Camera, Projection, Viewport};
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

pub const BACKGROUND: Color = Color::BLACK;

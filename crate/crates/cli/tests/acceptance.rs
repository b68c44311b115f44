//! End-to-end acceptance checks. Runs without the libtest harness so the
//! criteria execute one after another (the throughput timing is not shared
//! with other tests) and each prints a single PASS/FAIL line.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::Rng as _;
use serde_json::json;

use heprep_core::export::render_raster;
use heprep_core::pipeline::{render_document, OutputFormat};
use heprep_core::scene::{self, cull, depth_order, flatten, pick_hit, Camera, Projection, ViewProjection};
use heprep_core::{xmlio, Color, InstancePath, Point3};
use heprep_net::control::Viewer;
use heprep_net::server::{BackgroundServer, Catalog};
use heprep_net::source::{self, SourceUri};
use heprep_net::wire::{self, WireMessage};
use heprep_testkit::{gen, glast, mutate, oracle, read_data, rng, seed_event_dir, GLAST};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn xml_round_trip() -> Check {
    let start = Instant::now();
    for i in 0..1000u64 {
        let doc = gen::document(&mut rng(1_000 + i));
        for compress in [false, true] {
            let bytes = xmlio::serialize(&doc, compress).map_err(|e| format!("doc {i}: {e}"))?;
            let back = xmlio::parse(&bytes).map_err(|e| format!("doc {i} ({compress}): {e}"))?;
            ensure(back == doc, || format!("doc {i} differs after round trip (compress={compress})"))?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("1000 documents x 2 modes in {secs:.2} s"))
}

fn fuzz_robustness() -> Check {
    let minimal = read_data(heprep_testkit::MINIMAL);
    let (mut ok, mut errors) = (0, 0);
    for i in 0..10_000u64 {
        let mut r = rng(20_000 + i);
        let base = match i % 3 {
            0 => minimal.clone(),
            1 => xmlio::serialize(&gen::document(&mut r), false).unwrap(),
            _ => xmlio::serialize(&gen::document(&mut r), true).unwrap(),
        };
        let input = mutate::mutate(&mut r, &base);
        match catch_unwind(|| xmlio::parse(&input)) {
            Err(_) => return Err(format!("input {i} panicked")),
            Ok(Ok(doc)) => {
                let issues = doc.validate();
                ensure(issues.is_empty(), || format!("input {i} accepted an invalid document: {issues:?}"))?;
                ok += 1;
            }
            Ok(Err(e)) => {
                ensure(!e.code().is_empty() && !e.to_string().is_empty(), || format!("input {i}: blank error"))?;
                errors += 1;
            }
        }
    }
    Ok(format!("10000 inputs: {errors} structured errors, {ok} valid documents, 0 crashes"))
}

fn inheritance_oracle() -> Check {
    let mut queries = 0usize;
    for i in 0..1000u64 {
        let mut r = rng(40_000 + i);
        let doc = gen::document(&mut r);
        for path in gen::all_paths(&doc) {
            let chain = oracle::linearize_chain(&doc, &path).ok_or_else(|| format!("doc {i}: no chain for {path}"))?;
            for name in gen::query_names(&mut r) {
                let got = doc.resolve_attribute(&path, &name).map_err(|e| e.to_string())?;
                let want = oracle::scan_chain(&chain, &name);
                ensure(got.map(|v| &v.value) == want.map(|e| &e.value), || {
                    format!("doc {i}: {path} `{name}`: {got:?} vs {want:?}")
                })?;
                queries += 1;
            }
            for a in doc.resolve_all_attributes(&path).map_err(|e| e.to_string())? {
                let w = oracle::scan_chain(&chain, &a.name).ok_or_else(|| format!("doc {i}: extra `{}`", a.name))?;
                ensure(a.value == w.value && a.origin == w.origin, || format!("doc {i}: {path} `{}` origin", a.name))?;
            }
        }
    }
    Ok(format!("1000 documents, {queries} queries"))
}

fn projection_oracle() -> Check {
    let (mut compared, mut visible, mut boundary) = (0, 0, 0);
    let mut seed = 60_000u64;
    while compared < 10_000 {
        let mut r = rng(seed);
        seed += 1;
        let cam = gen::camera(&mut r);
        let p = gen::world_point(&mut r);
        // points within rounding distance of a clip plane have no stable answer
        let d = oracle::view_distance(&cam, p);
        let slack = 1e-9 * d.abs().max(1.0);
        if (d - cam.near).abs() < slack || (d - cam.far).abs() < slack {
            boundary += 1;
            continue;
        }
        compared += 1;
        let got = scene::project(&cam, p).map_err(|e| e.to_string())?;
        match (got, oracle::project_matrix(&cam, p)) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                visible += 1;
                for (axis, a, b) in [("x", g.x, w.x), ("y", g.y, w.y), ("depth", g.depth, w.depth)] {
                    ensure(oracle::close_rel(a, b, 1e-9), || format!("seed {}: {axis} {a} vs {b}", seed - 1))?;
                }
            }
            (g, w) => return Err(format!("seed {}: clip disagreement {g:?} vs {w:?}", seed - 1)),
        }
    }
    Ok(format!("10000 pairs ({visible} in view) within 1e-9 relative; {boundary} on-plane draws skipped"))
}

fn cull_soundness() -> Check {
    let (mut total, mut kept_total) = (0, 0);
    for i in 0..200u64 {
        let mut r = rng(80_000 + i);
        let cam = gen::camera(&mut r);
        let vp = ViewProjection::new(&cam).map_err(|e| e.to_string())?;
        let n = r.gen_range(1..60);
        let prims = gen::primitives(&mut r, n, 80.0);
        let kept = cull(&vp, prims.clone());
        total += prims.len();
        kept_total += kept.len();
        let full = render_raster(&vp, &prims, Color::BLACK);
        let culled = render_raster(&vp, &kept, Color::BLACK);
        ensure(full == culled, || format!("scene {i}: pixels differ"))?;
    }
    Ok(format!("200 scenes identical; {kept_total} of {total} primitives kept"))
}

fn depth_sort_oracle() -> Check {
    for i in 0..1000u64 {
        let mut r = rng(90_000 + i);
        let cam = gen::camera(&mut r);
        let vp = ViewProjection::new(&cam).map_err(|e| e.to_string())?;
        let n = r.gen_range(0..40);
        let prims = gen::primitives(&mut r, n, 80.0);
        let layers: Vec<String> = match r.gen_range(0..3) {
            0 => vec![],
            1 => vec!["event".into(), "detector".into()],
            _ => vec!["zeta".into(), "default".into(), "missing".into()],
        };
        let got = depth_order(&vp, &prims, &layers);
        let want = oracle::sort_order(&cam, &prims, &layers);
        ensure(got == want, || format!("list {i}: {got:?} vs {want:?}"))?;
    }
    Ok("1000 lists".into())
}

fn pick_oracle() -> Check {
    let (mut clicks, mut hits) = (0, 0);
    for i in 0..1000u64 {
        let mut r = rng(100_000 + i);
        let cam = gen::camera(&mut r);
        let vp = ViewProjection::new(&cam).map_err(|e| e.to_string())?;
        let n = r.gen_range(1..25);
        let prims = gen::primitives_in_depth_range(&mut r, &cam, n);
        let segs = oracle::all_screen_segments(&cam, &prims);
        for _ in 0..10 {
            let (x, y) = if !segs.is_empty() && r.gen_bool(0.6) {
                let (_, a, b) = segs[r.gen_range(0..segs.len())];
                let f = r.gen_range(0.0..1.0);
                (
                    a.x + f * (b.x - a.x) + r.gen_range(-4.0..4.0),
                    a.y + f * (b.y - a.y) + r.gen_range(-4.0..4.0),
                )
            } else {
                (r.gen_range(0.0..vp.width()), r.gen_range(0.0..vp.height()))
            };
            let tol = r.gen_range(0.5..8.0);
            let got = pick_hit(&vp, &prims, x, y, tol).map(|h| h.index);
            let want = oracle::pick(&cam, &prims, x, y, tol);
            ensure(got == want, || format!("scene {i} click ({x}, {y}) tol {tol}: {got:?} vs {want:?}"))?;
            clicks += 1;
            hits += usize::from(got.is_some());
        }
    }
    Ok(format!("1000 scenes, {clicks} clicks, {hits} hits"))
}

fn golden_outputs() -> Check {
    let doc = xmlio::parse(&read_data(GLAST)).map_err(|e| e.to_string())?;
    let n = flatten(&doc).primitives.len();
    ensure(n >= 10_000, || format!("fixture has only {n} primitives"))?;
    for (format, golden) in [
        (OutputFormat::Png, "glast.png"),
        (OutputFormat::PostScript, "glast.ps"),
        (OutputFormat::Svg, "glast.svg"),
    ] {
        let out = render_document(&doc, &glast::camera(), &[], glast::BACKGROUND, format)
            .map_err(|e| e.to_string())?;
        ensure(out.bytes == read_data(golden), || format!("{golden} differs"))?;
    }
    Ok(format!("PNG, PostScript and SVG byte-identical ({n} primitives)"))
}

fn call(s: &mut TcpStream, msg: &WireMessage) -> Result<WireMessage, String> {
    wire::write_message(s, msg).map_err(|e| e.to_string())?;
    wire::read_message(s)
        .map_err(|e| e.to_string())?
        .ok_or_else(|| "connection closed".to_string())
}

fn drain(s: &mut TcpStream) {
    let mut buf = [0u8; 4096];
    while let Ok(n) = s.read(&mut buf) {
        if n == 0 {
            break;
        }
    }
}

fn end_to_end_networking() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let files = seed_event_dir(dir.path());
    let srv = BackgroundServer::start(Catalog::scan(dir.path()).map_err(|e| e.to_string())?, "127.0.0.1:0")
        .map_err(|e| e.to_string())?;
    let uri: SourceUri = srv.uri().parse().map_err(|e: source::SourceError| e.to_string())?;

    let mut src = source::open(&uri).map_err(|e| e.to_string())?;
    ensure(src.count() == 3, || format!("count {}", src.count()))?;
    for (i, f) in files.iter().enumerate() {
        let direct = xmlio::parse(&std::fs::read(f).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure(src.get_event(i).map_err(|e| e.to_string())? == direct, || format!("event {i} differs"))?;
    }

    let addr = srv.addr;
    let fetch = move || -> Result<Vec<serde_json::Value>, String> {
        let mut s = TcpStream::connect(addr).map_err(|e| e.to_string())?;
        (0..3u64)
            .map(|i| call(&mut s, &WireMessage::request(i + 1, "get_event", json!({ "index": i }))).map(|r| r.payload))
            .collect()
    };
    let a = std::thread::spawn(fetch);
    let b = std::thread::spawn(fetch);
    let (a, b) = (a.join().map_err(|_| "client panicked")??, b.join().map_err(|_| "client panicked")??);
    ensure(a == b, || "concurrent payloads differ".into())?;

    let valid = wire::encode(&WireMessage::request(1, "get_event", json!({ "index": 0 })));
    let mut malformed: Vec<Vec<u8>> = vec![
        (wire::MAX_FRAME + 1).to_be_bytes().to_vec(),
        wire::frame(&[0xff, 0xfe, 0x00]),
        wire::frame(b"{not json"),
        wire::frame(br#"{"id":1,"kind":"request"}"#),
        valid[..valid.len() / 2].to_vec(),
    ];
    let mut r = rng(7);
    malformed.extend((0..300).map(|_| mutate::mutate(&mut r, &valid)));
    for bytes in &malformed {
        let mut s = TcpStream::connect(addr).map_err(|e| e.to_string())?;
        s.set_read_timeout(Some(Duration::from_millis(300))).ok();
        let _ = s.write_all(bytes);
        let _ = s.shutdown(std::net::Shutdown::Write);
        drain(&mut s);
    }
    let mut s = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    let r = call(&mut s, &WireMessage::request(9, "list_events", json!({})))?;
    ensure(r.payload["count"] == 3, || format!("server unhealthy after garbage: {}", r.payload))?;
    Ok(format!("3 events equal, 2 clients identical, {} malformed frames survived", malformed.len()))
}

/// Builds a 50-command session from a fixed script plus seeded choices.
fn record_session(hep_uri: &str, fixture_uri: &str) -> Vec<WireMessage> {
    let mut r = rng(4242);
    let mut cmds: Vec<(&str, serde_json::Value)> = vec![
        ("hello", json!({})),
        ("open_source", json!({ "uri": fixture_uri })),
        ("get_tree", json!({})),
        ("get_attributes", json!({ "path": InstancePath::new("Event", [0, 0]) })),
        ("add_view", json!({ "camera": Camera {
            projection: Projection::Orthographic { height: 3000.0 },
            eye: Point3::new(0.0, 0.0, 5000.0),
            up: Point3::new(0.0, 1.0, 0.0),
            ..Camera::default()
        } })),
        ("set_layers", json!({ "viewId": 2, "layerOrder": ["event", "detector"] })),
        ("render", json!({ "viewId": 2 })),
        ("remove_view", json!({ "viewId": 7 })),
    ];
    while cmds.len() < 40 {
        let cmd = match r.gen_range(0..8) {
            0 => {
                let a: f64 = r.gen_range(0.0..std::f64::consts::TAU);
                let cam = Camera {
                    eye: Point3::new(3500.0 * a.cos(), 3500.0 * a.sin(), r.gen_range(-2000.0..2000.0)),
                    ..Camera::default()
                };
                ("set_camera", json!({ "viewId": r.gen_range(1..3), "camera": cam }))
            }
            1 | 2 => (
                "pick",
                json!({ "viewId": r.gen_range(1..3), "x": r.gen_range(0.0..800.0),
                        "y": r.gen_range(0.0..800.0), "tol": r.gen_range(1.0..6.0) }),
            ),
            3 => ("focus_view", json!({ "viewId": r.gen_range(1..4) })),
            4 => ("select", json!({ "path": InstancePath::new("Geometry", [r.gen_range(0..3)]) })),
            5 => ("get_state", json!({})),
            6 => ("set_camera", json!({ "viewId": 1, "camera": { "near": 0 } })),
            _ => ("get_attributes", json!({ "path": InstancePath::new("Event", [r.gen_range(0..4)]) })),
        };
        cmds.push(cmd);
    }
    cmds.extend([
        ("open_source", json!({ "uri": hep_uri })),
        ("next_event", json!({})),
        ("next_event", json!({})),
        ("next_event", json!({})),
        ("prev_event", json!({})),
        ("add_view", json!({})),
        ("remove_view", json!({ "viewId": 1 })),
        ("set_layers", json!({ "viewId": 3, "layerOrder": ["detector"] })),
        ("pick", json!({ "viewId": 2, "x": 400.0, "y": 400.0, "tol": 8.0 })),
        ("get_state", json!({})),
    ]);
    cmds.into_iter()
        .enumerate()
        .map(|(i, (m, p))| WireMessage::request(i as u64 + 1, m, p))
        .collect()
}

struct Replay {
    replies: Vec<WireMessage>,
    state: serde_json::Value,
    renders: Vec<Vec<u8>>,
}

fn replay(session: &[WireMessage]) -> Result<Replay, String> {
    let mut v = Viewer::new();
    let replies: Vec<WireMessage> = session.iter().map(|m| v.apply(m).0).collect();
    let state = v.apply(&WireMessage::request(1000, "get_state", json!({}))).0.payload;
    let mut renders = Vec::new();
    for view in state["views"].as_array().ok_or("no views")? {
        let id = &view["viewId"];
        let r = v.apply(&WireMessage::request(1001, "render", json!({ "viewId": id }))).0;
        let png = r.payload["png"].as_str().ok_or_else(|| format!("render failed: {}", r.payload))?;
        renders.push(B64.decode(png).map_err(|e| e.to_string())?);
    }
    Ok(Replay { replies, state, renders })
}

fn control_replay() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    seed_event_dir(dir.path());
    let srv = BackgroundServer::start(Catalog::scan(dir.path()).map_err(|e| e.to_string())?, "127.0.0.1:0")
        .map_err(|e| e.to_string())?;
    let fixture = SourceUri::file(heprep_testkit::data_path(GLAST)).to_string();
    let session = record_session(&srv.uri(), &fixture);
    ensure(session.len() == 50, || format!("session has {} commands", session.len()))?;

    // record to disk as one JSON message per line, then replay from the file
    let log = dir.path().join("session.jsonl");
    let text: String = session.iter().map(|m| m.to_json() + "\n").collect();
    std::fs::write(&log, text).map_err(|e| e.to_string())?;
    let first = replay(&session)?;
    let loaded: Vec<WireMessage> = std::fs::read_to_string(&log)
        .map_err(|e| e.to_string())?
        .lines()
        .map(WireMessage::from_json)
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let second = replay(&loaded)?;

    ensure(first.state == second.state, || "final get_state differs".into())?;
    ensure(first.renders == second.renders, || "render bytes differ".into())?;
    let same_replies = first.replies.iter().zip(&second.replies).all(|(a, b)| a.payload == b.payload);
    ensure(same_replies, || "replies differ".into())?;
    let errors = first.replies.iter().filter(|m| m.error_info().is_some()).count();
    ensure(first.state["cursor"]["index"] == 1, || format!("unexpected cursor {}", first.state["cursor"]))?;
    Ok(format!(
        "50 commands ({errors} rejected) replayed to identical state and {} identical renders",
        first.renders.len()
    ))
}

fn batch_throughput() -> Check {
    let bytes = read_data(GLAST);
    let start = Instant::now();
    let doc = xmlio::parse(&bytes).map_err(|e| e.to_string())?;
    let out = render_document(&doc, &Camera::default(), &[], Color::BLACK, OutputFormat::Png)
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(out.flattened >= 10_000, || format!("only {} primitives", out.flattened))?;
    ensure(secs < 1.0, || format!("took {secs:.3} s"))?;
    Ok(format!("{} primitives at 800x800 in {secs:.3} s (parse included)", out.flattened))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("batch throughput", batch_throughput),
        ("xml round trip", xml_round_trip),
        ("fuzz robustness", fuzz_robustness),
        ("inheritance oracle", inheritance_oracle),
        ("projection oracle", projection_oracle),
        ("cull soundness", cull_soundness),
        ("depth-sort oracle", depth_sort_oracle),
        ("pick oracle", pick_oracle),
        ("golden outputs", golden_outputs),
        ("end-to-end networking", end_to_end_networking),
        ("control replay", control_replay),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

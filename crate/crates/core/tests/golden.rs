//! Frozen outputs for the bundled fixtures. Regenerate with HEPREP_BLESS=1.

use std::time::Instant;

use heprep_core::export::decode_png;
use heprep_core::pipeline::{render_document, OutputFormat};
use heprep_core::scene::{Camera, Viewport};
use heprep_core::{xmlio, Document};
use heprep_testkit::{check_golden, glast, read_data};

fn fixture() -> Document {
    xmlio::parse(&read_data(heprep_testkit::GLAST)).unwrap()
}

#[test]
fn fixture_file_matches_generator() {
    let generated = glast::document();
    if heprep_testkit::blessing() {
        check_golden(heprep_testkit::GLAST, &xmlio::serialize(&generated, true).unwrap()).unwrap();
    }
    assert_eq!(fixture(), generated);
}

#[test]
fn fixture_is_large_enough() {
    let flat = heprep_core::scene::flatten(&fixture());
    assert!(flat.issues.is_empty(), "{:?}", flat.issues);
    assert!(flat.primitives.len() >= 10_000, "{}", flat.primitives.len());
}

fn render(format: OutputFormat) -> Vec<u8> {
    render_document(&fixture(), &glast::camera(), &[], glast::BACKGROUND, format)
        .unwrap()
        .bytes
}

#[test]
fn png_golden() {
    check_golden("glast.png", &render(OutputFormat::Png)).unwrap();
}

#[test]
fn postscript_golden() {
    check_golden("glast.ps", &render(OutputFormat::PostScript)).unwrap();
}

#[test]
fn svg_golden() {
    check_golden("glast.svg", &render(OutputFormat::Svg)).unwrap();
}

#[test]
fn empty_scene_postscript_golden() {
    let doc = xmlio::parse(&read_data("empty.heprep")).unwrap();
    let out = render_document(&doc, &glast::camera(), &[], glast::BACKGROUND, OutputFormat::PostScript)
        .unwrap();
    assert_eq!(out.drawn, 0);
    check_golden("empty.ps", &out.bytes).unwrap();
}

#[test]
fn minimal_png_golden() {
    let doc = xmlio::parse(&read_data(heprep_testkit::MINIMAL)).unwrap();
    let cam = Camera {
        viewport: Viewport { width: 64, height: 48 },
        ..glast::camera()
    };
    let out = render_document(&doc, &cam, &[], glast::BACKGROUND, OutputFormat::Png).unwrap();
    assert_eq!(out.drawn, 1);
    check_golden("minimal.png", &out.bytes).unwrap();
}

#[test]
fn png_golden_decodes_to_drawn_pixels() {
    let img = decode_png(&read_data("glast.png")).unwrap();
    assert_eq!((img.width, img.height), (800, 800));
    let lit = (0..800)
        .flat_map(|y| (0..800).map(move |x| (x, y)))
        .filter(|&(x, y)| img.pixel(x, y) != [0, 0, 0, 255])
        .count();
    assert!(lit > 10_000, "{lit} lit pixels");
}

#[test]
fn render_is_repeatable() {
    let t = Instant::now();
    let a = render(OutputFormat::Png);
    let b = render(OutputFormat::Png);
    assert_eq!(a, b);
    eprintln!("two renders: {:?}", t.elapsed());
}

#[test]
fn golden_camera_is_the_default_camera() {
    assert_eq!(glast::camera(), Camera::default());
}

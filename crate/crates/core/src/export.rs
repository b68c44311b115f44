//! Raster (PNG) and vector (PostScript, SVG) output of an ordered primitive list.
//!
//! Primitives are drawn in the order given; callers cull and depth-sort first.
//! Neither path blends: alpha below one is drawn opaque.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::model::Color;
use crate::scene::{project_primitive, Primitive, ScreenGeometry, ScreenPoint, ViewProjection};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("unknown output format `{0}` (expected png, ps or svg)")]
    UnknownFormat(String),
    #[error("png: {0}")]
    Png(String),
}

/// Row-major RGBA8 image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl RasterImage {
    pub fn filled(width: u32, height: u32, rgba: [u8; 4]) -> Self {
        let n = width as usize * height as usize;
        RasterImage {
            width,
            height,
            pixels: rgba.repeat(n),
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = 4 * (y as usize * self.width as usize + x as usize);
        self.pixels[i..i + 4].try_into().expect("4 bytes")
    }

    fn put(&mut self, x: i64, y: i64, rgba: [u8; 4]) {
        if x < 0 || y < 0 || x >= i64::from(self.width) || y >= i64::from(self.height) {
            return;
        }
        let i = 4 * (y as usize * self.width as usize + x as usize);
        self.pixels[i..i + 4].copy_from_slice(&rgba);
    }

    fn stamp(&mut self, x: i64, y: i64, side: i64, rgba: [u8; 4]) {
        let start = -(side / 2);
        for dy in start..start + side {
            for dx in start..start + side {
                self.put(x + dx, y + dy, rgba);
            }
        }
    }
}

/// Liang–Barsky clip of a 2D segment to an axis-aligned rectangle.
fn clip_to_rect(
    a: (f64, f64),
    b: (f64, f64),
    min: (f64, f64),
    max: (f64, f64),
) -> Option<((f64, f64), (f64, f64))> {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
    for (p, q) in [
        (-dx, a.0 - min.0),
        (dx, max.0 - a.0),
        (-dy, a.1 - min.1),
        (dy, max.1 - a.1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 > t1 {
        return None;
    }
    let at = |t: f64| {
        if t == 0.0 {
            a
        } else if t == 1.0 {
            b
        } else {
            (a.0 + dx * t, a.1 + dy * t)
        }
    };
    Some((at(t0), at(t1)))
}

/// Integer Bresenham line, every octant, endpoints inclusive.
fn bresenham(x0: i64, y0: i64, x1: i64, y1: i64, mut plot: impl FnMut(i64, i64)) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        plot(x, y);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn opaque(c: Color) -> [u8; 4] {
    let [r, g, b, _] = c.to_rgba8();
    [r, g, b, 255]
}

/// Pixel `(i, j)` covers `[i, i+1) x [j, j+1)` in screen coordinates.
pub fn render_raster(vp: &ViewProjection, prims: &[Primitive], background: Color) -> RasterImage {
    let (w, h) = (vp.width(), vp.height());
    let mut img = RasterImage::filled(w as u32, h as u32, background.to_rgba8());
    for prim in prims {
        let rgba = opaque(prim.style.color);
        match project_primitive(vp, prim) {
            ScreenGeometry::Marker(None) => {}
            ScreenGeometry::Marker(Some(p)) => {
                let side = prim.style.marker_px();
                let (cx, cy) = (p.x.floor() as i64, p.y.floor() as i64);
                let start = side / 2;
                for y in cy - start..cy - start + side {
                    for x in cx - start..cx - start + side {
                        img.put(x, y, rgba);
                    }
                }
            }
            ScreenGeometry::Segments(segs) => {
                let side = prim.style.stroke_px();
                let pad = (side / 2 + 1) as f64;
                for [a, b] in segs {
                    let Some((a, b)) =
                        clip_to_rect((a.x, a.y), (b.x, b.y), (-pad, -pad), (w + pad, h + pad))
                    else {
                        continue;
                    };
                    let (x0, y0) = (a.0.floor() as i64, a.1.floor() as i64);
                    let (x1, y1) = (b.0.floor() as i64, b.1.floor() as i64);
                    if side == 1 {
                        bresenham(x0, y0, x1, y1, |x, y| img.put(x, y, rgba));
                    } else {
                        bresenham(x0, y0, x1, y1, |x, y| img.stamp(x, y, side, rgba));
                    }
                }
            }
        }
    }
    img
}

pub fn encode_png(img: &RasterImage) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width, img.height);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Default);
        enc.set_filter(png::FilterType::Sub);
        enc.set_adaptive_filter(png::AdaptiveFilterType::NonAdaptive);
        let mut writer = enc.write_header().expect("writing to a Vec cannot fail");
        writer
            .write_image_data(&img.pixels)
            .expect("buffer length matches the header");
    }
    out
}

/// Decodes PNGs of any bit depth/color type into RGBA8.
pub fn decode_png(bytes: &[u8]) -> Result<RasterImage, ExportError> {
    let mut dec = png::Decoder::new(bytes);
    dec.set_transformations(png::Transformations::normalize_to_color8() | png::Transformations::ALPHA);
    let mut reader = dec.read_info().map_err(|e| ExportError::Png(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| ExportError::Png(e.to_string()))?;
    buf.truncate(info.buffer_size());
    let pixels = match info.color_type {
        png::ColorType::Rgba => buf,
        png::ColorType::GrayscaleAlpha => buf
            .chunks_exact(2)
            .flat_map(|p| [p[0], p[0], p[0], p[1]])
            .collect(),
        other => return Err(ExportError::Png(format!("unexpected color type {other:?}"))),
    };
    Ok(RasterImage {
        width: info.width,
        height: info.height,
        pixels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorFormat {
    PostScript,
    Svg,
}

impl FromStr for VectorFormat {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ps" | "postscript" => Ok(VectorFormat::PostScript),
            "svg" => Ok(VectorFormat::Svg),
            _ => Err(ExportError::UnknownFormat(s.to_owned())),
        }
    }
}

/// Fixed PostScript prologue. `%%BoundingBox` matches the viewport.
pub fn postscript_prologue(width: u32, height: u32) -> String {
    format!(
        "%!PS-Adobe-3.0\n\
         %%Creator: heprep-kit\n\
         %%BoundingBox: 0 0 {width} {height}\n\
         %%LanguageLevel: 2\n\
         %%Pages: 1\n\
         %%EndComments\n\
         %%BeginProlog\n\
         /M {{ moveto }} bind def\n\
         /L {{ lineto }} bind def\n\
         /RGB {{ setrgbcolor }} bind def\n\
         /LW {{ setlinewidth }} bind def\n\
         /S {{ stroke }} bind def\n\
         /F {{ closepath fill }} bind def\n\
         %%EndProlog\n\
         %%Page: 1 1\n"
    )
}

pub const POSTSCRIPT_TRAILER: &str = "showpage\n%%Trailer\n%%EOF\n";

fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

type Pt = (f64, f64);

/// Subpaths (each a run of connected points) of one primitive, clipped to the viewport.
fn vector_paths(segs: &[[ScreenPoint; 2]], w: f64, h: f64) -> Vec<Vec<Pt>> {
    let mut paths: Vec<Vec<Pt>> = Vec::new();
    for [a, b] in segs {
        let Some((a, b)) = clip_to_rect((a.x, a.y), (b.x, b.y), (0.0, 0.0), (w, h)) else {
            continue;
        };
        match paths.last_mut() {
            Some(path) if path.last() == Some(&a) => path.push(b),
            _ => paths.push(vec![a, b]),
        }
    }
    paths
}

/// Marker square clipped to the viewport, corners in drawing order.
fn marker_square(p: &ScreenPoint, size: f64, w: f64, h: f64) -> Option<[Pt; 4]> {
    let half = size / 2.0;
    let (x0, x1) = ((p.x - half).max(0.0), (p.x + half).min(w));
    let (y0, y1) = ((p.y - half).max(0.0), (p.y + half).min(h));
    (x0 < x1 && y0 < y1).then_some([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
}

fn ps_color(c: Color) -> String {
    let [r, g, b, _] = c.to_rgba8();
    format!(
        "{:.4} {:.4} {:.4}",
        f64::from(r) / 255.0,
        f64::from(g) / 255.0,
        f64::from(b) / 255.0
    )
}

fn svg_color(c: Color) -> String {
    let [r, g, b, _] = c.to_rgba8();
    format!("#{r:02x}{g:02x}{b:02x}")
}

pub fn export_postscript(vp: &ViewProjection, prims: &[Primitive], background: Color) -> Vec<u8> {
    let (w, h) = (vp.width(), vp.height());
    let mut out = postscript_prologue(w as u32, h as u32);
    if background.to_rgba8()[3] > 0 {
        let _ = writeln!(
            out,
            "{} RGB 0 0 M {w} 0 L {w} {h} L 0 {h} L F",
            ps_color(background)
        );
    }
    // PostScript is y-up
    let fy = |y: f64| h - y;
    for prim in prims {
        match project_primitive(vp, prim) {
            ScreenGeometry::Marker(p) => {
                let Some(sq) = p.and_then(|p| marker_square(&p, prim.style.marker_size, w, h))
                else {
                    continue;
                };
                let _ = write!(out, "{} RGB", ps_color(prim.style.color));
                for (i, (x, y)) in sq.iter().enumerate() {
                    let op = if i == 0 { "M" } else { "L" };
                    let _ = write!(out, " {} {} {op}", num(*x), num(fy(*y)));
                }
                out.push_str(" F\n");
            }
            ScreenGeometry::Segments(segs) => {
                let paths = vector_paths(&segs, w, h);
                if paths.is_empty() {
                    continue;
                }
                let _ = write!(
                    out,
                    "{} RGB {} LW",
                    ps_color(prim.style.color),
                    num(prim.style.line_width)
                );
                for path in paths {
                    for (i, (x, y)) in path.iter().enumerate() {
                        let op = if i == 0 { "M" } else { "L" };
                        let _ = write!(out, " {} {} {op}", num(*x), num(fy(*y)));
                    }
                }
                out.push_str(" S\n");
            }
        }
    }
    out.push_str(POSTSCRIPT_TRAILER);
    out.into_bytes()
}

pub fn export_svg(vp: &ViewProjection, prims: &[Primitive], background: Color) -> Vec<u8> {
    let (w, h) = (vp.width(), vp.height());
    let mut out = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    let bg = background.to_rgba8();
    if bg[3] > 0 {
        let _ = write!(
            out,
            "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"{}\"",
            svg_color(background)
        );
        if bg[3] < 255 {
            let _ = write!(out, " fill-opacity=\"{:.4}\"", f64::from(bg[3]) / 255.0);
        }
        out.push_str("/>\n");
    }
    for prim in prims {
        match project_primitive(vp, prim) {
            ScreenGeometry::Marker(p) => {
                let Some(sq) = p.and_then(|p| marker_square(&p, prim.style.marker_size, w, h))
                else {
                    continue;
                };
                out.push_str("<path d=\"");
                for (i, (x, y)) in sq.iter().enumerate() {
                    let op = if i == 0 { "M" } else { " L" };
                    let _ = write!(out, "{op}{} {}", num(*x), num(*y));
                }
                let _ = writeln!(out, " Z\" fill=\"{}\"/>", svg_color(prim.style.color));
            }
            ScreenGeometry::Segments(segs) => {
                let paths = vector_paths(&segs, w, h);
                if paths.is_empty() {
                    continue;
                }
                out.push_str("<path d=\"");
                let mut first = true;
                for path in paths {
                    for (i, (x, y)) in path.iter().enumerate() {
                        let op = if i == 0 { "M" } else { "L" };
                        if !first {
                            out.push(' ');
                        }
                        first = false;
                        let _ = write!(out, "{op}{} {}", num(*x), num(*y));
                    }
                }
                let _ = writeln!(
                    out,
                    "\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"/>",
                    svg_color(prim.style.color),
                    num(prim.style.line_width)
                );
            }
        }
    }
    out.push_str("</svg>\n");
    out.into_bytes()
}

pub fn export_vector(
    vp: &ViewProjection,
    prims: &[Primitive],
    background: Color,
    format: VectorFormat,
) -> Vec<u8> {
    match format {
        VectorFormat::PostScript => export_postscript(vp, prims, background),
        VectorFormat::Svg => export_svg(vp, prims, background),
    }
}

//! Render configuration and its flat `key = value` file format.
//!
//! ```text
//! # heprep render configuration
//! eye = 3000.0,-2400.0,1800.0
//! target = 0.0,0.0,0.0
//! up = 0.0,0.0,1.0
//! fov = 40.0
//! near = 10.0
//! far = 20000.0
//! size = 800x800
//! background = 000000ff
//! format = png
//! layers = detector,event
//! ```
//!
//! `fov` (degrees) and `ortho` (visible height) are mutually exclusive.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use heprep_core::pipeline::OutputFormat;
use heprep_core::scene::{Camera, CameraError, Projection, Viewport};
use heprep_core::{Color, Point3};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lens {
    /// Vertical field of view in degrees.
    Fov(f64),
    /// Orthographic visible height.
    Ortho(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub eye: Point3,
    pub target: Point3,
    pub up: Point3,
    pub lens: Lens,
    pub near: f64,
    pub far: f64,
    pub width: u32,
    pub height: u32,
    pub background: [u8; 4],
    pub format: OutputFormat,
    pub layers: Vec<String>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        let cam = Camera::default();
        let Projection::Perspective { fov_y } = cam.projection else {
            unreachable!("the default camera is a perspective camera")
        };
        RenderConfig {
            eye: cam.eye,
            target: cam.target,
            up: cam.up,
            lens: Lens::Fov(fov_y.to_degrees().round()),
            near: cam.near,
            far: cam.far,
            width: cam.viewport.width,
            height: cam.viewport.height,
            background: [0, 0, 0, 255],
            format: OutputFormat::Png,
            layers: Vec::new(),
        }
    }
}

impl RenderConfig {
    pub fn camera(&self) -> Camera {
        Camera {
            eye: self.eye,
            target: self.target,
            up: self.up,
            projection: match self.lens {
                Lens::Fov(deg) => Projection::Perspective {
                    fov_y: deg.to_radians(),
                },
                Lens::Ortho(height) => Projection::Orthographic { height },
            },
            viewport: Viewport {
                width: self.width,
                height: self.height,
            },
            near: self.near,
            far: self.far,
        }
    }

    pub fn background_color(&self) -> Color {
        Color::from_rgba8(self.background)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.camera().validate().map_err(|e: CameraError| CliError::config(e.to_string()))?;
        for l in &self.layers {
            check_layer(l)?;
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "eye" => self.eye = parse_vec3(value)?,
            "target" => self.target = parse_vec3(value)?,
            "up" => self.up = parse_vec3(value)?,
            "fov" => self.lens = Lens::Fov(parse_f64(key, value)?),
            "ortho" => self.lens = Lens::Ortho(parse_f64(key, value)?),
            "near" => self.near = parse_f64(key, value)?,
            "far" => self.far = parse_f64(key, value)?,
            "size" => (self.width, self.height) = parse_size(value)?,
            "background" => self.background = parse_rgba(value)?,
            "format" => {
                self.format = value
                    .parse()
                    .map_err(|e: heprep_core::export::ExportError| CliError::config(e.to_string()))?
            }
            "layers" => self.layers = parse_layers(value)?,
            other => return Err(CliError::config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RenderConfig::default();
        let mut lens_keys = 0;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at_line = |e: CliError| CliError::config(format!("line {}: {}", n + 1, e.message));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at_line(CliError::config("expected `key = value`")))?;
            let key = key.trim();
            if key == "fov" || key == "ortho" {
                lens_keys += 1;
                if lens_keys > 1 {
                    return Err(at_line(CliError::config("only one of `fov` and `ortho` may be set")));
                }
            }
            cfg.set(key, value).map_err(at_line)?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let v = |p: &Point3| format!("{:?},{:?},{:?}", p.x, p.y, p.z);
        let mut out = String::from("# heprep render configuration\n");
        let _ = writeln!(out, "eye = {}", v(&self.eye));
        let _ = writeln!(out, "target = {}", v(&self.target));
        let _ = writeln!(out, "up = {}", v(&self.up));
        let _ = match self.lens {
            Lens::Fov(d) => writeln!(out, "fov = {d:?}"),
            Lens::Ortho(h) => writeln!(out, "ortho = {h:?}"),
        };
        let _ = writeln!(out, "near = {:?}", self.near);
        let _ = writeln!(out, "far = {:?}", self.far);
        let _ = writeln!(out, "size = {}x{}", self.width, self.height);
        let [r, g, b, a] = self.background;
        let _ = writeln!(out, "background = {r:02x}{g:02x}{b:02x}{a:02x}");
        let _ = writeln!(out, "format = {}", self.format.as_str());
        let _ = writeln!(out, "layers = {}", self.layers.join(","));
        out
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        crate::write_atomically(path, self.to_text().as_bytes())
    }
}

/// `$XDG_CONFIG_HOME/heprep-kit/render.conf`, else
/// `~/.config/heprep-kit/render.conf`.
pub fn default_path() -> Option<PathBuf> {
    let base = std::env::var_os("XDG_CONFIG_HOME")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".config")))?;
    Some(base.join("heprep-kit").join("render.conf"))
}

fn parse_f64(key: &str, s: &str) -> Result<f64, CliError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| CliError::config(format!("`{key}`: `{s}` is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::config(format!("`{key}` must be finite")))
    }
}

pub fn parse_vec3(s: &str) -> Result<Point3, CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::config(format!("`{s}`: expected x,y,z")));
    }
    Ok(Point3::new(
        parse_f64("x", parts[0])?,
        parse_f64("y", parts[1])?,
        parse_f64("z", parts[2])?,
    ))
}

pub fn parse_size(s: &str) -> Result<(u32, u32), CliError> {
    let bad = || CliError::config(format!("`{s}`: expected WIDTHxHEIGHT"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let (w, h): (u32, u32) = (w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?);
    if w == 0 || h == 0 || w > 16384 || h > 16384 {
        return Err(CliError::config(format!("`{s}`: each side must be 1..=16384")));
    }
    Ok((w, h))
}

pub fn parse_rgba(s: &str) -> Result<[u8; 4], CliError> {
    let bad = || CliError::config(format!("`{s}`: expected rrggbbaa hex"));
    let s = s.trim().trim_start_matches('#');
    if s.len() != 8 || !s.is_ascii() {
        return Err(bad());
    }
    let mut out = [0u8; 4];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    Ok(out)
}

fn check_layer(l: &str) -> Result<(), CliError> {
    if l.is_empty() || l.trim() != l || l.contains(',') || l.chars().any(char::is_control) {
        return Err(CliError::config(format!("bad layer name `{l}`")));
    }
    Ok(())
}

pub fn parse_layers(s: &str) -> Result<Vec<String>, CliError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let layers: Vec<String> = s.split(',').map(|l| l.trim().to_owned()).collect();
    for (i, l) in layers.iter().enumerate() {
        check_layer(l)?;
        if layers[..i].contains(l) {
            return Err(CliError::config(format!("layer `{l}` listed twice")));
        }
    }
    Ok(layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matches_default_camera() {
        assert_eq!(RenderConfig::default().camera(), Camera::default());
    }

    #[test]
    fn parse_sample() {
        let c = RenderConfig::parse(
            "# comment\n eye = 1,2,3\northo=50\nsize = 64x32\nbackground=#ff000080\nformat=svg\nlayers = a, b\n",
        )
        .unwrap();
        assert_eq!(c.eye, Point3::new(1.0, 2.0, 3.0));
        assert_eq!(c.lens, Lens::Ortho(50.0));
        assert_eq!((c.width, c.height), (64, 32));
        assert_eq!(c.background, [255, 0, 0, 128]);
        assert_eq!(c.format, OutputFormat::Svg);
        assert_eq!(c.layers, ["a", "b"]);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let e = RenderConfig::parse("near = 1\nbogus = 2\n").unwrap_err();
        assert!(e.message.contains("line 2"), "{}", e.message);
        assert!(RenderConfig::parse("fov = 30\northo = 3\n").is_err());
        assert!(RenderConfig::parse("size = 0x10\n").is_err());
        assert!(RenderConfig::parse("near = nan\n").is_err());
        assert!(RenderConfig::parse("layers = a,,b\n").is_err());
        assert!(RenderConfig::parse("background = fff\n").is_err());
        assert!(RenderConfig::parse("just text\n").is_err());
    }

    #[test]
    fn zero_fov_fails_validation() {
        let mut c = RenderConfig::default();
        c.set("fov", "0").unwrap();
        assert!(c.validate().is_err());
    }
}

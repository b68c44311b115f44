//! The `heprep` command-line tool: inspect, validate, convert, render, serve
//! and view HepRep files.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use heprep_core::pipeline::{render_document, OutputFormat};
use heprep_core::xmlio::{self, XmlError};
use heprep_core::{Document, TypeNode};
use heprep_net::control::{ControlService, Viewer};
use heprep_net::server::{self, Catalog};
use heprep_net::source::{self, SourceError, SourceUri};

pub mod config;

use config::RenderConfig;

/// A failure reported as one `error[code]: message` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        CliError {
            code: code.to_owned(),
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // keep it on one line
        let msg = self.message.replace(['\n', '\r'], " ");
        write!(f, "error[{}]: {msg}", self.code)
    }
}

impl From<XmlError> for CliError {
    fn from(e: XmlError) -> Self {
        CliError::new(e.code(), e.to_string())
    }
}

impl From<SourceError> for CliError {
    fn from(e: SourceError) -> Self {
        CliError::new(e.code(), e.to_string())
    }
}

impl From<server::ServerError> for CliError {
    fn from(e: server::ServerError) -> Self {
        CliError::new(e.code(), e.to_string())
    }
}

/// Writes `bytes` to a temporary sibling of `path`, then renames it into
/// place. On failure nothing is left at `path` or beside it.
pub fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| CliError::new("io", format!("{}: not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = std::fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|()| std::fs::rename(&tmp, path));
    result.map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Parser)]
#[command(name = "heprep", version, about = "HepRep event display toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Print file statistics and the type-tree outline.
    Inspect { path: PathBuf },
    /// Check that a file parses and satisfies every document invariant.
    Validate { path: PathBuf },
    /// Re-serialize a file, optionally compressing it.
    Convert(ConvertArgs),
    /// Render an event to PNG, PostScript or SVG without starting a viewer.
    Render(RenderArgs),
    /// Serve a directory of HepRep files to remote clients.
    Serve(ServeArgs),
    /// Start the viewer control service and the browser UI.
    View(ViewArgs),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// gzip the output (the default when the output name ends in `.gz`)
    #[arg(long, conflicts_with = "no_compress")]
    pub compress: bool,
    #[arg(long)]
    pub no_compress: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// File path or `file:`, `http:`, `https:` or `hep:` URI.
    pub input: String,
    /// Event index within the source.
    #[arg(long, default_value_t = 0)]
    pub event: usize,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// png, ps or svg (default: from the output name, else the configuration)
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long, value_name = "x,y,z", allow_hyphen_values = true)]
    pub eye: Option<String>,
    #[arg(long, value_name = "x,y,z", allow_hyphen_values = true)]
    pub target: Option<String>,
    #[arg(long, value_name = "x,y,z", allow_hyphen_values = true)]
    pub up: Option<String>,
    /// Vertical field of view in degrees.
    #[arg(long, value_name = "deg", conflicts_with = "ortho", allow_hyphen_values = true)]
    pub fov: Option<String>,
    /// Orthographic projection with this visible height.
    #[arg(long, value_name = "h", allow_hyphen_values = true)]
    pub ortho: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub near: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub far: Option<String>,
    #[arg(long, value_name = "WxH")]
    pub size: Option<String>,
    #[arg(long, value_name = "rrggbbaa")]
    pub background: Option<String>,
    #[arg(long, value_name = "a,b,c")]
    pub layers: Option<String>,
    /// Configuration file (default: the per-user render.conf, if present).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Store the effective settings as the configuration file.
    #[arg(long)]
    pub save_config: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7544")]
    pub bind: String,
}

#[derive(Debug, Args)]
pub struct ViewArgs {
    /// File path or `file:`, `http:`, `https:` or `hep:` URI.
    pub input: String,
    /// HTTP address for the UI, `/ws` and `/render/{viewId}.png`.
    #[arg(long, default_value = "127.0.0.1:7545")]
    pub bind: String,
    /// Also accept the control protocol as raw framed TCP on this address.
    #[arg(long)]
    pub control_bind: Option<String>,
    /// Directory holding the built browser UI.
    #[arg(long, env = "HEPREP_UI_DIR")]
    pub ui_dir: Option<PathBuf>,
}

// --- inspect / validate ---------------------------------------------------

fn outline(node: &TypeNode, depth: usize, out: &mut String) {
    let _ = writeln!(out, "{:indent$}{}", "", node.name, indent = 2 * depth + 2);
    for c in &node.children {
        outline(c, depth + 1, out);
    }
}

/// The part of the inspect report that depends only on the document.
pub fn report_body(doc: &Document, stats: &xmlio::FileStats) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "type trees: {}", doc.type_trees.len());
    let _ = writeln!(out, "types: {}", stats.type_count);
    let _ = writeln!(out, "instance trees: {}", doc.instance_trees.len());
    let _ = writeln!(out, "instances: {}", stats.instance_count);
    let _ = writeln!(out, "points: {}", stats.point_count);
    if doc.layer_order.is_empty() {
        out.push_str("layers: none\n");
    } else {
        let _ = writeln!(out, "layers: {}", doc.layer_order.join(", "));
    }
    for t in &doc.type_trees {
        let _ = writeln!(out, "typetree {} (version {})", t.name, t.version);
        outline(&t.root, 0, &mut out);
    }
    for t in &doc.instance_trees {
        let _ = writeln!(
            out,
            "instancetree {} (version {}) -> {}",
            t.name, t.version, t.type_tree
        );
    }
    out
}

pub fn inspect(path: &Path) -> Result<String, CliError> {
    let bytes = read_file(path)?;
    let doc = xmlio::parse(&bytes)?;
    let stats = xmlio::stats(&bytes)?;
    let mut out = String::new();
    let _ = writeln!(out, "file: {}", path.display());
    let _ = writeln!(out, "size: {} bytes", stats.byte_size);
    let _ = writeln!(out, "compressed: {}", if stats.compressed { "yes" } else { "no" });
    out.push('\n');
    out.push_str(&report_body(&doc, &stats));
    Ok(out)
}

pub fn validate(path: &Path) -> Result<String, CliError> {
    let doc = xmlio::parse(&read_file(path)?)?;
    Ok(format!(
        "{}: valid ({} instances, {} points)\n",
        path.display(),
        doc.instance_count(),
        doc.point_count()
    ))
}

// --- convert --------------------------------------------------------------

fn same_file(a: &Path, b: &Path) -> bool {
    let canon = |p: &Path| -> Option<PathBuf> {
        if let Ok(c) = p.canonicalize() {
            return Some(c);
        }
        let parent = match p.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.canonicalize().ok()?,
            _ => std::env::current_dir().ok()?,
        };
        Some(parent.join(p.file_name()?))
    };
    matches!((canon(a), canon(b)), (Some(x), Some(y)) if x == y)
}

pub fn convert(args: &ConvertArgs) -> Result<String, CliError> {
    if same_file(&args.input, &args.output) {
        return Err(CliError::new(
            "usage",
            "input and output are the same file; refusing to overwrite",
        ));
    }
    let doc = xmlio::parse(&read_file(&args.input)?)?;
    let compress = if args.compress {
        true
    } else if args.no_compress {
        false
    } else {
        args.output.extension().is_some_and(|e| e == "gz")
    };
    let bytes = xmlio::serialize(&doc, compress)?;
    write_atomically(&args.output, &bytes)?;
    Ok(format!(
        "wrote {} ({} bytes{})\n",
        args.output.display(),
        bytes.len(),
        if compress { ", gzip" } else { "" }
    ))
}

// --- render ---------------------------------------------------------------

/// Defaults, then the configuration file, then command-line flags.
pub fn effective_config(args: &RenderArgs) -> Result<(RenderConfig, Option<PathBuf>), CliError> {
    let (mut cfg, path) = match &args.config {
        Some(p) => (RenderConfig::load(p)?, Some(p.clone())),
        None => match config::default_path() {
            Some(p) if p.exists() => (RenderConfig::load(&p)?, Some(p)),
            p => (RenderConfig::default(), p),
        },
    };
    let flags = [
        ("eye", &args.eye),
        ("target", &args.target),
        ("up", &args.up),
        ("fov", &args.fov),
        ("ortho", &args.ortho),
        ("near", &args.near),
        ("far", &args.far),
        ("size", &args.size),
        ("background", &args.background),
        ("layers", &args.layers),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)
                .map_err(|e| CliError::config(format!("--{key}: {}", e.message)))?;
        }
    }
    if let Some(f) = &args.format {
        cfg.set("format", f)?;
    } else if let Some(f) = args.output.as_deref().and_then(OutputFormat::from_extension) {
        cfg.format = f;
    }
    cfg.validate()?;
    Ok((cfg, path))
}

fn default_output(input: &str, format: OutputFormat) -> PathBuf {
    let name = input.rsplit(['/', '\\']).next().unwrap_or(input);
    let stem = name
        .strip_suffix(".gz")
        .unwrap_or(name)
        .strip_suffix(".heprep")
        .unwrap_or(name.strip_suffix(".gz").unwrap_or(name));
    let stem = if stem.is_empty() { "event" } else { stem };
    PathBuf::from(format!("{stem}.{}", format.as_str()))
}

pub fn render(args: &RenderArgs) -> Result<String, CliError> {
    // configuration problems are reported before any input is touched
    let (cfg, config_path) = effective_config(args)?;
    let output = args
        .output
        .clone()
        .unwrap_or_else(|| default_output(&args.input, cfg.format));
    let mut notes = String::new();
    if args.save_config {
        let path = config_path
            .ok_or_else(|| CliError::config("no configuration path; pass --config"))?;
        cfg.save(&path)?;
        let _ = writeln!(notes, "saved configuration to {}", path.display());
    }
    let uri: SourceUri = args.input.parse()?;
    let mut src = source::open(&uri)?;
    let doc = src.get_event(args.event)?;
    let rendered = render_document(
        &doc,
        &cfg.camera(),
        &cfg.layers,
        cfg.background_color(),
        cfg.format,
    )
    .map_err(|e| CliError::config(e.to_string()))?;
    write_atomically(&output, &rendered.bytes)?;
    for issue in &rendered.issues {
        tracing::warn!("{}: {}", issue.path, issue.reason);
    }
    let _ = writeln!(
        notes,
        "rendered {} primitives ({} after culling) to {}",
        rendered.flattened,
        rendered.drawn,
        output.display()
    );
    Ok(notes)
}

// --- serve / view ---------------------------------------------------------

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("installing SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
    tracing::info!("shutting down");
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::new("io", e.to_string()))
}

pub fn serve(args: &ServeArgs) -> Result<String, CliError> {
    let catalog = Catalog::scan(&args.dir)?;
    let rt = runtime()?;
    rt.block_on(async {
        let listener = server::bind(&args.bind).await?;
        let addr = listener.local_addr().map_err(|e| CliError::new("bind", e.to_string()))?;
        tracing::info!("serving {} events on {addr}", catalog.len());
        server::serve(listener, Arc::new(catalog), shutdown_signal())
            .await
            .map_err(|e| CliError::new("io", e.to_string()))
    })?;
    Ok(String::new())
}

async fn bind(addr: &str) -> Result<tokio::net::TcpListener, CliError> {
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::new("bind", format!("cannot bind {addr}: {e}")))
}

pub fn view(args: &ViewArgs) -> Result<String, CliError> {
    let rt = runtime()?;
    rt.block_on(async {
        // bind first so an occupied port fails before any source I/O
        let http = bind(&args.bind).await?;
        let control = match &args.control_bind {
            Some(a) => Some(bind(a).await?),
            None => None,
        };
        let input = args.input.clone();
        let viewer = tokio::task::spawn_blocking(move || Viewer::with_source(&input))
            .await
            .map_err(|e| CliError::new("internal", e.to_string()))?
            .map_err(|reply| {
                let (code, message) = reply.error_info().unwrap_or(("source", ""));
                CliError::new(code, message)
            })?;
        let count = viewer.state().cursor.map_or(0, |c| c.count);
        let service = ControlService::new(viewer);
        let addr = http.local_addr().map_err(|e| CliError::new("bind", e.to_string()))?;
        tracing::info!("viewing {} ({count} events) at http://{addr}/ui/", args.input);
        let (stop_tx, _) = tokio::sync::broadcast::channel::<()>(1);
        if let Some(listener) = control {
            let local = listener.local_addr().map_err(|e| CliError::new("bind", e.to_string()))?;
            tracing::info!("control protocol on {local}");
            let mut rx = stop_tx.subscribe();
            tokio::spawn(heprep_net::http::serve_tcp(listener, service.clone(), async move {
                let _ = rx.recv().await;
            }));
        }
        let result = heprep_net::http::serve_http(http, service, args.ui_dir.clone(), shutdown_signal()).await;
        let _ = stop_tx.send(());
        result.map_err(|e| CliError::new("io", e.to_string()))
    })?;
    Ok(String::new())
}

pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Inspect { path } => inspect(path),
        Command::Validate { path } => validate(path),
        Command::Convert(a) => convert(a),
        Command::Render(a) => render(a),
        Command::Serve(a) => serve(a),
        Command::View(a) => view(a),
    }
}

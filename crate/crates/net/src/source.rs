//! Event sources: local files, files fetched over HTTP, and the event server.

use std::fmt;
use std::io;
use std::net::{TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use heprep_core::xmlio::{self, XmlError};
use heprep_core::Document;

use crate::wire::{self, FrameError, Kind, WireMessage};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);
const IO_TIMEOUT: Duration = Duration::from_secs(60);
const MAX_HTTP_BODY: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    File,
    Http,
    Https,
    Hep,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::File => "file",
            Scheme::Http => "http",
            Scheme::Https => "https",
            Scheme::Hep => "hep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUri {
    pub scheme: Scheme,
    /// `host:port` for network schemes.
    pub authority: Option<String>,
    pub path: String,
}

impl SourceUri {
    pub fn file(path: impl Into<PathBuf>) -> Self {
        SourceUri {
            scheme: Scheme::File,
            authority: None,
            path: path.into().to_string_lossy().into_owned(),
        }
    }
}

impl fmt::Display for SourceUri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.scheme, &self.authority) {
            (Scheme::File, _) => write!(f, "file://{}", self.path),
            (s, Some(a)) => write!(f, "{}://{a}{}", s.as_str(), self.path),
            (s, None) => write!(f, "{}://{}", s.as_str(), self.path),
        }
    }
}

impl FromStr for SourceUri {
    type Err = SourceError;

    /// Accepts `file:`, `http:`, `https:` and `hep:` URIs. Text without a
    /// scheme is taken as a local file path.
    fn from_str(s: &str) -> Result<Self, SourceError> {
        let bad = |why: &str| SourceError::BadUri(format!("{s}: {why}"));
        if !s.contains("://") && !s.starts_with("file:") {
            if s.is_empty() {
                return Err(bad("empty"));
            }
            return Ok(SourceUri::file(s));
        }
        let url = url::Url::parse(s).map_err(|e| bad(&e.to_string()))?;
        let scheme = match url.scheme() {
            "file" => Scheme::File,
            "http" => Scheme::Http,
            "https" => Scheme::Https,
            "hep" => Scheme::Hep,
            other => return Err(bad(&format!("unsupported scheme `{other}`"))),
        };
        if scheme == Scheme::File {
            let path = url.to_file_path().map_err(|_| bad("not a local file path"))?;
            return Ok(SourceUri::file(path));
        }
        let host = url.host_str().filter(|h| !h.is_empty());
        let authority = match (host, url.port()) {
            (Some(h), Some(p)) => Some(format!("{h}:{p}")),
            (Some(h), None) if scheme == Scheme::Hep => {
                Some(format!("{h}:{}", crate::server::DEFAULT_PORT))
            }
            (Some(h), None) => Some(h.to_owned()),
            (None, _) => return Err(bad("missing host")),
        };
        let mut path = url.path().to_owned();
        if let Some(q) = url.query() {
            path.push('?');
            path.push_str(q);
        }
        Ok(SourceUri {
            scheme,
            authority,
            path,
        })
    }
}

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("bad source uri {0}")]
    BadUri(String),
    #[error("cannot open {uri}: {message}")]
    Open { uri: String, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP status {status} from {uri}")]
    Status { uri: String, status: u16 },
    #[error("event {index} out of range (count {count})")]
    Range { index: usize, count: usize },
    #[error(transparent)]
    Parse(#[from] XmlError),
    #[error("server error {code}: {message}")]
    Remote { code: String, message: String },
}

impl SourceError {
    pub fn code(&self) -> &'static str {
        match self {
            SourceError::BadUri(_) => "bad_uri",
            SourceError::Open { .. } => "open",
            SourceError::Transport(_) | SourceError::Status { .. } => "transport",
            SourceError::Range { .. } => "range",
            SourceError::Parse(e) => e.code(),
            SourceError::Remote { .. } => "remote",
        }
    }
}

/// One consumer's handle on a source of events.
pub trait EventSource: Send {
    fn uri(&self) -> &SourceUri;
    fn count(&self) -> usize;
    fn get_event(&mut self, index: usize) -> Result<Document, SourceError>;
}

fn check_range(index: usize, count: usize) -> Result<(), SourceError> {
    if index < count {
        Ok(())
    } else {
        Err(SourceError::Range { index, count })
    }
}

/// A file holds exactly one event, parsed when the source is opened.
pub struct SingleEventSource {
    uri: SourceUri,
    doc: Document,
}

impl EventSource for SingleEventSource {
    fn uri(&self) -> &SourceUri {
        &self.uri
    }

    fn count(&self) -> usize {
        1
    }

    fn get_event(&mut self, index: usize) -> Result<Document, SourceError> {
        check_range(index, 1)?;
        Ok(self.doc.clone())
    }
}

fn open_file(uri: &SourceUri) -> Result<SingleEventSource, SourceError> {
    let bytes = std::fs::read(&uri.path).map_err(|e| SourceError::Open {
        uri: uri.to_string(),
        message: e.to_string(),
    })?;
    Ok(SingleEventSource {
        uri: uri.clone(),
        doc: xmlio::parse(&bytes)?,
    })
}

fn open_http(uri: &SourceUri) -> Result<SingleEventSource, SourceError> {
    let url = uri.to_string();
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_connect(Some(CONNECT_TIMEOUT))
        .timeout_global(Some(IO_TIMEOUT))
        .build()
        .into();
    let mut resp = agent
        .get(&url)
        .header("Accept-Encoding", "identity")
        .call()
        .map_err(|e| match e {
            ureq::Error::StatusCode(status) => SourceError::Status {
                uri: url.clone(),
                status,
            },
            ureq::Error::Io(_) | ureq::Error::HostNotFound | ureq::Error::ConnectionFailed => {
                SourceError::Open {
                    uri: url.clone(),
                    message: e.to_string(),
                }
            }
            other => SourceError::Transport(other.to_string()),
        })?;
    let bytes = resp
        .body_mut()
        .with_config()
        .limit(MAX_HTTP_BODY)
        .read_to_vec()
        .map_err(|e| SourceError::Transport(e.to_string()))?;
    Ok(SingleEventSource {
        uri: uri.clone(),
        doc: xmlio::parse(&bytes)?,
    })
}

/// Client of the event server. Reconnects lazily after a transport failure.
pub struct HepSource {
    uri: SourceUri,
    addr: String,
    stream: Option<TcpStream>,
    next_id: u64,
    count: usize,
    names: Vec<String>,
}

impl HepSource {
    fn connect(addr: &str) -> io::Result<TcpStream> {
        let mut last = io::Error::new(io::ErrorKind::NotFound, "address did not resolve");
        for a in addr.to_socket_addrs()? {
            match TcpStream::connect_timeout(&a, CONNECT_TIMEOUT) {
                Ok(s) => {
                    s.set_read_timeout(Some(IO_TIMEOUT))?;
                    s.set_write_timeout(Some(IO_TIMEOUT))?;
                    s.set_nodelay(true)?;
                    return Ok(s);
                }
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    pub fn open(uri: &SourceUri) -> Result<Self, SourceError> {
        let addr = uri
            .authority
            .clone()
            .ok_or_else(|| SourceError::BadUri(format!("{uri}: missing host")))?;
        let stream = Self::connect(&addr).map_err(|e| SourceError::Open {
            uri: uri.to_string(),
            message: e.to_string(),
        })?;
        let mut src = HepSource {
            uri: uri.clone(),
            addr,
            stream: Some(stream),
            next_id: 1,
            count: 0,
            names: Vec::new(),
        };
        let open_err = |e: SourceError| SourceError::Open {
            uri: uri.to_string(),
            message: e.to_string(),
        };
        let hello = src.call("hello", json!({})).map_err(open_err)?;
        if hello.get("protocol").and_then(Json::as_str) != Some(crate::server::PROTOCOL) {
            return Err(open_err(SourceError::Transport(format!(
                "unexpected handshake {hello}"
            ))));
        }
        let list = src.call("list_events", json!({})).map_err(open_err)?;
        src.count = list
            .get("count")
            .and_then(Json::as_u64)
            .ok_or_else(|| open_err(SourceError::Transport("list_events without count".into())))?
            as usize;
        src.names = list
            .get("names")
            .and_then(Json::as_array)
            .map(|a| a.iter().filter_map(|n| n.as_str().map(str::to_owned)).collect())
            .unwrap_or_default();
        Ok(src)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// One request/reply exchange. Any transport failure drops the connection.
    fn call(&mut self, method: &str, payload: Json) -> Result<Json, SourceError> {
        let id = self.next_id;
        self.next_id += 1;
        let result = self.exchange(&WireMessage::request(id, method, payload));
        if matches!(result, Err(SourceError::Transport(_))) {
            self.stream = None;
        }
        let reply = result?;
        if reply.id != id {
            self.stream = None;
            return Err(SourceError::Transport(format!(
                "reply id {} does not match request id {id}",
                reply.id
            )));
        }
        match reply.kind {
            Kind::Reply => Ok(reply.payload),
            Kind::Error => {
                let (code, message) = reply.error_info().unwrap_or(("unknown", ""));
                Err(SourceError::Remote {
                    code: code.to_owned(),
                    message: message.to_owned(),
                })
            }
            _ => Err(SourceError::Transport("unexpected message kind".into())),
        }
    }

    fn exchange(&mut self, msg: &WireMessage) -> Result<WireMessage, SourceError> {
        if self.stream.is_none() {
            self.stream = Some(
                Self::connect(&self.addr).map_err(|e| SourceError::Transport(e.to_string()))?,
            );
        }
        let stream = self.stream.as_mut().expect("connected above");
        let t = |e: &dyn fmt::Display| SourceError::Transport(e.to_string());
        wire::write_message(stream, msg).map_err(|e| t(&e))?;
        match wire::read_message(stream) {
            Ok(Some(m)) => Ok(m),
            Ok(None) => Err(SourceError::Transport("server closed the connection".into())),
            Err(FrameError::Json(e)) => Err(t(&e)),
            Err(e) => Err(t(&e)),
        }
    }
}

impl EventSource for HepSource {
    fn uri(&self) -> &SourceUri {
        &self.uri
    }

    fn count(&self) -> usize {
        self.count
    }

    fn get_event(&mut self, index: usize) -> Result<Document, SourceError> {
        check_range(index, self.count)?;
        let reply = self.call("get_event", json!({ "index": index }))?;
        let text = reply
            .get("heprep")
            .and_then(Json::as_str)
            .ok_or_else(|| SourceError::Transport("get_event reply without heprep".into()))?;
        let bytes = B64
            .decode(text)
            .map_err(|e| SourceError::Transport(format!("bad base64 payload: {e}")))?;
        Ok(xmlio::parse(&bytes)?)
    }
}

pub fn open(uri: &SourceUri) -> Result<Box<dyn EventSource>, SourceError> {
    Ok(match uri.scheme {
        Scheme::File => Box::new(open_file(uri)?),
        Scheme::Http | Scheme::Https => Box::new(open_http(uri)?),
        Scheme::Hep => Box::new(HepSource::open(uri)?),
    })
}

/// Position within a source. Navigation clamps to the valid range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCursor {
    pub index: usize,
    pub count: usize,
}

impl EventCursor {
    pub fn new(count: usize) -> Self {
        EventCursor { index: 0, count }
    }

    fn last(&self) -> usize {
        self.count.saturating_sub(1)
    }

    #[must_use]
    pub fn next(self) -> Self {
        EventCursor {
            index: (self.index + 1).min(self.last()),
            ..self
        }
    }

    #[must_use]
    pub fn prev(self) -> Self {
        EventCursor {
            index: self.index.saturating_sub(1),
            ..self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_uris() {
        let u: SourceUri = "hep://localhost:9000".parse().unwrap();
        assert_eq!(u.scheme, Scheme::Hep);
        assert_eq!(u.authority.as_deref(), Some("localhost:9000"));
        let u: SourceUri = "hep://example.org".parse().unwrap();
        assert_eq!(u.authority.as_deref(), Some("example.org:7544"));
        let u: SourceUri = "http://h:8080/ev/1.heprep.gz".parse().unwrap();
        assert_eq!((u.scheme, u.path.as_str()), (Scheme::Http, "/ev/1.heprep.gz"));
        assert_eq!(u.to_string(), "http://h:8080/ev/1.heprep.gz");
        let u: SourceUri = "file:///tmp/a.heprep".parse().unwrap();
        assert_eq!((u.scheme, u.path.as_str()), (Scheme::File, "/tmp/a.heprep"));
        let u: SourceUri = "data/a.heprep".parse().unwrap();
        assert_eq!((u.scheme, u.path.as_str()), (Scheme::File, "data/a.heprep"));
    }

    #[test]
    fn reject_bad_uris() {
        for bad in ["ftp://h/x", "hep://", "hep:///path", ""] {
            assert!(bad.parse::<SourceUri>().is_err(), "{bad}");
        }
    }

    #[test]
    fn cursor_clamps() {
        let c = EventCursor { index: 2, count: 3 };
        assert_eq!(c.next(), c);
        assert_eq!(EventCursor::new(3).prev().index, 0);
        let mid = EventCursor { index: 1, count: 3 };
        assert_eq!(mid.prev().next(), mid);
        assert_eq!(mid.next().prev(), mid);
        assert_eq!(EventCursor::new(0).next().index, 0);
    }

    #[test]
    fn missing_file_is_open_error() {
        let err = open(&SourceUri::file("/nonexistent/x.heprep")).err().unwrap();
        assert_eq!(err.code(), "open");
    }
}

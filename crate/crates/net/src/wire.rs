//! Length-prefixed JSON frames: a 32-bit big-endian byte count followed by
//! the UTF-8 JSON text of one [`WireMessage`].

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

pub const MAX_FRAME: u32 = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Request,
    Reply,
    Error,
    /// Unsolicited message from the control service (id 0).
    Notification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub id: u64,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default)]
    pub payload: Json,
}

impl WireMessage {
    pub fn request(id: u64, method: &str, payload: Json) -> Self {
        WireMessage {
            id,
            kind: Kind::Request,
            method: Some(method.to_owned()),
            payload,
        }
    }

    pub fn reply(id: u64, payload: Json) -> Self {
        WireMessage {
            id,
            kind: Kind::Reply,
            method: None,
            payload,
        }
    }

    pub fn error(id: u64, code: &str, message: impl Into<String>) -> Self {
        WireMessage {
            id,
            kind: Kind::Error,
            method: None,
            payload: json!({ "code": code, "message": message.into() }),
        }
    }

    pub fn notification(method: &str, payload: Json) -> Self {
        WireMessage {
            id: 0,
            kind: Kind::Notification,
            method: Some(method.to_owned()),
            payload,
        }
    }

    /// `(code, message)` of an error message.
    pub fn error_info(&self) -> Option<(&str, &str)> {
        if self.kind != Kind::Error {
            return None;
        }
        Some((
            self.payload.get("code")?.as_str()?,
            self.payload
                .get("message")
                .and_then(Json::as_str)
                .unwrap_or(""),
        ))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Best-effort request id from a body that failed to decode as a message.
pub fn salvage_id(text: &str) -> u64 {
    serde_json::from_str::<Json>(text)
        .ok()
        .and_then(|v| v.get("id")?.as_u64())
        .unwrap_or(0)
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds the {MAX_FRAME} byte limit")]
    TooLarge(u32),
    #[error("frame body is not valid UTF-8")]
    Utf8,
    #[error("frame body is not a valid message: {0}")]
    Json(#[from] serde_json::Error),
    #[error("connection closed mid-frame")]
    Truncated,
}

pub fn encode(msg: &WireMessage) -> Vec<u8> {
    frame(msg.to_json().as_bytes())
}

/// Prefixes `body` with its length. Does not enforce [`MAX_FRAME`].
pub fn frame(body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out
}

/// Decodes exactly one complete frame.
pub fn decode(bytes: &[u8]) -> Result<WireMessage, FrameError> {
    let mut r = bytes;
    let msg = read_message(&mut r)?.ok_or(FrameError::Truncated)?;
    if !r.is_empty() {
        return Err(FrameError::Io(io::Error::new(
            io::ErrorKind::InvalidData,
            "trailing bytes after frame",
        )));
    }
    Ok(msg)
}

fn check_len(len: u32) -> Result<usize, FrameError> {
    if len > MAX_FRAME {
        Err(FrameError::TooLarge(len))
    } else {
        Ok(len as usize)
    }
}

fn eof_to_truncated(e: io::Error) -> FrameError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        FrameError::Truncated
    } else {
        FrameError::Io(e)
    }
}

/// Reads one frame body. `Ok(None)` on a clean end of stream between frames.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<String>, FrameError> {
    let mut head = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut head[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(FrameError::Truncated),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = check_len(u32::from_be_bytes(head))?;
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(eof_to_truncated)?;
    String::from_utf8(body).map(Some).map_err(|_| FrameError::Utf8)
}

pub fn read_message<R: Read>(r: &mut R) -> Result<Option<WireMessage>, FrameError> {
    match read_frame(r)? {
        None => Ok(None),
        Some(text) => Ok(Some(WireMessage::from_json(&text)?)),
    }
}

pub fn write_message<W: Write>(w: &mut W, msg: &WireMessage) -> io::Result<()> {
    w.write_all(&encode(msg))?;
    w.flush()
}

pub async fn read_frame_async<R: AsyncRead + Unpin>(
    r: &mut R,
) -> Result<Option<String>, FrameError> {
    let mut head = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut head[got..]).await? {
            0 if got == 0 => return Ok(None),
            0 => return Err(FrameError::Truncated),
            n => got += n,
        }
    }
    let len = check_len(u32::from_be_bytes(head))?;
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).await.map_err(eof_to_truncated)?;
    String::from_utf8(body).map(Some).map_err(|_| FrameError::Utf8)
}

pub async fn write_message_async<W: AsyncWrite + Unpin>(
    w: &mut W,
    msg: &WireMessage,
) -> io::Result<()> {
    w.write_all(&encode(msg)).await?;
    w.flush().await
}

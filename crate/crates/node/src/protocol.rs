//! Newline-delimited JSON wire protocol.
//!
//! Every message is a single JSON object on one line with a `type` field
//! naming one of `detection`, `safety`, `ack`, `hb`, `status_req` or
//! `status`. Unknown fields are rejected. No message carries pixel data.

use std::io::{self, BufRead, Read, Write};

use heatwatch_core::zones::{Reason, SafetyLevel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest line a peer will accept, newline included.
pub const MAX_LINE: usize = 4096;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("invalid message: {0}")]
    Invalid(String),
    #[error("line exceeds {MAX_LINE} bytes")]
    TooLong,
    #[error("connection closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionEvent {
    pub node_id: String,
    pub frame_seq: u64,
    pub ts_ms: u64,
    pub method_a: bool,
    pub method_b: bool,
    pub positive: bool,
    pub quadrants: Vec<u8>,
    pub active_pixels: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyCommand {
    pub node_id: String,
    pub frame_seq: u64,
    pub level: SafetyLevel,
    pub reason: Reason,
}

/// Acknowledges a safety command. `error` is set when the peer could not
/// process the line it received; `frame_seq` is 0 if that line had none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ack {
    pub frame_seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Heartbeat {}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatusRequest {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatusDoc {
    pub node_id: String,
    pub frame_seq: u64,
    pub level: SafetyLevel,
    pub uptime_ms: u64,
    pub frames: u64,
    pub positives: u64,
    pub commands: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Detection(DetectionEvent),
    Safety(SafetyCommand),
    Ack(Ack),
    Hb(Heartbeat),
    StatusReq(StatusRequest),
    Status(StatusDoc),
}

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Message::Detection(_) => "detection",
            Message::Safety(_) => "safety",
            Message::Ack(_) => "ack",
            Message::Hb(_) => "hb",
            Message::StatusReq(_) => "status_req",
            Message::Status(_) => "status",
        }
    }

    /// Permitted keys per message type, `type` included.
    pub fn allowed_fields(type_name: &str) -> &'static [&'static str] {
        match type_name {
            "detection" => &[
                "type",
                "node_id",
                "frame_seq",
                "ts_ms",
                "method_a",
                "method_b",
                "positive",
                "quadrants",
                "active_pixels",
            ],
            "safety" => &["type", "node_id", "frame_seq", "level", "reason"],
            "ack" => &["type", "frame_seq", "error"],
            "hb" | "status_req" => &["type"],
            "status" => &[
                "type",
                "node_id",
                "frame_seq",
                "level",
                "uptime_ms",
                "frames",
                "positives",
                "commands",
            ],
            _ => &[],
        }
    }

    pub fn ack(frame_seq: u64) -> Self {
        Message::Ack(Ack { frame_seq, error: None })
    }

    pub fn nack(frame_seq: u64, error: impl Into<String>) -> Self {
        Message::Ack(Ack {
            frame_seq,
            error: Some(error.into()),
        })
    }

    fn validate(&self) -> Result<(), ProtocolError> {
        match self {
            Message::Detection(d) => {
                if d.positive != (d.method_a || d.method_b) {
                    return Err(ProtocolError::Invalid(
                        "positive must equal method_a OR method_b".into(),
                    ));
                }
                if d.quadrants.iter().any(|&q| q > 3) {
                    return Err(ProtocolError::Invalid("quadrant index above 3".into()));
                }
                if d.node_id.is_empty() {
                    return Err(ProtocolError::Invalid("empty node_id".into()));
                }
            }
            Message::Safety(c) if c.node_id.is_empty() => {
                return Err(ProtocolError::Invalid("empty node_id".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

/// One line, newline-terminated.
pub fn encode(msg: &Message) -> String {
    let mut line = serde_json::to_string(msg).expect("messages always serialize");
    line.push('\n');
    line
}

pub fn decode(line: &str) -> Result<Message, ProtocolError> {
    let msg: Message = serde_json::from_str(line.trim_end_matches(['\n', '\r']))
        .map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    msg.validate()?;
    Ok(msg)
}

pub fn write_message(w: &mut impl Write, msg: &Message) -> io::Result<()> {
    w.write_all(encode(msg).as_bytes())?;
    w.flush()
}

/// Reads one line, without its terminator. Fails with `Closed` at EOF.
pub fn read_line(r: &mut impl BufRead) -> Result<String, ProtocolError> {
    let mut buf = Vec::new();
    let n = Read::take(&mut *r, MAX_LINE as u64).read_until(b'\n', &mut buf)?;
    if n == 0 {
        return Err(ProtocolError::Closed);
    }
    if buf.last() != Some(&b'\n') {
        if n >= MAX_LINE {
            return Err(ProtocolError::TooLong);
        }
        return Err(ProtocolError::Closed);
    }
    buf.pop();
    if buf.last() == Some(&b'\r') {
        buf.pop();
    }
    String::from_utf8(buf).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

/// Incremental line reader for sockets with read timeouts: a timeout in the
/// middle of a line keeps the partial bytes for the next call.
#[derive(Debug, Default)]
pub struct LineReader {
    buf: Vec<u8>,
}

impl LineReader {
    /// `Ok(None)` when the read timed out before a full line arrived.
    pub fn poll(&mut self, r: &mut impl BufRead) -> Result<Option<String>, ProtocolError> {
        let room = MAX_LINE.saturating_sub(self.buf.len()) as u64;
        match Read::take(&mut *r, room).read_until(b'\n', &mut self.buf) {
            Ok(_) if self.buf.last() == Some(&b'\n') => {
                let mut line = std::mem::take(&mut self.buf);
                line.pop();
                if line.last() == Some(&b'\r') {
                    line.pop();
                }
                String::from_utf8(line)
                    .map(Some)
                    .map_err(|e| ProtocolError::Malformed(e.to_string()))
            }
            Ok(_) if self.buf.len() >= MAX_LINE => {
                self.buf.clear();
                Err(ProtocolError::TooLong)
            }
            Ok(_) => Err(ProtocolError::Closed),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

pub fn read_message(r: &mut impl BufRead) -> Result<Message, ProtocolError> {
    decode(&read_line(r)?)
}

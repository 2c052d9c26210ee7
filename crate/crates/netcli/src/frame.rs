//! Wire format: `[u32 big-endian payload length][type byte][JSON payload]`.

use std::io::{self, Read, Write};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;

pub const MAX_PAYLOAD: usize = 1 << 20;
pub const HEADER_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    Hello = 0x01,
    InitMsg = 0x02,
    PhaseDone = 0x03,
    Challenge = 0x04,
    Answer = 0x05,
    Verdict = 0x06,
    /// Simulation only: a register description standing in for qubits.
    QstateEnvelope = 0x10,
    Error = 0x7F,
}

impl FrameType {
    pub const ALL: [FrameType; 8] = [
        FrameType::Hello,
        FrameType::InitMsg,
        FrameType::PhaseDone,
        FrameType::Challenge,
        FrameType::Answer,
        FrameType::Verdict,
        FrameType::QstateEnvelope,
        FrameType::Error,
    ];
}

impl TryFrom<u8> for FrameType {
    type Error = FrameError;

    fn try_from(b: u8) -> Result<Self, FrameError> {
        FrameType::ALL
            .into_iter()
            .find(|t| *t as u8 == b)
            .ok_or(FrameError::UnknownType(b))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("payload of {0} bytes exceeds the 1 MiB limit")]
    Oversize(usize),
    #[error("frame truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("length field says {declared} bytes but {actual} follow")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("payload is not UTF-8")]
    BadUtf8,
    #[error("payload is not a JSON object: {0}")]
    BadJson(String),
    #[error("unknown frame type 0x{0:02x}")]
    UnknownType(u8),
    #[error("connection closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub ty: FrameType,
    pub payload: Value,
}

impl Frame {
    pub fn new<T: Serialize>(ty: FrameType, payload: &T) -> Self {
        Frame {
            ty,
            payload: serde_json::to_value(payload).expect("payload serializes"),
        }
    }

    pub fn parse<T: DeserializeOwned>(&self) -> Result<T, FrameError> {
        serde_json::from_value(self.payload.clone()).map_err(|e| FrameError::BadJson(e.to_string()))
    }
}

pub fn encode_frame(ty: FrameType, payload: &Value) -> Result<Vec<u8>, FrameError> {
    if !payload.is_object() {
        return Err(FrameError::BadJson("payload must be an object".into()));
    }
    let body = serde_json::to_vec(payload).expect("JSON value serializes");
    if body.len() > MAX_PAYLOAD {
        return Err(FrameError::Oversize(body.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.push(ty as u8);
    out.extend_from_slice(&body);
    Ok(out)
}

fn decode_body(ty: u8, body: &[u8]) -> Result<Frame, FrameError> {
    let ty = FrameType::try_from(ty)?;
    let text = std::str::from_utf8(body).map_err(|_| FrameError::BadUtf8)?;
    let payload: Value = serde_json::from_str(text).map_err(|e| FrameError::BadJson(e.to_string()))?;
    if !payload.is_object() {
        return Err(FrameError::BadJson("payload must be an object".into()));
    }
    Ok(Frame { ty, payload })
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Truncated {
            need: HEADER_LEN,
            have: bytes.len(),
        });
    }
    let declared = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
    if declared > MAX_PAYLOAD {
        return Err(FrameError::Oversize(declared));
    }
    let actual = bytes.len() - HEADER_LEN;
    if declared != actual {
        return Err(FrameError::LengthMismatch { declared, actual });
    }
    decode_body(bytes[4], &bytes[HEADER_LEN..])
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<(), FrameError> {
    w.write_all(&encode_frame(frame.ty, &frame.payload)?)?;
    w.flush()?;
    Ok(())
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    match r.read_exact(&mut header) {
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Err(FrameError::Closed),
        other => other?,
    }
    let len = u32::from_be_bytes(header[..4].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(FrameError::Oversize(len));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated {
            need: len,
            have: 0,
        },
        _ => FrameError::Io(e),
    })?;
    decode_body(header[4], &body)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub protocol: String,
    pub params: poqm::protocol::ProtocolParams,
}

/// A protocol message. Every message the protocols produce is UTF-8.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub message: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub expects_reply: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictPayload {
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub error: String,
}

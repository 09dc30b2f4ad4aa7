//! Newline-delimited JSON wire protocol.
//!
//! One UTF-8 JSON object per line, discriminated by its `type` field. Unknown
//! fields are ignored so older peers keep working against newer servers;
//! unknown `type` values are rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biosignal::HeartRateSample;
use crate::geometry::{FrameId, Vec3};
use crate::hand::{HandFrame, HandId};
use crate::haptics::FocalPointCommand;

pub const PROTO_VERSION: u32 = 1;

pub const MESSAGE_TYPES: [&str; 9] = [
    "hello",
    "welcome",
    "hr_update",
    "hand_update",
    "frame_state",
    "focal_batch",
    "calibration_set",
    "calibration_ack",
    "error",
];

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("unknown message type `{0}`")]
    UnknownType(String),
    #[error("protocol version {got} not supported (expected {PROTO_VERSION})")]
    VersionMismatch { got: u32 },
}

impl ProtocolError {
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::MalformedMessage(_) => "malformed",
            ProtocolError::UnknownType(_) => "unknown-type",
            ProtocolError::VersionMismatch { .. } => "version-mismatch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Wearable,
    HandTracker,
    Headset,
    HapticDevice,
    Ui,
}

impl std::str::FromStr for DeviceKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
            .map_err(|_| format!("unknown device kind `{s}`"))
    }
}

/// Hologram part of a frame broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeartState {
    pub anchor: Vec3,
    pub radii: Vec3,
    pub scale: f64,
    pub phase: f64,
    pub bpm: Option<f64>,
    pub flatline: bool,
}

/// Per-hand part of a frame broadcast; positions are device-frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandState {
    pub hand: HandId,
    pub haptic_active: bool,
    /// Center of the focal pattern when active.
    pub target: Option<Vec3>,
    pub palm: Vec3,
    pub joints: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameState {
    pub seq: u64,
    pub t: f64,
    #[serde(default)]
    pub frame: FrameId,
    pub heart: HeartState,
    pub hands: Vec<HandState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalBatch {
    pub seq: u64,
    #[serde(default)]
    pub frame: FrameId,
    pub commands: Vec<FocalPointCommand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    #[serde(default = "headset")]
    pub src_frame: FrameId,
    #[serde(default)]
    pub dst_frame: FrameId,
    /// `[source, destination]` pairs.
    pub pairs: Vec<[Vec3; 2]>,
}

fn headset() -> FrameId {
    FrameId::Headset
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationAck {
    /// Row-major.
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        device: DeviceKind,
        proto: u32,
    },
    /// Server reply to an accepted `hello`.
    Welcome {
        session: u64,
        proto: u32,
    },
    HrUpdate(HeartRateSample),
    HandUpdate(HandFrame),
    FrameState(FrameState),
    FocalBatch(FocalBatch),
    CalibrationSet(CalibrationSet),
    CalibrationAck(CalibrationAck),
    Error {
        code: String,
        detail: String,
    },
}

impl Message {
    pub fn hello(device: DeviceKind) -> Self {
        Message::Hello {
            device,
            proto: PROTO_VERSION,
        }
    }

    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        Message::Error {
            code: code.to_string(),
            detail: detail.into(),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::Welcome { .. } => "welcome",
            Message::HrUpdate(_) => "hr_update",
            Message::HandUpdate(_) => "hand_update",
            Message::FrameState(_) => "frame_state",
            Message::FocalBatch(_) => "focal_batch",
            Message::CalibrationSet(_) => "calibration_set",
            Message::CalibrationAck(_) => "calibration_ack",
            Message::Error { .. } => "error",
        }
    }

    /// Checks the domain invariants a well-behaved peer must respect.
    pub fn validate(&self) -> Result<(), String> {
        fn finite(v: &Vec3, what: &str) -> Result<(), String> {
            v.is_finite().then_some(()).ok_or_else(|| format!("{what} not finite"))
        }
        match self {
            Message::Hello { proto, .. } if *proto != PROTO_VERSION => Err(format!("proto {proto}")),
            Message::HrUpdate(s) => {
                if !s.t.is_finite() || !(0.0..=crate::biosignal::MAX_BPM).contains(&s.bpm) {
                    return Err(format!("hr sample {s:?}"));
                }
                Ok(())
            }
            Message::HandUpdate(h) => h.validate().map_err(|e| e.to_string()),
            Message::FocalBatch(b) => b
                .commands
                .iter()
                .all(FocalPointCommand::is_valid)
                .then_some(())
                .ok_or_else(|| "focal command outside volume or intensity range".into()),
            Message::FrameState(f) => {
                finite(&f.heart.anchor, "anchor")?;
                f.t.is_finite().then_some(()).ok_or_else(|| "frame t".to_string())
            }
            Message::CalibrationSet(c) => c
                .pairs
                .iter()
                .flatten()
                .try_for_each(|p| finite(p, "calibration point")),
            _ => Ok(()),
        }
    }
}

/// Serializes to a single line, without the trailing newline.
pub fn encode(m: &Message) -> String {
    serde_json::to_string(m).expect("messages always serialize")
}

pub fn encode_line(m: &Message) -> String {
    let mut s = encode(m);
    s.push('\n');
    s
}

pub fn decode(line: &str) -> Result<Message, ProtocolError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| ProtocolError::MalformedMessage(e.to_string()))?;
    let tag = value
        .get("type")
        .and_then(|t| t.as_str())
        .ok_or_else(|| ProtocolError::MalformedMessage("missing `type`".into()))?;
    if !MESSAGE_TYPES.contains(&tag) {
        return Err(ProtocolError::UnknownType(tag.to_string()));
    }
    let msg: Message = serde_json::from_value(value).map_err(|e| ProtocolError::MalformedMessage(e.to_string()))?;
    if let Message::Hello { proto, .. } = msg {
        if proto != PROTO_VERSION {
            return Err(ProtocolError::VersionMismatch { got: proto });
        }
    }
    Ok(msg)
}

//! Session roles and per-session outbound queues.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use thiserror::Error;

use super::protocol::{DeviceKind, FocalBatch, Message, PROTO_VERSION};

pub type SessionId = u64;

#[derive(Debug, Error, PartialEq)]
pub enum HandshakeError {
    #[error("first message must be hello, got {0}")]
    NotHello(&'static str),
    #[error("a haptic device is already connected")]
    DuplicateRole,
    #[error("protocol version {0} not supported")]
    VersionMismatch(u32),
    #[error("session already completed its handshake")]
    AlreadyRegistered,
}

impl HandshakeError {
    pub fn code(&self) -> &'static str {
        match self {
            HandshakeError::NotHello(_) => "not-hello",
            HandshakeError::DuplicateRole => "duplicate-role",
            HandshakeError::VersionMismatch(_) => "version-mismatch",
            HandshakeError::AlreadyRegistered => "already-registered",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionInfo {
    pub kind: DeviceKind,
    pub last_seen: f64,
}

/// Which roles are connected. At most one haptic device at a time.
#[derive(Debug, Default)]
pub struct SessionRegistry {
    sessions: BTreeMap<SessionId, SessionInfo>,
    haptic: Option<SessionId>,
}

impl SessionRegistry {
    pub fn handshake(&mut self, id: SessionId, hello: &Message, now: f64) -> Result<DeviceKind, HandshakeError> {
        if self.sessions.contains_key(&id) {
            return Err(HandshakeError::AlreadyRegistered);
        }
        let Message::Hello { device, proto } = hello else {
            return Err(HandshakeError::NotHello(hello.type_name()));
        };
        if *proto != PROTO_VERSION {
            return Err(HandshakeError::VersionMismatch(*proto));
        }
        if *device == DeviceKind::HapticDevice {
            if self.haptic.is_some() {
                return Err(HandshakeError::DuplicateRole);
            }
            self.haptic = Some(id);
        }
        self.sessions.insert(
            id,
            SessionInfo {
                kind: *device,
                last_seen: now,
            },
        );
        Ok(*device)
    }

    pub fn touch(&mut self, id: SessionId, now: f64) {
        if let Some(s) = self.sessions.get_mut(&id) {
            s.last_seen = now;
        }
    }

    pub fn remove(&mut self, id: SessionId) -> Option<SessionInfo> {
        if self.haptic == Some(id) {
            self.haptic = None;
        }
        self.sessions.remove(&id)
    }

    pub fn get(&self, id: SessionId) -> Option<&SessionInfo> {
        self.sessions.get(&id)
    }

    pub fn haptic_session(&self) -> Option<SessionId> {
        self.haptic
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }
}

#[derive(Debug, Default)]
struct OutboxState {
    control: VecDeque<String>,
    frame: Option<String>,
    focal: Option<FocalBatch>,
    dropped_frames: u64,
    closed: bool,
}

/// Outbound queue for one session.
///
/// Frame broadcasts are newest-wins: an unsent frame is replaced by the next one.
/// Focal batches are never dropped; a pending batch absorbs the next batch's
/// commands so at most one batch is ever queued. Control replies are FIFO.
#[derive(Debug, Default)]
pub struct Outbox {
    state: Mutex<OutboxState>,
    ready: Condvar,
}

/// What a writer should send next, in order.
#[derive(Debug, Default, PartialEq)]
pub struct Pending {
    pub lines: Vec<String>,
    pub closed: bool,
}

impl Outbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_control(&self, m: &Message) {
        let mut s = self.state.lock().unwrap();
        s.control.push_back(super::protocol::encode_line(m));
        self.ready.notify_one();
    }

    pub fn offer_frame(&self, line: String) {
        let mut s = self.state.lock().unwrap();
        if s.frame.replace(line).is_some() {
            s.dropped_frames += 1;
        }
        self.ready.notify_one();
    }

    pub fn push_focal(&self, batch: FocalBatch) {
        let mut s = self.state.lock().unwrap();
        match &mut s.focal {
            Some(pending) => {
                pending.seq = batch.seq;
                pending.commands.extend(batch.commands);
            }
            None => s.focal = Some(batch),
        }
        self.ready.notify_one();
    }

    pub fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.ready.notify_all();
    }

    pub fn dropped_frames(&self) -> u64 {
        self.state.lock().unwrap().dropped_frames
    }

    /// Takes everything queued without blocking.
    pub fn take(&self) -> Pending {
        let mut s = self.state.lock().unwrap();
        Self::drain(&mut s)
    }

    /// Blocks until something is queued, the outbox closes, or `timeout` passes.
    pub fn wait_take(&self, timeout: Duration) -> Pending {
        let s = self.state.lock().unwrap();
        let (mut s, _) = self
            .ready
            .wait_timeout_while(s, timeout, |s| {
                !s.closed && s.control.is_empty() && s.frame.is_none() && s.focal.is_none()
            })
            .unwrap();
        Self::drain(&mut s)
    }

    fn drain(s: &mut OutboxState) -> Pending {
        let mut lines: Vec<String> = s.control.drain(..).collect();
        if let Some(b) = s.focal.take() {
            lines.push(super::protocol::encode_line(&Message::FocalBatch(b)));
        }
        if let Some(f) = s.frame.take() {
            lines.push(f);
        }
        Pending {
            lines,
            closed: s.closed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{FrameId, Vec3};
    use crate::hand::HandId;
    use crate::haptics::FocalPointCommand;

    #[test]
    fn handshake_rules() {
        let mut r = SessionRegistry::default();
        assert_eq!(
            r.handshake(1, &Message::hello(DeviceKind::Wearable), 0.0),
            Ok(DeviceKind::Wearable)
        );
        assert_eq!(
            r.handshake(2, &Message::hello(DeviceKind::HapticDevice), 0.0),
            Ok(DeviceKind::HapticDevice)
        );
        assert_eq!(
            r.handshake(3, &Message::hello(DeviceKind::HapticDevice), 0.0),
            Err(HandshakeError::DuplicateRole)
        );
        let hr = Message::HrUpdate(crate::biosignal::HeartRateSample { t: 0.0, bpm: 60.0 });
        assert_eq!(r.handshake(4, &hr, 0.0), Err(HandshakeError::NotHello("hr_update")));
        let v2 = Message::Hello {
            device: DeviceKind::Ui,
            proto: 2,
        };
        assert_eq!(r.handshake(5, &v2, 0.0), Err(HandshakeError::VersionMismatch(2)));
        assert_eq!(
            r.handshake(1, &Message::hello(DeviceKind::Ui), 0.0),
            Err(HandshakeError::AlreadyRegistered)
        );
        // multiple observers are fine
        r.handshake(6, &Message::hello(DeviceKind::Headset), 0.0).unwrap();
        r.handshake(7, &Message::hello(DeviceKind::Headset), 0.0).unwrap();
        // the haptic role frees up on disconnect
        r.remove(2);
        assert_eq!(
            r.handshake(3, &Message::hello(DeviceKind::HapticDevice), 0.0),
            Ok(DeviceKind::HapticDevice)
        );
        assert_eq!(r.haptic_session(), Some(3));
    }

    fn batch(seq: u64, n: usize) -> FocalBatch {
        FocalBatch {
            seq,
            frame: FrameId::Device,
            commands: (0..n)
                .map(|i| FocalPointCommand {
                    t: i as f64,
                    hand: HandId::Right,
                    pos: Vec3::new(0.0, 0.0, 0.3),
                    intensity: 1.0,
                })
                .collect(),
        }
    }

    #[test]
    fn frames_are_newest_wins() {
        let o = Outbox::new();
        o.offer_frame("a\n".into());
        o.offer_frame("b\n".into());
        o.offer_frame("c\n".into());
        assert_eq!(o.take().lines, vec!["c\n".to_string()]);
        assert_eq!(o.dropped_frames(), 2);
        assert!(o.take().lines.is_empty());
    }

    #[test]
    fn focal_batches_coalesce_without_loss() {
        let o = Outbox::new();
        o.push_focal(batch(1, 3));
        o.push_focal(batch(2, 4));
        let p = o.take();
        assert_eq!(p.lines.len(), 1);
        match super::super::protocol::decode(&p.lines[0]).unwrap() {
            Message::FocalBatch(b) => {
                assert_eq!(b.seq, 2);
                assert_eq!(b.commands.len(), 7);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn control_first_then_close() {
        let o = Outbox::new();
        o.offer_frame("f\n".into());
        o.push_control(&Message::error("x", "y"));
        o.close();
        let p = o.wait_take(Duration::from_millis(10));
        assert!(p.lines[0].contains("\"error\""));
        assert_eq!(p.lines[1], "f\n");
        assert!(p.closed);
    }
}

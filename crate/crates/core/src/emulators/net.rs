//! Socket runners: the same emulators, paced by the wall clock and talking to
//! a live server over TCP.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::{EmulatorError, HandEmulator, HapticDevice, HapticDiagnostics, WearableEmulator};
use crate::sync::client::{is_timeout, ClientError, LineClient};
use crate::sync::protocol::{DeviceKind, Message};
use crate::sync::ClockMode;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EmulatorReport {
    pub session: u64,
    pub sent: u64,
    /// Wall seconds (since the emulator started) of the last message sent.
    pub last_sent: f64,
    pub haptic: Option<HapticDiagnostics>,
}

pub struct EmulatorHandle {
    stop: Arc<AtomicBool>,
    thread: JoinHandle<Result<EmulatorReport, EmulatorError>>,
}

impl EmulatorHandle {
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    pub fn is_finished(&self) -> bool {
        self.thread.is_finished()
    }

    pub fn join(self) -> Result<EmulatorReport, EmulatorError> {
        self.thread
            .join()
            .unwrap_or_else(|_| Err(EmulatorError::Scenario("emulator thread panicked".into())))
    }
}

/// Sleeps toward `deadline` in short slices so a stop request is noticed.
/// On the virtual clock it returns at once.
fn sleep_until(pace: ClockMode, start: Instant, deadline: f64, stop: &AtomicBool) -> bool {
    if pace == ClockMode::Virtual {
        return !stop.load(Ordering::SeqCst);
    }
    loop {
        if stop.load(Ordering::SeqCst) {
            return false;
        }
        let now = start.elapsed().as_secs_f64();
        if now >= deadline {
            return true;
        }
        thread::sleep(Duration::from_secs_f64((deadline - now).min(0.05)));
    }
}

/// Connects as a wearable and sends readings until stopped or `duration` passes.
/// With `pace` virtual, everything up to `duration` is sent without waiting.
pub fn run_wearable_emulator(
    mut emu: WearableEmulator,
    endpoint: SocketAddr,
    duration: Option<f64>,
    pace: ClockMode,
) -> Result<EmulatorHandle, EmulatorError> {
    let mut client = LineClient::connect(endpoint, DeviceKind::Wearable)?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    let thread = thread::spawn(move || {
        let start = Instant::now();
        let mut report = EmulatorReport {
            session: client.session(),
            ..Default::default()
        };
        loop {
            let next = emu.next_emit();
            if duration.is_some_and(|d| next > d) || !sleep_until(pace, start, next, &flag) {
                break;
            }
            let now = if pace == ClockMode::Virtual {
                next
            } else {
                start.elapsed().as_secs_f64()
            };
            for s in emu.due(now) {
                client.send(&Message::HrUpdate(s))?;
                report.sent += 1;
                report.last_sent = start.elapsed().as_secs_f64();
            }
        }
        client.shutdown();
        Ok(report)
    });
    Ok(EmulatorHandle { stop, thread })
}

/// Connects as a hand tracker and streams frames at the tracker rate.
pub fn run_hand_emulator(
    mut emu: HandEmulator,
    endpoint: SocketAddr,
    duration: Option<f64>,
    pace: ClockMode,
) -> Result<EmulatorHandle, EmulatorError> {
    let mut client = LineClient::connect(endpoint, DeviceKind::HandTracker)?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    let thread = thread::spawn(move || {
        let start = Instant::now();
        let mut report = EmulatorReport {
            session: client.session(),
            ..Default::default()
        };
        loop {
            let next = emu.next_sample();
            if duration.is_some_and(|d| next > d) || !sleep_until(pace, start, next, &flag) {
                break;
            }
            let now = if pace == ClockMode::Virtual {
                next
            } else {
                start.elapsed().as_secs_f64()
            };
            for f in emu.due(now) {
                client.send(&Message::HandUpdate(f))?;
                report.sent += 1;
                report.last_sent = start.elapsed().as_secs_f64();
            }
        }
        client.shutdown();
        Ok(report)
    });
    Ok(EmulatorHandle { stop, thread })
}

/// Connects as the haptic device and feeds every batch to `device` until the
/// server closes the connection or the emulator is stopped.
pub fn run_haptic_emulator(mut device: HapticDevice, endpoint: SocketAddr) -> Result<EmulatorHandle, EmulatorError> {
    let mut client = LineClient::connect(endpoint, DeviceKind::HapticDevice)?;
    client.set_read_timeout(Some(Duration::from_millis(50)))?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    let thread = thread::spawn(move || {
        let start = Instant::now();
        let mut report = EmulatorReport {
            session: client.session(),
            ..Default::default()
        };
        while !flag.load(Ordering::SeqCst) {
            match client.recv() {
                Ok(Some(Message::FocalBatch(b))) => device.receive(&b)?,
                Ok(Some(Message::Error { code, detail })) => log::warn!("server error {code}: {detail}"),
                Ok(Some(_)) => {}
                Ok(None) => break,
                Err(e) if is_timeout(&e) => {}
                Err(ClientError::Protocol(e)) => log::warn!("undecodable line from server: {e}"),
                Err(e) => return Err(e.into()),
            }
        }
        device.flush()?;
        report.last_sent = start.elapsed().as_secs_f64();
        report.haptic = Some(device.diagnostics());
        client.shutdown();
        Ok(report)
    });
    Ok(EmulatorHandle { stop, thread })
}

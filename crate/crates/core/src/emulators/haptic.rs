use std::io::{self, Write};

use crate::haptics::{append_focal_rows, FocalPointCommand};
use crate::sync::protocol::FocalBatch;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HapticDiagnostics {
    pub batches: u64,
    pub commands: u64,
    /// Commands outside the volume or intensity range; should stay zero.
    pub violations: u64,
}

/// Receives focal batches, re-checks every command and keeps the accepted ones.
pub struct HapticDevice {
    accepted: Vec<FocalPointCommand>,
    diagnostics: HapticDiagnostics,
    sink: Option<Box<dyn Write + Send>>,
    keep: bool,
}

impl std::fmt::Debug for HapticDevice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HapticDevice")
            .field("accepted", &self.accepted.len())
            .field("diagnostics", &self.diagnostics)
            .finish()
    }
}

impl Default for HapticDevice {
    fn default() -> Self {
        Self::new()
    }
}

impl HapticDevice {
    /// Keeps accepted commands in memory.
    pub fn new() -> Self {
        Self {
            accepted: Vec::new(),
            diagnostics: HapticDiagnostics::default(),
            sink: None,
            keep: true,
        }
    }

    /// Streams accepted commands as focal-log rows; the caller writes the header.
    pub fn with_sink(sink: Box<dyn Write + Send>, keep_in_memory: bool) -> Self {
        Self {
            sink: Some(sink),
            keep: keep_in_memory,
            ..Self::new()
        }
    }

    pub fn receive(&mut self, batch: &FocalBatch) -> io::Result<()> {
        self.diagnostics.batches += 1;
        let mut ok = Vec::with_capacity(batch.commands.len());
        for c in &batch.commands {
            if c.is_valid() {
                ok.push(*c);
            } else {
                self.diagnostics.violations += 1;
                log::warn!("dropping invalid focal command {c:?}");
            }
        }
        self.diagnostics.commands += ok.len() as u64;
        if let Some(w) = self.sink.as_mut() {
            append_focal_rows(w, &ok)?;
        }
        if self.keep {
            self.accepted.extend(ok);
        }
        Ok(())
    }

    pub fn accepted(&self) -> &[FocalPointCommand] {
        &self.accepted
    }

    pub fn diagnostics(&self) -> HapticDiagnostics {
        self.diagnostics
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self.sink.as_mut() {
            Some(w) => w.flush(),
            None => Ok(()),
        }
    }
}

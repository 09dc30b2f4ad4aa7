//! Stand-ins for the wearable, the hand tracker and the haptic device, plus a
//! scenario runner that drives them against the frame loop on the virtual clock.

pub mod haptic;
pub mod net;
pub mod scenario;
pub mod tracker;
pub mod wearable;

use thiserror::Error;

pub use self::haptic::{HapticDevice, HapticDiagnostics};
pub use self::scenario::{run_scenario, Scenario, ScenarioRun};
pub use self::tracker::{HandEmulator, HandScript, PalmKey};
pub use self::wearable::{HrTrace, Interpolation, WearableEmulator, EMIT_INTERVAL};

#[derive(Debug, Error)]
pub enum EmulatorError {
    #[error("trace: {0}")]
    Trace(String),
    #[error("hand script: {0}")]
    Script(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Table(#[from] crate::table::TableError),
    #[error(transparent)]
    Client(#[from] crate::sync::client::ClientError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

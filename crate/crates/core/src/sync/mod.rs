//! Wire protocol, sessions, the authoritative clock and the 60 Hz frame loop.

pub mod client;
pub mod clock;
pub mod core;
pub mod protocol;
pub mod server;
pub mod session;

pub use self::clock::{Clock, ClockMode};
pub use self::core::{transform_ingest, ServerCore, TickOutput};
pub use self::protocol::{decode, encode, encode_line, DeviceKind, Message, ProtocolError, PROTO_VERSION};
pub use self::server::{start, ServeError, ServeOptions, ServerHandle, ServerStats, Stopper};

//! Live operation over UDP through an impairment proxy.

mod live;
mod proxy;
pub mod wire;

pub use live::{
    from_hex, replay, run_receiver, run_sender, run_session, to_hex, LiveConfig, LogEvent,
    ReceiverSession, ReplayError, Role, SenderSession, SessionLog, SessionOutcome, SessionSpec,
};
pub use proxy::{Proxy, ProxyStats};
pub use wire::{deserialize, serialize_ack, serialize_packet, WireError, WireRecord};

//! Self-stabilizing automatic repeat request over bounded, omitting,
//! duplicating and reordering channels.
//!
//! The sender ships a batch of `pl` messages as `n` coded packets; the
//! receiver delivers once a single fresh index owns `n` distinct labels.
//! Starting from any state, including garbage in both channels, the pair
//! converges within a bounded number of fetches and deliveries.

pub mod bits;
pub mod channel;
pub mod codec;
pub mod fault;
pub mod harness;
pub mod protocol;
pub mod sim;
pub mod transport;

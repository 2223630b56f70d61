use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::safety::{AisVector, SafeConfigReport};
use crate::codec::MessageBatch;
use crate::protocol::SanityClause;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Actor {
    Sender,
    Receiver,
}

impl Actor {
    pub(crate) fn slot(self) -> usize {
        match self {
            Actor::Sender => 0,
            Actor::Receiver => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    /// One iteration of the actor's do-forever loop.
    Tick,
    /// Receipt of one packet from the incoming channel.
    Receive,
}

/// One atomic step, `a_i`, leading from configuration `c_i` to `c_{i+1}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: u64,
    pub actor: Actor,
    pub kind: StepKind,
    /// Step that sent the received packet; `None` for ticks and for debris.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<u64>,
    /// A fetch (sender) or a delivery (receiver) happened in this step.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub progress: bool,
    /// Digest of the configuration reached by this step, hex.
    pub digest: String,
    /// Whether the configuration reached by this step is safe.
    pub safe: bool,
    pub ais: AisVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchId {
    /// The `k`-th fetch of the run.
    Fetched(u64),
    /// Content that no matching fetch produced: pre-start debris.
    Debris,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchEvent {
    pub step: u64,
    pub id: u64,
    /// Index the sender moved to.
    pub index: u8,
    pub batch: MessageBatch,
    /// Sending step of each ack that completed the previous index; `None`
    /// for acks that predate the run.
    pub ack_sources: Vec<Option<u64>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliverEvent {
    pub step: u64,
    pub id: BatchId,
    pub index: u8,
    pub batch: MessageBatch,
    /// Sending step of each packet the delivery decoded.
    pub sources: Vec<Option<u64>>,
}

/// The detector's verdict at a configuration where the sender's next
/// iteration fetches.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardFire {
    /// Configuration index, i.e. the fetching step.
    pub config: u64,
    pub report: SafeConfigReport,
}

/// A recorded execution.
///
/// Events are always recorded; per-step records only with full recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub protocol: String,
    pub seed: u64,
    pub capacity: usize,
    pub packet_labels: u32,
    pub steps_taken: u64,
    /// The requested stop condition was met before the budget ran out.
    pub complete: bool,
    /// Index of the first safe configuration (`c_0` is the start).
    pub first_safe: Option<u64>,
    /// Progress chain weight from the start to the first safe configuration.
    pub chain_at_first_safe: Option<u64>,
    /// Heaviest message path from the start to the first safe configuration.
    pub message_chain_at_first_safe: Option<u64>,
    pub initial: SafeConfigReport,
    pub fetches: Vec<FetchEvent>,
    pub deliveries: Vec<DeliverEvent>,
    pub resets: Vec<(u64, Option<SanityClause>)>,
    pub guard_fires: Vec<GuardFire>,
    pub packets_sent: u64,
    pub acks_sent: u64,
    pub final_digest: String,
    #[serde(skip)]
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("empty trace file")]
    Empty,
    #[error("step record {found} where {expected} was expected")]
    Order { expected: u64, found: u64 },
}

impl ExecutionTrace {
    /// Writes a header line followed by one line per step.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<(), TraceError> {
        serde_json::to_writer(&mut w, self).map_err(std::io::Error::from)?;
        writeln!(w)?;
        for step in &self.steps {
            serde_json::to_writer(&mut w, step).map_err(std::io::Error::from)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self, TraceError> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or(TraceError::Empty)?;
        let mut trace: ExecutionTrace = serde_json::from_str(&header?)
            .map_err(|source| TraceError::Parse { line: 1, source })?;
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let step: StepRecord =
                serde_json::from_str(&line).map_err(|source| TraceError::Parse {
                    line: i + 1,
                    source,
                })?;
            let expected = trace.steps.len() as u64;
            if step.index != expected {
                return Err(TraceError::Order {
                    expected,
                    found: step.index,
                });
            }
            trace.steps.push(step);
        }
        Ok(trace)
    }

    /// Fetches and deliveries that occurred before the first safe
    /// configuration.
    pub fn events_before_first_safe(&self) -> Option<(u64, u64)> {
        let at = self.first_safe?;
        let f = self.fetches.iter().filter(|e| e.step < at).count() as u64;
        let d = self.deliveries.iter().filter(|e| e.step < at).count() as u64;
        Some((f, d))
    }
}

//! Offline checks over recorded executions.

use serde::{Deserialize, Serialize};

use super::engine::{Clock, Stamp};
use super::trace::{BatchId, ExecutionTrace, StepKind};
use crate::protocol::next_index;

/// Outcome of the legal-suffix check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "verdict")]
pub enum LegalVerdict {
    /// Deliveries from position `k` on are consecutive fetches, in order.
    Pass {
        k: usize,
    },
    Fail {
        reason: String,
    },
    /// The trace holds no delivery.
    NotApplicable,
}

impl LegalVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, LegalVerdict::Pass { .. })
    }
}

/// Finds the smallest `k` such that deliveries `k..` are exactly fetches
/// `f, f+1, ...` with no loss, duplicate or reordering, and with at most the
/// final fetch still undelivered. Every delivery after the first safe
/// configuration has to lie in that suffix, which may be empty when the run
/// stopped right at safety.
pub fn check_legal_suffix(trace: &ExecutionTrace) -> LegalVerdict {
    let d = &trace.deliveries;
    if d.is_empty() {
        return LegalVerdict::NotApplicable;
    }
    let id = |j: usize| match d[j].id {
        BatchId::Fetched(f) => Some(f),
        BatchId::Debris => None,
    };
    let m = d.len();
    let last = id(m - 1);
    let mut k = if last.is_some() { m - 1 } else { m };
    while k > 0 && k < m && matches!((id(k - 1), id(k)), (Some(a), Some(b)) if a + 1 == b) {
        k -= 1;
    }
    match trace.first_safe {
        Some(at) => {
            let before = d.iter().filter(|e| e.step < at).count();
            if k > before {
                return LegalVerdict::Fail {
                    reason: format!(
                        "delivery {} (step {}) breaks the fetch order after the first safe configuration",
                        k - 1,
                        d[k - 1].step
                    ),
                };
            }
        }
        None if k == m => {
            return LegalVerdict::Fail {
                reason: "the last delivery matches no fetch".to_string(),
            };
        }
        None => {}
    }
    // At most the newest fetch may still be in flight.
    let undelivered = match last {
        Some(last) => trace.fetches.len() as u64 - (last + 1),
        None => {
            let at = trace.first_safe.unwrap_or(0);
            trace.fetches.iter().filter(|f| f.step >= at).count() as u64
        }
    };
    if undelivered > 1 {
        return LegalVerdict::Fail {
            reason: format!("{undelivered} fetched batches were never delivered"),
        };
    }
    LegalVerdict::Pass { k }
}

/// Fetches and deliveries strictly before the first safe configuration;
/// `None` when the run never became safe.
pub fn count_alpha_beta(trace: &ExecutionTrace) -> Option<(u64, u64)> {
    trace.events_before_first_safe()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressionViolation {
    pub step: u64,
    pub message: String,
}

/// After the first safe configuration, fetches and deliveries alternate,
/// starting with a fetch; fetch indices advance by one modulo 3 and every
/// delivery carries the index and batch of the fetch before it.
pub fn check_index_progression(trace: &ExecutionTrace) -> Vec<ProgressionViolation> {
    let Some(at) = trace.first_safe else {
        return Vec::new();
    };
    enum Ev<'a> {
        F(&'a super::FetchEvent),
        D(&'a super::DeliverEvent),
    }
    let mut events: Vec<(u64, Ev)> = trace
        .fetches
        .iter()
        .filter(|f| f.step >= at)
        .map(|f| (f.step, Ev::F(f)))
        .chain(
            trace
                .deliveries
                .iter()
                .filter(|d| d.step >= at)
                .map(|d| (d.step, Ev::D(d))),
        )
        .collect();
    events.sort_by_key(|(step, _)| *step);

    let mut violations = Vec::new();
    let mut flag =
        |step: u64, message: String| violations.push(ProgressionViolation { step, message });
    let mut last_fetch: Option<&super::FetchEvent> = None;
    let mut last_delivery_index: Option<u8> = None;
    let mut delivered_since_fetch = true;
    for (step, ev) in events {
        match ev {
            Ev::F(f) => {
                if !delivered_since_fetch {
                    flag(
                        step,
                        format!("fetch {} before the previous batch was delivered", f.id),
                    );
                }
                if let Some(prev) = last_fetch {
                    if f.index != next_index(prev.index) {
                        flag(
                            step,
                            format!("fetch index {} follows {}", f.index, prev.index),
                        );
                    }
                }
                last_fetch = Some(f);
                delivered_since_fetch = false;
            }
            Ev::D(d) => {
                if let Some(prev) = last_delivery_index {
                    if d.index != next_index(prev) {
                        flag(step, format!("delivery index {} follows {}", d.index, prev));
                    }
                }
                last_delivery_index = Some(d.index);
                match last_fetch {
                    None => flag(step, "delivery before any post-safety fetch".to_string()),
                    Some(_) if delivered_since_fetch => {
                        flag(step, "second delivery between two fetches".to_string())
                    }
                    Some(f) => {
                        if d.index != f.index {
                            flag(
                                step,
                                format!("delivered index {} but fetched {}", d.index, f.index),
                            );
                        }
                        if d.id != BatchId::Fetched(f.id) {
                            flag(
                                step,
                                format!("delivered {:?} but fetched batch {}", d.id, f.id),
                            );
                        }
                    }
                }
                delivered_since_fetch = true;
            }
        }
    }
    violations
}

/// Causal observables on the converged segment.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreshnessReport {
    pub fetches_checked: u64,
    /// Fetches whose completing acks all predate the previous fetch, or that
    /// fired on fewer than `capacity + 1` acks.
    pub fetches_without_fresh_ack: u64,
    pub deliveries_checked: u64,
    /// Deliveries with fewer than `labels − capacity` packets sent after the
    /// previous delivery.
    pub deliveries_short_of_fresh: u64,
}

impl FreshnessReport {
    pub fn holds(&self) -> bool {
        self.fetches_without_fresh_ack == 0 && self.deliveries_short_of_fresh == 0
    }
}

pub fn freshness_observables(trace: &ExecutionTrace) -> FreshnessReport {
    let mut report = FreshnessReport::default();
    let Some(at) = trace.first_safe else {
        return report;
    };
    let c = trace.capacity as u64;
    for pair in trace.fetches.windows(2).filter(|w| w[0].step >= at) {
        report.fetches_checked += 1;
        let fresh = pair[1]
            .ack_sources
            .iter()
            .any(|s| s.is_some_and(|s| s > pair[0].step));
        if !fresh || (pair[1].ack_sources.len() as u64) < c + 1 {
            report.fetches_without_fresh_ack += 1;
        }
    }
    let need = u64::from(trace.packet_labels).saturating_sub(c);
    for pair in trace.deliveries.windows(2).filter(|w| w[0].step >= at) {
        report.deliveries_checked += 1;
        let fresh = pair[1]
            .sources
            .iter()
            .filter(|s| s.is_some_and(|s| s > pair[0].step))
            .count() as u64;
        if fresh < need {
            report.deliveries_short_of_fresh += 1;
        }
    }
    report
}

fn replay_clocks(trace: &ExecutionTrace, from: u64, to: u64) -> [Clock; 2] {
    assert!(from <= to, "chain range is reversed");
    assert!(
        to as usize <= trace.steps.len(),
        "chain weights need per-step records up to step {to}"
    );
    let mut clocks = [Clock::default(); 2];
    let mut stamps: Vec<Stamp> = Vec::with_capacity((to - from) as usize);
    for step in &trace.steps[from as usize..to as usize] {
        let p = step.actor.slot();
        if step.kind == StepKind::Receive {
            if let Some(o) = step.origin.filter(|&o| o >= from) {
                let s = stamps[(o - from) as usize];
                clocks[p].merge(&s);
            }
        }
        if step.progress {
            clocks[p].progress(p);
        }
        stamps.push(clocks[p].stamp(step.index));
    }
    clocks
}

/// Heaviest happened-before chain of progress events (fetches and
/// deliveries) between configurations `from` and `to`.
///
/// Each link from one process's progress event to a causally later progress
/// event of the other process weighs one; links within a process and plain
/// message hops weigh nothing. Requires a fully recorded trace.
pub fn hb_chain_weight(trace: &ExecutionTrace, from: u64, to: u64) -> u64 {
    let clocks = replay_clocks(trace, from, to);
    clocks[0].known[0].max(clocks[1].known[1])
}

/// Heaviest happened-before path counting every message edge as one and
/// every intra-process edge as zero. Requires a fully recorded trace.
pub fn message_chain_weight(trace: &ExecutionTrace, from: u64, to: u64) -> u64 {
    let clocks = replay_clocks(trace, from, to);
    clocks[0].chain.max(clocks[1].chain)
}

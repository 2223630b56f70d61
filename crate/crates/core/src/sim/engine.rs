use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::safety::SafeConfigReport;
use super::trace::{
    Actor, BatchId, DeliverEvent, ExecutionTrace, FetchEvent, GuardFire, StepKind, StepRecord,
};
use super::Protocol;
use crate::channel::{AdversaryPolicy, Channel, Envelope};
use crate::fault::Configuration;
use crate::protocol::{AckPacket, FetchSource, Packet, INDEX_MODULUS};

/// Causal stamp carried by every in-flight packet.
///
/// `chain` is the heaviest message path ending at the sending step;
/// `known[p]` is the weight of the latest progress event of process `p`
/// (sender 0, receiver 1) in the sending step's causal past.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stamp {
    pub step: u64,
    pub chain: u64,
    pub known: [u64; 2],
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Clock {
    pub chain: u64,
    pub known: [u64; 2],
}

impl Clock {
    pub fn merge(&mut self, other: &Stamp) {
        self.chain = self.chain.max(other.chain + 1);
        for p in 0..2 {
            self.known[p] = self.known[p].max(other.known[p]);
        }
    }

    /// A fetch or delivery by process `p`. Crossing from the other process's
    /// latest known progress adds one; consecutive progress on one process
    /// adds nothing.
    pub fn progress(&mut self, p: usize) {
        self.known[p] = self.known[p].max(self.known[1 - p] + 1);
    }

    pub fn stamp(&self, step: u64) -> Stamp {
        Stamp {
            step,
            chain: self.chain,
            known: self.known,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    SenderTick,
    ReceiverTick,
    DeliverToReceiver,
    DeliverToSender,
}

/// Relative scheduler weights of the four step types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionWeights {
    pub sender_tick: u32,
    pub receiver_tick: u32,
    pub deliver_to_receiver: u32,
    pub deliver_to_sender: u32,
}

impl Default for ActionWeights {
    fn default() -> Self {
        ActionWeights {
            sender_tick: 1,
            receiver_tick: 1,
            deliver_to_receiver: 3,
            deliver_to_sender: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopWhen {
    /// Run the whole budget.
    Budget,
    /// Stop at the first safe configuration.
    FirstSafe,
    /// Stop once this many deliveries happened.
    Deliveries(u64),
    /// Stop once the sender found the application empty, which implies its
    /// last batch was acknowledged.
    Exhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recording {
    /// Per-step records with digests and safety flags.
    Full,
    /// Fetch, delivery and guard-fire events only.
    Events,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub seed: u64,
    pub budget: u64,
    pub stop: StopWhen,
    pub policy: AdversaryPolicy,
    pub weights: ActionWeights,
    pub fairness_threshold: Option<u32>,
    pub recording: Recording,
    /// Explicit schedule; the run ends when it is used up.
    pub script: Option<Vec<Action>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: 0,
            budget: 1_000_000,
            stop: StopWhen::Budget,
            policy: AdversaryPolicy::default(),
            weights: ActionWeights::default(),
            fairness_threshold: None,
            recording: Recording::Events,
            script: None,
        }
    }
}

/// SHA-256 of the JSON form of `value`, first 8 bytes in hex.
pub fn digest_of<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("state serializes");
    Sha256::digest(bytes)[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A running system: both endpoints, both channels and the recorder.
pub struct Simulation<'p, P: Protocol> {
    protocol: &'p P,
    sender: P::Sender,
    receiver: P::Receiver,
    chan_sr: Channel<Packet, Stamp>,
    chan_rs: Channel<AckPacket, Stamp>,
    clocks: [Clock; 2],
    ack_origin: HashMap<AckPacket, Option<u64>>,
    packet_origin: HashMap<(u8, u32), Option<u64>>,
    last_fetch: [Option<usize>; INDEX_MODULUS as usize],
    recording: Recording,
    exhausted: bool,
    trace: ExecutionTrace,
}

impl<'p, P: Protocol> Simulation<'p, P> {
    pub fn new(
        protocol: &'p P,
        start: Configuration<P::Sender, P::Receiver>,
        opts: &RunOptions,
    ) -> Self {
        let capacity = protocol.capacity();
        let mut chan_sr = Channel::with_contents(
            capacity,
            opts.policy
                .clone()
                .with_seed(mix(opts.seed ^ opts.policy.seed, 1)),
            start.chan_sr,
        );
        let mut chan_rs = Channel::with_contents(
            capacity,
            opts.policy
                .clone()
                .with_seed(mix(opts.seed ^ opts.policy.seed, 2)),
            start.chan_rs,
        );
        if let Some(k) = opts.fairness_threshold {
            chan_sr.set_fairness_threshold(k);
            chan_rs.set_fairness_threshold(k);
        }
        let initial = protocol.assess(
            &start.sender,
            &start.receiver,
            chan_sr.items(),
            chan_rs.items(),
        );
        let first_safe = initial.is_safe.then_some(0);
        let trace = ExecutionTrace {
            protocol: protocol.name().to_string(),
            seed: opts.seed,
            capacity,
            packet_labels: protocol.packet_labels(),
            steps_taken: 0,
            complete: false,
            first_safe,
            chain_at_first_safe: first_safe.map(|_| 0),
            message_chain_at_first_safe: first_safe.map(|_| 0),
            initial,
            fetches: Vec::new(),
            deliveries: Vec::new(),
            resets: Vec::new(),
            guard_fires: Vec::new(),
            packets_sent: 0,
            acks_sent: 0,
            final_digest: String::new(),
            steps: Vec::new(),
        };
        Simulation {
            protocol,
            sender: start.sender,
            receiver: start.receiver,
            chan_sr,
            chan_rs,
            clocks: [Clock::default(); 2],
            ack_origin: HashMap::new(),
            packet_origin: HashMap::new(),
            last_fetch: [None; INDEX_MODULUS as usize],
            recording: opts.recording,
            exhausted: false,
            trace,
        }
    }

    pub fn configuration(&self) -> Configuration<P::Sender, P::Receiver> {
        Configuration {
            sender: self.sender.clone(),
            receiver: self.receiver.clone(),
            chan_sr: self.chan_sr.items().cloned().collect(),
            chan_rs: self.chan_rs.items().cloned().collect(),
        }
    }

    pub fn report(&self) -> SafeConfigReport {
        self.protocol.assess(
            &self.sender,
            &self.receiver,
            self.chan_sr.items(),
            self.chan_rs.items(),
        )
    }

    /// SHA-256 of the canonical JSON form of the configuration, first 8
    /// bytes in hex.
    pub fn digest(&self) -> String {
        digest_of(&self.configuration())
    }

    pub fn trace(&self) -> &ExecutionTrace {
        &self.trace
    }

    pub fn sender(&self) -> &P::Sender {
        &self.sender
    }

    pub fn receiver(&self) -> &P::Receiver {
        &self.receiver
    }

    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn chan_sr(&self) -> &Channel<Packet, Stamp> {
        &self.chan_sr
    }

    pub fn chan_rs(&self) -> &Channel<AckPacket, Stamp> {
        &self.chan_rs
    }

    pub fn enabled(&self) -> impl Iterator<Item = Action> + '_ {
        [
            Action::SenderTick,
            Action::ReceiverTick,
            Action::DeliverToReceiver,
            Action::DeliverToSender,
        ]
        .into_iter()
        .filter(|a| match a {
            Action::DeliverToReceiver => !self.chan_sr.is_empty(),
            Action::DeliverToSender => !self.chan_rs.is_empty(),
            _ => true,
        })
    }

    fn choose(&self, rng: &mut ChaCha8Rng, w: &ActionWeights) -> Action {
        let weighted: Vec<(Action, u32)> = self
            .enabled()
            .map(|a| {
                let weight = match a {
                    Action::SenderTick => w.sender_tick,
                    Action::ReceiverTick => w.receiver_tick,
                    Action::DeliverToReceiver => w.deliver_to_receiver,
                    Action::DeliverToSender => w.deliver_to_sender,
                };
                (a, weight)
            })
            .filter(|&(_, weight)| weight > 0)
            .collect();
        let total: u32 = weighted.iter().map(|&(_, w)| w).sum();
        if total == 0 {
            return Action::SenderTick;
        }
        let mut pick = rng.gen_range(0..total);
        for (a, weight) in weighted {
            if pick < weight {
                return a;
            }
            pick -= weight;
        }
        unreachable!("pick is below the total weight")
    }

    /// Executes one atomic step. Deliveries on an empty channel do nothing
    /// and return `false`.
    pub fn apply(&mut self, action: Action, app: &mut dyn FetchSource) -> bool {
        let idx = self.trace.steps_taken;
        let (actor, kind, origin, progress) = match action {
            Action::SenderTick => (
                Actor::Sender,
                StepKind::Tick,
                None,
                self.sender_tick(idx, app),
            ),
            Action::ReceiverTick => (
                Actor::Receiver,
                StepKind::Tick,
                None,
                self.receiver_tick(idx),
            ),
            Action::DeliverToReceiver => match self.chan_sr.deliver() {
                Some(env) => (
                    Actor::Receiver,
                    StepKind::Receive,
                    self.packet_arrival(idx, env),
                    false,
                ),
                None => return false,
            },
            Action::DeliverToSender => match self.chan_rs.deliver() {
                Some(env) => (
                    Actor::Sender,
                    StepKind::Receive,
                    self.ack_arrival(env),
                    false,
                ),
                None => return false,
            },
        };
        self.trace.steps_taken += 1;
        let full = self.recording == Recording::Full;
        if full || self.trace.first_safe.is_none() {
            let report = self.report();
            if report.is_safe && self.trace.first_safe.is_none() {
                self.trace.first_safe = Some(idx + 1);
                self.trace.chain_at_first_safe =
                    Some(self.clocks[0].known[0].max(self.clocks[1].known[1]));
                self.trace.message_chain_at_first_safe =
                    Some(self.clocks[0].chain.max(self.clocks[1].chain));
            }
            if full {
                self.trace.steps.push(StepRecord {
                    index: idx,
                    actor,
                    kind,
                    origin,
                    progress,
                    digest: self.digest(),
                    safe: report.is_safe,
                    ais: report.ais,
                });
            }
        }
        true
    }

    fn sender_tick(&mut self, idx: u64, app: &mut dyn FetchSource) -> bool {
        let p = self.protocol;
        let before = p.sender_guard(&self.sender).then(|| {
            self.trace.guard_fires.push(GuardFire {
                config: idx,
                report: self.report(),
            });
            (p.alt_index(&self.sender), p.ack_set(&self.sender).clone())
        });
        let out = p.sender_tick(&mut self.sender, app);
        self.exhausted |= out.exhausted;
        let clock = &mut self.clocks[0];
        let mut progress = false;
        if let Some(batch) = out.fetched {
            progress = true;
            clock.progress(0);
            let (old, acks) = before.expect("a fetch implies the guard held");
            let ack_sources = acks
                .iter()
                .filter(|a| a.ldai == old)
                .map(|a| self.ack_origin.get(a).copied().flatten())
                .collect();
            self.ack_origin.clear();
            let index = p.alt_index(&self.sender);
            let id = self.trace.fetches.len();
            self.trace.fetches.push(FetchEvent {
                step: idx,
                id: id as u64,
                index,
                batch,
                ack_sources,
            });
            self.last_fetch[usize::from(index)] = Some(id);
        }
        let stamp = clock.stamp(idx);
        self.trace.packets_sent += out.packets.len() as u64;
        for packet in out.packets {
            self.chan_sr.send(packet, Some(stamp));
        }
        progress
    }

    fn receiver_tick(&mut self, idx: u64) -> bool {
        let p = self.protocol;
        let held: Vec<(u8, u32)> = p
            .packet_set(&self.receiver)
            .iter()
            .map(Packet::key)
            .collect();
        let out = p.receiver_tick(&mut self.receiver);
        let clock = &mut self.clocks[1];
        let mut progress = false;
        if let Some((index, batch)) = out.delivered {
            progress = true;
            clock.progress(1);
            let sources = held
                .iter()
                .filter(|k| k.0 == index)
                .map(|k| self.packet_origin.get(k).copied().flatten())
                .collect();
            let id = match self.last_fetch.get(usize::from(index)).copied().flatten() {
                Some(f) if self.trace.fetches[f].batch == batch => BatchId::Fetched(f as u64),
                _ => BatchId::Debris,
            };
            self.trace.deliveries.push(DeliverEvent {
                step: idx,
                id,
                index,
                batch,
                sources,
            });
        } else if out.cleared {
            self.trace.resets.push((idx, out.reset));
        }
        if out.cleared {
            self.packet_origin.clear();
        }
        let stamp = clock.stamp(idx);
        self.trace.acks_sent += out.acks.len() as u64;
        for ack in out.acks {
            self.chan_rs.send(ack, Some(stamp));
        }
        progress
    }

    fn packet_arrival(&mut self, idx: u64, env: Envelope<Packet, Stamp>) -> Option<u64> {
        let clock = &mut self.clocks[1];
        if let Some(s) = &env.stamp {
            clock.merge(s);
        }
        let origin = env.stamp.map(|s| s.step);
        let key = env.item.key();
        let receipt = self
            .protocol
            .receiver_on_packet(&mut self.receiver, env.item);
        if receipt.stored {
            self.packet_origin.insert(key, origin);
        }
        let stamp = clock.stamp(idx);
        self.trace.acks_sent += receipt.acks.len() as u64;
        for ack in receipt.acks {
            self.chan_rs.send(ack, Some(stamp));
        }
        origin
    }

    fn ack_arrival(&mut self, env: Envelope<AckPacket, Stamp>) -> Option<u64> {
        if let Some(s) = &env.stamp {
            self.clocks[0].merge(s);
        }
        let origin = env.stamp.map(|s| s.step);
        if self.protocol.sender_on_ack(&mut self.sender, &env.item) {
            self.ack_origin.entry(env.item).or_insert(origin);
        }
        origin
    }

    fn stop_reached(&self, stop: StopWhen) -> bool {
        match stop {
            StopWhen::Budget => false,
            StopWhen::FirstSafe => self.trace.first_safe.is_some(),
            StopWhen::Deliveries(k) => self.trace.deliveries.len() as u64 >= k,
            StopWhen::Exhausted => self.exhausted,
        }
    }

    pub fn finish(mut self, complete: bool) -> ExecutionTrace {
        self.trace.complete = complete;
        self.trace.final_digest = self.digest();
        self.trace
    }
}

/// Runs `protocol` from `start` until the stop condition, the budget or the
/// end of the script. Deterministic in `(start, opts)` and the source.
pub fn run<P: Protocol>(
    protocol: &P,
    start: Configuration<P::Sender, P::Receiver>,
    app: &mut dyn FetchSource,
    opts: &RunOptions,
) -> ExecutionTrace {
    let mut sim = Simulation::new(protocol, start, opts);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(opts.seed, 0));
    let mut script = opts.script.as_ref().map(|s| s.iter().copied());
    loop {
        if sim.stop_reached(opts.stop) || sim.trace.steps_taken >= opts.budget {
            break;
        }
        let action = match script.as_mut() {
            Some(it) => match it.next() {
                Some(a) => a,
                None => break,
            },
            None => sim.choose(&mut rng, &opts.weights),
        };
        sim.apply(action, app);
    }
    let complete = match opts.stop {
        StopWhen::Budget => sim.trace.steps_taken >= opts.budget || opts.script.is_some(),
        stop => sim.stop_reached(stop),
    };
    sim.finish(complete)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::Bits;
    use crate::codec::CodecParams;
    use crate::fault::{arbitrary_configuration, safe_configuration};
    use crate::protocol::{ScriptedSource, SeededSource};
    use crate::sim::Efficient;

    fn proto() -> Efficient {
        Efficient::new(CodecParams::new(2, 2, 1).unwrap())
    }

    fn bits(s: &str) -> Bits {
        s.parse().unwrap()
    }

    #[test]
    fn scripted_batches_arrive_once_in_order() {
        let p = proto();
        let start = safe_configuration(0, &p.params, vec![], vec![]).unwrap();
        let b1 = vec![bits("01"), bits("10")];
        let b2 = vec![bits("11"), bits("00")];
        let mut app = ScriptedSource::new([b1.clone(), b2.clone()]);
        let opts = RunOptions {
            seed: 3,
            stop: StopWhen::Exhausted,
            ..RunOptions::default()
        };
        let trace = run(&p, start, &mut app, &opts);
        assert!(trace.complete);
        let delivered: Vec<Vec<Bits>> = trace
            .deliveries
            .iter()
            .map(|d| d.batch.messages().to_vec())
            .collect();
        assert_eq!(delivered, vec![b1, b2]);
        assert_eq!(trace.first_safe, Some(0));
        assert!(trace
            .deliveries
            .iter()
            .all(|d| matches!(d.id, BatchId::Fetched(_))));
    }

    #[test]
    fn same_seed_same_trace() {
        let p = proto();
        let opts = RunOptions {
            seed: 9,
            budget: 3_000,
            recording: Recording::Full,
            policy: AdversaryPolicy {
                omission: 0.2,
                duplication: 0.2,
                ..AdversaryPolicy::default()
            },
            ..RunOptions::default()
        };
        let a = run(
            &p,
            arbitrary_configuration(4, &p.params),
            &mut SeededSource::new(1),
            &opts,
        );
        let b = run(
            &p,
            arbitrary_configuration(4, &p.params),
            &mut SeededSource::new(1),
            &opts,
        );
        assert_eq!(a, b);
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.steps.len(), 3_000);
        assert!(a.complete);
    }

    #[test]
    fn stamps_track_message_chain() {
        let p = proto();
        let start = safe_configuration(0, &p.params, vec![], vec![]).unwrap();
        let opts = RunOptions {
            recording: Recording::Full,
            script: Some(vec![Action::SenderTick, Action::DeliverToReceiver]),
            ..RunOptions::default()
        };
        let trace = run(&p, start, &mut SeededSource::new(0), &opts);
        assert_eq!(trace.steps.len(), 2);
        assert!(trace.steps[0].progress);
        assert_eq!(trace.steps[1].origin, Some(0));
        assert_eq!(trace.fetches.len(), 1);
    }

    #[test]
    fn incomplete_when_budget_runs_out() {
        let p = proto();
        let start = safe_configuration(0, &p.params, vec![], vec![]).unwrap();
        let opts = RunOptions {
            budget: 5,
            stop: StopWhen::Deliveries(1_000),
            ..RunOptions::default()
        };
        let trace = run(&p, start, &mut SeededSource::new(0), &opts);
        assert!(!trace.complete);
        assert_eq!(trace.steps_taken, 5);
    }
}

//! Live endpoints over UDP and replay of their logs.
//!
//! Each endpoint owns its state machine and alternates between socket reads
//! and timer ticks in a single loop, logging every input that changes the
//! state. Replaying a log through the same step functions must reproduce
//! every recorded state digest.

use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::proxy::{Proxy, ProxyStats};
use super::wire::{deserialize, serialize_ack, serialize_packet};
use crate::bits::Bits;
use crate::channel::AdversaryPolicy;
use crate::codec::{CodecParams, MessageBatch};
use crate::protocol::{FetchSource, ReceiverState, ScriptedSource, SenderState};
use crate::sim::digest_of;

const MAX_DATAGRAM: usize = 65_536;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Sender,
    Receiver,
}

/// One logged input of a live endpoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum LogEvent {
    /// A loop iteration. `batch` is the fetched (sender) or delivered
    /// (receiver) batch; `sent` the emitted datagrams in hex.
    Tick {
        batch: Option<MessageBatch>,
        sent: Vec<String>,
        digest: String,
    },
    /// A received datagram, hex encoded.
    Datagram { bytes: String, digest: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub role: Role,
    pub params: CodecParams,
    /// Endpoint state before the first event.
    pub initial: serde_json::Value,
    pub events: Vec<LogEvent>,
}

impl SessionLog {
    pub fn ticks(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, LogEvent::Tick { .. }))
            .count()
    }

    pub fn datagrams(&self) -> usize {
        self.events.len() - self.ticks()
    }
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn from_hex(s: &str) -> Option<Vec<u8>> {
    if !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok())
        .collect()
}

#[derive(Clone, Debug)]
pub struct LiveConfig {
    pub params: CodecParams,
    /// Period of the do-forever loop.
    pub tick: Duration,
    /// Hard stop for the endpoint.
    pub deadline: Duration,
}

/// Waits for a datagram until `until`. `Ok(None)` on timeout.
fn recv_until(socket: &UdpSocket, buf: &mut [u8], until: Instant) -> io::Result<Option<usize>> {
    let wait = until.saturating_duration_since(Instant::now());
    if wait.is_zero() {
        return Ok(None);
    }
    socket.set_read_timeout(Some(wait.max(Duration::from_micros(50))))?;
    match socket.recv_from(buf) {
        Ok((len, _)) => Ok(Some(len)),
        Err(e)
            if matches!(
                e.kind(),
                io::ErrorKind::WouldBlock
                    | io::ErrorKind::TimedOut
                    | io::ErrorKind::ConnectionReset
            ) =>
        {
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn send_all(socket: &UdpSocket, peer: SocketAddr, datagrams: &[Vec<u8>]) {
    for d in datagrams {
        // A refused or dropped datagram is just another loss.
        let _ = socket.send_to(d, peer);
    }
}

#[derive(Clone, Debug)]
pub struct SenderSession {
    pub log: SessionLog,
    pub fetched: Vec<MessageBatch>,
    /// The application ran dry after its last batch was acknowledged.
    pub exhausted: bool,
    pub final_state: SenderState,
}

pub fn run_sender(
    socket: &UdpSocket,
    peer: SocketAddr,
    cfg: &LiveConfig,
    initial: SenderState,
    app: &mut dyn FetchSource,
) -> io::Result<SenderSession> {
    let params = &cfg.params;
    let mut state = initial.clone();
    let mut log = SessionLog {
        role: Role::Sender,
        params: *params,
        initial: serde_json::to_value(&initial).map_err(io::Error::other)?,
        events: Vec::new(),
    };
    let mut fetched = Vec::new();
    let mut buf = vec![0u8; MAX_DATAGRAM];
    let start = Instant::now();
    let mut next_tick = start;
    let mut exhausted = false;
    while !exhausted && start.elapsed() < cfg.deadline {
        if Instant::now() >= next_tick {
            let out = state.tick(params, app);
            exhausted = out.exhausted;
            let datagrams: Vec<Vec<u8>> = out
                .packets
                .iter()
                .map(serialize_packet)
                .collect::<Result<_, _>>()
                .map_err(io::Error::other)?;
            send_all(socket, peer, &datagrams);
            fetched.extend(out.fetched.clone());
            log.events.push(LogEvent::Tick {
                batch: out.fetched,
                sent: datagrams.iter().map(|d| to_hex(d)).collect(),
                digest: digest_of(&state),
            });
            next_tick += cfg.tick;
            continue;
        }
        if let Some(len) = recv_until(socket, &mut buf, next_tick)? {
            let ack = deserialize(&buf[..len], params.pl()).into_ack();
            state.on_ack(&ack, params);
            log.events.push(LogEvent::Datagram {
                bytes: to_hex(&buf[..len]),
                digest: digest_of(&state),
            });
        }
    }
    Ok(SenderSession {
        log,
        fetched,
        exhausted,
        final_state: state,
    })
}

#[derive(Clone, Debug)]
pub struct ReceiverSession {
    pub log: SessionLog,
    pub delivered: Vec<MessageBatch>,
    pub final_state: ReceiverState,
}

/// Runs the receiver until `expect` deliveries plus `linger`, or the
/// deadline. The linger period keeps acknowledging so the sender can learn
/// that its last batch arrived.
pub fn run_receiver(
    socket: &UdpSocket,
    peer: SocketAddr,
    cfg: &LiveConfig,
    initial: ReceiverState,
    expect: Option<usize>,
    linger: Duration,
) -> io::Result<ReceiverSession> {
    let params = &cfg.params;
    let mut state = initial.clone();
    let mut log = SessionLog {
        role: Role::Receiver,
        params: *params,
        initial: serde_json::to_value(&initial).map_err(io::Error::other)?,
        events: Vec::new(),
    };
    let mut delivered = Vec::new();
    let mut buf = vec![0u8; MAX_DATAGRAM];
    let start = Instant::now();
    let mut next_tick = start;
    let mut done_at: Option<Instant> = None;
    while start.elapsed() < cfg.deadline && done_at.is_none_or(|t| t.elapsed() < linger) {
        if Instant::now() >= next_tick {
            let out = state.tick(params);
            let datagrams: Vec<Vec<u8>> = out
                .acks
                .iter()
                .map(serialize_ack)
                .collect::<Result<_, _>>()
                .map_err(io::Error::other)?;
            send_all(socket, peer, &datagrams);
            let batch = out.delivered.map(|d| d.batch);
            delivered.extend(batch.clone());
            log.events.push(LogEvent::Tick {
                batch,
                sent: datagrams.iter().map(|d| to_hex(d)).collect(),
                digest: digest_of(&state),
            });
            if done_at.is_none() && expect.is_some_and(|n| delivered.len() >= n) {
                done_at = Some(Instant::now());
            }
            next_tick += cfg.tick;
            continue;
        }
        if let Some(len) = recv_until(socket, &mut buf, next_tick)? {
            let packet = deserialize(&buf[..len], params.pl()).into_packet();
            state.on_packet(packet, params);
            log.events.push(LogEvent::Datagram {
                bytes: to_hex(&buf[..len]),
                digest: digest_of(&state),
            });
        }
    }
    Ok(ReceiverSession {
        log,
        delivered,
        final_state: state,
    })
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("initial state: {0}")]
    State(#[from] serde_json::Error),
    #[error("event {index}: {what}")]
    Mismatch { index: usize, what: String },
}

fn mismatch(index: usize, what: impl Into<String>) -> ReplayError {
    ReplayError::Mismatch {
        index,
        what: what.into(),
    }
}

fn hex_datagram(index: usize, s: &str) -> Result<Vec<u8>, ReplayError> {
    from_hex(s).ok_or_else(|| mismatch(index, "datagram is not hex"))
}

/// Feeds a live log through the protocol step functions, checking the
/// emitted datagrams, fetched or delivered batches and state digests of
/// every event. Returns the number of events replayed.
pub fn replay(log: &SessionLog) -> Result<usize, ReplayError> {
    let params = &log.params;
    match log.role {
        Role::Sender => {
            let mut state: SenderState = serde_json::from_value(log.initial.clone())?;
            for (i, event) in log.events.iter().enumerate() {
                let digest = match event {
                    LogEvent::Tick {
                        batch,
                        sent,
                        digest,
                    } => {
                        let mut app =
                            ScriptedSource::new(batch.clone().map(MessageBatch::into_messages));
                        let out = state.tick(params, &mut app);
                        if &out.fetched != batch {
                            return Err(mismatch(i, "fetched batch differs"));
                        }
                        let emitted: Vec<String> = out
                            .packets
                            .iter()
                            .map(|p| serialize_packet(p).map(|d| to_hex(&d)))
                            .collect::<Result<_, _>>()
                            .map_err(|e| mismatch(i, e.to_string()))?;
                        if &emitted != sent {
                            return Err(mismatch(i, "emitted packets differ"));
                        }
                        digest
                    }
                    LogEvent::Datagram { bytes, digest } => {
                        let ack = deserialize(&hex_datagram(i, bytes)?, params.pl()).into_ack();
                        state.on_ack(&ack, params);
                        digest
                    }
                };
                if &digest_of(&state) != digest {
                    return Err(mismatch(i, "state digest differs"));
                }
            }
        }
        Role::Receiver => {
            let mut state: ReceiverState = serde_json::from_value(log.initial.clone())?;
            for (i, event) in log.events.iter().enumerate() {
                let digest = match event {
                    LogEvent::Tick {
                        batch,
                        sent,
                        digest,
                    } => {
                        let out = state.tick(params);
                        if &out.delivered.map(|d| d.batch) != batch {
                            return Err(mismatch(i, "delivered batch differs"));
                        }
                        let emitted: Vec<String> = out
                            .acks
                            .iter()
                            .map(|a| serialize_ack(a).map(|d| to_hex(&d)))
                            .collect::<Result<_, _>>()
                            .map_err(|e| mismatch(i, e.to_string()))?;
                        if &emitted != sent {
                            return Err(mismatch(i, "emitted acks differ"));
                        }
                        digest
                    }
                    LogEvent::Datagram { bytes, digest } => {
                        let packet =
                            deserialize(&hex_datagram(i, bytes)?, params.pl()).into_packet();
                        state.on_packet(packet, params);
                        digest
                    }
                };
                if &digest_of(&state) != digest {
                    return Err(mismatch(i, "state digest differs"));
                }
            }
        }
    }
    Ok(log.events.len())
}

/// A complete in-process session: proxy, receiver and sender on loopback
/// sockets, each on its own thread.
#[derive(Clone, Debug)]
pub struct SessionSpec {
    pub params: CodecParams,
    pub proxy_capacity: usize,
    pub policy: AdversaryPolicy,
    pub batches: Vec<Vec<Bits>>,
    pub tick: Duration,
    pub deadline: Duration,
    pub linger: Duration,
    pub sender_start: SenderState,
    pub receiver_start: ReceiverState,
}

impl SessionSpec {
    /// Clean start at index 0 with the given script.
    pub fn clean(params: CodecParams, batches: Vec<Vec<Bits>>) -> Self {
        let sender_start = SenderState::acknowledged(0, &params);
        SessionSpec {
            proxy_capacity: params.capacity().max(1),
            params,
            policy: AdversaryPolicy::default(),
            batches,
            tick: Duration::from_millis(10),
            deadline: Duration::from_secs(60),
            linger: Duration::from_millis(300),
            sender_start,
            receiver_start: ReceiverState::new(0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SessionOutcome {
    pub sender: SenderSession,
    pub receiver: ReceiverSession,
    pub proxy: ProxyStats,
}

pub fn run_session(spec: &SessionSpec) -> io::Result<SessionOutcome> {
    let loopback: SocketAddr = "127.0.0.1:0".parse().expect("literal address");
    let receiver_socket = UdpSocket::bind(loopback)?;
    let sender_socket = UdpSocket::bind(loopback)?;
    let mut proxy = Proxy::bind(
        loopback,
        loopback,
        receiver_socket.local_addr()?,
        spec.proxy_capacity,
        spec.policy.clone(),
    )?;
    proxy.set_sender(sender_socket.local_addr()?);
    let front = proxy.front_addr()?;
    let back = proxy.back_addr()?;
    let cfg = LiveConfig {
        params: spec.params,
        tick: spec.tick,
        deadline: spec.deadline,
    };
    let stop = Arc::new(AtomicBool::new(false));
    let proxy_thread = {
        let stop = Arc::clone(&stop);
        thread::spawn(move || proxy.run(&stop))
    };
    let receiver_thread = {
        let cfg = cfg.clone();
        let start = spec.receiver_start.clone();
        let expect = spec.batches.len();
        let linger = spec.linger;
        thread::spawn(move || {
            run_receiver(&receiver_socket, back, &cfg, start, Some(expect), linger)
        })
    };
    let mut app = ScriptedSource::new(spec.batches.clone());
    let sender = run_sender(
        &sender_socket,
        front,
        &cfg,
        spec.sender_start.clone(),
        &mut app,
    );
    let receiver = receiver_thread.join().expect("receiver thread");
    stop.store(true, Ordering::Relaxed);
    let proxy = proxy_thread.join().expect("proxy thread");
    Ok(SessionOutcome {
        sender: sender?,
        receiver: receiver?,
        proxy: proxy?,
    })
}

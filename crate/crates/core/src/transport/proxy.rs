use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::channel::{AdversaryPolicy, Channel};

const MAX_DATAGRAM: usize = 65_536;

/// Counters of one proxy run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyStats {
    pub received_sr: u64,
    pub forwarded_sr: u64,
    pub received_rs: u64,
    pub forwarded_rs: u64,
}

/// Impairment relay between a sender and a receiver.
///
/// Datagrams from the sender arrive on the front socket and leave for the
/// receiver from the back socket; acknowledgments take the reverse path.
/// Each direction is a bounded [`Channel`] applying the adversary policy.
pub struct Proxy {
    front: UdpSocket,
    back: UdpSocket,
    receiver: SocketAddr,
    sender: Option<SocketAddr>,
    chan_sr: Channel<Vec<u8>>,
    chan_rs: Channel<Vec<u8>>,
    forward_every: Duration,
}

impl Proxy {
    pub fn bind(
        front: SocketAddr,
        back: SocketAddr,
        receiver: SocketAddr,
        capacity: usize,
        policy: AdversaryPolicy,
    ) -> io::Result<Self> {
        let front = UdpSocket::bind(front)?;
        let back = UdpSocket::bind(back)?;
        front.set_nonblocking(true)?;
        back.set_nonblocking(true)?;
        let seed = policy.seed;
        Ok(Proxy {
            front,
            back,
            receiver,
            sender: None,
            chan_sr: Channel::new(capacity, policy.clone().with_seed(seed)),
            chan_rs: Channel::new(capacity, policy.with_seed(seed ^ 0x5a5a)),
            forward_every: Duration::from_micros(200),
        })
    }

    pub fn front_addr(&self) -> io::Result<SocketAddr> {
        self.front.local_addr()
    }

    pub fn back_addr(&self) -> io::Result<SocketAddr> {
        self.back.local_addr()
    }

    /// Pins the sender address instead of learning it from traffic.
    pub fn set_sender(&mut self, addr: SocketAddr) {
        self.sender = Some(addr);
    }

    pub fn set_forward_interval(&mut self, every: Duration) {
        self.forward_every = every;
    }

    /// Relays until `stop` is raised.
    pub fn run(&mut self, stop: &AtomicBool) -> io::Result<ProxyStats> {
        let mut stats = ProxyStats::default();
        let mut buf = vec![0u8; MAX_DATAGRAM];
        let mut next_forward = Instant::now();
        while !stop.load(Ordering::Relaxed) {
            let mut busy = false;
            loop {
                match self.front.recv_from(&mut buf) {
                    Ok((len, from)) => {
                        self.sender.get_or_insert(from);
                        stats.received_sr += 1;
                        self.chan_sr.send(buf[..len].to_vec(), None);
                        busy = true;
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => break,
                    Err(e) if e.kind() == io::ErrorKind::ConnectionReset => continue,
                    Err(e) => return Err(e),
                }
            }
            loop {
                match self.back.recv_from(&mut buf) {
                    Ok((len, _)) => {
                        stats.received_rs += 1;
                        self.chan_rs.send(buf[..len].to_vec(), None);
                        busy = true;
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => break,
                    Err(e) if e.kind() == io::ErrorKind::ConnectionReset => continue,
                    Err(e) => return Err(e),
                }
            }
            let now = Instant::now();
            if now >= next_forward {
                next_forward = now + self.forward_every;
                if let Some(env) = self.chan_sr.deliver() {
                    // Send errors mean the peer is gone; the datagram is lost.
                    let _ = self.back.send_to(&env.item, self.receiver);
                    stats.forwarded_sr += 1;
                    busy = true;
                }
                if let (Some(sender), Some(env)) = (self.sender, self.chan_rs.deliver()) {
                    let _ = self.front.send_to(&env.item, sender);
                    stats.forwarded_rs += 1;
                    busy = true;
                }
            }
            if !busy {
                thread::sleep(Duration::from_micros(100));
            }
        }
        Ok(stats)
    }
}

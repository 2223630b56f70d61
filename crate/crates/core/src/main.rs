use std::fs;
use std::net::{SocketAddr, UdpSocket};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use s2arq::bits::Bits;
use s2arq::channel::AdversaryPolicy;
use s2arq::codec::CodecParams;
use s2arq::harness::{
    check_trace_file, compare_overhead, overhead_csv, run_campaign, run_scenario, AdversarySection,
    CodecSection, OverheadGrid, ProtocolKind, Scenario, SeedSection, SourceSection, StartSection,
};
use s2arq::protocol::{FetchSource, ReceiverState, ScriptedSource, SeededSource, SenderState};
use s2arq::sim::{ActionWeights, Recording, StopWhen};
use s2arq::transport::{replay, run_receiver, run_sender, LiveConfig, Proxy, SessionLog};

#[derive(Parser)]
#[command(
    name = "s2arq",
    version,
    about = "Self-stabilizing ARQ simulator and live demo"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CodecArgs {
    #[arg(long, default_value_t = 2)]
    pl: usize,
    #[arg(long, default_value_t = 2)]
    ml: usize,
    #[arg(long, default_value_t = 1)]
    capacity: usize,
}

impl CodecArgs {
    fn params(&self) -> Result<CodecParams, String> {
        CodecParams::new(self.pl, self.ml, self.capacity).map_err(|e| e.to_string())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the campaign described by a scenario file.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Arbitrary-start convergence sweep over a seed range.
    Sweep {
        #[arg(long, default_value_t = 0)]
        from: u64,
        #[arg(long, default_value_t = 100)]
        count: u64,
        #[command(flatten)]
        codec: CodecArgs,
        #[arg(long, default_value_t = 1_000_000)]
        budget: u64,
        #[arg(long, default_value_t = 0.0)]
        omission: f64,
        #[arg(long, default_value_t = 0.0)]
        duplication: f64,
        #[arg(long)]
        first_attempt: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Packet overhead of both variants over a parameter grid.
    Compare {
        #[arg(long, default_value_t = 2)]
        pl: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        ml: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        capacity: Vec<usize>,
        /// Batches per simulated measurement; 0 reports formulas only.
        #[arg(long, default_value_t = 20)]
        batches: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Re-check trace files against the invariant suite.
    Check {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
    /// Impairment proxy between a live sender and receiver.
    Proxy {
        /// Address the sender sends to.
        #[arg(long)]
        front: SocketAddr,
        /// Address the receiver acknowledges to.
        #[arg(long)]
        back: SocketAddr,
        /// Address of the receiver.
        #[arg(long)]
        receiver: SocketAddr,
        #[arg(long, default_value_t = 1)]
        capacity: usize,
        #[arg(long, default_value_t = 0.0)]
        omission: f64,
        #[arg(long, default_value_t = 0.0)]
        duplication: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stop after this many milliseconds; runs forever otherwise.
        #[arg(long)]
        duration_ms: Option<u64>,
    },
    /// Live sender.
    Send {
        #[arg(long)]
        bind: SocketAddr,
        #[arg(long)]
        peer: SocketAddr,
        #[command(flatten)]
        codec: CodecArgs,
        /// File with one batch per line, messages as bit strings.
        #[arg(long, conflicts_with = "batches")]
        script: Option<PathBuf>,
        /// Number of seeded random batches.
        #[arg(long, default_value_t = 100)]
        batches: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        tick_ms: u64,
        #[arg(long, default_value_t = 600_000)]
        deadline_ms: u64,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Live receiver.
    Recv {
        #[arg(long)]
        bind: SocketAddr,
        #[arg(long)]
        peer: SocketAddr,
        #[command(flatten)]
        codec: CodecArgs,
        /// Stop after this many deliveries (plus the linger period).
        #[arg(long)]
        expect: Option<usize>,
        #[arg(long, default_value_t = 500)]
        linger_ms: u64,
        #[arg(long, default_value_t = 10)]
        tick_ms: u64,
        #[arg(long, default_value_t = 600_000)]
        deadline_ms: u64,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Replay a live session log through the state machines.
    Replay { log: PathBuf },
}

enum Failure {
    Verdict(String),
    Usage(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn parse_script(path: &PathBuf) -> Result<Vec<Vec<Bits>>, Failure> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split_whitespace()
                .map(|m| m.parse::<Bits>().map_err(Failure::from))
                .collect()
        })
        .collect()
}

fn write_log(path: &Option<PathBuf>, log: &SessionLog) -> Result<(), Failure> {
    if let Some(path) = path {
        fs::write(path, serde_json::to_vec(log)?)?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { scenario, out } => {
            let mut s = Scenario::load(&scenario)?;
            if out.is_some() {
                s.output.dir = out;
            }
            let summary = run_scenario(&s)?;
            print!("{}", summary.table());
            if !summary.ok() {
                return Err(Failure::Verdict("campaign verdict failed".into()));
            }
        }
        Command::Sweep {
            from,
            count,
            codec,
            budget,
            omission,
            duplication,
            first_attempt,
            out,
        } => {
            let s = Scenario {
                name: "sweep".into(),
                protocol: if first_attempt {
                    ProtocolKind::FirstAttempt
                } else {
                    ProtocolKind::Efficient
                },
                budget: budget as i64,
                stop: StopWhen::FirstSafe,
                recording: Recording::Events,
                codec: CodecSection {
                    pl: codec.pl as i64,
                    ml: codec.ml as i64,
                    capacity: codec.capacity as i64,
                    code: Default::default(),
                },
                adversary: AdversarySection {
                    omission,
                    duplication,
                    ..AdversarySection::default()
                },
                weights: ActionWeights::default(),
                seeds: SeedSection {
                    start: from as i64,
                    count: count as i64,
                },
                start: StartSection::Arbitrary,
                source: SourceSection::Seeded,
                output: s2arq::harness::OutputSection {
                    dir: out,
                    traces: false,
                },
            };
            let summary = run_campaign(&s.validate()?)?;
            print!("{}", summary.table());
            if !summary.ok() {
                return Err(Failure::Verdict("sweep verdict failed".into()));
            }
        }
        Command::Compare {
            pl,
            ml,
            capacity,
            batches,
            seed,
            csv,
        } => {
            let rows = compare_overhead(&OverheadGrid {
                pl,
                mls: ml,
                capacities: capacity,
                batches,
                seed,
            });
            let table = overhead_csv(&rows);
            print!("{table}");
            if let Some(path) = csv {
                fs::write(path, &table)?;
            }
        }
        Command::Check { traces } => {
            let mut failed = 0;
            for path in &traces {
                let report = check_trace_file(path)?;
                let verdict = if report.ok() { "ok" } else { "FAILED" };
                println!(
                    "{}: {verdict} (first safe {:?}, before safe {:?}/{:?}, chain {:?}, legal {:?})",
                    path.display(),
                    report.record.first_safe,
                    report.record.fetches_before_safe,
                    report.record.deliveries_before_safe,
                    report.record.chain_weight,
                    report.record.legal,
                );
                failed += usize::from(!report.ok());
            }
            if failed > 0 {
                return Err(Failure::Verdict(format!("{failed} trace(s) failed")));
            }
        }
        Command::Proxy {
            front,
            back,
            receiver,
            capacity,
            omission,
            duplication,
            seed,
            duration_ms,
        } => {
            let policy = AdversaryPolicy {
                omission,
                duplication,
                seed,
                ..AdversaryPolicy::default()
            };
            policy.validate().map_err(Failure::Usage)?;
            let mut proxy = Proxy::bind(front, back, receiver, capacity, policy)?;
            let stop = Arc::new(AtomicBool::new(false));
            if let Some(ms) = duration_ms {
                let stop = Arc::clone(&stop);
                std::thread::spawn(move || {
                    std::thread::sleep(Duration::from_millis(ms));
                    stop.store(true, Ordering::Relaxed);
                });
            }
            let stats = proxy.run(&stop)?;
            println!("{}", serde_json::to_string(&stats)?);
        }
        Command::Send {
            bind,
            peer,
            codec,
            script,
            batches,
            seed,
            tick_ms,
            deadline_ms,
            log,
        } => {
            let params = codec.params().map_err(Failure::Usage)?;
            let script = match script {
                Some(path) => parse_script(&path)?,
                None => {
                    let mut src = SeededSource::new(seed);
                    (0..batches)
                        .map(|_| {
                            src.fetch(params.pl(), params.ml())
                                .expect("seeded source never ends")
                        })
                        .collect()
                }
            };
            let socket = UdpSocket::bind(bind)?;
            let cfg = LiveConfig {
                params,
                tick: Duration::from_millis(tick_ms),
                deadline: Duration::from_millis(deadline_ms),
            };
            let total = script.len();
            let mut app = ScriptedSource::new(script);
            let session = run_sender(
                &socket,
                peer,
                &cfg,
                SenderState::acknowledged(0, &params),
                &mut app,
            )?;
            write_log(&log, &session.log)?;
            println!(
                "fetched {} of {total} batches, exhausted: {}",
                session.fetched.len(),
                session.exhausted
            );
            if !session.exhausted {
                return Err(Failure::Verdict(
                    "deadline passed before the last batch was acknowledged".into(),
                ));
            }
        }
        Command::Recv {
            bind,
            peer,
            codec,
            expect,
            linger_ms,
            tick_ms,
            deadline_ms,
            log,
        } => {
            let params = codec.params().map_err(Failure::Usage)?;
            let socket = UdpSocket::bind(bind)?;
            let cfg = LiveConfig {
                params,
                tick: Duration::from_millis(tick_ms),
                deadline: Duration::from_millis(deadline_ms),
            };
            let session = run_receiver(
                &socket,
                peer,
                &cfg,
                ReceiverState::new(0),
                expect,
                Duration::from_millis(linger_ms),
            )?;
            write_log(&log, &session.log)?;
            for batch in &session.delivered {
                println!("{batch}");
            }
            if expect.is_some_and(|n| session.delivered.len() < n) {
                return Err(Failure::Verdict(format!(
                    "delivered {} batches, expected {}",
                    session.delivered.len(),
                    expect.unwrap_or(0)
                )));
            }
        }
        Command::Replay { log } => {
            let log: SessionLog = serde_json::from_slice(&fs::read(&log)?)?;
            match replay(&log) {
                Ok(n) => println!("replayed {n} events: identical"),
                Err(e) => return Err(Failure::Verdict(e.to_string())),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdict(msg)) => {
            eprintln!("verdict: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

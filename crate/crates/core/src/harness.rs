//! Scenario files and simulation campaigns.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "convergence"
//! protocol = "efficient"      # or "first-attempt"
//! budget = 1000000
//! stop = "first-safe"         # "budget", "exhausted" or { deliveries = 100 }
//! recording = "events"        # or "full" for per-step records
//!
//! [codec]
//! pl = 2
//! ml = 2
//! capacity = 1
//! code = "repetition"         # or "reed-solomon"
//!
//! [adversary]
//! omission = 0.0
//! duplication = 0.0
//! drop_on_full = "drop-random-existing"
//!
//! [seeds]
//! start = 0
//! count = 1000
//!
//! [start]
//! mode = "arbitrary"          # "safe" (with `index`) or "file" (with `path`)
//!
//! [source]
//! kind = "seeded"             # "counting" or "scripted" (with `batches`)
//!
//! [output]
//! dir = "out"
//! traces = false
//! ```
//!
//! Unknown keys are rejected.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::channel::{AdversaryPolicy, DropOnFull};
use crate::codec::{BitCodeKind, CodecParams};
use crate::fault::{
    arbitrary_configuration, arbitrary_first_attempt_configuration, first_attempt_start,
    safe_configuration, Configuration, FirstAttemptConfiguration,
};
use crate::protocol::{
    CountingSource, FetchSource, FirstAttemptParams, ScriptedSource, SeededSource, INDEX_MODULUS,
};
use crate::sim::{
    check_index_progression, check_legal_suffix, count_alpha_beta, freshness_observables,
    hb_chain_weight, message_chain_weight, run, ActionWeights, Efficient, ExecutionTrace,
    FirstAttempt, LegalVerdict, Protocol, Recording, RunOptions, StopWhen, TraceError,
};

/// Bound on fetches and on deliveries before the first safe configuration.
pub const MAX_EVENTS_BEFORE_SAFE: u64 = 4;
/// Bound on the progress chain weight up to the first safe configuration.
pub const MAX_CHAIN_WEIGHT: u64 = 8;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scenario syntax: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("`{field}`: {message}")]
    Field {
        field: &'static str,
        message: String,
    },
    #[error("writing results: {0}")]
    Output(#[from] std::io::Error),
    #[error("trace: {0}")]
    Trace(#[from] TraceError),
}

fn field(field: &'static str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Field {
        field,
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    #[default]
    Efficient,
    FirstAttempt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecSection {
    pub pl: i64,
    pub ml: i64,
    pub capacity: i64,
    #[serde(default)]
    pub code: BitCodeKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversarySection {
    pub omission: f64,
    pub duplication: f64,
    pub drop_on_full: DropOnFull,
    pub fairness_threshold: Option<i64>,
}

impl Default for AdversarySection {
    fn default() -> Self {
        AdversarySection {
            omission: 0.0,
            duplication: 0.0,
            drop_on_full: DropOnFull::default(),
            fairness_threshold: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSection {
    pub start: i64,
    pub count: i64,
}

impl Default for SeedSection {
    fn default() -> Self {
        SeedSection { start: 0, count: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StartSection {
    Safe {
        #[serde(default)]
        index: i64,
    },
    Arbitrary,
    /// A JSON configuration file, for the efficient protocol.
    File {
        path: PathBuf,
    },
}

impl Default for StartSection {
    fn default() -> Self {
        StartSection::Safe { index: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceSection {
    #[default]
    Seeded,
    Counting,
    Scripted {
        batches: Vec<Vec<String>>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub traces: bool,
}

fn default_budget() -> i64 {
    1_000_000
}

fn default_stop() -> StopWhen {
    StopWhen::FirstSafe
}

fn default_recording() -> Recording {
    Recording::Events
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "Scenario::default_name")]
    pub name: String,
    #[serde(default)]
    pub protocol: ProtocolKind,
    #[serde(default = "default_budget")]
    pub budget: i64,
    #[serde(default = "default_stop")]
    pub stop: StopWhen,
    #[serde(default = "default_recording")]
    pub recording: Recording,
    pub codec: CodecSection,
    #[serde(default)]
    pub adversary: AdversarySection,
    #[serde(default)]
    pub weights: ActionWeights,
    #[serde(default)]
    pub seeds: SeedSection,
    #[serde(default)]
    pub start: StartSection,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// A scenario whose fields passed validation.
#[derive(Clone, Debug)]
pub struct Campaign {
    pub name: String,
    pub protocol: ProtocolKind,
    pub params: CodecParams,
    pub first_attempt: FirstAttemptParams,
    pub seeds: std::ops::Range<u64>,
    pub options: RunOptions,
    pub start: CampaignStart,
    pub source: SourceSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug)]
pub enum CampaignStart {
    Safe(u8),
    Arbitrary,
    Explicit(Box<Configuration>),
}

fn non_negative(name: &'static str, v: i64) -> Result<usize, ScenarioError> {
    usize::try_from(v).map_err(|_| field(name, format!("must be non-negative, got {v}")))
}

impl Scenario {
    fn default_name() -> String {
        "scenario".to_string()
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Checks every field against the bounds of the module it configures.
    pub fn validate(&self) -> Result<Campaign, ScenarioError> {
        let pl = non_negative("codec.pl", self.codec.pl)?;
        let ml = non_negative("codec.ml", self.codec.ml)?;
        let capacity = non_negative("codec.capacity", self.codec.capacity)?;
        if pl == 0 {
            return Err(field("codec.pl", "must be at least 1"));
        }
        if ml == 0 {
            return Err(field("codec.ml", "must be at least 1"));
        }
        let params = CodecParams::with_code(pl, ml, capacity, self.codec.code)
            .map_err(|e| field("codec", e.to_string()))?;
        let budget = non_negative("budget", self.budget)? as u64;
        if budget == 0 {
            return Err(field("budget", "must be at least 1"));
        }
        let policy = AdversaryPolicy {
            drop_on_full: self.adversary.drop_on_full,
            omission: self.adversary.omission,
            duplication: self.adversary.duplication,
            seed: 0,
        };
        for (name, rate) in [
            ("adversary.omission", policy.omission),
            ("adversary.duplication", policy.duplication),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(field(name, format!("must lie in [0, 1], got {rate}")));
            }
        }
        let fairness_threshold = match self.adversary.fairness_threshold {
            None => None,
            Some(k) if k >= 1 => Some(
                u32::try_from(k).map_err(|_| field("adversary.fairness_threshold", "too large"))?,
            ),
            Some(k) => {
                return Err(field(
                    "adversary.fairness_threshold",
                    format!("must be at least 1, got {k}"),
                ))
            }
        };
        let start = non_negative("seeds.start", self.seeds.start)? as u64;
        let count = non_negative("seeds.count", self.seeds.count)? as u64;
        if count == 0 {
            return Err(field("seeds.count", "must be at least 1"));
        }
        let campaign_start = match &self.start {
            StartSection::Safe { index } => {
                if !(0..i64::from(INDEX_MODULUS)).contains(index) {
                    return Err(field(
                        "start.index",
                        format!("must lie in [0, 2], got {index}"),
                    ));
                }
                CampaignStart::Safe(*index as u8)
            }
            StartSection::Arbitrary => CampaignStart::Arbitrary,
            StartSection::File { path } => {
                if self.protocol != ProtocolKind::Efficient {
                    return Err(field(
                        "start.path",
                        "explicit configurations are supported for the efficient protocol",
                    ));
                }
                let text =
                    fs::read_to_string(path).map_err(|e| field("start.path", e.to_string()))?;
                let config: Configuration =
                    serde_json::from_str(&text).map_err(|e| field("start.path", e.to_string()))?;
                CampaignStart::Explicit(Box::new(config))
            }
        };
        if let SourceSection::Scripted { batches } = &self.source {
            let (count, width) = match self.protocol {
                ProtocolKind::Efficient => (pl, ml),
                ProtocolKind::FirstAttempt => (1, ml),
            };
            for batch in batches {
                if batch.len() != count {
                    return Err(field(
                        "source.batches",
                        format!("each batch needs {count} messages, got {}", batch.len()),
                    ));
                }
                for m in batch {
                    let bits: Bits = m
                        .parse()
                        .map_err(|e| field("source.batches", format!("{m:?}: {e}")))?;
                    if bits.len() != width {
                        return Err(field(
                            "source.batches",
                            format!("{m:?} is not {width} bits wide"),
                        ));
                    }
                }
            }
        }
        Ok(Campaign {
            name: self.name.clone(),
            protocol: self.protocol,
            params,
            first_attempt: FirstAttemptParams::new(ml, capacity),
            seeds: start..start + count,
            options: RunOptions {
                seed: 0,
                budget,
                stop: self.stop,
                policy,
                weights: self.weights,
                fairness_threshold,
                recording: self.recording,
                script: None,
            },
            start: campaign_start,
            source: self.source.clone(),
            output: self.output.clone(),
        })
    }
}

/// Per-run result line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub steps: u64,
    pub complete: bool,
    pub first_safe: Option<u64>,
    pub fetches_before_safe: Option<u64>,
    pub deliveries_before_safe: Option<u64>,
    pub chain_weight: Option<u64>,
    pub legal: LegalVerdict,
    pub progression_violations: usize,
    pub freshness_violations: u64,
    pub deliveries: u64,
    pub packets_sent: u64,
}

impl RunRecord {
    pub fn from_trace(seed: u64, t: &ExecutionTrace) -> Self {
        let counts = count_alpha_beta(t);
        let report = freshness_observables(t);
        RunRecord {
            seed,
            steps: t.steps_taken,
            complete: t.complete,
            first_safe: t.first_safe,
            fetches_before_safe: counts.map(|c| c.0),
            deliveries_before_safe: counts.map(|c| c.1),
            chain_weight: t.chain_at_first_safe,
            legal: check_legal_suffix(t),
            progression_violations: check_index_progression(t).len(),
            freshness_violations: report.fetches_without_fresh_ack
                + report.deliveries_short_of_fresh,
            deliveries: t.deliveries.len() as u64,
            packets_sent: t.packets_sent,
        }
    }

    /// Every bound and check holds for this run.
    pub fn ok(&self) -> bool {
        self.complete
            && self.first_safe.is_some()
            && self.fetches_before_safe.unwrap_or(0) <= MAX_EVENTS_BEFORE_SAFE
            && self.deliveries_before_safe.unwrap_or(0) <= MAX_EVENTS_BEFORE_SAFE
            && self.chain_weight.unwrap_or(0) <= MAX_CHAIN_WEIGHT
            && !matches!(self.legal, LegalVerdict::Fail { .. })
            && self.progression_violations == 0
            && self.freshness_violations == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub protocol: ProtocolKind,
    pub runs: u64,
    pub converged: u64,
    pub convergence_rate: f64,
    pub incomplete: u64,
    pub max_fetches_before_safe: u64,
    pub max_deliveries_before_safe: u64,
    pub max_chain_weight: u64,
    pub legal_pass: u64,
    pub legal_fail: u64,
    pub legal_not_applicable: u64,
    pub progression_violations: u64,
    pub freshness_violations: u64,
    pub deliveries: u64,
    /// Mean packets sent per delivered batch, over runs that delivered.
    pub packets_per_batch: Option<f64>,
    pub records: Vec<RunRecord>,
}

impl Summary {
    pub fn from_records(name: &str, protocol: ProtocolKind, records: Vec<RunRecord>) -> Self {
        let runs = records.len() as u64;
        let converged = records.iter().filter(|r| r.first_safe.is_some()).count() as u64;
        let count = |f: &dyn Fn(&RunRecord) -> bool| records.iter().filter(|r| f(r)).count() as u64;
        let max =
            |f: &dyn Fn(&RunRecord) -> Option<u64>| records.iter().filter_map(f).max().unwrap_or(0);
        let deliveries: u64 = records.iter().map(|r| r.deliveries).sum();
        let delivered_packets: u64 = records
            .iter()
            .filter(|r| r.deliveries > 0)
            .map(|r| r.packets_sent)
            .sum();
        Summary {
            name: name.to_string(),
            protocol,
            runs,
            converged,
            convergence_rate: if runs == 0 {
                0.0
            } else {
                converged as f64 / runs as f64
            },
            incomplete: count(&|r| !r.complete),
            max_fetches_before_safe: max(&|r| r.fetches_before_safe),
            max_deliveries_before_safe: max(&|r| r.deliveries_before_safe),
            max_chain_weight: max(&|r| r.chain_weight),
            legal_pass: count(&|r| matches!(r.legal, LegalVerdict::Pass { .. })),
            legal_fail: count(&|r| matches!(r.legal, LegalVerdict::Fail { .. })),
            legal_not_applicable: count(&|r| r.legal == LegalVerdict::NotApplicable),
            progression_violations: records
                .iter()
                .map(|r| r.progression_violations as u64)
                .sum(),
            freshness_violations: records.iter().map(|r| r.freshness_violations).sum(),
            deliveries,
            packets_per_batch: (deliveries > 0)
                .then(|| delivered_packets as f64 / deliveries as f64),
            records,
        }
    }

    pub fn ok(&self) -> bool {
        self.records.iter().all(RunRecord::ok)
    }

    /// Plain-text table for terminals.
    pub fn table(&self) -> String {
        let ppb = self
            .packets_per_batch
            .map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
        let rows = [
            ("scenario", self.name.clone()),
            ("protocol", format!("{:?}", self.protocol)),
            ("runs", self.runs.to_string()),
            ("convergence rate", format!("{:.3}", self.convergence_rate)),
            ("incomplete runs", self.incomplete.to_string()),
            (
                "max fetches before safe",
                self.max_fetches_before_safe.to_string(),
            ),
            (
                "max deliveries before safe",
                self.max_deliveries_before_safe.to_string(),
            ),
            ("max chain weight", self.max_chain_weight.to_string()),
            (
                "legal suffix pass/fail/n.a.",
                format!(
                    "{}/{}/{}",
                    self.legal_pass, self.legal_fail, self.legal_not_applicable
                ),
            ),
            (
                "progression violations",
                self.progression_violations.to_string(),
            ),
            (
                "freshness violations",
                self.freshness_violations.to_string(),
            ),
            ("deliveries", self.deliveries.to_string()),
            ("packets per delivered batch", ppb),
            (
                "verdict",
                if self.ok() { "ok" } else { "FAILED" }.to_string(),
            ),
        ];
        rows.iter().map(|(k, v)| format!("{k:<30} {v}\n")).collect()
    }
}

fn source_for(section: &SourceSection, seed: u64, pl_count: usize) -> Box<dyn FetchSource> {
    match section {
        SourceSection::Seeded => Box::new(SeededSource::new(seed)),
        SourceSection::Counting => Box::new(CountingSource::new()),
        SourceSection::Scripted { batches } => {
            Box::new(ScriptedSource::new(batches.iter().map(|b| {
                debug_assert_eq!(b.len(), pl_count);
                b.iter()
                    .map(|m| m.parse().expect("validated message"))
                    .collect()
            })))
        }
    }
}

fn run_one(c: &Campaign, seed: u64) -> ExecutionTrace {
    let mut opts = c.options.clone();
    opts.seed = seed;
    match c.protocol {
        ProtocolKind::Efficient => {
            let p = Efficient::new(c.params);
            let start = match &c.start {
                CampaignStart::Safe(y) => {
                    safe_configuration(*y, &c.params, vec![], vec![]).expect("validated index")
                }
                CampaignStart::Arbitrary => arbitrary_configuration(seed, &c.params),
                CampaignStart::Explicit(config) => (**config).clone(),
            };
            let mut app = source_for(&c.source, seed, c.params.pl());
            run(&p, start, app.as_mut(), &opts)
        }
        ProtocolKind::FirstAttempt => {
            let p = FirstAttempt::new(c.first_attempt);
            let start: FirstAttemptConfiguration = match &c.start {
                CampaignStart::Safe(y) => first_attempt_start(*y, &c.first_attempt, vec![]),
                _ => arbitrary_first_attempt_configuration(seed, &c.first_attempt),
            };
            let mut app = source_for(&c.source, seed, 1);
            run(&p, start, app.as_mut(), &opts)
        }
    }
}

/// Runs every seed of the campaign in parallel and merges the results in
/// seed order. Traces are written when the scenario asks for them.
pub fn run_campaign(c: &Campaign) -> Result<Summary, ScenarioError> {
    if let Some(dir) = &c.output.dir {
        fs::create_dir_all(dir)?;
    }
    let seeds: Vec<u64> = c.seeds.clone().collect();
    let records: Result<Vec<RunRecord>, ScenarioError> = seeds
        .par_iter()
        .map(|&seed| {
            let trace = run_one(c, seed);
            if let (Some(dir), true) = (&c.output.dir, c.output.traces) {
                let path = dir.join(format!("{}-seed{seed}.jsonl", c.name));
                trace.write_jsonl(BufWriter::new(fs::File::create(path)?))?;
            }
            Ok(RunRecord::from_trace(seed, &trace))
        })
        .collect();
    let summary = Summary::from_records(&c.name, c.protocol, records?);
    if let Some(dir) = &c.output.dir {
        let path = dir.join(format!("{}-summary.json", c.name));
        serde_json::to_writer_pretty(BufWriter::new(fs::File::create(path)?), &summary)
            .map_err(std::io::Error::from)?;
    }
    Ok(summary)
}

pub fn run_scenario(s: &Scenario) -> Result<Summary, ScenarioError> {
    run_campaign(&s.validate()?)
}

/// Result of re-checking a trace file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub record: RunRecord,
    /// Chain weights recomputed from per-step records, when present.
    pub recomputed_chain: Option<u64>,
    pub recomputed_message_chain: Option<u64>,
    /// Recomputed chains agree with the values stored in the header.
    pub consistent: bool,
}

impl CheckReport {
    pub fn ok(&self) -> bool {
        self.consistent && self.record.ok()
    }
}

pub fn check_trace(trace: &ExecutionTrace) -> CheckReport {
    let record = RunRecord::from_trace(trace.seed, trace);
    let full = trace.steps.len() as u64 == trace.steps_taken;
    let (chain, message_chain) = match (full, trace.first_safe) {
        (true, Some(at)) => (
            Some(hb_chain_weight(trace, 0, at)),
            Some(message_chain_weight(trace, 0, at)),
        ),
        _ => (None, None),
    };
    let consistent = chain.is_none_or(|c| Some(c) == trace.chain_at_first_safe)
        && message_chain.is_none_or(|c| Some(c) == trace.message_chain_at_first_safe);
    CheckReport {
        record,
        recomputed_chain: chain,
        recomputed_message_chain: message_chain,
        consistent,
    }
}

pub fn check_trace_file(path: &Path) -> Result<CheckReport, ScenarioError> {
    let file = fs::File::open(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let trace = ExecutionTrace::read_jsonl(BufReader::new(file))?;
    Ok(check_trace(&trace))
}

/// One row of the overhead comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub pl: usize,
    pub ml: usize,
    pub capacity: usize,
    /// Copies per message per round for the majority variant.
    pub first_attempt_packets: f64,
    /// `n / pl` with the repetition code.
    pub repetition_packets: f64,
    /// `n / pl` with the Reed-Solomon code, when that code fits.
    pub reed_solomon_packets: Option<f64>,
    /// Transmitted bits per payload bit: `2c+1` for the majority variant.
    pub first_attempt_expansion: f64,
    /// `n / ml` with the repetition code.
    pub repetition_expansion: f64,
    /// `n / ml` with the Reed-Solomon code.
    pub reed_solomon_expansion: Option<f64>,
    /// Packets sent per delivered message in a simulated fault-free run.
    pub measured_first_attempt: Option<f64>,
    pub measured_repetition: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadGrid {
    pub pl: usize,
    pub mls: Vec<usize>,
    pub capacities: Vec<usize>,
    /// Batches per measured run; 0 skips simulation.
    pub batches: u64,
    pub seed: u64,
}

fn measured<P: Protocol>(
    p: &P,
    start: Configuration<P::Sender, P::Receiver>,
    messages_per_batch: usize,
    batches: u64,
    seed: u64,
) -> Option<f64> {
    let opts = RunOptions {
        seed,
        budget: 200_000 * batches,
        stop: StopWhen::Deliveries(batches),
        ..RunOptions::default()
    };
    let t = run(p, start, &mut SeededSource::new(seed), &opts);
    t.complete
        .then(|| t.packets_sent as f64 / (t.deliveries.len() * messages_per_batch) as f64)
}

/// Packet and bit overhead of both variants over a parameter grid.
pub fn compare_overhead(grid: &OverheadGrid) -> Vec<OverheadRow> {
    let mut rows = Vec::new();
    for &capacity in &grid.capacities {
        for &ml in &grid.mls {
            let Ok(rep) = CodecParams::new(grid.pl, ml, capacity) else {
                continue;
            };
            let rs = CodecParams::with_code(grid.pl, ml, capacity, BitCodeKind::ReedSolomon).ok();
            let fa = FirstAttemptParams::new(ml, capacity);
            let simulate = grid.batches > 0 && capacity > 0;
            let measured_first_attempt = simulate
                .then(|| {
                    measured(
                        &FirstAttempt::new(fa),
                        first_attempt_start(0, &fa, vec![]),
                        1,
                        grid.batches,
                        grid.seed,
                    )
                })
                .flatten();
            let measured_repetition = simulate
                .then(|| {
                    measured(
                        &Efficient::new(rep),
                        safe_configuration(0, &rep, vec![], vec![]).expect("empty channels"),
                        grid.pl,
                        grid.batches,
                        grid.seed,
                    )
                })
                .flatten();
            let copies = f64::from(fa.copies());
            rows.push(OverheadRow {
                pl: grid.pl,
                ml,
                capacity,
                first_attempt_packets: copies,
                repetition_packets: rep.n() as f64 / grid.pl as f64,
                reed_solomon_packets: rs.as_ref().map(|p| p.n() as f64 / grid.pl as f64),
                first_attempt_expansion: copies,
                repetition_expansion: rep.n() as f64 / ml as f64,
                reed_solomon_expansion: rs.as_ref().map(|p| p.n() as f64 / ml as f64),
                measured_first_attempt,
                measured_repetition,
            });
        }
    }
    rows
}

/// Renders overhead rows as CSV.
pub fn overhead_csv(rows: &[OverheadRow]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.3}"));
    let mut out = String::from(
        "pl,ml,capacity,fa_packets,rep_packets,rs_packets,fa_expansion,rep_expansion,rs_expansion,fa_measured,rep_measured\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.3},{:.3},{},{:.3},{:.3},{},{},{}\n",
            r.pl,
            r.ml,
            r.capacity,
            r.first_attempt_packets,
            r.repetition_packets,
            opt(r.reed_solomon_packets),
            r.first_attempt_expansion,
            r.repetition_expansion,
            opt(r.reed_solomon_expansion),
            opt(r.measured_first_attempt),
            opt(r.measured_repetition),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        name = "t"
        budget = 200000
        [codec]
        pl = 2
        ml = 2
        capacity = 1
        [seeds]
        start = 0
        count = 8
        [start]
        mode = "arbitrary"
    "#;

    #[test]
    fn arbitrary_campaign_converges() {
        let s = Scenario::from_toml(BASE).unwrap();
        let summary = run_scenario(&s).unwrap();
        assert_eq!(summary.runs, 8);
        assert_eq!(summary.convergence_rate, 1.0);
        assert!(summary.ok(), "{}", summary.table());
        let seeds: Vec<u64> = summary.records.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn scripted_safe_run_delivers_in_order() {
        let text = r#"
            stop = "exhausted"
            [codec]
            pl = 2
            ml = 2
            capacity = 1
            [start]
            mode = "safe"
            index = 2
            [source]
            kind = "scripted"
            batches = [["01", "10"], ["11", "11"], ["00", "01"]]
        "#;
        let summary = run_scenario(&Scenario::from_toml(text).unwrap()).unwrap();
        assert_eq!(summary.deliveries, 3);
        assert_eq!(summary.records[0].legal, LegalVerdict::Pass { k: 0 });
        assert!(summary.ok());
    }

    #[test]
    fn negative_capacity_names_the_field() {
        let text = BASE.replace("capacity = 1", "capacity = -1");
        let err = Scenario::from_toml(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("codec.capacity"), "{err}");
    }

    #[test]
    fn other_field_errors() {
        let bad_rate = format!("{BASE}\n[adversary]\nomission = 1.5\n");
        let err = Scenario::from_toml(&bad_rate)
            .unwrap()
            .validate()
            .unwrap_err();
        assert!(err.to_string().contains("adversary.omission"));
        let unknown = format!("colour = 3\n{BASE}");
        assert!(matches!(
            Scenario::from_toml(&unknown),
            Err(ScenarioError::Parse(_))
        ));
        let bad_batch = r#"
            [codec]
            pl = 2
            ml = 2
            capacity = 1
            [source]
            kind = "scripted"
            batches = [["01"]]
        "#;
        let err = Scenario::from_toml(bad_batch)
            .unwrap()
            .validate()
            .unwrap_err();
        assert!(err.to_string().contains("source.batches"));
    }

    #[test]
    fn trace_files_reproduce_the_summary() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "{BASE}\nrecording = \"full\"\n[output]\ndir = {:?}\ntraces = true\n",
            dir.path()
        );
        let text = text.replacen("count = 8", "count = 2", 1);
        let summary = run_scenario(&Scenario::from_toml(&text).unwrap()).unwrap();
        for record in &summary.records {
            let path = dir.path().join(format!("t-seed{}.jsonl", record.seed));
            let report = check_trace_file(&path).unwrap();
            assert!(report.consistent);
            assert_eq!(&report.record, record);
        }
        assert!(dir.path().join("t-summary.json").exists());
    }

    #[test]
    fn overhead_examples() {
        let rows = compare_overhead(&OverheadGrid {
            pl: 2,
            mls: vec![2],
            capacities: vec![0, 1],
            batches: 3,
            seed: 1,
        });
        let c0 = &rows[0];
        assert_eq!(
            (c0.first_attempt_packets, c0.repetition_packets),
            (1.0, 1.0)
        );
        let c1 = &rows[1];
        assert_eq!(c1.first_attempt_packets, 3.0);
        assert_eq!(c1.repetition_packets, 3.0);
        assert!(c1.measured_first_attempt.unwrap() >= 3.0);
        assert!(c1.measured_repetition.unwrap() >= 3.0);
        assert!(overhead_csv(&rows).lines().count() == 3);
    }
}

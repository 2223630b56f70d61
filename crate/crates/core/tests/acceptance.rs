use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use s2arq::bits::Bits;
use s2arq::channel::AdversaryPolicy;
use s2arq::codec::{decode_batch, encode_batch, CodecParams, MessageBatch};
use s2arq::fault::{
    all_clauses_debris, arbitrary_configuration, first_attempt_start, random_safe_configuration,
    safe_configuration,
};
use s2arq::protocol::{
    FirstAttemptParams, Packet, ReceiverState, SanityClause, ScriptedSource, SeededSource,
};
use s2arq::sim::{
    check_index_progression, check_legal_suffix, count_alpha_beta, explore, run, Efficient,
    ExecutionTrace, ExploreLimits, ExploreReport, FirstAttempt, LegalVerdict, RunOptions, StopWhen,
};
use s2arq::transport::{replay, run_session, SessionSpec};

const FETCH_BOUND: u64 = 4;
const DELIVERY_BOUND: u64 = 4;
const CHAIN_BOUND: u64 = 8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn bits_of(value: u64, width: usize) -> Bits {
    Bits::from_u64(value, width)
}

fn codec_exhaustive() -> Outcome {
    let started = Instant::now();
    let mut cases = 0u64;
    let mut failures = 0u64;
    for (pl, ml, c) in [(2, 2, 1), (3, 3, 1), (2, 2, 2)] {
        let params = CodecParams::new(pl, ml, c).unwrap();
        let n = params.n();
        for word in 0..1u64 << (pl * ml) {
            let messages = (0..pl).map(|j| bits_of(word >> (j * ml), ml)).collect();
            let batch = MessageBatch::new(messages, &params).unwrap();
            let clean = encode_batch(&batch, &params).unwrap();
            let mut subsets: Vec<Vec<usize>> = vec![vec![]];
            for _ in 0..c {
                let longer: Vec<Vec<usize>> = subsets
                    .iter()
                    .flat_map(|s| {
                        let from = s.last().map_or(0, |&l| l + 1);
                        (from..n).map(move |i| [s.clone(), vec![i]].concat())
                    })
                    .collect();
                subsets.extend(longer);
            }
            subsets.sort();
            subsets.dedup();
            for subset in subsets {
                let payloads = 1u64 << pl;
                for choice in 0..payloads.pow(subset.len() as u32) {
                    let mut columns = clean.clone();
                    let mut rest = choice;
                    for &i in &subset {
                        columns[i].data = bits_of(rest % payloads, pl);
                        rest /= payloads;
                    }
                    cases += 1;
                    if decode_batch(&columns, &params).ok().as_ref() != Some(&batch) {
                        failures += 1;
                    }
                }
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        failures == 0 && elapsed < Duration::from_secs(60),
        format!("{cases} corrupted batches, {failures} failures, {elapsed:.2?}"),
    )
}

fn convergence_runs() -> Vec<ExecutionTrace> {
    let protocol = Efficient::new(CodecParams::new(2, 2, 1).unwrap());
    (0..1000u64)
        .into_par_iter()
        .map(|seed| {
            let rate = (seed % 4) as f64 * 0.1;
            let opts = RunOptions {
                seed,
                budget: 1_000_000,
                stop: StopWhen::Deliveries(8),
                policy: AdversaryPolicy {
                    omission: rate,
                    duplication: rate,
                    ..AdversaryPolicy::default()
                },
                ..RunOptions::default()
            };
            let start = arbitrary_configuration(seed, &protocol.params);
            run(&protocol, start, &mut SeededSource::new(seed), &opts)
        })
        .collect()
}

fn convergence_bound(traces: &[ExecutionTrace]) -> Outcome {
    let mut unsafe_runs = 0;
    let (mut max_f, mut max_d) = (0, 0);
    for t in traces {
        match count_alpha_beta(t) {
            Some((f, d)) if t.first_safe.is_some() => {
                max_f = max_f.max(f);
                max_d = max_d.max(d);
            }
            _ => unsafe_runs += 1,
        }
    }
    outcome(
        unsafe_runs == 0 && max_f <= FETCH_BOUND && max_d <= DELIVERY_BOUND,
        format!(
            "{} runs, {unsafe_runs} never safe, worst {max_f} fetches / {max_d} deliveries before safety",
            traces.len()
        ),
    )
}

fn chain_bound(traces: &[ExecutionTrace]) -> Outcome {
    let worst = traces
        .iter()
        .filter_map(|t| t.chain_at_first_safe)
        .max()
        .unwrap_or(0);
    let missing = traces
        .iter()
        .filter(|t| t.chain_at_first_safe.is_none())
        .count();
    outcome(
        missing == 0 && worst <= CHAIN_BOUND,
        format!("worst chain weight {worst}, {missing} runs without a value"),
    )
}

fn closure_runs() -> Vec<ExecutionTrace> {
    let protocol = Efficient::new(CodecParams::new(2, 2, 1).unwrap());
    (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let opts = RunOptions {
                seed,
                budget: 100_000,
                policy: AdversaryPolicy {
                    omission: 0.2,
                    duplication: 0.2,
                    ..AdversaryPolicy::default()
                },
                ..RunOptions::default()
            };
            let start = random_safe_configuration(seed, &protocol.params);
            run(&protocol, start, &mut SeededSource::new(seed), &opts)
        })
        .collect()
}

fn closure(traces: &[ExecutionTrace]) -> Outcome {
    let bad = traces
        .iter()
        .filter(|t| {
            let indices: Vec<u8> = t
                .guard_fires
                .iter()
                .map(|g| g.report.ais.alt_index)
                .collect();
            !t.initial.is_safe
                || check_legal_suffix(t) != (LegalVerdict::Pass { k: 0 })
                || !t.guard_fires.iter().all(|g| g.report.is_safe)
                || !indices.windows(2).all(|w| w[1] == (w[0] + 1) % 3)
        })
        .count();
    let fires: usize = traces.iter().map(|t| t.guard_fires.len()).sum();
    outcome(
        bad == 0,
        format!(
            "{} safe starts, {fires} guard-fire boundaries, {bad} failing runs",
            traces.len()
        ),
    )
}

fn fifo_run() -> ExecutionTrace {
    let params = CodecParams::new(2, 2, 1).unwrap();
    let protocol = Efficient::new(params);
    let batches: Vec<Vec<Bits>> = (0..10_000u64)
        .map(|k| vec![bits_of(k, 2), bits_of(k >> 2, 2)])
        .collect();
    let opts = RunOptions {
        seed: 2024,
        budget: 100_000_000,
        stop: StopWhen::Exhausted,
        policy: AdversaryPolicy {
            omission: 0.2,
            duplication: 0.2,
            ..AdversaryPolicy::default()
        },
        ..RunOptions::default()
    };
    let start = safe_configuration(0, &params, vec![], vec![]).unwrap();
    run(&protocol, start, &mut ScriptedSource::new(batches), &opts)
}

fn fifo(trace: &ExecutionTrace) -> Outcome {
    let fetched: Vec<_> = trace.fetches.iter().map(|f| &f.batch).collect();
    let delivered: Vec<_> = trace.deliveries.iter().map(|d| &d.batch).collect();
    outcome(
        fetched.len() == 10_000 && fetched == delivered,
        format!(
            "{} fetched, {} delivered, {} steps",
            fetched.len(),
            delivered.len(),
            trace.steps_taken
        ),
    )
}

fn progression(groups: &[&[ExecutionTrace]]) -> Outcome {
    let mut runs = 0;
    let mut violations = 0;
    for t in groups.iter().flat_map(|g| g.iter()) {
        runs += 1;
        violations += check_index_progression(t).len();
    }
    outcome(
        violations == 0,
        format!("{runs} runs, {violations} violations"),
    )
}

fn first_attempt_soundness() -> Outcome {
    let started = Instant::now();
    let params = FirstAttemptParams::new(1, 1);
    let protocol = FirstAttempt::new(params);
    let candidates: Vec<Packet> = (0..3u8)
        .flat_map(|ai| {
            (1..=params.copies())
                .flat_map(move |lbl| (0..2u64).map(move |v| Packet::new(ai, lbl, bits_of(v, 1))))
        })
        .collect();
    let mut starts = Vec::new();
    for y in 0..3u8 {
        starts.push(first_attempt_start(y, &params, vec![]));
        for d in &candidates {
            starts.push(first_attempt_start(y, &params, vec![d.clone()]));
        }
    }
    let limits = ExploreLimits {
        depth: 20,
        stop_at_safe: false,
        debris: candidates.clone(),
        ..ExploreLimits::default()
    };
    let total = starts
        .into_par_iter()
        .map(|s| explore(&protocol, s, &limits))
        .reduce(ExploreReport::default, |mut a, b| {
            a.merge(&b);
            a
        });
    outcome(
        total.violations == 0,
        format!(
            "{} states, {} transitions, {} violations, {:.2?}",
            total.states,
            total.transitions,
            total.violations,
            started.elapsed()
        ),
    )
}

fn scripted_convergence() -> Outcome {
    let started = Instant::now();
    let params = CodecParams::new(1, 1, 1).unwrap();
    let protocol = Efficient::new(params);
    let mut starts: Vec<_> = (0..2000u64)
        .map(|s| arbitrary_configuration(s, &params))
        .collect();
    for ldi in 0..3u8 {
        let mut c = arbitrary_configuration(u64::from(ldi), &params);
        c.receiver = ReceiverState {
            last_delivered_index: ldi,
            packet_set: all_clauses_debris(&params, ldi),
        };
        starts.push(c);
    }
    let mut clauses = BTreeSet::new();
    let (mut guard_on, mut guard_off, mut aligned) = (0, 0, 0);
    for s in &starts {
        let mut r = s.receiver.clone();
        while let Some(clause) = r.sanity_violation(&params) {
            clauses.insert(clause);
            let before = r.packet_set.len();
            r.packet_set = r
                .packet_set
                .iter()
                .filter(|p| match clause {
                    SanityClause::ForbiddenIndex => p.ai < 3 && p.ai != r.last_delivered_index,
                    SanityClause::LabelRange => (1..=params.n() as u32).contains(&p.lbl),
                    SanityClause::DataWidth => p.dat.len() == params.pl(),
                    _ => false,
                })
                .cloned()
                .collect();
            if r.packet_set.len() == before {
                break;
            }
        }
        if s.sender.guard_holds(&params) {
            guard_on += 1;
        } else {
            guard_off += 1;
        }
        if s.sender.alt_index == s.receiver.last_delivered_index {
            aligned += 1;
        }
    }
    let covered = SanityClause::ALL.iter().all(|c| clauses.contains(c))
        && guard_on > 0
        && guard_off > 0
        && aligned > 0
        && aligned < starts.len();
    let limits = ExploreLimits {
        depth: 14,
        ..ExploreLimits::default()
    };
    let total = starts
        .par_iter()
        .map(|s| explore(&protocol, s.clone(), &limits))
        .reduce(ExploreReport::default, |mut a, b| {
            a.merge(&b);
            a
        });
    let elapsed = started.elapsed();
    outcome(
        covered
            && total.violations == 0
            && u64::from(total.max_fetches_before_safe) <= FETCH_BOUND
            && u64::from(total.max_deliveries_before_safe) <= DELIVERY_BOUND
            && elapsed < Duration::from_secs(600),
        format!(
            "{} starts covering {}/{} sanity clauses (guard holds {guard_on}, not {guard_off}), {} states, worst {} / {}, {} violations, {elapsed:.2?}",
            starts.len(),
            clauses.len(),
            SanityClause::ALL.len(),
            total.states,
            total.max_fetches_before_safe,
            total.max_deliveries_before_safe,
            total.violations
        ),
    )
}

fn transport_equivalence() -> Outcome {
    let params = CodecParams::new(2, 2, 1).unwrap();
    let mut matched = 0;
    let mut notes = Vec::new();
    for session in 0..10u64 {
        let batches: Vec<Vec<Bits>> = (0..20u64)
            .map(|k| vec![bits_of(k + session, 2), bits_of(k * 3, 2)])
            .collect();
        let mut spec = SessionSpec::clean(params, batches.clone());
        spec.tick = Duration::from_millis(1);
        spec.proxy_capacity = 2;
        spec.policy = AdversaryPolicy {
            omission: 0.1,
            duplication: 0.1,
            seed: session,
            ..AdversaryPolicy::default()
        };
        let result = run_session(&spec)
            .map_err(|e| e.to_string())
            .and_then(|out| {
                let delivered: Vec<Vec<Bits>> = out
                    .receiver
                    .delivered
                    .iter()
                    .map(|b| b.messages().to_vec())
                    .collect();
                if delivered != batches {
                    return Err(format!("{} of 20 delivered in order", delivered.len()));
                }
                replay(&out.sender.log).map_err(|e| e.to_string())?;
                replay(&out.receiver.log).map_err(|e| e.to_string())
            });
        match result {
            Ok(_) => matched += 1,
            Err(e) => notes.push(format!("session {session}: {e}")),
        }
    }
    outcome(
        matched == 10,
        format!(
            "{matched}/10 sessions replayed exactly {}",
            notes.join("; ")
        ),
    )
}

fn main() -> ExitCode {
    let report = |n: u32, name: &str, o: Outcome| {
        println!(
            "{} criterion {n} ({name}): {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        o.pass
    };
    let mut all = true;
    all &= report(1, "codec exhaustive tolerance", codec_exhaustive());
    let converging = convergence_runs();
    all &= report(2, "convergence bound", convergence_bound(&converging));
    all &= report(3, "chain bound", chain_bound(&converging));
    let closing = closure_runs();
    all &= report(4, "closure", closure(&closing));
    let long = fifo_run();
    all &= report(5, "exactly-once fifo", fifo(&long));
    all &= report(
        6,
        "index progression",
        progression(&[&converging, &closing, std::slice::from_ref(&long)]),
    );
    all &= report(7, "majority soundness", first_attempt_soundness());
    all &= report(8, "scripted-adversary convergence", scripted_convergence());
    all &= report(
        9,
        "simulation/transport equivalence",
        transport_equivalence(),
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

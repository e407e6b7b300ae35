//! Multi-seed orchestration and CSV output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{build_policy, Baseline};
use crate::environment::{generate_world, World};
use crate::error::{Error, Result};
use crate::policy::simulate;
use crate::ratings::load_ratings_dataset;
use crate::trace::{Trace, TraceRecord, TRACE_HEADER};

use super::config::ExperimentConfig;

pub const NUM_CHECKPOINTS: usize = 200;

pub const SUMMARY_HEADER: [&str; 8] = [
    "policy",
    "t",
    "seeds",
    "mean_cumulative_regret",
    "std_cumulative_regret",
    "mean_comm_count",
    "std_comm_count",
    "fraction_partition_correct",
];

pub fn build_world(cfg: &ExperimentConfig, seed: u64) -> Result<World> {
    let w = &cfg.world;
    let mut world = match &w.ratings {
        Some(path) => load_ratings_dataset(path, w.d, w.n, w.servers, w.sigma0, seed)?,
        None => generate_world(w.n, w.m, w.servers, w.d, w.gamma, w.sigma0, seed)?,
    };
    world.clamp_rewards = w.clamp_rewards;
    Ok(world)
}

/// Runs one `(baseline, seed)` pair in memory and returns the full trace
/// with its wall-clock time.
pub fn run_single(cfg: &ExperimentConfig, baseline: Baseline, seed: u64) -> Result<(Trace, f64)> {
    let world = build_world(cfg, seed)?;
    let mut params = cfg.params();
    if cfg.world.ratings.is_some() {
        params.num_clusters = world.num_clusters;
    }
    let mut policy = build_policy(baseline, &world, &params, seed)?;
    let start = Instant::now();
    let trace = simulate(policy.as_mut(), &world, params.horizon, cfg.algorithm.items, seed, |_, _| Ok(()))?;
    Ok((trace, start.elapsed().as_secs_f64() * 1e3))
}

/// 200 log-spaced rounds in `[1, T]` plus `T`, deduplicated.
pub fn checkpoints(horizon: u64) -> Vec<u64> {
    if horizon == 0 {
        return Vec::new();
    }
    let top = (horizon as f64).ln();
    let mut out: Vec<u64> = (0..NUM_CHECKPOINTS)
        .map(|i| {
            let frac = i as f64 / (NUM_CHECKPOINTS - 1) as f64;
            ((top * frac).exp().round() as u64).clamp(1, horizon)
        })
        .collect();
    out.push(horizon);
    out.sort_unstable();
    out.dedup();
    out
}

fn write_records<W: Write>(out: W, policy: &str, seed: u64, rows: impl Iterator<Item = TraceRecord>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(TRACE_HEADER)?;
    let seed = seed.to_string();
    for r in rows {
        w.write_record([
            r.t.to_string().as_str(),
            policy,
            &seed,
            &r.instant_regret.to_string(),
            &r.cumulative_regret.to_string(),
            &r.comm_count_cumulative.to_string(),
            &r.num_global_clusters.to_string(),
            if r.partition_correct { "true" } else { "false" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every row of `trace` with round-trip float formatting.
pub fn emit_csv(trace: &Trace, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    write_records(file, &trace.policy, trace.seed, trace.rows.iter().cloned())
}

fn emit_rows(trace: &Trace, rounds: &[u64], path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let rows = rounds.iter().map(|&t| trace.rows[t as usize - 1].clone());
    write_records(file, &trace.policy, trace.seed, rows)
}

/// Parses a trace file written by [`emit_csv`].
pub fn read_trace_csv(path: &Path) -> Result<Trace> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(Error::Config(format!("{}: unexpected header", path.display())));
    }
    let mut trace = Trace::new("", 0);
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or_default();
        let parse_err = |what: &str| Error::Config(format!("{}:{}: bad {what}", path.display(), i + 2));
        if i == 0 {
            trace.policy = field(1).to_string();
            trace.seed = field(2).parse().map_err(|_| parse_err("seed"))?;
        }
        trace.rows.push(TraceRecord {
            t: field(0).parse().map_err(|_| parse_err("t"))?,
            instant_regret: field(3).parse().map_err(|_| parse_err("instant_regret"))?,
            cumulative_regret: field(4).parse().map_err(|_| parse_err("cumulative_regret"))?,
            comm_count_cumulative: field(5).parse().map_err(|_| parse_err("comm_count_cumulative"))?,
            num_global_clusters: field(6).parse().map_err(|_| parse_err("num_global_clusters"))?,
            partition_correct: field(7).parse().map_err(|_| parse_err("partition_correct"))?,
        });
    }
    Ok(trace)
}

/// Per-run numbers kept after the trace file is written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub baseline: Baseline,
    pub seed: u64,
    pub path: PathBuf,
    /// Records at the summary checkpoints.
    pub checkpoint_rows: Vec<TraceRecord>,
    pub final_regret: f64,
    pub final_comm: u64,
    /// First round from which the partition stays correct to the end.
    pub correct_from: Option<u64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub t: u64,
    pub seeds: usize,
    pub mean_regret: f64,
    pub std_regret: f64,
    pub mean_comm: f64,
    pub std_comm: f64,
    pub fraction_correct: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunResult>,
    pub summary: Vec<SummaryRow>,
    pub summary_path: PathBuf,
}

/// Sample mean and standard deviation (n − 1); the deviation is 0 for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn correct_from(trace: &Trace) -> Option<u64> {
    let last_wrong = trace.rows.iter().rposition(|r| !r.partition_correct);
    match last_wrong {
        None if trace.rows.is_empty() => None,
        None => Some(trace.rows[0].t),
        Some(i) if i + 1 < trace.rows.len() => Some(trace.rows[i + 1].t),
        Some(_) => None,
    }
}

pub fn summarize(runs: &[RunResult], rounds: &[u64]) -> Vec<SummaryRow> {
    let mut policies: Vec<Baseline> = runs.iter().map(|r| r.baseline).collect();
    policies.sort();
    policies.dedup();
    let mut out = Vec::new();
    for policy in policies {
        let mine: Vec<&RunResult> = runs.iter().filter(|r| r.baseline == policy).collect();
        for (ci, &t) in rounds.iter().enumerate() {
            let regrets: Vec<f64> = mine.iter().map(|r| r.checkpoint_rows[ci].cumulative_regret).collect();
            let comms: Vec<f64> = mine.iter().map(|r| r.checkpoint_rows[ci].comm_count_cumulative as f64).collect();
            let correct = mine.iter().filter(|r| r.checkpoint_rows[ci].partition_correct).count();
            let (mean_regret, std_regret) = mean_std(&regrets);
            let (mean_comm, std_comm) = mean_std(&comms);
            out.push(SummaryRow {
                policy: policy.to_string(),
                t,
                seeds: mine.len(),
                mean_regret,
                std_regret,
                mean_comm,
                std_comm,
                fraction_correct: correct as f64 / mine.len() as f64,
            });
        }
    }
    out
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(path)?));
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.t.to_string(),
            r.seeds.to_string(),
            r.mean_regret.to_string(),
            r.std_regret.to_string(),
            r.mean_comm.to_string(),
            r.std_comm.to_string(),
            r.fraction_correct.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_timing(runs: &[RunResult], horizon: u64, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["policy", "seed", "rounds", "total_ms", "ms_per_round"])?;
    for r in runs {
        w.write_record([
            r.baseline.to_string(),
            r.seed.to_string(),
            horizon.to_string(),
            r.wall_ms.to_string(),
            (r.wall_ms / horizon as f64).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every `(baseline, seed)` pair in parallel, writes
/// `<out>/<baseline>_seed<k>.csv`, `<out>/summary.csv` and optionally
/// `<out>/timing.csv`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let baselines = cfg.baselines()?;
    let seeds = cfg.seeds()?;
    let out = &cfg.run.out;
    std::fs::create_dir_all(out)?;
    let rounds = checkpoints(cfg.algorithm.horizon);
    let jobs: Vec<(Baseline, u64)> = baselines.iter().flat_map(|&b| seeds.iter().map(move |&s| (b, s))).collect();

    let mut runs = jobs
        .par_iter()
        .map(|&(baseline, seed)| -> Result<RunResult> {
            let (trace, wall_ms) = run_single(cfg, baseline, seed)?;
            let path = out.join(format!("{baseline}_seed{seed}.csv"));
            if cfg.run.dense {
                emit_csv(&trace, &path)?;
            } else {
                emit_rows(&trace, &rounds, &path)?;
            }
            Ok(RunResult {
                baseline,
                seed,
                path,
                checkpoint_rows: rounds.iter().map(|&t| trace.rows[t as usize - 1].clone()).collect(),
                final_regret: trace.final_regret(),
                final_comm: trace.final_comm(),
                correct_from: correct_from(&trace),
                wall_ms,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| (r.baseline, r.seed));

    let summary = summarize(&runs, &rounds);
    let summary_path = out.join("summary.csv");
    write_summary(&summary, &summary_path)?;
    if cfg.run.timing {
        write_timing(&runs, cfg.algorithm.horizon, &out.join("timing.csv"))?;
    }
    Ok(ExperimentOutcome { runs, summary, summary_path })
}

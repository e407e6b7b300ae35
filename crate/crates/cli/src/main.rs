//! Command-line entry point.
//!
//! Unknown `--key value` pairs are treated as config overrides and applied on
//! top of the `--config` file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fclub::harness::config::locate_key;
use fclub::harness::horizon::communication_bound;
use fclub::harness::{detection_horizon, run_experiment, ExperimentConfig, HorizonInputs};
use fclub::Error;

#[derive(Parser, Debug)]
#[command(name = "fclub", about = "Federated clustering-of-bandits simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every (baseline, seed) pair and write traces plus a summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Restrict to these baselines (repeatable).
        #[arg(long = "baseline")]
        baselines: Vec<String>,
        /// Inclusive seed range `a..b`.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write every round instead of the log-spaced checkpoints.
        #[arg(long)]
        dense: bool,
    },
    /// Print the closed-form detection horizon and communication bound.
    Horizon {
        #[arg(long)]
        config: PathBuf,
    },
}

const FLAGS: [&str; 6] = ["config", "baseline", "seeds", "out", "dense", "help"];

type Overrides = Vec<(String, String)>;

/// Splits `--key value` overrides that are not CLI flags out of `args`.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides), Error> {
    let mut kept = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            kept.push(arg);
            continue;
        };
        let (key, inline) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if FLAGS.contains(&key.as_str()) || key.is_empty() {
            kept.push(arg);
            continue;
        }
        if locate_key(&key).is_none() {
            return Err(Error::Config(format!("unknown option '--{key}'")));
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| Error::Config(format!("missing value for '--{key}'")))?,
        };
        overrides.push((key, value));
    }
    Ok((kept, overrides))
}

fn simulate(
    config: PathBuf,
    baselines: Vec<String>,
    seeds: Option<String>,
    out: Option<PathBuf>,
    dense: bool,
    mut overrides: Overrides,
) -> Result<(), Error> {
    if !baselines.is_empty() {
        let list: Vec<String> = baselines.iter().map(|b| format!("\"{b}\"")).collect();
        overrides.push(("run.baselines".into(), format!("[{}]", list.join(","))));
    }
    if let Some(s) = seeds {
        overrides.push(("run.seeds".into(), format!("\"{s}\"")));
    }
    if let Some(o) = out {
        overrides.push(("run.out".into(), format!("\"{}\"", o.display())));
    }
    if dense {
        overrides.push(("run.dense".into(), "true".into()));
    }
    let cfg = ExperimentConfig::load(&config, &overrides)?;
    let outcome = run_experiment(&cfg)?;
    let two_t0 = HorizonInputs::from_config(&cfg).map(|p| detection_horizon(&p).horizon()).ok();
    println!("wrote {}", outcome.summary_path.display());
    for r in &outcome.runs {
        let correct = r.correct_from.map_or("never".to_string(), |t| t.to_string());
        println!(
            "{:<10} seed {:>3}  regret {:>12.3}  comm {:>9}  correct from t={}  ({:.1} ms)",
            r.baseline.as_str(),
            r.seed,
            r.final_regret,
            r.final_comm,
            correct,
            r.wall_ms
        );
    }
    if let Some(h) = two_t0 {
        println!("theoretical detection horizon 2*T0 = {h:.6e}");
    }
    Ok(())
}

fn horizon(config: PathBuf, overrides: Overrides) -> Result<(), Error> {
    let cfg = ExperimentConfig::load(&config, &overrides)?;
    let p = HorizonInputs::from_config(&cfg)?;
    let t = detection_horizon(&p);
    println!("A      = {:.6e}", t.a);
    println!("B      = {:.6e}", t.b);
    println!("C      = {:.6e}", t.c);
    println!("D      = {:.6e}", t.d);
    println!("E      = {:.6e}", t.e);
    println!("T_i    = {:.6e}", t.per_user);
    println!("T0     = {:.6e}", t.t0);
    println!("2*T0   = {:.6e}", t.horizon());
    let bound = communication_bound(&p, cfg.algorithm.upload, cfg.algorithm.download);
    println!("C(T)  <= {bound:.6e}");
    Ok(())
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    if e.is_config() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => return exit_for(&e),
    };
    let cli = Cli::parse_from(args);
    let result = match cli.command {
        Command::Simulate { config, baselines, seeds, out, dense } => {
            simulate(config, baselines, seeds, out, dense, overrides)
        }
        Command::Horizon { config } => horizon(config, overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => exit_for(&e),
    }
}

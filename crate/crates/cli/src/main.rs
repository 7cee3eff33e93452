use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use submatrix_core::bounds::bound_report;
use submatrix_core::grid_io::{grid_to_csv, write_atomic, write_grid};
use submatrix_core::harness::{load_report, render_outputs, Experiment};
use submatrix_core::{run_experiment, Error, ExperimentConfig};

const THREADS_VAR: &str = "SUBMC_THREADS";

#[derive(Parser)]
#[command(name = "submc", version, about = "Entry-specific submatrix completion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write P, the signal, the mask and the observations for one trial.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Write the per-entry submatrix plans.
    Plan {
        #[command(flatten)]
        common: Common,
    },
    /// Run the full experiment and render every artifact.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Write upper and lower rate grids plus precondition flags.
    Bounds {
        #[command(flatten)]
        common: Common,
    },
    /// Re-render a previous run from its stored CSV grids.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = ExperimentConfig::from_json_file(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Error::Config("no output directory: pass --out or set \"out\"".into()))?;
    Ok((cfg, out))
}

fn ensure_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate { common, trial } => {
            let (cfg, out) = load(&common)?;
            let exp = Experiment::prepare(cfg)?;
            let (signal, obs) = exp.draw(trial)?;
            ensure_dir(&out)?;
            write_grid(out.join("probability.csv"), exp.p_original.as_matrix())?;
            write_grid(out.join("signal.csv"), &exp.to_original_order(signal.m_star)?)?;
            write_grid(out.join("observations.csv"), &exp.to_original_order(obs.y)?)?;
            write_grid(out.join("mask.csv"), &exp.to_original_order(obs.mask.to_f64())?)?;
            let c = &exp.config;
            write_json(
                &out.join("signal.json"),
                &json!({
                    "n": c.n, "m": c.m, "r": c.r, "sigma": c.sigma,
                    "seed": c.trial_seed(trial), "trial": trial,
                    "observed": obs.mask.count(),
                }),
            )?;
            println!("wrote trial {trial} to {}", out.display());
        }
        Command::Plan { common } => {
            let (cfg, out) = load(&common)?;
            let exp = Experiment::prepare(cfg)?;
            ensure_dir(&out)?;
            write_atomic(out.join("plans.csv"), exp.plans.to_csv().as_bytes())?;
            if let Some(perm) = &exp.permutation {
                let v = serde_json::to_value(perm).expect("permutation serializes");
                write_json(&out.join("permutation.json"), &v)?;
            }
            println!(
                "{} entries in {} groups written to {}",
                exp.plans.plans.len(),
                exp.plans.groups.len(),
                out.join("plans.csv").display()
            );
        }
        Command::Run { common, trials } => {
            let (mut cfg, out) = load(&common)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            cfg.validate()?;
            let report = run_experiment(&cfg)?;
            let files = render_outputs(&report, &out)?;
            for a in &report.aggregates {
                match a.mean_rel_improvement {
                    Some(v) => println!("{:<14} {:>7.2}%", a.name, 100.0 * v),
                    None => println!("{:<14}     n/a", a.name),
                }
            }
            println!("positive fraction {:.3}", report.fraction_positive);
            println!("{} files written to {}", files.all().count(), out.display());
        }
        Command::Bounds { common } => {
            let (cfg, out) = load(&common)?;
            let exp = Experiment::prepare(cfg)?;
            let c = &exp.config;
            let rep = bound_report(&exp.p, c.r, c.sigma, c.delta, c.block_params())?;
            ensure_dir(&out)?;
            write_grid(out.join("upper_rate.csv"), &exp.to_original_order(rep.upper_rate)?)?;
            write_grid(out.join("lower_rate.csv"), &exp.to_original_order(rep.lower_rate)?)?;
            let ok = rep.preconditions.ok.map(|b| if b { 1.0 } else { 0.0 });
            write_atomic(
                out.join("precondition_ok.csv"),
                grid_to_csv(&exp.to_original_order(ok)?).as_bytes(),
            )?;
            let s = &rep.preconditions.summary;
            write_json(
                &out.join("bounds.json"),
                &json!({
                    "delta": rep.delta,
                    "flagged": s.flagged,
                    "total": s.total,
                    "whole_matrix_ok": s.whole_matrix_ok,
                    "block_table": rep.block_summary,
                }),
            )?;
            println!("{} of {} entries flagged", s.flagged, s.total);
        }
        Command::Report { dir } => {
            let report = load_report(&dir)?;
            let files = render_outputs(&report, &dir)?;
            println!("{} files re-rendered in {}", files.all().count(), dir.display());
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::RaggedGrid { .. }
        | Error::OutOfRange { .. }
        | Error::EmptyMatrix
        | Error::InvalidRank { .. }
        | Error::DimensionMismatch { .. }
        | Error::NotMonotonizable
        | Error::NotMonotone => 2,
        Error::NumericalFailure(_)
        | Error::RankDeficient { .. }
        | Error::DivisionByZeroProbability { .. }
        | Error::RankExceedsSubmatrix { .. }
        | Error::AllZero { .. } => 3,
        Error::Io { .. } => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_VAR) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_VAR} must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

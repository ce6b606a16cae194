use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use polylab::active::{active_learn, ActiveConfig, Algorithm};
use polylab::fitter::FitResult;
use polylab_cli::cell::{evaluate, write_facets_csv, write_outcome};
use polylab_cli::config::ExperimentConfig;
use polylab_cli::problem::{generate, Kind, ProblemFile};
use polylab_cli::report::{report, NoData};
use polylab_cli::sweep::run_experiment;

/// Exit status of `report` when there is nothing to plot.
const EXIT_NO_DATA: u8 = 3;

#[derive(Parser)]
#[command(name = "polylab", version, about = "Learn convex polytopes from line searches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Voronoi-cell problem.
    GenVoronoi {
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a simulated quantum-dot device problem.
    GenDevice {
        #[arg(long, default_value_t = 3)]
        dots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run active learning on a problem file.
    Learn {
        problem: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the label-informed baseline fit.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a fit against the problem's ground truth.
    Evaluate {
        problem: PathBuf,
        fit: PathBuf,
        #[arg(long, default_value_t = polylab::metrics::MATCH_ANGLE_DEG)]
        angle: f64,
        /// Directory for `facets.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate figures and tables of a sweep directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run (or resume) a sweep.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn emit(value: &impl serde::Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn gen(kind: Kind, dim: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let p = generate(kind, dim, seed)?;
    emit(&ProblemFile::from_problem(&p), out)
}

fn learn(problem: &Path, delta: f64, seed: u64, baseline: bool, out: &Path) -> Result<()> {
    let p = ProblemFile::read(problem)?.build()?;
    let alg = if baseline { Algorithm::Baseline } else { Algorithm::Main };
    let cfg = ActiveConfig::new(delta, alg, seed);
    let outcome = active_learn(&p, &p.origin(), &cfg)?;
    std::fs::create_dir_all(out)?;
    write_outcome(out, &outcome)?;
    println!(
        "{} rows, {} line searches, {} rounds, terminated={}, stalled={}",
        outcome.fit.model.len(),
        outcome.trace.total_searches(),
        outcome.trace.rounds.len(),
        outcome.trace.terminated(),
        outcome.trace.stalled()
    );
    Ok(())
}

fn evaluate_cmd(problem: &Path, fit: &Path, angle: f64, out: Option<&Path>) -> Result<()> {
    let p = ProblemFile::read(problem)?.build()?;
    let text = std::fs::read_to_string(fit).with_context(|| format!("reading {}", fit.display()))?;
    let fit: FitResult = serde_json::from_str(&text)?;
    let ev = evaluate(p.truth(), &fit.model, angle)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_facets_csv(&dir.join("facets.csv"), &ev)?;
    }
    emit(
        &serde_json::json!({
            "truth_facets": p.truth().len(),
            "estimate_rows": fit.model.len(),
            "unmatched": ev.report.unmatched(),
            "matching_error": ev.report.error,
            "iou": ev.iou,
        }),
        None,
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("POLYLAB_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenVoronoi { dim, seed, out } => gen(Kind::Voronoi, dim, seed, out.as_deref()),
        Command::GenDevice { dots, seed, out } => gen(Kind::Device, dots, seed, out.as_deref()),
        Command::Learn { problem, delta, seed, baseline, out } => learn(&problem, delta, seed, baseline, &out),
        Command::Evaluate { problem, fit, angle, out } => evaluate_cmd(&problem, &fit, angle, out.as_deref()),
        Command::Report { out } => match report(&out) {
            Ok(files) => {
                for f in &files.files {
                    println!("{}", files.dir.join(f).display());
                }
                Ok(())
            }
            Err(e) if e.downcast_ref::<NoData>().is_some() => {
                eprintln!("{e}");
                return ExitCode::from(EXIT_NO_DATA);
            }
            Err(e) => Err(e),
        },
        Command::Run { config, out, jobs } => (|| {
            let cfg = ExperimentConfig::from_file(&config)?;
            let s = run_experiment(&cfg, &out, jobs)?;
            println!("{} cells: {} ran, {} skipped, {} failed", s.total, s.ran, s.skipped, s.failed);
            if s.all_failed() {
                anyhow::bail!("every cell failed; see errors.csv");
            }
            Ok(())
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

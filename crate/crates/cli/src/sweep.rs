//! Resumable sweeps over the cells of a configuration.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};

use crate::cell::{load_result, run_cell, write_json, CellSpec, ResultRow};
use crate::config::ExperimentConfig;

pub const RESULTS_CSV: &str = "results.csv";
pub const ERRORS_CSV: &str = "errors.csv";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SweepSummary {
    pub total: usize,
    pub ran: usize,
    pub skipped: usize,
    pub failed: usize,
}

impl SweepSummary {
    /// A sweep fails only when it attempted cells and every one failed.
    pub fn all_failed(&self) -> bool {
        self.failed > 0 && self.failed == self.total - self.skipped
    }
}

enum Outcome {
    Skipped(ResultRow),
    Ran(ResultRow),
    Failed(String),
}

/// Runs every cell that has no result yet, on `jobs` worker threads.
///
/// Completed cells are detected by their result file, so an interrupted
/// sweep resumes where it stopped. `results.csv` and `errors.csv` are
/// rewritten in configuration order at the end, independent of the order
/// in which workers finished.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<SweepSummary> {
    cfg.validate()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("config.json"), cfg)?;
    let cells = cfg.cells();
    let slots: Vec<Mutex<Option<Outcome>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(cell) = cells.get(i) else { break };
        let outcome = match load_result(out, cell) {
            Some(r) => Outcome::Skipped(r),
            None => {
                log::info!("running {}", cell.id());
                match run_cell(cfg, cell, out) {
                    Ok(r) => Outcome::Ran(r),
                    Err(e) => {
                        log::error!("{} failed: {e:#}", cell.id());
                        Outcome::Failed(format!("{e:#}"))
                    }
                }
            }
        };
        *slots[i].lock().unwrap() = Some(outcome);
    };
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1) {
            s.spawn(worker);
        }
    });

    let mut summary = SweepSummary {
        total: cells.len(),
        ..Default::default()
    };
    let mut rows = Vec::new();
    let mut errors: Vec<(&CellSpec, String)> = Vec::new();
    for (cell, slot) in cells.iter().zip(slots) {
        match slot.into_inner().unwrap().expect("every cell visited") {
            Outcome::Skipped(r) => {
                summary.skipped += 1;
                rows.push(r);
            }
            Outcome::Ran(r) => {
                summary.ran += 1;
                rows.push(r);
            }
            Outcome::Failed(e) => {
                summary.failed += 1;
                errors.push((cell, e));
            }
        }
    }
    write_results(&out.join(RESULTS_CSV), &rows)?;
    let mut w = csv::Writer::from_path(out.join(ERRORS_CSV))?;
    w.write_record(["cell_id", "error"])?;
    for (cell, e) in &errors {
        w.write_record([cell.id().as_str(), e.as_str()])?;
    }
    w.flush()?;
    Ok(summary)
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        // Header only, so that readers see the columns.
        w.write_record(RESULT_COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}

pub const RESULT_COLUMNS: [&str; 19] = [
    "cell_id",
    "kind",
    "dim",
    "instance",
    "delta",
    "algorithm",
    "seed",
    "truth_facets",
    "estimate_rows",
    "unmatched",
    "matching_error",
    "iou",
    "bounded",
    "line_searches",
    "rounds",
    "terminated",
    "stalled",
    "dataset_size",
    "objective",
];

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

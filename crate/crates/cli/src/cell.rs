//! One (problem, δ, algorithm) cell of a sweep and its artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use polylab::active::{active_learn, ActiveConfig, ActiveOutcome, Algorithm};
use polylab::fitter::MarginModel;
use polylab::geometry::HPolytope;
use polylab::metrics::{facet_records, iou, matching_error_with, FacetRecord, MatchReport};

use crate::config::ExperimentConfig;
use crate::problem::{generate, Kind, ProblemFile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub kind: Kind,
    pub dim: usize,
    pub instance: u64,
    pub delta: f64,
    pub algorithm: Algorithm,
}

impl CellSpec {
    pub fn id(&self) -> String {
        format!(
            "{}-d{}-i{}-delta{}-{}",
            self.kind.name(),
            self.dim,
            self.instance,
            self.delta,
            self.algorithm.name()
        )
    }
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub cell_id: String,
    pub kind: Kind,
    pub dim: usize,
    pub instance: u64,
    pub delta: f64,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub truth_facets: usize,
    pub estimate_rows: usize,
    pub unmatched: usize,
    pub matching_error: f64,
    /// Zero when the estimate is not a bounded polytope.
    pub iou: f64,
    pub bounded: bool,
    pub line_searches: usize,
    pub rounds: usize,
    pub terminated: bool,
    pub stalled: bool,
    pub dataset_size: usize,
    pub objective: f64,
}

/// Comparison of an estimate against the ground truth.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MatchReport,
    pub records: Vec<FacetRecord>,
    pub iou: Option<f64>,
}

pub fn evaluate(truth: &HPolytope, model: &MarginModel, angle_deg: f64) -> Result<Evaluation> {
    let report = matching_error_with(truth, model, angle_deg);
    let records = facet_records(truth, &report)?;
    let iou = match model.to_polytope() {
        Ok(est) => iou(truth, &est).ok(),
        Err(_) => None,
    };
    Ok(Evaluation { report, records, iou })
}

pub fn write_facets_csv(path: &Path, ev: &Evaluation) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["facet", "measure", "matched", "angle_deg", "best_row"])?;
    for (i, (rec, m)) in ev.records.iter().zip(&ev.report.facets).enumerate() {
        w.write_record([
            i.to_string(),
            rec.measure.to_string(),
            rec.matched.to_string(),
            m.angle_deg.to_string(),
            m.best_row.map(|k| k.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FacetCsvRow {
    pub facet: usize,
    pub measure: f64,
    pub matched: bool,
    pub angle_deg: f64,
    pub best_row: Option<usize>,
}

pub fn read_facets_csv(path: &Path) -> Result<Vec<FacetCsvRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes the outcome of a learning run: `dataset.json`, `trace.jsonl` and
/// `fit.json`.
pub fn write_outcome(dir: &Path, out: &ActiveOutcome) -> Result<()> {
    write_json(&dir.join("dataset.json"), &out.dataset)?;
    let mut w = BufWriter::new(File::create(dir.join("trace.jsonl"))?);
    out.trace.write_jsonl(&mut w)?;
    w.flush()?;
    write_json(&dir.join("fit.json"), &out.fit)?;
    Ok(())
}

pub fn cell_dir(root: &Path, cell: &CellSpec) -> PathBuf {
    root.join("cells").join(cell.id())
}

/// Result file whose presence marks the cell as complete.
pub const RESULT_FILE: &str = "result.json";

pub fn load_result(root: &Path, cell: &CellSpec) -> Option<ResultRow> {
    let text = fs::read_to_string(cell_dir(root, cell).join(RESULT_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}

fn row(cell: &CellSpec, cfg: &ActiveConfig, truth: &HPolytope, out: &ActiveOutcome, ev: &Evaluation) -> ResultRow {
    ResultRow {
        cell_id: cell.id(),
        kind: cell.kind,
        dim: cell.dim,
        instance: cell.instance,
        delta: cell.delta,
        algorithm: cell.algorithm,
        seed: cfg.seed,
        truth_facets: truth.len(),
        estimate_rows: out.fit.model.len(),
        unmatched: ev.report.unmatched(),
        matching_error: ev.report.error,
        iou: ev.iou.unwrap_or(0.0),
        bounded: ev.iou.is_some(),
        line_searches: out.trace.total_searches(),
        rounds: out.trace.rounds.len(),
        terminated: out.trace.terminated(),
        stalled: out.trace.stalled(),
        dataset_size: out.dataset.len(),
        objective: out.fit.objective,
    }
}

/// Runs one cell and persists all of its artifacts; the result file is
/// written last.
pub fn run_cell(exp: &ExperimentConfig, cell: &CellSpec, root: &Path) -> Result<ResultRow> {
    let dir = cell_dir(root, cell);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let problem = generate(cell.kind, cell.dim, exp.problem_seed(cell.kind, cell.dim, cell.instance))?;
    write_json(&dir.join("problem.json"), &ProblemFile::from_problem(&problem))?;
    let cfg = exp.active_config(cell)?;
    let start = Instant::now();
    let out = active_learn(&problem, &problem.origin(), &cfg)?;
    let learn_seconds = start.elapsed().as_secs_f64();
    write_outcome(&dir, &out)?;
    let truth = problem.truth();
    let ev = evaluate(truth, &out.fit.model, exp.match_angle_deg)?;
    write_facets_csv(&dir.join("facets.csv"), &ev)?;
    write_json(
        &dir.join("timing.json"),
        &serde_json::json!({ "learn_seconds": learn_seconds, "total_seconds": start.elapsed().as_secs_f64() }),
    )?;
    let r = row(cell, &cfg, truth, &out, &ev);
    write_json(&dir.join(RESULT_FILE), &r)?;
    Ok(r)
}

//! Figures and tidy tables rebuilt from persisted sweep artifacts only.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use thiserror::Error;

use polylab::active::{ecdf_targets, Algorithm, RunTrace};
use polylab::metrics::{facet_error_histogram, log_edges, FacetRecord};

use crate::cell::read_facets_csv;
use crate::problem::Kind;
use crate::svg::{Plot, Series};
use crate::sweep::{read_results, RESULTS_CSV};

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Error)]
#[error("no results in {0}")]
pub struct NoData(pub PathBuf);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

/// (kind, dim, algorithm, δ) with δ ordered by its bit pattern, which for
/// positive values is numeric order.
type Group = (Kind, usize, u8, u64);

fn alg_key(a: Algorithm) -> u8 {
    match a {
        Algorithm::Main => 0,
        Algorithm::Baseline => 1,
    }
}

fn alg_from_key(k: u8) -> Algorithm {
    if k == 0 {
        Algorithm::Main
    } else {
        Algorithm::Baseline
    }
}

fn group_label(kind: Kind, dim: usize, alg: Algorithm) -> String {
    format!("{} {}D {}", kind.name(), dim, alg.name())
}

/// Writes `report/` under `dir`. Fails with [`NoData`] (and writes nothing)
/// when there are no result rows.
pub fn report(dir: &Path) -> Result<ReportFiles> {
    let results_path = dir.join(RESULTS_CSV);
    let rows = if results_path.exists() { read_results(&results_path)? } else { Vec::new() };
    if rows.is_empty() {
        return Err(NoData(dir.to_path_buf()).into());
    }
    let mut rows = rows;
    rows.sort_by(|a, b| {
        (a.kind, a.dim, alg_key(a.algorithm), a.delta.to_bits(), a.instance).cmp(&(
            b.kind,
            b.dim,
            alg_key(b.algorithm),
            b.delta.to_bits(),
            b.instance,
        ))
    });
    let out = dir.join("report");
    fs::create_dir_all(&out)?;

    // Figure 2 analogue: mean matching errors per δ.
    let mut groups: BTreeMap<Group, Vec<&crate::cell::ResultRow>> = BTreeMap::new();
    for r in &rows {
        groups
            .entry((r.kind, r.dim, alg_key(r.algorithm), r.delta.to_bits()))
            .or_default()
            .push(r);
    }
    let mut w = csv::Writer::from_path(out.join("matching_error.csv"))?;
    w.write_record([
        "kind",
        "dim",
        "algorithm",
        "delta",
        "instances",
        "mean_unmatched",
        "mean_matching_error",
        "mean_iou",
        "mean_line_searches",
    ])?;
    let mut curves: BTreeMap<(Kind, usize, u8), (String, Vec<(f64, f64)>)> = BTreeMap::new();
    for (&(kind, dim, a, _), rs) in &groups {
        let n = rs.len() as f64;
        let mean = |f: &dyn Fn(&crate::cell::ResultRow) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
        let alg = rs[0].algorithm;
        let delta = rs[0].delta;
        let unmatched = mean(&|r| r.unmatched as f64);
        w.write_record([
            kind.name().to_string(),
            dim.to_string(),
            alg.name().to_string(),
            delta.to_string(),
            rs.len().to_string(),
            unmatched.to_string(),
            mean(&|r| r.matching_error).to_string(),
            mean(&|r| r.iou).to_string(),
            mean(&|r| r.line_searches as f64).to_string(),
        ])?;
        curves
            .entry((kind, dim, a))
            .or_insert_with(|| (group_label(kind, dim, alg), Vec::new()))
            .1
            .push((delta, unmatched));
    }
    w.flush()?;
    let fig2 = Plot {
        title: "Matching errors".into(),
        x_label: "line search precision δ".into(),
        y_label: "mean unmatched facets per instance".into(),
        log_x: true,
        series: curves
            .into_values()
            .map(|(label, points)| Series { label, points, step: false })
            .collect(),
    };
    fs::write(out.join("fig2_matching_error.svg"), fig2.render())?;

    // Figure 3 analogue: facet measures and error rates; bin edges are shared
    // by all cells of one (kind, dim).
    let mut facets: BTreeMap<Group, Vec<FacetRecord>> = BTreeMap::new();
    for r in &rows {
        let path = dir.join("cells").join(&r.cell_id).join("facets.csv");
        let recs = read_facets_csv(&path)?;
        facets
            .entry((r.kind, r.dim, alg_key(r.algorithm), r.delta.to_bits()))
            .or_default()
            .extend(recs.iter().map(|f| FacetRecord {
                measure: f.measure,
                matched: f.matched,
            }));
    }
    let mut edges: BTreeMap<(Kind, usize), Vec<f64>> = BTreeMap::new();
    for ((kind, dim, _, _), recs) in &facets {
        let e = edges.entry((*kind, *dim)).or_insert_with(|| vec![f64::INFINITY, 0.0]);
        for r in recs.iter().filter(|r| r.measure > 0.0) {
            e[0] = e[0].min(r.measure);
            e[1] = e[1].max(r.measure);
        }
    }
    let edges: BTreeMap<(Kind, usize), Vec<f64>> = edges
        .into_iter()
        .map(|(k, e)| {
            let v = if !e[0].is_finite() {
                vec![0.0, 1.0]
            } else if e[1] <= e[0] {
                vec![e[0] / 2.0, e[0] * 2.0]
            } else {
                log_edges(e[0], e[1] * (1.0 + 1e-9), HISTOGRAM_BINS)
            };
            (k, v)
        })
        .collect();
    let mut w = csv::Writer::from_path(out.join("facet_histogram.csv"))?;
    w.write_record([
        "kind",
        "dim",
        "algorithm",
        "delta",
        "bin_lower",
        "bin_upper",
        "count",
        "error_count",
    ])?;
    let mut hist_series = Vec::new();
    for ((kind, dim, a, bits), recs) in &facets {
        let alg = &alg_from_key(*a);
        let delta = f64::from_bits(*bits);
        let bins = facet_error_histogram(recs, &edges[&(*kind, *dim)]);
        let mut pts = Vec::new();
        for b in &bins {
            w.write_record([
                kind.name().to_string(),
                dim.to_string(),
                alg.name().to_string(),
                delta.to_string(),
                b.lower.to_string(),
                b.upper.to_string(),
                b.count.to_string(),
                b.errors.to_string(),
            ])?;
            if b.count > 0 {
                pts.push(((b.lower * b.upper).sqrt(), b.error_rate()));
            }
        }
        hist_series.push(Series {
            label: format!("{} δ={delta}", group_label(*kind, *dim, *alg)),
            points: pts,
            step: false,
        });
    }
    w.flush()?;
    let fig3 = Plot {
        title: "Error rate by facet measure".into(),
        x_label: "facet (d−1)-measure".into(),
        y_label: "fraction of facets unmatched".into(),
        log_x: true,
        series: hist_series,
    };
    fs::write(out.join("fig3_facet_histogram.svg"), fig3.render())?;

    // Figure 4 analogue: line searches needed to reach each precision target.
    let mut w = csv::Writer::from_path(out.join("ecdf.csv"))?;
    w.write_record([
        "kind",
        "dim",
        "algorithm",
        "delta",
        "instance",
        "target",
        "round",
        "dataset_size",
        "line_searches",
    ])?;
    let mut reached: BTreeMap<Group, (String, Vec<Option<usize>>)> = BTreeMap::new();
    for r in &rows {
        let path = dir.join("cells").join(&r.cell_id).join("trace.jsonl");
        let trace = RunTrace::read_jsonl(BufReader::new(
            File::open(&path).with_context(|| format!("reading {}", path.display()))?,
        ))?;
        let entry = reached
            .entry((r.kind, r.dim, alg_key(r.algorithm), r.delta.to_bits()))
            .or_insert_with(|| (format!("{} δ={}", group_label(r.kind, r.dim, r.algorithm), r.delta), Vec::new()));
        for e in ecdf_targets(&trace, r.delta) {
            let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                r.kind.name().to_string(),
                r.dim.to_string(),
                r.algorithm.name().to_string(),
                r.delta.to_string(),
                r.instance.to_string(),
                e.target.to_string(),
                opt(e.round),
                opt(e.dataset_size),
                opt(e.line_searches),
            ])?;
            entry.1.push(e.line_searches);
        }
    }
    w.flush()?;
    let fig4 = Plot {
        title: "Precision targets reached".into(),
        x_label: "line searches".into(),
        y_label: "fraction of (instance, target) pairs reached".into(),
        log_x: false,
        series: reached
            .into_values()
            .map(|(label, v)| Series { label, points: ecdf_points(&v), step: true })
            .collect(),
    };
    fs::write(out.join("fig4_ecdf.svg"), fig4.render())?;

    Ok(ReportFiles {
        dir: out,
        files: [
            "matching_error.csv",
            "facet_histogram.csv",
            "ecdf.csv",
            "fig2_matching_error.svg",
            "fig3_facet_histogram.svg",
            "fig4_ecdf.svg",
        ]
        .map(String::from)
        .to_vec(),
    })
}

/// Empirical CDF; unreached entries count in the denominator only.
fn ecdf_points(values: &[Option<usize>]) -> Vec<(f64, f64)> {
    let n = values.len().max(1) as f64;
    let mut hit: Vec<usize> = values.iter().flatten().copied().collect();
    hit.sort_unstable();
    let mut pts = vec![(0.0, 0.0)];
    for (i, v) in hit.iter().enumerate() {
        if i + 1 < hit.len() && hit[i + 1] == *v {
            continue;
        }
        pts.push((*v as f64, (i + 1) as f64 / n));
    }
    pts
}

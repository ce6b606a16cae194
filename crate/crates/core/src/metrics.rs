//! Comparison of estimated and true polytopes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::fitter::MarginModel;
use crate::geometry::{self, GeometryError, HPolytope};
use crate::linalg::{dot, norm};

pub const MATCH_ANGLE_DEG: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetMatch {
    /// Closest estimate row by angle, if the estimate has rows.
    pub best_row: Option<usize>,
    pub angle_deg: f64,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// Fraction of true facets without an estimate normal within the angle.
    pub error: f64,
    pub facets: Vec<FacetMatch>,
}

impl MatchReport {
    pub fn unmatched(&self) -> usize {
        self.facets.iter().filter(|f| !f.matched).count()
    }
}

fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let c = dot(a, b) / (norm(a) * norm(b));
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

pub fn matching_error(truth: &HPolytope, est: &MarginModel) -> MatchReport {
    matching_error_with(truth, est, MATCH_ANGLE_DEG)
}

pub fn matching_error_with(truth: &HPolytope, est: &MarginModel, threshold_deg: f64) -> MatchReport {
    let rows: Vec<usize> = (0..est.len()).filter(|&k| norm(&est.a[k]) > 0.0).collect();
    let facets: Vec<FacetMatch> = truth
        .halfspaces()
        .iter()
        .map(|h| {
            let best = rows
                .iter()
                .map(|&k| (k, angle_deg(&h.normal, &est.a[k])))
                .fold(None, |acc: Option<(usize, f64)>, (k, a)| match acc {
                    Some((_, b)) if b <= a => acc,
                    _ => Some((k, a)),
                });
            let (best_row, angle) = match best {
                Some((k, a)) => (Some(k), a),
                None => (None, 180.0),
            };
            FacetMatch {
                best_row,
                angle_deg: angle,
                matched: angle <= threshold_deg,
            }
        })
        .collect();
    let n = facets.len().max(1) as f64;
    let error = facets.iter().filter(|f| !f.matched).count() as f64 / n;
    MatchReport { error, facets }
}

/// `Vol(P ∩ Q) / (Vol(P) + Vol(Q) − Vol(P ∩ Q))`.
pub fn iou(p: &HPolytope, q: &HPolytope) -> Result<f64, GeometryError> {
    let vp = geometry::polytope_volume(p)?;
    let vq = geometry::polytope_volume(q)?;
    let vi = match geometry::intersect(p, q) {
        Ok(i) => geometry::polytope_volume(&i)?,
        Err(GeometryError::EmptyPolytope) => 0.0,
        Err(e) => return Err(e),
    };
    let union = vp + vq - vi;
    if union <= 0.0 {
        return Err(GeometryError::DegenerateInput("zero-volume union".into()));
    }
    Ok((vi / union).clamp(0.0, 1.0))
}

/// A true facet's (d−1)-measure and whether it was matched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FacetRecord {
    pub measure: f64,
    pub matched: bool,
}

/// Joins facet measures with the match flags of [`matching_error`]; `truth`
/// must be irredundant so that rows and facets correspond.
pub fn facet_records(truth: &HPolytope, report: &MatchReport) -> Result<Vec<FacetRecord>, GeometryError> {
    let facets = geometry::facets(truth)?;
    let mut measures = vec![0.0; truth.len()];
    for f in facets {
        measures[f.halfspace_index] = f.measure;
    }
    Ok(measures
        .into_iter()
        .zip(&report.facets)
        .map(|(measure, m)| FacetRecord {
            measure,
            matched: m.matched,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub errors: usize,
}

impl HistogramBin {
    pub fn error_rate(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.errors as f64 / self.count as f64
        }
    }
}

/// `n + 1` logarithmically spaced edges from `lo` to `hi`.
pub fn log_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n > 0);
    (0..=n)
        .map(|i| lo * (hi / lo).powf(i as f64 / n as f64))
        .collect()
}

/// Bins facets by measure. Values below the first edge fall in the first
/// bin and values above the last edge in the last, so totals are preserved.
pub fn facet_error_histogram(records: &[FacetRecord], edges: &[f64]) -> Vec<HistogramBin> {
    assert!(edges.len() >= 2, "need at least one bin");
    let mut bins: Vec<HistogramBin> = edges
        .windows(2)
        .map(|w| HistogramBin {
            lower: w[0],
            upper: w[1],
            count: 0,
            errors: 0,
        })
        .collect();
    let last = bins.len() - 1;
    for r in records {
        let k = edges[1..]
            .iter()
            .position(|&e| r.measure < e)
            .unwrap_or(last);
        bins[k].count += 1;
        if !r.matched {
            bins[k].errors += 1;
        }
    }
    bins
}

/// Log-spaced histogram over the range of the records themselves.
pub fn facet_error_histogram_auto(records: &[FacetRecord], n_bins: usize) -> Vec<HistogramBin> {
    let positive: Vec<f64> = records.iter().map(|r| r.measure).filter(|&m| m > 0.0).collect();
    let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = positive.iter().copied().fold(0.0, f64::max);
    let edges = if positive.is_empty() {
        vec![0.0, 1.0]
    } else if hi <= lo {
        vec![lo * 0.5, lo * 2.0]
    } else {
        log_edges(lo, hi * (1.0 + 1e-12), n_bins)
    };
    facet_error_histogram(records, &edges)
}

pub fn write_histogram_csv<W: Write>(bins: &[HistogramBin], mut w: W) -> std::io::Result<()> {
    writeln!(w, "bin_lower,bin_upper,count,error_count")?;
    for b in bins {
        writeln!(w, "{},{},{},{}", b.lower, b.upper, b.count, b.errors)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Hyperplane;

    fn cube() -> HPolytope {
        HPolytope::bounding_box(&[0.0; 3], &[1.0; 3])
    }

    #[test]
    fn rescaled_rows_match_exactly() {
        let truth = cube();
        let mut est = MarginModel::from_polytope(&truth);
        for (k, row) in est.a.iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v *= 1.0 + k as f64;
            }
        }
        est.a.reverse();
        assert_eq!(matching_error(&truth, &est).error, 0.0);
    }

    #[test]
    fn rotated_facet_is_unmatched() {
        let truth = cube();
        let mut est = MarginModel::from_polytope(&truth);
        let k = est.a.iter().position(|r| r == &vec![1.0, 0.0, 0.0]).unwrap();
        let t = 15f64.to_radians();
        est.a[k] = vec![t.cos(), t.sin(), 0.0];
        let r = matching_error(&truth, &est);
        assert!((r.error - 1.0 / 6.0).abs() < 1e-15);
        assert!((r.facets[k].angle_deg - 15.0).abs() < 1e-9);
    }

    #[test]
    fn iou_of_shifted_cube() {
        let a = cube();
        let b = a.translated(&[0.5, 0.0, 0.0]);
        assert!((iou(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let far = a.translated(&[3.0, 0.0, 0.0]);
        assert_eq!(iou(&a, &far).unwrap(), 0.0);
    }

    #[test]
    fn histogram_puts_smallest_facet_first() {
        // Cube cut by a small corner facet.
        let mut hs = cube().halfspaces().to_vec();
        hs.push(Hyperplane::new(vec![1.0, 1.0, 1.0], -2.9));
        let truth = HPolytope::new(3, hs).unwrap();
        let mut est = MarginModel::from_polytope(&truth);
        est.a.pop();
        est.b.pop();
        let report = matching_error(&truth, &est);
        assert_eq!(report.unmatched(), 1);
        let records = facet_records(&truth, &report).unwrap();
        let bins = facet_error_histogram_auto(&records, 4);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 7);
        assert_eq!(bins[0].errors, 1);
        assert!(bins[1..].iter().all(|b| b.errors == 0));
    }
}

//! Membership queries and the bracketing line search that turns them into
//! training pairs.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::HPolytope;
use crate::linalg::{dist, norm, sub};
use crate::models::{DeviceProblem, Problem, VoronoiProblem};

/// Outcome of one membership query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Membership {
    pub inside: bool,
    /// Identifier of the region the point fell into, when the oracle knows it.
    pub state: Option<u64>,
}

pub trait MembershipOracle: Sync {
    fn dim(&self) -> usize;
    fn membership(&self, x: &[f64]) -> Membership;
}

impl MembershipOracle for VoronoiProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn membership(&self, x: &[f64]) -> Membership {
        let site = self.nearest_site(x);
        Membership {
            inside: site == self.home_index,
            state: Some(site as u64),
        }
    }
}

impl MembershipOracle for DeviceProblem {
    fn dim(&self) -> usize {
        DeviceProblem::dim(self)
    }

    fn membership(&self, x: &[f64]) -> Membership {
        let s = self.state_at(x);
        Membership {
            inside: s == self.target,
            state: Some(s.id(self.s_max)),
        }
    }
}

impl MembershipOracle for Problem {
    fn dim(&self) -> usize {
        Problem::dim(self)
    }

    fn membership(&self, x: &[f64]) -> Membership {
        match self {
            Problem::Voronoi(v) => v.membership(x),
            Problem::Device(d) => d.membership(x),
        }
    }
}

/// A known polytope as oracle. Outside points are labelled by the most
/// violated (unit-normalised) halfspace.
impl MembershipOracle for HPolytope {
    fn dim(&self) -> usize {
        HPolytope::dim(self)
    }

    fn membership(&self, x: &[f64]) -> Membership {
        let mut worst = (0usize, f64::NEG_INFINITY);
        for (k, h) in self.halfspaces().iter().enumerate() {
            let v = h.signed_distance(x);
            if v > worst.1 {
                worst = (k, v);
            }
        }
        let inside = worst.1 <= 0.0;
        Membership {
            inside,
            state: if inside { None } else { Some(worst.0 as u64) },
        }
    }
}

/// Wraps an oracle and counts queries.
pub struct CountingOracle<'a, O: ?Sized> {
    inner: &'a O,
    calls: AtomicUsize,
}

impl<'a, O: MembershipOracle + ?Sized> CountingOracle<'a, O> {
    pub fn new(inner: &'a O) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<O: MembershipOracle + ?Sized> MembershipOracle for CountingOracle<'_, O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn membership(&self, x: &[f64]) -> Membership {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.membership(x)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("ray stayed inside up to r_max = {r_max}")]
    NoExit { r_max: f64 },
    #[error("invalid line search: {0}")]
    InvalidInput(String),
}

/// A boundary bracket: `x_minus` inside, `x_plus` outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPair {
    #[serde(rename = "xm")]
    pub x_minus: Vec<f64>,
    #[serde(rename = "xp")]
    pub x_plus: Vec<f64>,
    pub label: Option<u64>,
}

impl PointPair {
    pub fn width(&self) -> f64 {
        dist(&self.x_minus, &self.x_plus)
    }
}

/// Default search radius in rescaled units.
pub const R_MAX: f64 = 40.0;

/// Marches from `o` along `u` with steps `δ·2^k` until a probe is outside
/// (the last probe is clamped to `r_max`), then bisects the bracket until it
/// is shorter than `δ`.
///
/// `o` must be inside; it is not queried.
pub fn line_search<O: MembershipOracle + ?Sized>(
    oracle: &O,
    o: &[f64],
    u: &[f64],
    delta: f64,
    r_max: f64,
) -> Result<PointPair, OracleError> {
    if o.len() != u.len() || o.len() != oracle.dim() {
        return Err(OracleError::InvalidInput("dimension mismatch".into()));
    }
    let len = norm(u);
    if !(len > 0.0) || !len.is_finite() {
        return Err(OracleError::InvalidInput("direction must be non-zero".into()));
    }
    if !(delta > 0.0) || !(r_max >= delta) {
        return Err(OracleError::InvalidInput(format!(
            "need 0 < delta <= r_max, got delta={delta}, r_max={r_max}"
        )));
    }
    let dir: Vec<f64> = u.iter().map(|v| v / len).collect();
    let at = |t: f64| -> Vec<f64> { o.iter().zip(&dir).map(|(a, b)| a + t * b).collect() };

    let mut t_in = 0.0;
    let mut t = delta;
    let (mut t_out, mut outside) = loop {
        let tc = t.min(r_max);
        let m = oracle.membership(&at(tc));
        if !m.inside {
            break (tc, m);
        }
        if tc >= r_max {
            return Err(OracleError::NoExit { r_max });
        }
        t_in = tc;
        t *= 2.0;
    };
    // Measured on the points so that the returned width is below `delta`.
    while norm(&sub(&at(t_out), &at(t_in))) >= delta {
        let mid = 0.5 * (t_in + t_out);
        let m = oracle.membership(&at(mid));
        if m.inside {
            t_in = mid;
        } else {
            t_out = mid;
            outside = m;
        }
    }
    Ok(PointPair {
        x_minus: at(t_in),
        x_plus: at(t_out),
        label: outside.state,
    })
}

/// Worst-case number of oracle calls of [`line_search`] given the length of
/// the bracket found by the outward march.
pub fn line_search_call_bound(delta: f64, r_max: f64, initial_bracket: f64) -> usize {
    let march = (r_max / delta).log2().ceil().max(0.0) as usize;
    let bisect = (initial_bracket / delta).log2().ceil().max(0.0) as usize;
    march + bisect + 2
}

/// Training pairs around the interior anchor `origin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub origin: Vec<f64>,
    pub pairs: Vec<PointPair>,
}

impl Dataset {
    pub fn new(origin: Vec<f64>) -> Self {
        Self {
            origin,
            pairs: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Inserts `pair` unless a stored pair has its inside point closer than
    /// `eps_close`. Returns whether it was inserted.
    pub fn insert_dedup(&mut self, pair: PointPair, eps_close: f64) -> bool {
        if self
            .pairs
            .iter()
            .any(|p| dist(&p.x_minus, &pair.x_minus) < eps_close)
        {
            return false;
        }
        self.pairs.push(pair);
        true
    }

    pub fn x_minus(&self) -> impl Iterator<Item = &[f64]> {
        self.pairs.iter().map(|p| p.x_minus.as_slice())
    }

    pub fn x_plus(&self) -> impl Iterator<Item = &[f64]> {
        self.pairs.iter().map(|p| p.x_plus.as_slice())
    }
}

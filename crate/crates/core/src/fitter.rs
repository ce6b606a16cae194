//! Large-margin polytope estimation.
//!
//! The estimate is the sublevel set `{x : max_k Â_k·x + b̂_k ≤ 0}`. Each
//! inside point must reach margin −1 under every row and each outside point
//! margin +1 under its assigned row; the L2,1 penalty on `Â` removes
//! unnecessary rows. With the assignment fixed the problem is a second-order
//! cone program; the outer convex-concave loop re-assigns outside points to
//! their arg-max row until the assignment repeats.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::ConeProgram;
use crate::geometry::{self, GeometryError, HPolytope, Hyperplane, VertexSet};
use crate::linalg::{dot, norm};
use crate::oracle::Dataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("subproblem solver failed: {0}")]
    SolverFailure(String),
    #[error("degenerate training data: {0}")]
    DegenerateInput(String),
    #[error("empty model")]
    EmptyModel,
    #[error("pair {0} has no state label")]
    MissingLabel(usize),
    #[error("assignment index {index} out of range for {rows} rows")]
    BadAssignment { index: usize, rows: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, FitError>;

/// Rows `(Â_k, b̂_k)` of the decision function `f(x) = max_k Â_k·x + b̂_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginModel {
    pub dim: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "b")]
    pub b: Vec<f64>,
}

impl MarginModel {
    pub fn new(dim: usize, a: Vec<Vec<f64>>, b: Vec<f64>) -> Self {
        assert_eq!(a.len(), b.len(), "row count mismatch");
        assert!(a.iter().all(|r| r.len() == dim), "row dimension mismatch");
        Self { dim, a, b }
    }

    pub fn from_polytope(p: &HPolytope) -> Self {
        let (a, b) = p
            .halfspaces()
            .iter()
            .map(|h| (h.normal.clone(), h.offset))
            .unzip();
        Self { dim: p.dim(), a, b }
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn row_value(&self, k: usize, x: &[f64]) -> f64 {
        dot(&self.a[k], x) + self.b[k]
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (0..self.len())
            .map(|k| self.row_value(k, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn row_norms(&self) -> Vec<f64> {
        self.a.iter().map(|r| norm(r)).collect()
    }

    pub fn regularizer(&self) -> f64 {
        self.row_norms().iter().sum()
    }

    pub fn to_polytope(&self) -> Result<HPolytope> {
        Ok(HPolytope::new(
            self.dim,
            self.a
                .iter()
                .zip(&self.b)
                .map(|(a, &b)| Hyperplane::new(a.clone(), b))
                .collect(),
        )?)
    }

    /// Indices of rows with `‖Â_k‖ > tau_rel · max_j ‖Â_j‖` and above
    /// [`NORM_FLOOR`].
    fn surviving_rows(&self, tau_rel: f64) -> Vec<usize> {
        let norms = self.row_norms();
        let max = norms.iter().copied().fold(0.0, f64::max);
        let tau = (tau_rel * max).max(NORM_FLOOR);
        (0..self.len()).filter(|&k| norms[k] > tau).collect()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            dim: self.dim,
            a: rows.iter().map(|&k| self.a[k].clone()).collect(),
            b: rows.iter().map(|&k| self.b[k]).collect(),
        }
    }

    pub fn pruned(&self, tau_rel: f64) -> Self {
        self.select(&self.surviving_rows(tau_rel))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Weight of the squared slacks.
    pub c: f64,
    /// Standard deviation of the restart perturbation.
    pub sigma: f64,
    pub n_repeat: usize,
    /// Rows shorter than `tau_prune · max_k ‖Â_k‖` are removed.
    pub tau_prune: f64,
    pub solver_tol: f64,
    pub max_ccp_iters: usize,
    pub seed: u64,
    /// Perturb the best result so far instead of the first solution.
    pub anneal_incumbent: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            c: 7500.0,
            sigma: 0.1,
            n_repeat: 10,
            tau_prune: 1e-6,
            solver_tol: 1e-8,
            max_ccp_iters: 50,
            seed: 0,
            anneal_incumbent: false,
        }
    }
}

impl FitConfig {
    /// `C = 75/δ`, `σ = 0.001/δ`, ten restarts.
    pub fn main(delta: f64) -> Self {
        Self {
            c: 75.0 / delta,
            sigma: 0.001 / delta,
            ..Self::default()
        }
    }

    /// `C = 750/δ`; the baseline does not restart.
    pub fn baseline(delta: f64) -> Self {
        Self {
            c: 750.0 / delta,
            sigma: 0.001 / delta,
            n_repeat: 0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: MarginModel,
    pub objective: f64,
    pub xi_plus: Vec<f64>,
    pub xi_minus: Vec<f64>,
    pub assignment: Vec<usize>,
    /// Index of the selected run; 0 is the hull-initialised one.
    pub selected_restart: usize,
    pub restarts_used: usize,
    pub ccp_iterations: usize,
    pub converged: bool,
    /// Final objective of each run, `None` where the run failed.
    pub restart_objectives: Vec<Option<f64>>,
    /// Subproblem objective after every outer iteration, per run.
    pub ccp_objectives: Vec<Vec<f64>>,
    /// Whether run 0 started from a previous estimate instead of the hull.
    #[serde(default)]
    pub warm_started: bool,
}

/// `s_i = argmax_k Â_k·x_i + b̂_k`, ties to the lowest row.
pub fn assign<'a>(model: &MarginModel, x_plus: impl IntoIterator<Item = &'a [f64]>) -> Vec<usize> {
    assert!(!model.is_empty(), "assignment needs a non-empty model");
    x_plus
        .into_iter()
        .map(|x| {
            let mut best = 0;
            let mut best_v = model.row_value(0, x);
            for k in 1..model.len() {
                let v = model.row_value(k, x);
                if v > best_v {
                    best = k;
                    best_v = v;
                }
            }
            best
        })
        .collect()
}

/// Optimal slacks and objective of a fixed model and assignment.
fn evaluate(model: &MarginModel, data: &Dataset, assignment: &[usize], c: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let l = data.len().max(1) as f64;
    let xi_minus: Vec<f64> = data
        .x_minus()
        .map(|x| (model.eval(x) + 1.0).max(0.0))
        .collect();
    let xi_plus: Vec<f64> = data
        .x_plus()
        .zip(assignment)
        .map(|(x, &s)| (1.0 - model.row_value(s, x)).max(0.0))
        .collect();
    let sq: f64 = xi_minus.iter().chain(&xi_plus).map(|v| v * v).sum();
    let objective = model.regularizer() + c / l * sq;
    (xi_plus, xi_minus, objective)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub model: MarginModel,
    pub xi_plus: Vec<f64>,
    pub xi_minus: Vec<f64>,
    pub objective: f64,
}

/// Absolute margin violation above which a dropped inside constraint is
/// added back to the working set.
const WORKING_SET_TOL: f64 = 1e-7;
const WORKING_SET_ROUNDS: usize = 100;
/// Inside constraints with a margin value above this under the current
/// model seed the working set.
const NEAR_ACTIVE: f64 = -2.0;
/// Rows shorter than this change no margin by more than ~1% inside the
/// sampling box; a solution made only of such rows has collapsed.
pub const NORM_FLOOR: f64 = 1e-3;
const SOLVER_MAX_ITER: u32 = 300;

/// Solves the convex subproblem for a fixed assignment.
///
/// Rows without assigned outside points only enter through the inside
/// constraints, which `Â_k = 0, b̂_k = −1` satisfies at zero cost, so they are
/// fixed there. The inside constraints of the remaining rows are handled by
/// constraint generation: a relaxed program is solved and violated
/// constraints are added until none remain.
pub fn solve_subproblem(
    data: &Dataset,
    assignment: &[usize],
    n_rows: usize,
    c: f64,
    solver_tol: f64,
) -> Result<SubproblemSolution> {
    solve_with_hint(data, assignment, n_rows, c, solver_tol, &[])
}

fn solve_with_hint(
    data: &Dataset,
    assignment: &[usize],
    n_rows: usize,
    c: f64,
    solver_tol: f64,
    hint: &[(usize, usize)],
) -> Result<SubproblemSolution> {
    let l = data.len();
    let d = data.dim();
    if l == 0 {
        return Err(FitError::DegenerateInput("empty dataset".into()));
    }
    if assignment.len() != l {
        return Err(FitError::DegenerateInput(format!(
            "assignment has {} entries for {l} pairs",
            assignment.len()
        )));
    }
    if let Some(&s) = assignment.iter().find(|&&s| s >= n_rows) {
        return Err(FitError::BadAssignment {
            index: s,
            rows: n_rows,
        });
    }
    let active: Vec<usize> = assignment
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let slot: BTreeMap<usize, usize> = active.iter().enumerate().map(|(p, &k)| (k, p)).collect();

    let mut working: BTreeSet<(usize, usize)> = (0..l).map(|i| (i, assignment[i])).collect();
    working.extend(hint.iter().filter(|(i, k)| *i < l && slot.contains_key(k)));

    let xm: Vec<&[f64]> = data.x_minus().collect();
    let xp: Vec<&[f64]> = data.x_plus().collect();

    for round in 0..WORKING_SET_ROUNDS {
        let started = std::time::Instant::now();
        let x = solve_relaxed(&xm, &xp, assignment, &active, &slot, d, c, solver_tol, &working)?;
        log::debug!(
            "subproblem: l={l} rows={} working={} round={round} took {:.3}s",
            active.len(),
            working.len(),
            started.elapsed().as_secs_f64()
        );
        let model = expand(&x, &active, n_rows, d);
        let xi_minus_var = &x[active.len() * (d + 2) + l..];
        let mut added = false;
        for i in 0..l {
            let viol: Vec<(f64, usize)> = active
                .iter()
                .filter(|&&k| !working.contains(&(i, k)))
                .map(|&k| (model.row_value(k, xm[i]) + 1.0 - xi_minus_var[i], k))
                .filter(|(v, _)| *v > WORKING_SET_TOL)
                .collect();
            for &(_, k) in &viol {
                working.insert((i, k));
                added = true;
            }
        }
        if !added {
            let (xi_plus, xi_minus, objective) = evaluate(&model, data, assignment, c);
            return Ok(SubproblemSolution {
                model,
                xi_plus,
                xi_minus,
                objective,
            });
        }
    }
    Err(FitError::SolverFailure(format!(
        "working set did not stabilise after {WORKING_SET_ROUNDS} rounds"
    )))
}

/// Variable layout: per active row `[Â (d), b̂, t]`, then `ξ⁺ (ℓ)`, `ξ⁻ (ℓ)`.
#[allow(clippy::too_many_arguments)]
fn solve_relaxed(
    xm: &[&[f64]],
    xp: &[&[f64]],
    assignment: &[usize],
    active: &[usize],
    slot: &BTreeMap<usize, usize>,
    d: usize,
    c: f64,
    tol: f64,
    working: &BTreeSet<(usize, usize)>,
) -> Result<Vec<f64>> {
    let l = xm.len();
    let stride = d + 2;
    let off_plus = active.len() * stride;
    let off_minus = off_plus + l;
    let mut prog = ConeProgram::new(off_minus + l);
    let w = 2.0 * c / l as f64;
    for i in 0..l {
        prog.set_quadratic(off_plus + i, w);
        prog.set_quadratic(off_minus + i, w);
    }
    let row_terms = |p: usize, x: &[f64], sign: f64| -> Vec<(usize, f64)> {
        let base = p * stride;
        let mut r: Vec<(usize, f64)> = x.iter().enumerate().map(|(j, &v)| (base + j, sign * v)).collect();
        r.push((base + d, sign));
        r
    };
    for &(i, k) in working {
        let mut r = row_terms(slot[&k], xm[i], 1.0);
        r.push((off_minus + i, -1.0));
        prog.add_leq(r, -1.0);
    }
    for i in 0..l {
        let mut r = row_terms(slot[&assignment[i]], xp[i], -1.0);
        r.push((off_plus + i, -1.0));
        prog.add_leq(r, -1.0);
    }
    // With a positive weight a negative slack only tightens its constraint
    // and costs more, so ξ ≥ 0 holds at the optimum without being imposed.
    if c <= 0.0 {
        for v in off_plus..off_minus + l {
            prog.add_leq(vec![(v, -1.0)], 0.0);
        }
    }
    for p in 0..active.len() {
        let base = p * stride;
        prog.set_linear(base + d + 1, 1.0);
        let rest: Vec<usize> = (base..base + d).collect();
        prog.add_norm_bound(base + d + 1, &rest);
    }
    prog.solve(tol, SOLVER_MAX_ITER)
        .map(|s| s.x)
        .map_err(|e| FitError::SolverFailure(e.to_string()))
}

fn expand(x: &[f64], active: &[usize], n_rows: usize, d: usize) -> MarginModel {
    let mut a = vec![vec![0.0; d]; n_rows];
    let mut b = vec![-1.0; n_rows];
    for (p, &k) in active.iter().enumerate() {
        let base = p * (d + 2);
        a[k].copy_from_slice(&x[base..base + d]);
        b[k] = x[base + d];
    }
    MarginModel::new(d, a, b)
}

fn near_active(model: &MarginModel, data: &Dataset) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, x) in data.x_minus().enumerate() {
        for k in 0..model.len() {
            if model.row_value(k, x) >= NEAR_ACTIVE {
                out.push((i, k));
            }
        }
    }
    out
}

/// Result of one convex-concave run.
#[derive(Debug, Clone)]
struct CcpRun {
    result: FitResult,
}

fn finish(model: MarginModel, data: &Dataset, c: f64) -> (Vec<usize>, Vec<f64>, Vec<f64>, f64) {
    let assignment = assign(&model, data.x_plus());
    let (xi_plus, xi_minus, objective) = evaluate(&model, data, &assignment, c);
    (assignment, xi_plus, xi_minus, objective)
}

/// Alternates arg-max assignment and subproblem solves until the assignment
/// repeats, pruning rows after every solve.
pub fn ccp_fit(data: &Dataset, init: &MarginModel, cfg: &FitConfig) -> Result<FitResult> {
    ccp_run(data, init, cfg).map(|r| r.result)
}

fn ccp_run(data: &Dataset, init: &MarginModel, cfg: &FitConfig) -> Result<CcpRun> {
    if init.is_empty() {
        return Err(FitError::EmptyModel);
    }
    let mut model = init.clone();
    let mut ids: Vec<usize> = (0..init.len()).collect();
    let mut prev: Option<Vec<usize>> = None;
    let mut objectives = Vec::new();
    let mut best: Option<(f64, MarginModel)> = None;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_ccp_iters {
        let local = assign(&model, data.x_plus());
        let stable: Vec<usize> = local.iter().map(|&k| ids[k]).collect();
        if prev.as_ref() == Some(&stable) {
            converged = true;
            break;
        }
        let hint = near_active(&model, data);
        let sol = solve_with_hint(data, &local, model.len(), cfg.c, cfg.solver_tol, &hint)?;
        iterations += 1;
        objectives.push(sol.objective);
        let keep = sol.model.surviving_rows(cfg.tau_prune);
        log::debug!(
            "ccp iteration {iterations}: rows {} -> {}, objective {:.4}, max norm {:.3}",
            model.len(),
            keep.len(),
            sol.objective,
            sol.model.row_norms().iter().copied().fold(0.0, f64::max)
        );
        if keep.is_empty() {
            // Everything collapsed to zero; nothing left to assign.
            model = sol.model;
            best = Some((sol.objective, model.clone()));
            converged = true;
            break;
        }
        model = sol.model.select(&keep);
        ids = keep.iter().map(|&k| ids[k]).collect();
        prev = Some(stable);
        if best.as_ref().map_or(true, |(o, _)| sol.objective < *o) {
            best = Some((sol.objective, model.clone()));
        }
    }
    let final_model = if converged {
        model
    } else {
        log::warn!(
            "convex-concave loop hit {} iterations without a repeated assignment",
            cfg.max_ccp_iters
        );
        best.map(|(_, m)| m).unwrap_or(model)
    };
    let (assignment, xi_plus, xi_minus, objective) = finish(final_model.clone(), data, cfg.c);
    Ok(CcpRun {
        result: FitResult {
            model: final_model,
            objective,
            xi_plus,
            xi_minus,
            assignment,
            selected_restart: 0,
            restarts_used: 0,
            ccp_iterations: iterations,
            converged,
            restart_objectives: vec![Some(objective)],
            ccp_objectives: vec![objectives],
            warm_started: false,
        },
    })
}

/// Hull of the inside points with every offset lowered by one, so that all
/// inside points reach margin −1.
pub fn hull_init(data: &Dataset) -> Result<MarginModel> {
    let points: Vec<Vec<f64>> = data.x_minus().map(|x| x.to_vec()).collect();
    let v = VertexSet::new(data.dim(), points)?;
    let hull = geometry::convex_hull(&v).map_err(|e| match e {
        GeometryError::DegenerateInput(m) => FitError::DegenerateInput(m),
        other => other.into(),
    })?;
    let mut model = MarginModel::from_polytope(&hull);
    for b in &mut model.b {
        *b -= 1.0;
    }
    Ok(model)
}

/// `prev` followed by the hull rows rescaled to its median row norm, so that
/// hull rows can win the assignment of points `prev` explains badly. Pruning
/// lets CCP drop rows but never add them; this is where new ones come from.
fn with_hull_rows(prev: &MarginModel, hull: &MarginModel) -> MarginModel {
    let mut norms = prev.row_norms();
    norms.sort_by(f64::total_cmp);
    let s = norms[norms.len() / 2];
    let mut m = prev.clone();
    for (a, &b) in hull.a.iter().zip(&hull.b) {
        m.a.push(a.iter().map(|v| v * s).collect());
        // Keeps the margin −1 on the hull facet.
        m.b.push(s * (b + 1.0) - 1.0);
    }
    m
}

fn perturb(model: &MarginModel, sigma: f64, rng: &mut ChaCha8Rng) -> MarginModel {
    if sigma <= 0.0 {
        return model.clone();
    }
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    let mut m = model.clone();
    for (row, b) in m.a.iter_mut().zip(m.b.iter_mut()) {
        for v in row.iter_mut() {
            *v += n.sample(rng);
        }
        *b += n.sample(rng);
    }
    m
}

/// Hull initialisation, one convex-concave run, then `n_repeat` runs from
/// noisy copies of the first solution; the lowest objective wins (ties to
/// the earlier run).
pub fn fit_polytope(data: &Dataset, cfg: &FitConfig) -> Result<FitResult> {
    fit_polytope_from(data, cfg, None)
}

/// Like [`fit_polytope`], but `previous` (typically the last estimate of an
/// active-learning run) is tried as a second starting point; the first
/// solution is whichever of the two local optima has the lower objective.
pub fn fit_polytope_from(data: &Dataset, cfg: &FitConfig, previous: Option<&MarginModel>) -> Result<FitResult> {
    let init = hull_init(data)?;
    let mut first = ccp_run(data, &init, cfg)?.result;
    if let Some(prev) = previous.filter(|p| p.dim == data.dim() && !p.is_empty()) {
        for start in [prev.clone(), with_hull_rows(prev, &init)] {
            match ccp_run(data, &start, cfg) {
                Ok(run) if run.result.objective < first.objective => {
                    log::debug!(
                        "start with {} rows beats {:.4}: {:.4}",
                        start.len(),
                        first.objective,
                        run.result.objective
                    );
                    first = run.result;
                    first.warm_started = true;
                }
                Ok(_) => {}
                Err(e) => log::warn!("start from previous estimate failed: {e}"),
            }
        }
    }
    let base = first.model.clone();
    let mut restart_objectives = vec![Some(first.objective)];
    let mut ccp_objectives = first.ccp_objectives.clone();
    let mut best = first;
    let mut best_index = 0;
    let mut used = 0;
    for i in 1..=cfg.n_repeat {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        let source = if cfg.anneal_incumbent { &best.model } else { &base };
        let start = perturb(source, cfg.sigma, &mut rng);
        match ccp_run(data, &start, cfg) {
            Ok(run) => {
                used += 1;
                let r = run.result;
                restart_objectives.push(Some(r.objective));
                ccp_objectives.extend(r.ccp_objectives.iter().cloned());
                if r.objective < best.objective {
                    best = r;
                    best_index = i;
                }
            }
            Err(e) => {
                log::warn!("restart {i} failed: {e}");
                restart_objectives.push(None);
                ccp_objectives.push(Vec::new());
            }
        }
    }
    best.selected_restart = best_index;
    best.restarts_used = used;
    best.restart_objectives = restart_objectives;
    best.ccp_objectives = ccp_objectives;
    Ok(best)
}

/// The label-informed fit: outside points are assigned to one row per
/// observed state and a single subproblem is solved.
pub fn baseline_fit(data: &Dataset, cfg: &FitConfig) -> Result<FitResult> {
    let mut labels = Vec::with_capacity(data.len());
    for (i, p) in data.pairs.iter().enumerate() {
        labels.push(p.label.ok_or(FitError::MissingLabel(i))?);
    }
    let index: BTreeMap<u64, usize> = labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(n, lab)| (lab, n))
        .collect();
    let assignment: Vec<usize> = labels.iter().map(|l| index[l]).collect();
    let sol = solve_subproblem(data, &assignment, index.len(), cfg.c, cfg.solver_tol)?;
    let model = sol.model.pruned(cfg.tau_prune);
    if model.is_empty() {
        return Err(FitError::EmptyModel);
    }
    // The fit keeps the label assignment; rows only disappear when pruned.
    let (assignment, xi_plus, xi_minus, objective) = if model.len() == index.len() {
        (assignment, sol.xi_plus, sol.xi_minus, sol.objective)
    } else {
        finish(model.clone(), data, cfg.c)
    };
    Ok(FitResult {
        model,
        objective,
        xi_plus,
        xi_minus,
        assignment,
        selected_restart: 0,
        restarts_used: 0,
        ccp_iterations: 1,
        converged: true,
        restart_objectives: vec![Some(objective)],
        ccp_objectives: vec![vec![sol.objective]],
        warm_started: false,
    })
}

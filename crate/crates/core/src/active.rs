//! The active learning loop: fit, probe the estimate's facets and vertices
//! with line searches, and stop once every new measurement lies on the
//! estimated boundary.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitter::{self, FitConfig, FitError, FitResult, MarginModel};
use crate::geometry::{self, DistanceEvaluator, GeometryError};
use crate::linalg::{norm, sub};
use crate::oracle::{line_search, Dataset, MembershipOracle, OracleError, PointPair, R_MAX};

#[derive(Debug, Error)]
pub enum ActiveError {
    #[error("origin is not inside the target region")]
    OriginOutside,
    #[error("too few usable initial line searches ({0})")]
    TooFewPairs(usize),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

pub type Result<T> = std::result::Result<T, ActiveError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Convex-concave fit with restarts.
    Main,
    /// Single fit using the state labels of the outside points.
    Baseline,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Main => "main",
            Algorithm::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveConfig {
    pub delta: f64,
    pub eps_end: f64,
    pub eps_close: f64,
    pub n_init: usize,
    pub max_rounds: usize,
    pub r_max: f64,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub fit: FitConfig,
}

impl ActiveConfig {
    /// Settings used in all experiments: `ε_end = 1.5δ`, `ε_close = δ`,
    /// 100 initial searches, and the per-algorithm fit parameters.
    pub fn new(delta: f64, algorithm: Algorithm, seed: u64) -> Self {
        let mut fit = match algorithm {
            Algorithm::Main => FitConfig::main(delta),
            Algorithm::Baseline => FitConfig::baseline(delta),
        };
        fit.seed = seed;
        Self {
            delta,
            eps_end: 1.5 * delta,
            eps_close: delta,
            n_init: 100,
            max_rounds: 50,
            r_max: R_MAX,
            algorithm,
            seed,
            fit,
        }
    }

    fn fit(&self, data: &Dataset, previous: Option<&MarginModel>) -> std::result::Result<FitResult, FitError> {
        match self.algorithm {
            Algorithm::Main => fitter::fit_polytope_from(data, &self.fit, previous),
            Algorithm::Baseline => fitter::baseline_fit(data, &self.fit),
        }
    }
}

/// One fit-and-validate round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// `|X_i|`, the number of pairs the model of this round was trained on.
    pub dataset_size: usize,
    pub model: MarginModel,
    pub objective: f64,
    pub queries: usize,
    /// Line searches run this round, including ones without an exit.
    pub new_searches: usize,
    pub no_exit: usize,
    pub inserted: usize,
    /// Boundary distances of both ends of every new bracket.
    pub new_distances: Vec<f64>,
    /// Largest boundary distance over all points after this round's
    /// measurements were added.
    pub max_distance_all: f64,
    /// Line searches so far, initial ones included.
    pub cumulative_searches: usize,
    pub terminated: bool,
    /// No new pair entered X, so the next round would refit the same data;
    /// the run stops without having terminated.
    #[serde(default)]
    pub stalled: bool,
    /// Whether random directions replaced the estimate's queries.
    pub fallback: bool,
    /// Final objective of every fit run this round, `None` where it failed.
    #[serde(default)]
    pub restart_objectives: Vec<Option<f64>>,
    #[serde(default)]
    pub selected_restart: usize,
    /// Subproblem objective per outer iteration, per fit run.
    #[serde(default)]
    pub ccp_objectives: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub initial_searches: usize,
    pub rounds: Vec<RoundRecord>,
}

impl RunTrace {
    pub fn total_searches(&self) -> usize {
        self.rounds
            .last()
            .map_or(self.initial_searches, |r| r.cumulative_searches)
    }

    pub fn terminated(&self) -> bool {
        self.rounds.last().is_some_and(|r| r.terminated)
    }

    pub fn stalled(&self) -> bool {
        self.rounds.last().is_some_and(|r| r.stalled)
    }

    /// One JSON object per line, one line per round.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.rounds {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> std::io::Result<Self> {
        let mut rounds = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            rounds.push(serde_json::from_str::<RoundRecord>(&line)?);
        }
        let initial_searches = rounds
            .first()
            .map_or(0, |r: &RoundRecord| r.cumulative_searches - r.new_searches);
        Ok(Self {
            initial_searches,
            rounds,
        })
    }
}

/// Query points on the estimate's boundary: one center per facet, then all
/// vertices.
pub fn propose_queries(model: &MarginModel) -> Result<Vec<Vec<f64>>> {
    let p = model.to_polytope()?;
    let (centers, vertices) = geometry::facet_centers(&p)?;
    Ok(centers.into_iter().chain(vertices.points).collect())
}

fn random_directions(d: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let len = norm(&v);
        if len > 1e-12 {
            out.push(v.into_iter().map(|x| x / len).collect());
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ActiveOutcome {
    pub fit: FitResult,
    pub dataset: Dataset,
    pub trace: RunTrace,
}

pub fn active_learn<O: MembershipOracle + ?Sized>(
    oracle: &O,
    origin: &[f64],
    cfg: &ActiveConfig,
) -> Result<ActiveOutcome> {
    run(oracle, origin, cfg, None)
}

/// Like [`active_learn`], but the first round validates `model` instead of
/// fitting one.
pub fn active_learn_from<O: MembershipOracle + ?Sized>(
    oracle: &O,
    origin: &[f64],
    cfg: &ActiveConfig,
    model: MarginModel,
) -> Result<ActiveOutcome> {
    run(oracle, origin, cfg, Some(model))
}

fn run<O: MembershipOracle + ?Sized>(
    oracle: &O,
    origin: &[f64],
    cfg: &ActiveConfig,
    injected: Option<MarginModel>,
) -> Result<ActiveOutcome> {
    let d = oracle.dim();
    if !oracle.membership(origin).inside {
        return Err(ActiveError::OriginOutside);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut data = Dataset::new(origin.to_vec());
    let mut searches = 0usize;

    let mut scratch = Vec::new();
    for u in random_directions(d, cfg.n_init, &mut rng) {
        searches += 1;
        probe(oracle, origin, &u, cfg, &mut data, &mut scratch);
    }
    let initial_searches = searches;
    if data.len() <= d {
        return Err(ActiveError::TooFewPairs(data.len()));
    }

    let mut trace = RunTrace {
        initial_searches,
        rounds: Vec::new(),
    };
    let mut injected = injected;
    let mut last: Option<FitResult> = None;
    for round in 1..=cfg.max_rounds {
        let trained_on = data.len();
        let fit = match injected.take() {
            Some(model) => injected_fit(model, &data, &cfg.fit),
            None => cfg.fit(&data, last.as_ref().map(|f| &f.model))?,
        };
        log::debug!(
            "round {round}: restart objectives {:?}, selected {}",
            fit.restart_objectives,
            fit.selected_restart
        );
        let (queries, fallback) = match propose_queries(&fit.model) {
            Ok(q) => (q, false),
            Err(e) => {
                log::info!("round {round}: estimate unusable for queries ({e}); probing random directions");
                let q = random_directions(d, cfg.n_init, &mut rng)
                    .into_iter()
                    .map(|u| origin.iter().zip(&u).map(|(o, v)| o + v).collect())
                    .collect();
                (q, true)
            }
        };
        let before = searches;
        let mut fresh = Vec::new();
        let mut no_exit = 0;
        for r in &queries {
            let u = sub(r, origin);
            if norm(&u) <= 1e-12 {
                continue;
            }
            searches += 1;
            if !probe(oracle, origin, &u, cfg, &mut data, &mut fresh) {
                no_exit += 1;
            }
        }
        let inserted = data.len() - trained_on;
        let evaluator = fit
            .model
            .to_polytope()
            .ok()
            .filter(|_| !fallback)
            .map(|p| DistanceEvaluator::new(&p));
        let (new_distances, max_distance_all) = match &evaluator {
            Some(ev) => {
                let nd: Vec<f64> = fresh
                    .iter()
                    .flat_map(|p| [ev.distance(&p.x_minus), ev.distance(&p.x_plus)])
                    .collect();
                let all = data
                    .pairs
                    .iter()
                    .flat_map(|p| [ev.distance(&p.x_minus), ev.distance(&p.x_plus)])
                    .chain(nd.iter().copied())
                    .fold(0.0, f64::max);
                (nd, all)
            }
            None => (Vec::new(), f64::INFINITY),
        };
        let terminated = !fallback && !fresh.is_empty() && new_distances.iter().all(|&v| v < cfg.eps_end);
        let stalled = !terminated && !fallback && inserted == 0;
        log::info!(
            "round {round}: |X|={trained_on} rows={} queries={} inserted={inserted} max_new={:.3e}",
            fit.model.len(),
            queries.len(),
            new_distances.iter().copied().fold(0.0, f64::max)
        );
        trace.rounds.push(RoundRecord {
            round,
            dataset_size: trained_on,
            model: fit.model.clone(),
            objective: fit.objective,
            queries: queries.len(),
            new_searches: searches - before,
            no_exit,
            inserted,
            new_distances,
            max_distance_all,
            cumulative_searches: searches,
            terminated,
            stalled,
            fallback,
            restart_objectives: fit.restart_objectives.clone(),
            selected_restart: fit.selected_restart,
            ccp_objectives: fit.ccp_objectives.clone(),
        });
        last = Some(fit);
        if terminated {
            break;
        }
        if stalled {
            log::info!("round {round}: no new pairs; stopping");
            break;
        }
    }
    if !trace.terminated() && !trace.stalled() {
        log::warn!("no boundary-consistent estimate after {} rounds", cfg.max_rounds);
    }
    Ok(ActiveOutcome {
        fit: last.expect("at least one round"),
        dataset: data,
        trace,
    })
}

/// One line search; the pair is recorded in `fresh` and offered to the
/// dataset. Returns false when the ray found no exit.
fn probe<O: MembershipOracle + ?Sized>(
    oracle: &O,
    origin: &[f64],
    u: &[f64],
    cfg: &ActiveConfig,
    data: &mut Dataset,
    fresh: &mut Vec<PointPair>,
) -> bool {
    match line_search(oracle, origin, u, cfg.delta, cfg.r_max) {
        Ok(pair) => {
            fresh.push(pair.clone());
            data.insert_dedup(pair, cfg.eps_close);
            true
        }
        Err(e) => {
            log::debug!("line search skipped: {e}");
            false
        }
    }
}

fn injected_fit(model: MarginModel, data: &Dataset, cfg: &FitConfig) -> FitResult {
    let assignment = fitter::assign(&model, data.x_plus());
    let l = data.len().max(1) as f64;
    let xi_minus: Vec<f64> = data.x_minus().map(|x| (model.eval(x) + 1.0).max(0.0)).collect();
    let xi_plus: Vec<f64> = data
        .x_plus()
        .zip(&assignment)
        .map(|(x, &s)| (1.0 - model.row_value(s, x)).max(0.0))
        .collect();
    let sq: f64 = xi_minus.iter().chain(&xi_plus).map(|v| v * v).sum();
    let objective = model.regularizer() + cfg.c / l * sq;
    FitResult {
        model,
        objective,
        xi_plus,
        xi_minus,
        assignment,
        selected_restart: 0,
        restarts_used: 0,
        ccp_iterations: 0,
        converged: true,
        restart_objectives: vec![Some(objective)],
        ccp_objectives: vec![Vec::new()],
        warm_started: false,
    }
}

/// Precision targets `t_1 < … < t_20`, geometrically spaced on
/// `[1.5δ, 10]`.
pub fn ecdf_target_values(delta: f64) -> Vec<f64> {
    let lo = 1.5 * delta;
    let hi: f64 = 10.0;
    let n = 20;
    (0..n)
        .map(|j| lo * (hi / lo).powf(j as f64 / (n - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfRow {
    pub target: f64,
    pub round: Option<usize>,
    pub dataset_size: Option<usize>,
    pub line_searches: Option<usize>,
}

/// For every target, the first round whose estimate is within the target of
/// all points measured up to and including its validation.
pub fn ecdf_targets(trace: &RunTrace, delta: f64) -> Vec<EcdfRow> {
    ecdf_target_values(delta)
        .into_iter()
        .map(|t| {
            let hit = trace.rounds.iter().find(|r| r.max_distance_all < t);
            EcdfRow {
                target: t,
                round: hit.map(|r| r.round),
                dataset_size: hit.map(|r| r.dataset_size),
                line_searches: hit.map(|r| r.cumulative_searches),
            }
        })
        .collect()
}

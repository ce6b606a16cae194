//! Sweep configuration.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use polylab::active::{ActiveConfig, Algorithm};
use polylab::fitter::FitConfig;
use polylab::metrics::MATCH_ANGLE_DEG;

use crate::cell::CellSpec;
use crate::problem::Kind;
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: Kind,
    /// Dimension; the number of dots for devices.
    pub dim: usize,
}

/// Either an explicit list of instance seeds or a count `n` for `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Instances {
    Count(u64),
    List(Vec<u64>),
}

impl Instances {
    pub fn ids(&self) -> Vec<u64> {
        match self {
            Instances::Count(n) => (0..*n).collect(),
            Instances::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveOverrides {
    pub n_init: Option<usize>,
    pub max_rounds: Option<usize>,
    pub r_max: Option<f64>,
    /// `ε_end` as a multiple of δ.
    pub eps_end_factor: Option<f64>,
    /// `ε_close` as a multiple of δ.
    pub eps_close_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub master_seed: u64,
    pub problems: Vec<ProblemSpec>,
    pub instances: Instances,
    pub deltas: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    /// Field overrides applied on top of the δ-derived fit settings.
    #[serde(default)]
    pub fit: Map<String, Value>,
    #[serde(default)]
    pub active: ActiveOverrides,
    #[serde(default = "default_angle")]
    pub match_angle_deg: f64,
}

fn default_angle() -> f64 {
    MATCH_ANGLE_DEG
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.problems.is_empty() || self.deltas.is_empty() || self.algorithms.is_empty() {
            bail!("problems, deltas and algorithms must be non-empty");
        }
        if self.instances.ids().is_empty() {
            bail!("no instances");
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            bail!("invalid delta {d}");
        }
        for p in &self.problems {
            let ok = match p.kind {
                Kind::Voronoi => p.dim >= 2,
                Kind::Device => (3..=4).contains(&p.dim),
            };
            if !ok {
                bail!("unsupported dimension {} for {}", p.dim, p.kind.name());
            }
        }
        // Surface bad override keys before any cell runs.
        self.fit_config(self.deltas[0], self.algorithms[0], 0)?;
        Ok(())
    }

    /// Cells in sweep order: problem, instance, δ, algorithm.
    pub fn cells(&self) -> Vec<CellSpec> {
        let mut out = Vec::new();
        for p in &self.problems {
            for instance in self.instances.ids() {
                for &delta in &self.deltas {
                    for &algorithm in &self.algorithms {
                        out.push(CellSpec {
                            kind: p.kind,
                            dim: p.dim,
                            instance,
                            delta,
                            algorithm,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn problem_seed(&self, kind: Kind, dim: usize, instance: u64) -> u64 {
        seeds::derive(self.master_seed, &[kind.code(), dim as u64, instance])
    }

    pub fn cell_seed(&self, cell: &CellSpec) -> u64 {
        let alg = match cell.algorithm {
            Algorithm::Main => 1,
            Algorithm::Baseline => 2,
        };
        seeds::derive(
            self.master_seed,
            &[cell.kind.code(), cell.dim as u64, cell.instance, cell.delta.to_bits(), alg],
        )
    }

    pub fn fit_config(&self, delta: f64, algorithm: Algorithm, seed: u64) -> Result<FitConfig> {
        let base = match algorithm {
            Algorithm::Main => FitConfig::main(delta),
            Algorithm::Baseline => FitConfig::baseline(delta),
        };
        let mut value = serde_json::to_value(FitConfig { seed, ..base })?;
        let obj = value.as_object_mut().expect("struct serializes to an object");
        for (k, v) in &self.fit {
            if !obj.contains_key(k) {
                bail!("unknown fit override `{k}`");
            }
            obj.insert(k.clone(), v.clone());
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn active_config(&self, cell: &CellSpec) -> Result<ActiveConfig> {
        let seed = self.cell_seed(cell);
        let mut cfg = ActiveConfig::new(cell.delta, cell.algorithm, seed);
        cfg.fit = self.fit_config(cell.delta, cell.algorithm, seed)?;
        let o = &self.active;
        if let Some(v) = o.n_init {
            cfg.n_init = v;
        }
        if let Some(v) = o.max_rounds {
            cfg.max_rounds = v;
        }
        if let Some(v) = o.r_max {
            cfg.r_max = v;
        }
        if let Some(v) = o.eps_end_factor {
            cfg.eps_end = v * cell.delta;
        }
        if let Some(v) = o.eps_close_factor {
            cfg.eps_close = v * cell.delta;
        }
        Ok(cfg)
    }
}

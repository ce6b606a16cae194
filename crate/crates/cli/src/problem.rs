//! Problem instances as persisted in `problem.json`.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use polylab::models::{
    generate_device, generate_voronoi, DeviceModel, DeviceProblem, Problem, StateVector, VoronoiProblem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Voronoi,
    Device,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Voronoi => "voronoi",
            Kind::Device => "device",
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            Kind::Voronoi => 1,
            Kind::Device => 2,
        }
    }
}

/// Everything needed to rebuild a problem's oracle and ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemFile {
    Voronoi(VoronoiProblem),
    Device {
        device: DeviceModel,
        target: StateVector,
        s_max: u32,
    },
}

/// Target state of generated devices: one electron per dot.
pub fn default_target(dots: usize) -> StateVector {
    StateVector::uniform(dots, 1)
}

pub fn generate(kind: Kind, dim: usize, seed: u64) -> Result<Problem> {
    Ok(match kind {
        Kind::Voronoi => Problem::Voronoi(generate_voronoi(dim, seed)?),
        Kind::Device => {
            let dev = generate_device(dim, seed)?;
            Problem::Device(DeviceProblem::new(dev, default_target(dim), 4)?)
        }
    })
}

impl ProblemFile {
    pub fn from_problem(p: &Problem) -> Self {
        match p {
            Problem::Voronoi(v) => ProblemFile::Voronoi(v.clone()),
            Problem::Device(d) => ProblemFile::Device {
                device: d.device.clone(),
                target: d.target.clone(),
                s_max: d.s_max,
            },
        }
    }

    pub fn kind(&self) -> Kind {
        match self {
            ProblemFile::Voronoi(_) => Kind::Voronoi,
            ProblemFile::Device { .. } => Kind::Device,
        }
    }

    pub fn build(&self) -> Result<Problem> {
        Ok(match self {
            ProblemFile::Voronoi(v) => Problem::Voronoi(v.clone()),
            ProblemFile::Device { device, target, s_max } => {
                Problem::Device(DeviceProblem::new(device.clone(), target.clone(), *s_max)?)
            }
        })
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

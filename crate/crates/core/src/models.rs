//! Ground-truth problem generators.
//!
//! * The constant interaction model of a quantum-dot array: the gate-voltage
//!   region in which a charge state is the ground state is a convex polytope
//!   bounded by equal-energy planes to neighbouring states.
//! * Voronoi cells of Gaussian point clouds, a geometry-only benchmark.
//!
//! Both live in a rescaled coordinate frame in which the interior anchor is
//! the origin and the polytope roughly fills `[-10, 10]^d`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, GeometryError, HPolytope, Hyperplane};
use crate::linalg::{dist, dot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("capacitance matrix C_DD is not symmetric")]
    NotSymmetric,
    #[error("capacitance matrix C_DD is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("ground state {0:?} touches the enumeration bound; enlarge s_max")]
    BoundaryHit(Vec<u32>),
    #[error("no acceptable instance after {0} draws")]
    RetryExhausted(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Electron occupation per dot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(pub Vec<u32>);

impl StateVector {
    pub fn uniform(n: usize, value: u32) -> Self {
        Self(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn as_f64(&self) -> DVector<f64> {
        DVector::from_iterator(self.0.len(), self.0.iter().map(|&v| v as f64))
    }

    /// Mixed-radix id in base `s_max + 1`.
    pub fn id(&self, s_max: u32) -> u64 {
        let base = s_max as u64 + 1;
        self.0
            .iter()
            .rev()
            .fold(0u64, |acc, &v| acc * base + v as u64)
    }

    /// All states of `{0, …, s_max}^n` in lexicographic order.
    pub fn enumerate(n: usize, s_max: u32) -> impl Iterator<Item = StateVector> {
        let base = s_max as u64 + 1;
        let total = base.pow(n as u32);
        (0..total).map(move |mut k| {
            let mut s = vec![0u32; n];
            for slot in s.iter_mut().rev() {
                *slot = (k % base) as u32;
                k /= base;
            }
            StateVector(s)
        })
    }
}

/// Constant interaction model of an `n_dots`-dot array with `n_gates` gates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "DeviceJson", into = "DeviceJson")]
pub struct DeviceModel {
    n_dots: usize,
    n_gates: usize,
    c_dd: DMatrix<f64>,
    c_dg: DMatrix<f64>,
    e_charge: f64,
    rescale: f64,
    chol: Cholesky<f64, Dyn>,
    c_dd_inv: DMatrix<f64>,
}

impl PartialEq for DeviceModel {
    fn eq(&self, other: &Self) -> bool {
        self.c_dd == other.c_dd
            && self.c_dg == other.c_dg
            && self.e_charge.to_bits() == other.e_charge.to_bits()
            && self.rescale.to_bits() == other.rescale.to_bits()
    }
}

#[derive(Serialize, Deserialize)]
struct DeviceJson {
    n_dots: usize,
    n_gates: usize,
    #[serde(rename = "C_DD")]
    c_dd: Vec<Vec<f64>>,
    #[serde(rename = "C_Dg")]
    c_dg: Vec<Vec<f64>>,
    e: f64,
    rescale: f64,
}

impl TryFrom<DeviceJson> for DeviceModel {
    type Error = ModelError;
    fn try_from(j: DeviceJson) -> Result<Self> {
        if j.c_dd.len() != j.n_dots {
            return Err(ModelError::DimensionMismatch {
                expected: j.n_dots,
                got: j.c_dd.len(),
            });
        }
        if j.c_dg.len() != j.n_dots {
            return Err(ModelError::DimensionMismatch {
                expected: j.n_dots,
                got: j.c_dg.len(),
            });
        }
        let c_dd = rows_to_matrix(&j.c_dd, j.n_dots)?;
        let c_dg = rows_to_matrix(&j.c_dg, j.n_gates)?;
        DeviceModel::new(c_dd, c_dg, j.e, j.rescale)
    }
}

impl From<DeviceModel> for DeviceJson {
    fn from(d: DeviceModel) -> Self {
        DeviceJson {
            n_dots: d.n_dots,
            n_gates: d.n_gates,
            c_dd: matrix_to_rows(&d.c_dd),
            c_dg: matrix_to_rows(&d.c_dg),
            e: d.e_charge,
            rescale: d.rescale,
        }
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>> {
    if let Some(r) = rows.iter().find(|r| r.len() != cols) {
        return Err(ModelError::DimensionMismatch {
            expected: cols,
            got: r.len(),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl DeviceModel {
    pub fn new(c_dd: DMatrix<f64>, c_dg: DMatrix<f64>, e_charge: f64, rescale: f64) -> Result<Self> {
        let n_dots = c_dd.nrows();
        if c_dd.ncols() != n_dots {
            return Err(ModelError::DimensionMismatch {
                expected: n_dots,
                got: c_dd.ncols(),
            });
        }
        if c_dg.nrows() != n_dots {
            return Err(ModelError::DimensionMismatch {
                expected: n_dots,
                got: c_dg.nrows(),
            });
        }
        if !(e_charge > 0.0) || !(rescale > 0.0) {
            return Err(ModelError::InvalidParameter(
                "e and rescale must be positive".into(),
            ));
        }
        let scale = c_dd.amax().max(1.0);
        for i in 0..n_dots {
            for j in 0..i {
                if (c_dd[(i, j)] - c_dd[(j, i)]).abs() > 1e-12 * scale {
                    return Err(ModelError::NotSymmetric);
                }
            }
        }
        let chol = c_dd.clone().cholesky().ok_or(ModelError::NotPositiveDefinite)?;
        let c_dd_inv = chol.inverse();
        Ok(Self {
            n_dots,
            n_gates: c_dg.ncols(),
            c_dd,
            c_dg,
            e_charge,
            rescale,
            chol,
            c_dd_inv,
        })
    }

    pub fn n_dots(&self) -> usize {
        self.n_dots
    }

    pub fn n_gates(&self) -> usize {
        self.n_gates
    }

    pub fn e_charge(&self) -> f64 {
        self.e_charge
    }

    pub fn rescale(&self) -> f64 {
        self.rescale
    }

    pub fn c_dd(&self) -> &DMatrix<f64> {
        &self.c_dd
    }

    pub fn c_dg(&self) -> &DMatrix<f64> {
        &self.c_dg
    }

    fn check_state(&self, s: &StateVector) -> Result<()> {
        if s.len() != self.n_dots {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_dots,
                got: s.len(),
            });
        }
        Ok(())
    }

    fn check_gates(&self, vg: &[f64]) -> Result<()> {
        if vg.len() != self.n_gates {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_gates,
                got: vg.len(),
            });
        }
        Ok(())
    }

    /// `F(s, V_g) = ½ (|e| s + C_Dg V_g)ᵀ C_DD⁻¹ (|e| s + C_Dg V_g)`.
    pub fn free_energy(&self, s: &StateVector, vg: &[f64]) -> Result<f64> {
        self.check_state(s)?;
        self.check_gates(vg)?;
        let u = s.as_f64() * self.e_charge + &self.c_dg * DVector::from_column_slice(vg);
        let w = self.chol.solve(&u);
        Ok(0.5 * u.dot(&w))
    }

    /// The halfspace `{V_g : F(s, V_g) − F(r, V_g) ≤ 0}`, which contains the
    /// region of state `s`. The affine function is exactly the energy
    /// difference: normal `|e| C_Dgᵀ C_DD⁻¹ (s − r)`, offset
    /// `|e|²/2 (sᵀ C_DD⁻¹ s − rᵀ C_DD⁻¹ r)`.
    pub fn transition_halfspace(&self, s: &StateVector, r: &StateVector) -> Result<Hyperplane> {
        self.check_state(s)?;
        self.check_state(r)?;
        if s == r {
            return Err(ModelError::InvalidParameter(
                "transition needs two distinct states".into(),
            ));
        }
        let sv = s.as_f64();
        let rv = r.as_f64();
        let diff = &sv - &rv;
        let normal = self.c_dg.transpose() * (&self.c_dd_inv * diff) * self.e_charge;
        let quad = |v: &DVector<f64>| v.dot(&(&self.c_dd_inv * v));
        let offset = 0.5 * self.e_charge * self.e_charge * (quad(&sv) - quad(&rv));
        Ok(Hyperplane::new(normal.iter().copied().collect(), offset))
    }

    /// Lowest-energy state over `{0, …, s_max}^n_dots`; ties go to the
    /// lexicographically smallest state.
    pub fn ground_state(&self, vg: &[f64], s_max: u32) -> Result<StateVector> {
        let s = self.ground_state_unchecked(vg, s_max)?;
        if s.0.iter().any(|&v| v == s_max) {
            return Err(ModelError::BoundaryHit(s.0));
        }
        Ok(s)
    }

    /// Like [`ground_state`](Self::ground_state) but returns boundary states
    /// instead of failing.
    pub fn ground_state_unchecked(&self, vg: &[f64], s_max: u32) -> Result<StateVector> {
        self.check_gates(vg)?;
        if s_max < 1 {
            return Err(ModelError::InvalidParameter("s_max must be at least 1".into()));
        }
        let n = self.n_dots;
        let e = self.e_charge;
        // F(s) − F(0) = ½e² sᵀMs + e sᵀM w,  w = C_Dg V_g.
        let w = &self.c_dg * DVector::from_column_slice(vg);
        let mw = &self.c_dd_inv * w;
        let m = &self.c_dd_inv;
        let mut best: Option<(f64, StateVector)> = None;
        let mut s = vec![0u32; n];
        loop {
            let mut quad = 0.0;
            let mut lin = 0.0;
            for i in 0..n {
                let si = s[i] as f64;
                if si == 0.0 {
                    continue;
                }
                lin += si * mw[i];
                let mut row = 0.0;
                for j in 0..n {
                    row += m[(i, j)] * s[j] as f64;
                }
                quad += si * row;
            }
            let energy = 0.5 * e * e * quad + e * lin;
            if best.as_ref().map_or(true, |(b, _)| energy < *b) {
                best = Some((energy, StateVector(s.clone())));
            }
            // Lexicographic increment (last coordinate fastest).
            let mut i = n;
            loop {
                if i == 0 {
                    return Ok(best.expect("at least one state").1);
                }
                i -= 1;
                if s[i] < s_max {
                    s[i] += 1;
                    for slot in s.iter_mut().skip(i + 1) {
                        *slot = 0;
                    }
                    break;
                }
            }
        }
    }

    /// Gate voltages minimising `F(s, ·)`: the least-squares solution of
    /// `|e| s + C_Dg V_g = 0`.
    pub fn anchor(&self, s: &StateVector) -> Result<Vec<f64>> {
        self.check_state(s)?;
        let rhs = -(s.as_f64() * self.e_charge);
        let svd = self.c_dg.clone().svd(true, true);
        let sol = svd
            .solve(&rhs, 1e-12)
            .map_err(|e| ModelError::InvalidParameter(e.to_string()))?;
        Ok(sol.iter().copied().collect())
    }

    /// Rescaled coordinates `x = rescale · (V_g − anchor)`.
    pub fn to_rescaled(&self, vg: &[f64], anchor: &[f64]) -> Vec<f64> {
        vg.iter()
            .zip(anchor)
            .map(|(v, a)| self.rescale * (v - a))
            .collect()
    }

    pub fn from_rescaled(&self, x: &[f64], anchor: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(anchor)
            .map(|(xi, a)| a + xi / self.rescale)
            .collect()
    }

    /// Halfspace in rescaled coordinates around `anchor`.
    fn rescaled_halfspace(&self, h: &Hyperplane, anchor: &[f64]) -> Hyperplane {
        let normal: Vec<f64> = h.normal.iter().map(|v| v / self.rescale).collect();
        let offset = h.offset + dot(&h.normal, anchor);
        Hyperplane::new(normal, offset).normalized()
    }

    /// Facets of the region of `s`, each with the neighbouring state across
    /// it, in rescaled coordinates centred on [`anchor`](Self::anchor).
    pub fn ground_truth_facets(
        &self,
        s: &StateVector,
        s_max: u32,
    ) -> Result<Vec<(StateVector, Hyperplane)>> {
        self.check_state(s)?;
        let anchor = self.anchor(s)?;
        let mut states = Vec::new();
        let mut hs = Vec::new();
        for r in StateVector::enumerate(self.n_dots, s_max) {
            if &r == s {
                continue;
            }
            let h = self.transition_halfspace(s, &r)?;
            hs.push(self.rescaled_halfspace(&h, &anchor));
            states.push(r);
        }
        let candidates = HPolytope::new(self.n_gates, hs)?;
        let kept = geometry::facet_indices(&candidates)?;
        let facets: Vec<(StateVector, Hyperplane)> = kept
            .into_iter()
            .map(|k| (states[k].clone(), candidates.halfspaces()[k].clone()))
            .collect();
        if let Some((r, _)) = facets.iter().find(|(r, _)| r.0.iter().any(|&v| v == s_max)) {
            return Err(ModelError::BoundaryHit(r.0.clone()));
        }
        Ok(facets)
    }

    /// The polytope `P(s)` in rescaled coordinates.
    pub fn ground_truth_polytope(&self, s: &StateVector, s_max: u32) -> Result<HPolytope> {
        let facets = self.ground_truth_facets(s, s_max)?;
        Ok(HPolytope::new(
            self.n_gates,
            facets.into_iter().map(|(_, h)| h).collect(),
        )?)
    }
}

/// Base capacitances and noise level of the simulated devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevicePreset {
    /// Diagonal of `C_DD`.
    pub self_capacitance: f64,
    /// Nearest-neighbour dot coupling as a fraction of the diagonal.
    pub coupling_fraction: f64,
    /// Diagonal of `C_Dg`.
    pub gate_capacitance: f64,
    /// Coupling of each dot to adjacent gates, as a fraction of the diagonal.
    pub cross_fraction: f64,
    /// Standard deviation of the entrywise log-normal noise.
    pub sigma_ln: f64,
    pub e_charge: f64,
    pub rescale: f64,
    /// Generated polytopes must fit inside `[-box, box]^d`.
    pub box_half_width: f64,
    pub s_max: u32,
}

impl Default for DevicePreset {
    fn default() -> Self {
        Self {
            self_capacitance: 50.0,
            coupling_fraction: 0.25,
            gate_capacitance: 20.0,
            cross_fraction: 0.3,
            sigma_ln: 0.05,
            e_charge: 1.0,
            rescale: 100.0,
            box_half_width: 10.0,
            s_max: 4,
        }
    }
}

const DEVICE_ATTEMPTS: usize = 100;

/// A simulated device with the canonical chain-coupled capacitances.
pub fn generate_device(n_dots: usize, seed: u64) -> Result<DeviceModel> {
    generate_device_with(n_dots, seed, &DevicePreset::default())
}

pub fn generate_device_with(n_dots: usize, seed: u64, preset: &DevicePreset) -> Result<DeviceModel> {
    if !(3..=4).contains(&n_dots) {
        return Err(ModelError::InvalidParameter(format!(
            "simulated devices have 3 or 4 dots, got {n_dots}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = LogNormal::new(0.0, preset.sigma_ln)
        .map_err(|e| ModelError::InvalidParameter(e.to_string()))?;
    let n = n_dots;
    let target = StateVector::uniform(n, 1);
    for _ in 0..DEVICE_ATTEMPTS {
        let mut c_dd = DMatrix::<f64>::zeros(n, n);
        let mut c_dg = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            c_dd[(i, i)] = preset.self_capacitance;
            c_dg[(i, i)] = preset.gate_capacitance;
            if i + 1 < n {
                let k = -preset.coupling_fraction * preset.self_capacitance;
                c_dd[(i, i + 1)] = k;
                c_dd[(i + 1, i)] = k;
                let g = preset.cross_fraction * preset.gate_capacitance;
                c_dg[(i, i + 1)] = g;
                c_dg[(i + 1, i)] = g;
            }
        }
        for v in c_dd.iter_mut() {
            *v *= noise.sample(&mut rng);
        }
        for v in c_dg.iter_mut() {
            *v *= noise.sample(&mut rng);
        }
        let sym = (&c_dd + c_dd.transpose()) * 0.5;
        let Ok(dev) = DeviceModel::new(sym, c_dg, preset.e_charge, preset.rescale) else {
            continue;
        };
        let Ok(truth) = dev.ground_truth_polytope(&target, preset.s_max) else {
            continue;
        };
        if fits_in_box(&truth, preset.box_half_width) {
            return Ok(dev);
        }
    }
    Err(ModelError::RetryExhausted(DEVICE_ATTEMPTS))
}

fn fits_in_box(p: &HPolytope, half_width: f64) -> bool {
    match geometry::enumerate_vertices(p) {
        Ok(v) => v
            .points
            .iter()
            .all(|x| x.iter().all(|c| c.abs() <= half_width)),
        Err(_) => false,
    }
}

/// A device together with the charge state whose region is being learned.
#[derive(Debug, Clone)]
pub struct DeviceProblem {
    pub device: DeviceModel,
    pub target: StateVector,
    pub s_max: u32,
    pub anchor: Vec<f64>,
    pub truth: HPolytope,
    pub truth_states: Vec<StateVector>,
}

impl DeviceProblem {
    /// Builds the ground truth, enlarging the state box while facets reach
    /// its boundary.
    pub fn new(device: DeviceModel, target: StateVector, s_max: u32) -> Result<Self> {
        let mut s_max = s_max.max(target.0.iter().copied().max().unwrap_or(0) + 2);
        loop {
            match device.ground_truth_facets(&target, s_max) {
                Ok(facets) => {
                    let anchor = device.anchor(&target)?;
                    let (truth_states, hs): (Vec<_>, Vec<_>) = facets.into_iter().unzip();
                    let truth = HPolytope::new(device.n_gates(), hs)?;
                    return Ok(Self {
                        device,
                        target,
                        s_max,
                        anchor,
                        truth,
                        truth_states,
                    });
                }
                Err(ModelError::BoundaryHit(_)) if s_max < 12 => s_max += 1,
                Err(e) => return Err(e),
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.device.n_gates()
    }

    /// Ground state at rescaled coordinates `x`.
    pub fn state_at(&self, x: &[f64]) -> StateVector {
        let vg = self.device.from_rescaled(x, &self.anchor);
        self.device
            .ground_state_unchecked(&vg, self.s_max)
            .expect("dimensions validated at construction")
    }
}

/// The Voronoi cell of the site nearest to the origin.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "VoronoiJson", into = "VoronoiJson")]
pub struct VoronoiProblem {
    pub dim: usize,
    pub sites: Vec<Vec<f64>>,
    pub home_index: usize,
    pub truth: HPolytope,
}

#[derive(Serialize, Deserialize)]
struct VoronoiJson {
    dim: usize,
    sites: Vec<Vec<f64>>,
    home_index: usize,
}

impl TryFrom<VoronoiJson> for VoronoiProblem {
    type Error = ModelError;
    fn try_from(j: VoronoiJson) -> Result<Self> {
        VoronoiProblem::from_sites(j.dim, j.sites, j.home_index)
    }
}

impl From<VoronoiProblem> for VoronoiJson {
    fn from(v: VoronoiProblem) -> Self {
        VoronoiJson {
            dim: v.dim,
            sites: v.sites,
            home_index: v.home_index,
        }
    }
}

impl PartialEq for VoronoiProblem {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.sites == other.sites && self.home_index == other.home_index
    }
}

/// Bisector halfspace `{x : ‖x − home‖ ≤ ‖x − other‖}`.
pub fn bisector(home: &[f64], other: &[f64]) -> Hyperplane {
    let normal: Vec<f64> = other.iter().zip(home).map(|(o, h)| 2.0 * (o - h)).collect();
    let offset = dot(home, home) - dot(other, other);
    Hyperplane::new(normal, offset)
}

impl VoronoiProblem {
    /// Builds the irredundant cell of `sites[home_index]`.
    pub fn from_sites(dim: usize, sites: Vec<Vec<f64>>, home_index: usize) -> Result<Self> {
        if home_index >= sites.len() {
            return Err(ModelError::InvalidParameter(format!(
                "home index {home_index} out of range"
            )));
        }
        if let Some(s) = sites.iter().find(|s| s.len() != dim) {
            return Err(ModelError::DimensionMismatch {
                expected: dim,
                got: s.len(),
            });
        }
        let home = &sites[home_index];
        let hs = sites
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != home_index)
            .map(|(_, s)| bisector(home, s))
            .collect();
        let cell = HPolytope::new(dim, hs)?;
        let truth = geometry::remove_redundant(&cell)?;
        Ok(Self {
            dim,
            sites,
            home_index,
            truth,
        })
    }

    /// Index of the nearest site; ties go to the lowest index.
    pub fn nearest_site(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, s) in self.sites.iter().enumerate() {
            let d = dist(s, x);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

pub const VORONOI_SITES: usize = 30;
pub const VORONOI_BOX: f64 = 10.0;
const VORONOI_ATTEMPTS: usize = 10_000;

/// Diagonal covariance entries `2·10^{i/d}` for `i = 1..=d`.
pub fn voronoi_variances(d: usize) -> Vec<f64> {
    (1..=d)
        .map(|i| 2.0 * 10f64.powf(i as f64 / d as f64))
        .collect()
}

/// Draws Gaussian sites until the cell around the origin is closed and lies
/// inside `[-10, 10]^d`.
pub fn generate_voronoi(d: usize, seed: u64) -> Result<VoronoiProblem> {
    if !(3..=4).contains(&d) {
        return Err(ModelError::InvalidParameter(format!(
            "Voronoi benchmark uses d in {{3, 4}}, got {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normals: Vec<Normal<f64>> = voronoi_variances(d)
        .into_iter()
        .map(|v| Normal::new(0.0, v.sqrt()).expect("positive variance"))
        .collect();
    let origin = vec![0.0; d];
    for _ in 0..VORONOI_ATTEMPTS {
        let sites: Vec<Vec<f64>> = (0..VORONOI_SITES)
            .map(|_| normals.iter().map(|n| n.sample(&mut rng)).collect())
            .collect();
        let probe = VoronoiProblem {
            dim: d,
            sites: sites.clone(),
            home_index: 0,
            truth: HPolytope::bounding_box(&origin, &origin),
        };
        let home = probe.nearest_site(&origin);
        let hs: Vec<Hyperplane> = sites
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != home)
            .map(|(_, s)| bisector(&sites[home], s))
            .collect();
        let cell = HPolytope::new(d, hs)?;
        if !geometry::is_bounded(&cell)? {
            continue;
        }
        let Ok(problem) = VoronoiProblem::from_sites(d, sites, home) else {
            continue;
        };
        if problem.truth.contains_strictly(&origin) && fits_in_box(&problem.truth, VORONOI_BOX) {
            return Ok(problem);
        }
    }
    Err(ModelError::RetryExhausted(VORONOI_ATTEMPTS))
}

/// Any ground-truth problem.
#[derive(Debug, Clone)]
pub enum Problem {
    Voronoi(VoronoiProblem),
    Device(DeviceProblem),
}

impl Problem {
    pub fn dim(&self) -> usize {
        match self {
            Problem::Voronoi(v) => v.dim,
            Problem::Device(d) => d.dim(),
        }
    }

    pub fn truth(&self) -> &HPolytope {
        match self {
            Problem::Voronoi(v) => &v.truth,
            Problem::Device(d) => &d.truth,
        }
    }

    /// Interior anchor; both problem kinds are centred on it.
    pub fn origin(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_device(c: f64, g: f64) -> DeviceModel {
        DeviceModel::new(
            DMatrix::from_element(1, 1, c),
            DMatrix::from_element(1, 1, g),
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn energy_at_rest_is_zero() {
        let d = generate_device(3, 1).unwrap();
        let f = d.free_energy(&StateVector::uniform(3, 0), &[0.0; 3]).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn scalar_energy() {
        let d = scalar_device(2.0, 3.0);
        let f = d.free_energy(&StateVector(vec![0]), &[0.5]).unwrap();
        assert!((f - 0.5 * 9.0 * 0.25 / 2.0).abs() < 1e-14);
        assert!(matches!(
            d.free_energy(&StateVector(vec![0, 1]), &[0.5]),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn scalar_transition_plane() {
        // s = 1 vs r = 0: boundary at V_g = −|e| / (2g).
        let (c, g) = (2.0, 3.0);
        let d = scalar_device(c, g);
        let h = d
            .transition_halfspace(&StateVector(vec![1]), &StateVector(vec![0]))
            .unwrap();
        let root = -h.offset / h.normal[0];
        assert!((root + 1.0 / (2.0 * g)).abs() < 1e-14);
        // Crossing the plane flips the ground state.
        let below = d.ground_state_unchecked(&[root - 1e-6], 3).unwrap();
        let above = d.ground_state_unchecked(&[root + 1e-6], 3).unwrap();
        assert_eq!(below, StateVector(vec![1]));
        assert_eq!(above, StateVector(vec![0]));
    }

    #[test]
    fn transition_is_antisymmetric() {
        let d = generate_device(3, 7).unwrap();
        let s = StateVector(vec![1, 1, 1]);
        let r = StateVector(vec![2, 0, 1]);
        let a = d.transition_halfspace(&s, &r).unwrap();
        let b = d.transition_halfspace(&r, &s).unwrap();
        for (x, y) in a.normal.iter().zip(&b.normal) {
            assert!((x + y).abs() < 1e-15);
        }
        assert!((a.offset + b.offset).abs() < 1e-15);
        assert!(d.transition_halfspace(&s, &s).is_err());
    }

    #[test]
    fn ground_state_at_zero_and_boundary_hit() {
        let d = generate_device(3, 2).unwrap();
        assert_eq!(d.ground_state(&[0.0; 3], 4).unwrap(), StateVector::uniform(3, 0));
        // Very negative gate voltages fill the dots past the bound.
        assert!(matches!(
            d.ground_state(&[-2.0; 3], 2),
            Err(ModelError::BoundaryHit(_))
        ));
    }

    #[test]
    fn state_ids_are_mixed_radix() {
        assert_eq!(StateVector(vec![1, 2, 3]).id(4), 1 + 2 * 5 + 3 * 25);
        let all: Vec<_> = StateVector::enumerate(2, 1).collect();
        assert_eq!(
            all,
            vec![
                StateVector(vec![0, 0]),
                StateVector(vec![0, 1]),
                StateVector(vec![1, 0]),
                StateVector(vec![1, 1])
            ]
        );
    }

    #[test]
    fn device_generation_is_deterministic() {
        let a = generate_device(3, 11).unwrap();
        let b = generate_device(3, 11).unwrap();
        assert_eq!(a, b);
        let quiet = DevicePreset {
            sigma_ln: 0.0,
            ..DevicePreset::default()
        };
        let c = generate_device_with(3, 1, &quiet).unwrap();
        let e = generate_device_with(3, 2, &quiet).unwrap();
        assert_eq!(c, e);
        assert!(generate_device(5, 1).is_err());
    }

    #[test]
    fn device_json_round_trip() {
        let d = generate_device(4, 3).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert!(s.contains("\"C_DD\""));
        let back: DeviceModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        let asym = r#"{"n_dots":2,"n_gates":2,"C_DD":[[1,0.5],[0.4,1]],"C_Dg":[[1,0],[0,1]],"e":1,"rescale":1}"#;
        assert!(serde_json::from_str::<DeviceModel>(asym).is_err());
    }

    #[test]
    fn triple_dot_truth_has_fourteen_facets() {
        let d = generate_device(3, 5).unwrap();
        let p = DeviceProblem::new(d, StateVector::uniform(3, 1), 4).unwrap();
        assert_eq!(p.truth.len(), 14);
        assert!(p.truth.contains_strictly(&[0.0; 3]));
    }

    #[test]
    fn voronoi_acceptance_conditions() {
        let v = generate_voronoi(3, 4).unwrap();
        assert_eq!(v.sites.len(), VORONOI_SITES);
        assert!(v.truth.contains_strictly(&[0.0; 3]));
        assert_eq!(v.nearest_site(&[0.0; 3]), v.home_index);
        let s = serde_json::to_string(&v).unwrap();
        let back: VoronoiProblem = serde_json::from_str(&s).unwrap();
        assert_eq!(back.truth, v.truth);
    }
}

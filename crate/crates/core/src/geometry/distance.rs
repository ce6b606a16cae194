//! Boundedness, Chebyshev center, and distance-to-boundary programs.

use super::{eps_feas, GeometryError, HPolytope, Result};
use crate::conic::ConeProgram;
use crate::linalg::{self, dot};

const AUX_TOL: f64 = 1e-10;

/// True iff the normals positively span `R^d`, i.e. the origin lies strictly
/// inside the convex hull of the normalised normals. For a non-empty
/// polytope this is equivalent to boundedness.
pub fn is_bounded(p: &HPolytope) -> Result<bool> {
    let unit = p.normalized();
    let d = unit.dim();
    let n = unit.len();
    if n <= d {
        return Ok(false);
    }
    let normals: Vec<Vec<f64>> = unit.halfspaces().iter().map(|h| h.normal.clone()).collect();
    if linalg::orthonormalize(&normals, 1e-9).len() < d {
        return Ok(false);
    }
    // max τ  s.t.  Σ λ_k a_k = 0, Σ λ_k = 1, λ_k ≥ τ.
    let tau = n;
    let mut prog = ConeProgram::new(n + 1);
    prog.set_linear(tau, -1.0);
    for i in 0..d {
        let row = (0..n).map(|k| (k, normals[k][i])).collect();
        prog.add_eq(row, 0.0);
    }
    prog.add_eq((0..n).map(|k| (k, 1.0)).collect(), 1.0);
    for k in 0..n {
        prog.add_leq(vec![(tau, 1.0), (k, -1.0)], 0.0);
    }
    match prog.solve(AUX_TOL, 200) {
        Ok(sol) => Ok(sol.x[tau] > 1e-8),
        // An infeasible multiplier system means no positive combination of
        // the normals vanishes.
        Err(e) if e.status.contains("Infeasible") => Ok(false),
        Err(e) => Err(GeometryError::Solver(e.to_string())),
    }
}

/// Center and radius of the largest inscribed ball. A non-positive radius
/// means the polytope has no interior.
pub fn chebyshev_center(p: &HPolytope) -> Result<(Vec<f64>, f64)> {
    let unit = p.normalized();
    let d = unit.dim();
    let r = d;
    let mut prog = ConeProgram::new(d + 1);
    prog.set_linear(r, -1.0);
    for h in unit.halfspaces() {
        let mut row: Vec<(usize, f64)> = h.normal.iter().copied().enumerate().collect();
        row.push((r, 1.0));
        prog.add_leq(row, -h.offset);
    }
    // Keeps the program bounded when called on an unbounded set.
    prog.add_leq(vec![(r, 1.0)], 1e6);
    let sol = prog
        .solve(AUX_TOL, 200)
        .map_err(|e| GeometryError::Solver(e.to_string()))?;
    Ok((sol.x[..d].to_vec(), sol.x[r]))
}

/// Precomputed unit-normal rows for repeated distance queries against one
/// polytope.
#[derive(Debug, Clone)]
pub struct DistanceEvaluator {
    unit: HPolytope,
}

impl DistanceEvaluator {
    pub fn new(p: &HPolytope) -> Self {
        Self {
            unit: p.normalized(),
        }
    }

    pub fn polytope(&self) -> &HPolytope {
        &self.unit
    }

    /// Distance from `x` to the boundary: the inscribed-ball radius at `x`
    /// for interior points, the Euclidean distance to the polytope otherwise.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let hs = self.unit.halfspaces();
        let (worst_k, worst) = hs
            .iter()
            .map(|h| h.eval(x))
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
        if worst <= eps_feas(x) {
            return (-worst).max(0.0);
        }
        // Projection onto the most violated hyperplane is exact whenever it
        // lands inside the polytope.
        let h = &hs[worst_k];
        let y: Vec<f64> = x.iter().zip(&h.normal).map(|(xi, ni)| xi - worst * ni).collect();
        if self.unit.contains(&y) {
            return worst;
        }
        match self.project(x) {
            Some(y) => linalg::dist(x, &y),
            None => {
                log::warn!("projection program failed; falling back to Dykstra iterations");
                linalg::dist(x, &self.dykstra(x))
            }
        }
    }

    /// Nearest point of the polytope to `x`.
    pub fn project(&self, x: &[f64]) -> Option<Vec<f64>> {
        let d = self.unit.dim();
        // min ½‖y‖² − xᵀy  s.t.  a_k·y ≤ −b_k
        let mut prog = ConeProgram::new(d);
        for (i, xi) in x.iter().enumerate() {
            prog.set_quadratic(i, 1.0);
            prog.set_linear(i, -xi);
        }
        for h in self.unit.halfspaces() {
            prog.add_leq(h.normal.iter().copied().enumerate().collect(), -h.offset);
        }
        prog.solve(1e-11, 200).ok().map(|s| s.x)
    }

    fn dykstra(&self, x: &[f64]) -> Vec<f64> {
        let hs = self.unit.halfspaces();
        let mut y = x.to_vec();
        let mut incr = vec![vec![0.0; x.len()]; hs.len()];
        for _ in 0..20_000 {
            for (k, h) in hs.iter().enumerate() {
                let z: Vec<f64> = y.iter().zip(&incr[k]).map(|(a, b)| a + b).collect();
                let v = dot(&h.normal, &z) + h.offset;
                let proj: Vec<f64> = if v > 0.0 {
                    z.iter().zip(&h.normal).map(|(zi, ni)| zi - v * ni).collect()
                } else {
                    z.clone()
                };
                incr[k] = z.iter().zip(&proj).map(|(a, b)| a - b).collect();
                y = proj;
            }
        }
        y
    }
}

/// See [`DistanceEvaluator::distance`].
pub fn boundary_distance(p: &HPolytope, x: &[f64]) -> f64 {
    DistanceEvaluator::new(p).distance(x)
}

//! Thin builder over the Clarabel interior-point solver.
//!
//! Problems are stated as
//! `min ½ xᵀ diag(p) x + qᵀx` subject to blocks of equality, `≤`, and
//! second-order-cone rows. The builder groups rows into the cone layout
//! Clarabel expects.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use std::fmt;


#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    Zero,
    Nonneg,
    Soc,
}

/// A sparse row `Σ coef·x[idx]`.
pub type Row = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
struct Block {
    kind: BlockKind,
    rows: Vec<(Row, f64)>,
}

#[derive(Debug, Clone)]
pub struct ConeProgram {
    n: usize,
    p_diag: Vec<f64>,
    q: Vec<f64>,
    blocks: Vec<Block>,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicFailure {
    pub status: String,
    pub detail: String,
}

impl fmt::Display for ConicFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "solver status {}: {}", self.status, self.detail)
    }
}

impl ConeProgram {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            p_diag: vec![0.0; n],
            q: vec![0.0; n],
            blocks: Vec::new(),
        }
    }

    pub fn set_linear(&mut self, idx: usize, coef: f64) {
        self.q[idx] = coef;
    }

    /// Adds `½·coef·x[idx]²` to the objective.
    pub fn set_quadratic(&mut self, idx: usize, coef: f64) {
        self.p_diag[idx] = coef;
    }

    fn push_row(&mut self, kind: BlockKind, row: Row, rhs: f64) {
        match self.blocks.last_mut() {
            Some(b) if b.kind == kind && kind != BlockKind::Soc => b.rows.push((row, rhs)),
            _ => self.blocks.push(Block {
                kind,
                rows: vec![(row, rhs)],
            }),
        }
    }

    /// `row · x = rhs`
    pub fn add_eq(&mut self, row: Row, rhs: f64) {
        self.push_row(BlockKind::Zero, row, rhs);
    }

    /// `row · x ≤ rhs`
    pub fn add_leq(&mut self, row: Row, rhs: f64) {
        self.push_row(BlockKind::Nonneg, row, rhs);
    }

    /// `‖(x[rest])‖₂ ≤ x[head]`
    pub fn add_norm_bound(&mut self, head: usize, rest: &[usize]) {
        // Clarabel form: s = b - A x ∈ SOC with s = (x[head], x[rest]).
        let mut rows = Vec::with_capacity(rest.len() + 1);
        rows.push((vec![(head, -1.0)], 0.0));
        for &r in rest {
            rows.push((vec![(r, -1.0)], 0.0));
        }
        self.blocks.push(Block {
            kind: BlockKind::Soc,
            rows,
        });
    }

    pub fn solve(&self, tol: f64, max_iter: u32) -> Result<ConicSolution, ConicFailure> {
        let n = self.n;
        let mut ii = Vec::new();
        let mut jj = Vec::new();
        let mut vv = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::new();
        let mut m = 0usize;
        for block in &self.blocks {
            for (row, rhs) in &block.rows {
                for &(j, v) in row {
                    if v != 0.0 {
                        ii.push(m);
                        jj.push(j);
                        vv.push(v);
                    }
                }
                b.push(*rhs);
                m += 1;
            }
            let k = block.rows.len();
            cones.push(match block.kind {
                BlockKind::Zero => SupportedConeT::ZeroConeT(k),
                BlockKind::Nonneg => SupportedConeT::NonnegativeConeT(k),
                BlockKind::Soc => SupportedConeT::SecondOrderConeT(k),
            });
        }
        let a = CscMatrix::new_from_triplets(m, n, ii, jj, vv);
        let (pi, pv): (Vec<usize>, Vec<f64>) = self
            .p_diag
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        let p = CscMatrix::new_from_triplets(n, n, pi.clone(), pi, pv);

        let mut last = None;
        for attempt in ATTEMPTS {
            match self.solve_once(&p, &a, &b, &cones, tol * attempt.tol_factor, max_iter, attempt) {
                Ok(sol) => return Ok(sol),
                Err(e) => {
                    log::debug!("conic solve attempt failed: {e}");
                    let retry = RETRYABLE.iter().any(|s| e.status == *s);
                    last = Some(e);
                    if !retry {
                        break;
                    }
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    #[allow(clippy::too_many_arguments)]
    fn solve_once(
        &self,
        p: &CscMatrix<f64>,
        a: &CscMatrix<f64>,
        b: &[f64],
        cones: &[SupportedConeT<f64>],
        tol: f64,
        max_iter: u32,
        attempt: &Attempt,
    ) -> Result<ConicSolution, ConicFailure> {
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(max_iter)
            .tol_gap_abs(tol)
            .tol_gap_rel(tol)
            .tol_feas(tol)
            .static_regularization_constant(attempt.static_reg)
            .max_step_fraction(attempt.max_step)
            .equilibrate_max_iter(attempt.equilibrate_iters)
            .build()
            .map_err(|e| ConicFailure {
                status: "Settings".into(),
                detail: format!("{e:?}"),
            })?;
        let mut solver =
            DefaultSolver::new(p, &self.q, a, b, cones, settings).map_err(|e| ConicFailure {
                status: "Setup".into(),
                detail: format!("{e:?}"),
            })?;
        solver.solve();
        let sol = &solver.solution;
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(ConicSolution {
                x: sol.x.clone(),
            }),
            other => Err(ConicFailure {
                status: format!("{other:?}"),
                detail: format!(
                    "n={} m={} iterations={} r_prim={:e} r_dual={:e}",
                    self.n,
                    b.len(),
                    sol.iterations,
                    sol.r_prim,
                    sol.r_dual
                ),
            }),
        }
    }
}

/// Solver settings tried in order while the failure looks numerical.
struct Attempt {
    tol_factor: f64,
    static_reg: f64,
    max_step: f64,
    equilibrate_iters: u32,
}

const ATTEMPTS: &[Attempt] = &[
    Attempt {
        tol_factor: 1.0,
        static_reg: 1e-8,
        max_step: 0.99,
        equilibrate_iters: 10,
    },
    Attempt {
        tol_factor: 1.0,
        static_reg: 1e-7,
        max_step: 0.9,
        equilibrate_iters: 50,
    },
    Attempt {
        tol_factor: 100.0,
        static_reg: 1e-6,
        max_step: 0.8,
        equilibrate_iters: 50,
    },
];

const RETRYABLE: &[&str] = &["NumericalError", "InsufficientProgress", "MaxIterations"];

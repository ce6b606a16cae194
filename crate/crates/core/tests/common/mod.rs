//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use num::{BigInt, BigRational, One, Signed, Zero};
use rand::Rng;

use polylab::geometry::{HPolytope, Hyperplane};

pub type Q = BigRational;

pub fn q(v: i64) -> Q {
    BigRational::from_integer(BigInt::from(v))
}

/// Integer halfspaces `a·x + b ≤ 0`.
#[derive(Debug, Clone)]
pub struct IntPolytope {
    pub dim: usize,
    pub a: Vec<Vec<i64>>,
    pub b: Vec<i64>,
}

impl IntPolytope {
    pub fn to_float(&self) -> HPolytope {
        HPolytope::new(
            self.dim,
            self.a
                .iter()
                .zip(&self.b)
                .map(|(a, &b)| Hyperplane::new(a.iter().map(|&v| v as f64).collect(), b as f64))
                .collect(),
        )
        .unwrap()
    }

    pub fn residual(&self, k: usize, x: &[Q]) -> Q {
        let mut s = q(self.b[k]);
        for (ai, xi) in self.a[k].iter().zip(x) {
            s += q(*ai) * xi;
        }
        s
    }
}

/// Random integer polytope with the origin strictly inside.
pub fn random_int_polytope<R: Rng>(rng: &mut R, dim: usize, n: usize) -> IntPolytope {
    let mut a = Vec::new();
    let mut b = Vec::new();
    while a.len() < n {
        let row: Vec<i64> = (0..dim).map(|_| rng.gen_range(-5..=5)).collect();
        if row.iter().all(|&v| v == 0) {
            continue;
        }
        a.push(row);
        b.push(-rng.gen_range(1..=10));
    }
    IntPolytope { dim, a, b }
}

/// Solves the square rational system exactly; `None` if singular.
pub fn solve_exact(mut m: Vec<Vec<Q>>, mut rhs: Vec<Q>) -> Option<Vec<Q>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = &m[r][col] / &m[col][col];
                for c in col..n {
                    let v = &f * &m[col][c];
                    m[r][c] -= v;
                }
                let v = &f * &rhs[col];
                rhs[r] -= v;
            }
        }
    }
    Some((0..n).map(|i| &rhs[i] / &m[i][i]).collect())
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Exact vertices: every feasible solution of `d` tight constraints.
pub fn brute_vertices(p: &IntPolytope) -> Vec<Vec<Q>> {
    let mut out: Vec<Vec<Q>> = Vec::new();
    for s in subsets(p.a.len(), p.dim) {
        let m: Vec<Vec<Q>> = s.iter().map(|&k| p.a[k].iter().map(|&v| q(v)).collect()).collect();
        let rhs: Vec<Q> = s.iter().map(|&k| -q(p.b[k])).collect();
        let Some(x) = solve_exact(m, rhs) else { continue };
        if (0..p.a.len()).all(|k| !p.residual(k, &x).is_positive()) && !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

pub fn exact_rank(rows: &[Vec<Q>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let mut m = rows.to_vec();
    let cols = m[0].len();
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..m.len()).find(|&r| !m[r][c].is_zero()) else { continue };
        m.swap(rank, p);
        for r in 0..m.len() {
            if r != rank && !m[r][c].is_zero() {
                let f = &m[r][c] / &m[rank][c];
                for cc in c..cols {
                    let v = &f * &m[rank][cc];
                    m[r][cc] -= v;
                }
            }
        }
        rank += 1;
    }
    rank
}

pub fn exact_affine_rank(points: &[&Vec<Q>]) -> usize {
    if points.is_empty() {
        return 0;
    }
    let diffs: Vec<Vec<Q>> = points[1..]
        .iter()
        .map(|p| p.iter().zip(points[0]).map(|(a, b)| a - b).collect())
        .collect();
    exact_rank(&diffs)
}

/// Exact facet count: distinct incident sets of affine rank `d − 1`.
pub fn brute_facet_count(p: &IntPolytope, verts: &[Vec<Q>]) -> usize {
    let mut seen: Vec<Vec<usize>> = Vec::new();
    for k in 0..p.a.len() {
        let inc: Vec<usize> = (0..verts.len())
            .filter(|&i| p.residual(k, &verts[i]).is_zero())
            .collect();
        let pts: Vec<&Vec<Q>> = inc.iter().map(|&i| &verts[i]).collect();
        if exact_affine_rank(&pts) == p.dim - 1 && !seen.contains(&inc) {
            seen.push(inc);
        }
    }
    seen.len()
}

/// Exact facets of the hull of rational points: distinct supporting planes
/// through `d` affinely independent points with every point on one side.
pub fn brute_hull_facet_count(points: &[Vec<Q>], dim: usize) -> usize {
    let mut planes: Vec<Vec<usize>> = Vec::new();
    for s in subsets(points.len(), dim) {
        let base = &points[s[0]];
        let diffs: Vec<Vec<Q>> = s[1..]
            .iter()
            .map(|&i| points[i].iter().zip(base).map(|(a, b)| a - b).collect())
            .collect();
        if exact_rank(&diffs) < dim - 1 {
            continue;
        }
        // Normal from the null space of the difference rows.
        let normal = null_vector(&diffs, dim);
        let off: Q = -normal.iter().zip(base).map(|(a, b)| a * b).fold(Q::zero(), |s, v| s + v);
        let side: Vec<Q> = points
            .iter()
            .map(|p| normal.iter().zip(p).map(|(a, b)| a * b).fold(off.clone(), |s, v| s + v))
            .collect();
        let pos = side.iter().any(|v| v.is_positive());
        let neg = side.iter().any(|v| v.is_negative());
        if pos && neg {
            continue;
        }
        let on: Vec<usize> = (0..points.len()).filter(|&i| side[i].is_zero()).collect();
        if !planes.contains(&on) {
            planes.push(on);
        }
    }
    planes.len()
}

fn null_vector(rows: &[Vec<Q>], dim: usize) -> Vec<Q> {
    // Try unit completions until the system is non-singular.
    for j in 0..dim {
        let mut m = rows.to_vec();
        let mut e = vec![Q::zero(); dim];
        e[j] = Q::one();
        m.push(e);
        let mut rhs = vec![Q::zero(); dim];
        rhs[dim - 1] = Q::one();
        if let Some(x) = solve_exact(m, rhs) {
            return x;
        }
    }
    unreachable!("rank d-1 rows have a one-dimensional null space")
}

pub fn to_f64(x: &[Q]) -> Vec<f64> {
    use num::ToPrimitive;
    x.iter().map(|v| v.to_f64().unwrap()).collect()
}

pub fn from_f64_exact(x: &[f64]) -> Vec<Q> {
    x.iter().map(|&v| BigRational::from_float(v).unwrap()).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Line searches from the origin in `n` random directions.
pub fn search_dataset<O: polylab::oracle::MembershipOracle + ?Sized>(
    oracle: &O,
    n: usize,
    delta: f64,
    seed: u64,
) -> polylab::oracle::Dataset {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let d = oracle.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let origin = vec![0.0; d];
    let mut data = polylab::oracle::Dataset::new(origin.clone());
    for _ in 0..n {
        let u: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let pair = polylab::oracle::line_search(oracle, &origin, &u, delta, polylab::oracle::R_MAX).unwrap();
        data.insert_dedup(pair, 0.0);
    }
    data
}

/// Energy from an explicit inverse, independent of the model's factorisation.
pub fn energy(dev: &polylab::models::DeviceModel, s: &[u32], vg: &[f64]) -> f64 {
    let inv = dev.c_dd().clone().try_inverse().unwrap();
    let sv = nalgebra::DVector::from_iterator(s.len(), s.iter().map(|&v| v as f64));
    let u = sv * dev.e_charge() + dev.c_dg() * nalgebra::DVector::from_column_slice(vg);
    0.5 * u.dot(&(inv * &u))
}

pub fn brute_ground_state(dev: &polylab::models::DeviceModel, vg: &[f64], s_max: u32) -> Vec<u32> {
    let n = dev.n_dots();
    let mut best: Option<(f64, Vec<u32>)> = None;
    let mut s = vec![0u32; n];
    loop {
        let e = energy(dev, &s, vg);
        if best.as_ref().map_or(true, |(b, _)| e < *b) {
            best = Some((e, s.clone()));
        }
        // Lexicographic successor, last coordinate fastest.
        let mut k = n;
        loop {
            if k == 0 {
                return best.unwrap().1;
            }
            k -= 1;
            if s[k] < s_max {
                s[k] += 1;
                for v in &mut s[k + 1..] {
                    *v = 0;
                }
                break;
            }
        }
    }
}

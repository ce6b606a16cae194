//! Small dense linear algebra for the 2..=5 dimensional kernels.
//!
//! Everything here works on plain slices. The fixed-capacity solver keeps the
//! hot vertex-enumeration loop free of allocations.

/// Largest dimension handled by the stack-allocated routines.
pub const MAX_DIM: usize = 6;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn mean(points: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    for p in points {
        for (ci, pi) in c.iter_mut().zip(p.iter()) {
            *ci += pi;
        }
    }
    let n = points.len().max(1) as f64;
    c.iter_mut().for_each(|v| *v /= n);
    c
}

/// Solves `m x = rhs` in place with partial pivoting. `m` holds `n` rows of
/// length `n`. Returns `false` when a pivot drops below `pivot_tol`.
pub fn solve_in_place(
    m: &mut [[f64; MAX_DIM]; MAX_DIM],
    rhs: &mut [f64; MAX_DIM],
    n: usize,
    pivot_tol: f64,
) -> bool {
    for col in 0..n {
        let mut piv = col;
        let mut best = m[col][col].abs();
        for r in (col + 1)..n {
            let v = m[r][col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best <= pivot_tol {
            return false;
        }
        if piv != col {
            m.swap(piv, col);
            rhs.swap(piv, col);
        }
        let inv = 1.0 / m[col][col];
        for r in (col + 1)..n {
            let f = m[r][col] * inv;
            if f != 0.0 {
                for c in col..n {
                    m[r][c] -= f * m[col][c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut s = rhs[col];
        for c in (col + 1)..n {
            s -= m[col][c] * rhs[c];
        }
        rhs[col] = s / m[col][col];
    }
    true
}

/// Determinant of an `n x n` matrix given as rows.
pub fn det(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let mut m = [[0.0; MAX_DIM]; MAX_DIM];
    for (i, r) in rows.iter().enumerate() {
        m[i][..n].copy_from_slice(&r[..n]);
    }
    let mut d = 1.0;
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            m.swap(piv, col);
            d = -d;
        }
        d *= m[col][col];
        let inv = 1.0 / m[col][col];
        for r in (col + 1)..n {
            let f = m[r][col] * inv;
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    d
}

/// Gram-Schmidt with re-orthogonalisation. Vectors whose residual norm falls
/// below `tol` are dropped, so the length of the output is the numerical rank.
pub fn orthonormalize(vectors: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&r, q);
                r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= c * qi);
            }
        }
        let n = norm(&r);
        if n > tol {
            r.iter_mut().for_each(|x| *x /= n);
            basis.push(r);
        }
    }
    basis
}

/// Residual of `v` after projecting out an orthonormal `basis`.
pub fn residual(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut r = v.to_vec();
    for _ in 0..2 {
        for q in basis {
            let c = dot(&r, q);
            r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= c * qi);
        }
    }
    r
}

/// Affine rank of a point set, measured relative to its extent.
pub fn affine_rank(points: &[&[f64]], rel_tol: f64) -> usize {
    if points.is_empty() {
        return 0;
    }
    let scale = points
        .iter()
        .map(|p| norm_inf(p))
        .fold(0.0_f64, f64::max)
        .max(1.0);
    let diffs: Vec<Vec<f64>> = points[1..].iter().map(|p| sub(p, points[0])).collect();
    orthonormalize(&diffs, rel_tol * scale).len()
}

/// Unit vector orthogonal to the affine hull of `dim` points in `R^dim`.
/// Sign is arbitrary. Returns `None` for (numerically) dependent points.
pub fn hyperplane_normal(points: &[&[f64]], dim: usize, tol: f64) -> Option<Vec<f64>> {
    debug_assert_eq!(points.len(), dim);
    let diffs: Vec<Vec<f64>> = points[1..].iter().map(|p| sub(p, points[0])).collect();
    let basis = orthonormalize(&diffs, tol);
    if basis.len() + 1 != dim {
        return None;
    }
    orthogonal_complement_vector(&basis, dim)
}

/// A unit vector orthogonal to `basis` (which must have `dim - 1` vectors).
pub fn orthogonal_complement_vector(basis: &[Vec<f64>], dim: usize) -> Option<Vec<f64>> {
    let mut best: Option<Vec<f64>> = None;
    let mut best_norm = 0.0;
    for axis in 0..dim {
        let mut e = vec![0.0; dim];
        e[axis] = 1.0;
        let r = residual(&e, basis);
        let n = norm(&r);
        if n > best_norm {
            best_norm = n;
            best = Some(r);
        }
    }
    let mut v = best?;
    if best_norm < 1e-12 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= best_norm);
    // One refinement pass against the basis.
    let mut v = residual(&v, basis);
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    Some(v)
}

/// Orthonormal basis of the hyperplane orthogonal to `normal`.
pub fn complement_basis(normal: &[f64]) -> Vec<Vec<f64>> {
    let dim = normal.len();
    let n = norm(normal);
    let unit: Vec<f64> = normal.iter().map(|x| x / n).collect();
    let mut seeds = vec![unit];
    for axis in 0..dim {
        let mut e = vec![0.0; dim];
        e[axis] = 1.0;
        seeds.push(e);
    }
    let full = orthonormalize(&seeds, 1e-9);
    full.into_iter().skip(1).take(dim - 1).collect()
}

/// `n!` as a float.
pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        m[0][..3].copy_from_slice(&[2.0, 1.0, 0.0]);
        m[1][..3].copy_from_slice(&[1.0, 3.0, 1.0]);
        m[2][..3].copy_from_slice(&[0.0, 1.0, 4.0]);
        let mut rhs = [0.0; MAX_DIM];
        rhs[..3].copy_from_slice(&[3.0, 5.0, 5.0]);
        assert!(solve_in_place(&mut m, &mut rhs, 3, 1e-12));
        for (v, want) in rhs[..3].iter().zip([1.0, 1.0, 1.0]) {
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_system_is_rejected() {
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        m[0][..2].copy_from_slice(&[1.0, 2.0]);
        m[1][..2].copy_from_slice(&[2.0, 4.0]);
        let mut rhs = [1.0; MAX_DIM];
        assert!(!solve_in_place(&mut m, &mut rhs, 2, 1e-12));
    }

    #[test]
    fn determinant_and_rank() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert!((det(&rows) + 2.0).abs() < 1e-12);
        let pts: Vec<Vec<f64>> = vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        assert_eq!(affine_rank(&refs, 1e-10), 1);
    }

    #[test]
    fn normal_is_orthogonal() {
        let pts: Vec<Vec<f64>> = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let n = hyperplane_normal(&refs, 3, 1e-12).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!((n[0].abs() - s).abs() < 1e-12);
        assert!((dot(&n, &sub(&pts[1], &pts[0]))).abs() < 1e-12);
        let basis = complement_basis(&n);
        assert_eq!(basis.len(), 2);
        for b in &basis {
            assert!(dot(b, &n).abs() < 1e-12);
        }
    }
}

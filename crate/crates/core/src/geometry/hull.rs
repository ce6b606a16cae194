//! Incremental (beneath-beyond / quickhull) convex hull in 2..=5 dimensions.
//!
//! The hull is kept as a simplicial complex with explicit facet adjacency.
//! Coplanar simplices are merged into facets at the end; the simplices are
//! kept as a boundary triangulation for volume computation.

use std::collections::HashMap;

use super::{GeometryError, EPS_RANK};
use crate::linalg::{self, dot, factorial, orthonormalize, residual, sub};

#[derive(Debug, Clone)]
pub(crate) struct Simplex {
    pub verts: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct HullFacet {
    /// Outward unit normal.
    pub normal: Vec<f64>,
    pub offset: f64,
    /// Sorted hull vertices lying on this facet.
    #[allow(dead_code)]
    pub verts: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct Hull {
    pub dim: usize,
    pub simplices: Vec<Simplex>,
    pub facets: Vec<HullFacet>,
    pub vertices: Vec<usize>,
    pub interior: Vec<f64>,
}

struct Work {
    verts: Vec<usize>,
    normal: Vec<f64>,
    offset: f64,
    neighbors: Vec<usize>,
    outside: Vec<usize>,
    alive: bool,
    visit: usize,
}

impl Work {
    #[inline]
    fn height(&self, p: &[f64]) -> f64 {
        dot(&self.normal, p) + self.offset
    }
}

fn oriented_plane(
    points: &[Vec<f64>],
    verts: &[usize],
    interior: &[f64],
    dim: usize,
    tol: f64,
) -> Option<(Vec<f64>, f64)> {
    let refs: Vec<&[f64]> = verts.iter().map(|&v| points[v].as_slice()).collect();
    let mut n = linalg::hyperplane_normal(&refs, dim, tol)?;
    let mut off = -dot(&n, refs[0]);
    if dot(&n, interior) + off > 0.0 {
        n.iter_mut().for_each(|x| *x = -*x);
        off = -off;
    }
    Some((n, off))
}

impl Hull {
    pub fn volume(&self, points: &[Vec<f64>]) -> f64 {
        let d = self.dim;
        let mut total = 0.0;
        for s in &self.simplices {
            let rows: Vec<Vec<f64>> = s
                .verts
                .iter()
                .map(|&v| sub(&points[v], &self.interior))
                .collect();
            total += linalg::det(&rows).abs();
        }
        total / factorial(d)
    }
}

/// Relative joggle sizes tried after an exact build hits a degenerate
/// configuration (many exactly coplanar or collinear input points).
const JOGGLE: [f64; 4] = [1e-9, 1e-8, 1e-7, 1e-6];

/// Builds the hull of `points` (all of dimension `dim`).
///
/// If the exact build meets a numerically flat facet, it is retried on
/// deterministically joggled copies of the points. Facet offsets are always
/// taken from the original coordinates.
pub(crate) fn quickhull(points: &[Vec<f64>], dim: usize) -> Result<Hull, GeometryError> {
    let mut result = build(points, dim, 0.0);
    for jog in JOGGLE {
        match &result {
            Err(GeometryError::DegenerateInput(m)) if retryable(m) => {
                log::debug!("hull build degenerate ({m}); retrying with joggle {jog:e}");
                result = build(points, dim, jog);
            }
            _ => break,
        }
    }
    result
}

fn retryable(msg: &str) -> bool {
    ["numerically flat", "hull horizon", "inconsistent hull"]
        .iter()
        .any(|p| msg.starts_with(p))
}

fn joggled(points: &[Vec<f64>], amount: f64) -> Vec<Vec<f64>> {
    let mut state = 0x9E37_79B9_7F4A_7C15_u64;
    let mut next = || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    points
        .iter()
        .map(|p| p.iter().map(|x| x + amount * next()).collect())
        .collect()
}

fn build(original: &[Vec<f64>], dim: usize, jog: f64) -> Result<Hull, GeometryError> {
    let points = original;
    if points.len() < dim + 1 {
        return Err(GeometryError::DegenerateInput(format!(
            "{} points cannot span R^{dim}",
            points.len()
        )));
    }
    let scale = points
        .iter()
        .map(|p| linalg::norm_inf(p))
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let owned;
    let points: &[Vec<f64>] = if jog > 0.0 {
        owned = joggled(points, jog * scale);
        &owned
    } else {
        points
    };
    // The joggle has to exceed `eps` to break ties; coplanar merging then
    // has to tolerate it.
    let eps = 1e-11 * scale;
    let rank_tol = EPS_RANK * scale;

    // Initial simplex: greedy farthest points from the growing affine span.
    let first = (0..points.len())
        .min_by(|&a, &b| points[a][0].total_cmp(&points[b][0]))
        .unwrap_or(0);
    let mut chosen = vec![first];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for _ in 0..dim {
        let mut best = None;
        let mut best_r = -1.0;
        for (i, p) in points.iter().enumerate() {
            let r = linalg::norm(&residual(&sub(p, &points[first]), &basis));
            if r > best_r {
                best_r = r;
                best = Some(i);
            }
        }
        if best_r <= rank_tol {
            return Err(GeometryError::DegenerateInput(format!(
                "points span only {} of {dim} dimensions",
                chosen.len() - 1
            )));
        }
        let b = best.expect("non-empty point set");
        chosen.push(b);
        let diffs: Vec<Vec<f64>> = chosen[1..]
            .iter()
            .map(|&c| sub(&points[c], &points[first]))
            .collect();
        basis = orthonormalize(&diffs, 0.0);
    }
    let refs: Vec<&[f64]> = chosen.iter().map(|&c| points[c].as_slice()).collect();
    let interior = linalg::mean(&refs, dim);

    let mut facets: Vec<Work> = Vec::new();
    for omit in 0..=dim {
        let verts: Vec<usize> = (0..=dim).filter(|&j| j != omit).map(|j| chosen[j]).collect();
        let neighbors: Vec<usize> = (0..=dim).filter(|&j| j != omit).collect();
        let (normal, offset) = oriented_plane(points, &verts, &interior, dim, rank_tol * 1e-3)
            .ok_or_else(|| GeometryError::DegenerateInput("initial simplex is flat".into()))?;
        facets.push(Work {
            verts,
            normal,
            offset,
            neighbors,
            outside: Vec::new(),
            alive: true,
            visit: 0,
        });
    }

    let mut in_simplex = vec![false; points.len()];
    for &c in &chosen {
        in_simplex[c] = true;
    }
    for (i, p) in points.iter().enumerate() {
        if in_simplex[i] {
            continue;
        }
        if let Some(f) = facets.iter_mut().find(|f| f.height(p) > eps) {
            f.outside.push(i);
        }
    }

    let mut stamp = 0usize;
    let mut pending: Vec<usize> = (0..facets.len()).collect();
    while let Some(fid) = pending.pop() {
        if !facets[fid].alive || facets[fid].outside.is_empty() {
            continue;
        }
        let apex = {
            let f = &facets[fid];
            *f.outside
                .iter()
                .max_by(|&&a, &&b| f.height(&points[a]).total_cmp(&f.height(&points[b])))
                .expect("non-empty outside set")
        };
        let p = &points[apex];

        // Visible region and its horizon.
        stamp += 1;
        let mut visible = vec![fid];
        facets[fid].visit = stamp;
        let mut horizon: Vec<(usize, usize)> = Vec::new();
        let mut cursor = 0;
        while cursor < visible.len() {
            let f = visible[cursor];
            cursor += 1;
            for pos in 0..dim {
                let nb = facets[f].neighbors[pos];
                if facets[nb].visit == stamp {
                    continue;
                }
                if facets[nb].height(p) > eps {
                    facets[nb].visit = stamp;
                    visible.push(nb);
                } else {
                    horizon.push((f, pos));
                }
            }
        }
        // Non-visible neighbours may be reached from several visible facets,
        // so the visit stamp is only used for the visible set.

        let first_new = facets.len();
        let mut ridge_map: HashMap<Vec<usize>, (usize, usize)> = HashMap::new();
        for &(f, pos) in &horizon {
            let nb = facets[f].neighbors[pos];
            let mut verts = facets[f].verts.clone();
            verts[pos] = apex;
            let (normal, offset) =
                oriented_plane(points, &verts, &interior, dim, rank_tol * 1e-3).ok_or_else(
                    || GeometryError::DegenerateInput("numerically flat hull facet".into()),
                )?;
            let id = facets.len();
            let mut neighbors = vec![usize::MAX; dim];
            neighbors[pos] = nb;
            if let Some(slot) = facets[nb].neighbors.iter_mut().find(|n| **n == f) {
                *slot = id;
            }
            for q in 0..dim {
                if q == pos {
                    continue;
                }
                let mut key: Vec<usize> = verts
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != q)
                    .map(|(_, v)| *v)
                    .collect();
                key.sort_unstable();
                if let Some((other, opos)) = ridge_map.remove(&key) {
                    neighbors[q] = other;
                    let of: &mut Work = &mut facets[other];
                    of.neighbors[opos] = id;
                } else {
                    ridge_map.insert(key, (id, q));
                }
            }
            facets.push(Work {
                verts,
                normal,
                offset,
                neighbors,
                outside: Vec::new(),
                alive: true,
                visit: 0,
            });
        }
        if !ridge_map.is_empty() {
            return Err(GeometryError::DegenerateInput(
                "hull horizon is not a closed ridge cycle".into(),
            ));
        }

        let mut orphans = Vec::new();
        for &f in &visible {
            facets[f].alive = false;
            orphans.append(&mut facets[f].outside);
        }
        for q in orphans {
            if q == apex {
                continue;
            }
            let pt = &points[q];
            for nf in first_new..facets.len() {
                if facets[nf].height(pt) > eps {
                    facets[nf].outside.push(q);
                    break;
                }
            }
        }
        for nf in first_new..facets.len() {
            if !facets[nf].outside.is_empty() {
                pending.push(nf);
            }
        }
    }

    let alive: Vec<usize> = (0..facets.len()).filter(|&f| facets[f].alive).collect();
    let merge_eps = 10.0 * eps.max(jog * scale);

    // A closed, locally convex boundary containing every point is the hull;
    // near-ties can silently break either property.
    for &f in &alive {
        let w = &facets[f];
        for &g in &w.neighbors {
            let reflex = !facets[g].alive
                || !facets[g].neighbors.contains(&f)
                || facets[g]
                    .verts
                    .iter()
                    .any(|&v| w.height(&points[v]) > merge_eps);
            if reflex {
                return Err(GeometryError::DegenerateInput(
                    "inconsistent hull: reflex or dangling ridge".into(),
                ));
            }
        }
        if points.iter().any(|p| w.height(p) > merge_eps) {
            return Err(GeometryError::DegenerateInput(
                "inconsistent hull: point outside a facet".into(),
            ));
        }
    }

    // Merge coplanar neighbours into facets.
    let mut parent: HashMap<usize, usize> = alive.iter().map(|&f| (f, f)).collect();
    fn find(parent: &mut HashMap<usize, usize>, mut x: usize) -> usize {
        while parent[&x] != x {
            let up = parent[&parent[&x]];
            parent.insert(x, up);
            x = up;
        }
        x
    }
    for &f in &alive {
        for pos in 0..dim {
            let g = facets[f].neighbors[pos];
            if g <= f {
                continue;
            }
            let opposite = facets[g]
                .verts
                .iter()
                .find(|v| !facets[f].verts.contains(v))
                .copied();
            let Some(opp) = opposite else { continue };
            if facets[f].height(&points[opp]).abs() <= merge_eps
                && dot(&facets[f].normal, &facets[g].normal) > 0.0
            {
                let (rf, rg) = (find(&mut parent, f), find(&mut parent, g));
                if rf != rg {
                    parent.insert(rg.max(rf), rg.min(rf));
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut group_of: HashMap<usize, usize> = HashMap::new();
    for &f in &alive {
        let r = find(&mut parent, f);
        let gi = *group_of.entry(r).or_insert_with(|| {
            groups.push((r, Vec::new()));
            groups.len() - 1
        });
        groups[gi].1.push(f);
    }
    // Joggling separates duplicated inputs; report each location once.
    let mut canon: HashMap<usize, usize> = HashMap::new();
    if jog > 0.0 {
        let mut kept: Vec<usize> = Vec::new();
        let mut all: Vec<usize> = alive.iter().flat_map(|&f| facets[f].verts.iter().copied()).collect();
        all.sort_unstable();
        all.dedup();
        for v in all {
            let same = kept
                .iter()
                .find(|&&u| linalg::norm_inf(&sub(&original[u], &original[v])) <= merge_eps);
            match same {
                Some(&u) => {
                    canon.insert(v, u);
                }
                None => kept.push(v),
            }
        }
    }
    let canonical = |v: usize| canon.get(&v).copied().unwrap_or(v);
    let mut out_facets = Vec::with_capacity(groups.len());
    for (_, members) in &groups {
        let mut normal = vec![0.0; dim];
        let mut verts: Vec<usize> = Vec::new();
        for &m in members {
            normal
                .iter_mut()
                .zip(&facets[m].normal)
                .for_each(|(a, b)| *a += b);
            verts.extend(facets[m].verts.iter().map(|&v| canonical(v)));
        }
        let n = linalg::norm(&normal);
        normal.iter_mut().for_each(|x| *x /= n);
        verts.sort_unstable();
        verts.dedup();
        let offset = -verts
            .iter()
            .map(|&v| dot(&normal, &original[v]))
            .fold(f64::NEG_INFINITY, f64::max);
        out_facets.push(HullFacet {
            normal,
            offset,
            verts,
        });
    }

    let mut vertices: Vec<usize> = alive
        .iter()
        .flat_map(|&f| facets[f].verts.iter().map(|&v| canonical(v)))
        .collect();
    vertices.sort_unstable();
    vertices.dedup();
    // Boundary points that are not extreme (inside an edge or face) can stay
    // in the triangulation after ties; a vertex needs `dim` independent
    // incident facet normals.
    vertices.retain(|v| {
        let normals: Vec<Vec<f64>> = out_facets
            .iter()
            .filter(|f| f.verts.binary_search(v).is_ok())
            .map(|f| f.normal.clone())
            .collect();
        orthonormalize(&normals, 1e-9).len() == dim
    });
    for f in &mut out_facets {
        f.verts.retain(|v| vertices.binary_search(v).is_ok());
    }
    let simplices = alive
        .iter()
        .map(|&f| Simplex {
            verts: facets[f].verts.clone(),
        })
        .collect();

    Ok(Hull {
        dim,
        simplices,
        facets: out_facets,
        vertices,
        interior,
    })
}

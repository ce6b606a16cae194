//! Exact low-dimensional polytope computations.
//!
//! Polytopes are stored in H-representation `{x : A_k·x + b_k ≤ 0}`. All
//! predicates work on row-normalised residuals, so tolerances are Euclidean
//! distances in the (rescaled) coordinate units.

mod distance;
pub(crate) mod hull;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, dot, norm, norm_inf, MAX_DIM};

pub use distance::{boundary_distance, chebyshev_center, is_bounded, DistanceEvaluator};

/// Feasibility slack, scaled by `1 + ‖x‖∞`.
pub const EPS_FEAS: f64 = 1e-8;
/// Distance below which a vertex counts as lying on a facet hyperplane.
pub const EPS_ONFACET: f64 = 1e-6;
/// Vertices closer than this are the same vertex.
pub const EPS_VERTEX: f64 = 1e-7;
/// Relative rank tolerance for affine-span tests.
pub const EPS_RANK: f64 = 1e-10;

/// Above this many halfspaces vertex enumeration switches from exhaustive
/// d-subset solving to the dual-hull route.
pub const SUBSET_ENUMERATION_LIMIT: usize = 64;

#[inline]
pub fn eps_feas(x: &[f64]) -> f64 {
    EPS_FEAS * (1.0 + norm_inf(x))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polytope is empty")]
    EmptyPolytope,
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported dimension {0}; supported range is 2..=5")]
    UnsupportedDimension(usize),
    #[error("auxiliary program failed: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// The halfspace `normal·x + offset ≤ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Hyperplane {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) + self.offset
    }

    /// Signed Euclidean distance, positive outside.
    #[inline]
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        self.eval(x) / norm(&self.normal)
    }

    /// Same halfspace with a unit normal. Zero normals are returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = norm(&self.normal);
        if n == 0.0 {
            return self.clone();
        }
        Self {
            normal: self.normal.iter().map(|v| v / n).collect(),
            offset: self.offset / n,
        }
    }
}

/// `{x ∈ R^dim : A_k·x + b_k ≤ 0 ∀k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolytopeJson", into = "PolytopeJson")]
pub struct HPolytope {
    dim: usize,
    halfspaces: Vec<Hyperplane>,
}

#[derive(Serialize, Deserialize)]
struct PolytopeJson {
    dim: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl TryFrom<PolytopeJson> for HPolytope {
    type Error = GeometryError;
    fn try_from(j: PolytopeJson) -> Result<Self> {
        if j.a.len() != j.b.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: j.a.len(),
                got: j.b.len(),
            });
        }
        let hs = j
            .a
            .into_iter()
            .zip(j.b)
            .map(|(n, o)| Hyperplane::new(n, o))
            .collect();
        HPolytope::new(j.dim, hs)
    }
}

impl From<HPolytope> for PolytopeJson {
    fn from(p: HPolytope) -> Self {
        let (a, b) = p
            .halfspaces
            .into_iter()
            .map(|h| (h.normal, h.offset))
            .unzip();
        PolytopeJson { dim: p.dim, a, b }
    }
}

impl HPolytope {
    pub fn new(dim: usize, halfspaces: Vec<Hyperplane>) -> Result<Self> {
        for h in &halfspaces {
            if h.normal.len() != dim {
                return Err(GeometryError::DimensionMismatch {
                    expected: dim,
                    got: h.normal.len(),
                });
            }
        }
        Ok(Self { dim, halfspaces })
    }

    pub fn from_rows(a: &[Vec<f64>], b: &[f64]) -> Result<Self> {
        let dim = a.first().map(|r| r.len()).unwrap_or(0);
        let hs = a
            .iter()
            .zip(b)
            .map(|(n, o)| Hyperplane::new(n.clone(), *o))
            .collect();
        Self::new(dim, hs)
    }

    /// The axis-aligned box `∏ [lo_i, hi_i]`.
    pub fn bounding_box(lo: &[f64], hi: &[f64]) -> Self {
        let d = lo.len();
        let mut hs = Vec::with_capacity(2 * d);
        for i in 0..d {
            let mut n = vec![0.0; d];
            n[i] = -1.0;
            hs.push(Hyperplane::new(n.clone(), lo[i]));
            n[i] = 1.0;
            hs.push(Hyperplane::new(n, -hi[i]));
        }
        Self { dim: d, halfspaces: hs }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halfspaces(&self) -> &[Hyperplane] {
        &self.halfspaces
    }

    pub fn len(&self) -> usize {
        self.halfspaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.halfspaces.is_empty()
    }

    /// Copy with unit normals; rows with a zero normal are dropped.
    pub fn normalized(&self) -> Self {
        Self {
            dim: self.dim,
            halfspaces: self
                .halfspaces
                .iter()
                .filter(|h| norm(&h.normal) > 0.0)
                .map(Hyperplane::normalized)
                .collect(),
        }
    }

    /// Largest normalised residual; `≤ 0` inside.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.halfspaces
            .iter()
            .map(|h| h.signed_distance(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.max_violation(x) <= eps_feas(x)
    }

    /// Membership with all residuals strictly negative.
    pub fn contains_strictly(&self, x: &[f64]) -> bool {
        self.max_violation(x) < -eps_feas(x)
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        Self {
            dim: self.dim,
            halfspaces: self
                .halfspaces
                .iter()
                .map(|h| Hyperplane::new(h.normal.clone(), h.offset - dot(&h.normal, shift)))
                .collect(),
        }
    }

    /// Image under `x ↦ s·x` for `s > 0`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            halfspaces: self
                .halfspaces
                .iter()
                .map(|h| Hyperplane::new(h.normal.clone(), h.offset * s))
                .collect(),
        }
    }

    fn zero_rows_infeasible(&self) -> bool {
        self.halfspaces
            .iter()
            .any(|h| norm(&h.normal) == 0.0 && h.offset > 0.0)
    }
}

/// A finite point set, the V-representation of its convex hull.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSet {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
}

impl VertexSet {
    pub fn new(dim: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(GeometryError::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        Ok(Self { dim, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vec<f64> {
        let refs: Vec<&[f64]> = self.points.iter().map(|p| p.as_slice()).collect();
        linalg::mean(&refs, self.dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetDescription {
    pub halfspace_index: usize,
    pub incident_vertex_indices: Vec<usize>,
    pub center: Vec<f64>,
    /// (d−1)-dimensional volume of the facet.
    pub measure: f64,
}

fn check_dim(d: usize) -> Result<()> {
    if (2..=5).contains(&d) {
        Ok(())
    } else {
        Err(GeometryError::UnsupportedDimension(d))
    }
}

fn push_unique(vertices: &mut Vec<Vec<f64>>, x: Vec<f64>) {
    if !vertices.iter().any(|v| linalg::dist(v, &x) < EPS_VERTEX) {
        vertices.push(x);
    }
}

/// Vertices by exhaustive d-subset solving on a normalised system.
fn subset_vertices(unit: &HPolytope) -> Vec<Vec<f64>> {
    let d = unit.dim;
    let hs = &unit.halfspaces;
    let n = hs.len();
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    if n < d {
        return vertices;
    }
    let mut idx: Vec<usize> = (0..d).collect();
    loop {
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        let mut rhs = [0.0; MAX_DIM];
        for (r, &k) in idx.iter().enumerate() {
            m[r][..d].copy_from_slice(&hs[k].normal);
            rhs[r] = -hs[k].offset;
        }
        if linalg::solve_in_place(&mut m, &mut rhs, d, EPS_RANK) {
            let x = &rhs[..d];
            if x.iter().all(|v| v.is_finite()) {
                let tol = eps_feas(x);
                let feasible = hs.iter().all(|h| h.eval(x) <= tol);
                if feasible {
                    push_unique(&mut vertices, x.to_vec());
                }
            }
        }
        // Next combination in lexicographic order.
        let mut i = d;
        loop {
            if i == 0 {
                return vertices;
            }
            i -= 1;
            if idx[i] < n - d + i {
                idx[i] += 1;
                for j in (i + 1)..d {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Vertices through polar duality: facets of the hull of `a_k / h_k` around
/// an interior point correspond one-to-one to vertices of the polytope.
fn dual_vertices(unit: &HPolytope) -> Result<Vec<Vec<f64>>> {
    let d = unit.dim;
    let (center, radius) = chebyshev_center(unit)?;
    let scale = 1.0 + norm_inf(&center);
    if radius <= 1e-9 * scale {
        return Err(GeometryError::EmptyPolytope);
    }
    let dual: Vec<Vec<f64>> = unit
        .halfspaces
        .iter()
        .map(|h| {
            let slack = -h.eval(&center);
            h.normal.iter().map(|v| v / slack).collect()
        })
        .collect();
    let hull = hull::quickhull(&dual, d)?;
    let mut vertices = Vec::with_capacity(hull.facets.len());
    for f in &hull.facets {
        // f: normal·q + offset ≤ 0 with offset < 0 since the origin is inside.
        let x: Vec<f64> = f
            .normal
            .iter()
            .zip(&center)
            .map(|(w, c)| c + w / (-f.offset))
            .collect();
        push_unique(&mut vertices, x);
    }
    Ok(vertices)
}

/// All extreme points of a bounded, non-empty polytope.
///
/// Up to [`SUBSET_ENUMERATION_LIMIT`] halfspaces every d-subset with an
/// invertible normal matrix is solved and kept when it satisfies all other
/// constraints within `eps_feas`. Larger systems go through the dual hull.
pub fn enumerate_vertices(p: &HPolytope) -> Result<VertexSet> {
    check_dim(p.dim)?;
    if p.zero_rows_infeasible() {
        return Err(GeometryError::EmptyPolytope);
    }
    let unit = p.normalized();
    if !is_bounded(&unit)? {
        return Err(GeometryError::Unbounded);
    }
    let points = if unit.len() <= SUBSET_ENUMERATION_LIMIT {
        subset_vertices(&unit)
    } else {
        dual_vertices(&unit)?
    };
    if points.is_empty() {
        return Err(GeometryError::EmptyPolytope);
    }
    VertexSet::new(p.dim, points)
}

/// Vertex enumeration forced through the dual-hull route.
pub fn enumerate_vertices_dual(p: &HPolytope) -> Result<VertexSet> {
    check_dim(p.dim)?;
    let unit = p.normalized();
    if !is_bounded(&unit)? {
        return Err(GeometryError::Unbounded);
    }
    VertexSet::new(p.dim, dual_vertices(&unit)?)
}

fn incident(h: &Hyperplane, vertices: &[Vec<f64>]) -> Vec<usize> {
    let h = h.normalized();
    vertices
        .iter()
        .enumerate()
        .filter(|(_, v)| h.eval(v).abs() <= EPS_ONFACET)
        .map(|(i, _)| i)
        .collect()
}

fn spans_facet(ids: &[usize], vertices: &[Vec<f64>], dim: usize) -> bool {
    if ids.len() < dim {
        return false;
    }
    let refs: Vec<&[f64]> = ids.iter().map(|&i| vertices[i].as_slice()).collect();
    linalg::affine_rank(&refs, 1e-9) == dim - 1
}

/// Indices of the halfspaces that support a facet, plus the vertex set.
fn facet_rows(p: &HPolytope) -> Result<(Vec<usize>, VertexSet)> {
    let v = enumerate_vertices(p)?;
    let mut kept: Vec<usize> = Vec::new();
    let mut seen: Vec<Vec<usize>> = Vec::new();
    for (k, h) in p.halfspaces.iter().enumerate() {
        if norm(&h.normal) == 0.0 {
            continue;
        }
        let inc = incident(h, &v.points);
        if spans_facet(&inc, &v.points, p.dim) && !seen.contains(&inc) {
            seen.push(inc);
            kept.push(k);
        }
    }
    Ok((kept, v))
}

/// Indices of the halfspaces that support a facet. Among duplicates the
/// first one is kept.
pub fn facet_indices(p: &HPolytope) -> Result<Vec<usize>> {
    Ok(facet_rows(p)?.0)
}

/// Drops every halfspace that does not support a facet (slack or duplicate
/// constraints). The point set is unchanged.
pub fn remove_redundant(p: &HPolytope) -> Result<HPolytope> {
    let (kept, _) = facet_rows(p)?;
    Ok(HPolytope {
        dim: p.dim,
        halfspaces: kept.into_iter().map(|k| p.halfspaces[k].clone()).collect(),
    })
}

/// Irredundant facet halfspaces of the hull of `points`, with outward unit
/// normals.
pub fn convex_hull(points: &VertexSet) -> Result<HPolytope> {
    check_dim(points.dim)?;
    let h = hull::quickhull(&points.points, points.dim)?;
    Ok(HPolytope {
        dim: points.dim,
        halfspaces: h
            .facets
            .into_iter()
            .map(|f| Hyperplane::new(f.normal, f.offset))
            .collect(),
    })
}

/// The extreme points among `points`.
pub fn hull_vertices(points: &VertexSet) -> Result<VertexSet> {
    check_dim(points.dim)?;
    let h = hull::quickhull(&points.points, points.dim)?;
    VertexSet::new(
        points.dim,
        h.vertices.iter().map(|&i| points.points[i].clone()).collect(),
    )
}

/// d-volume of the convex hull of `v`.
pub fn volume(v: &VertexSet) -> Result<f64> {
    check_dim(v.dim)?;
    let h = hull::quickhull(&v.points, v.dim)?;
    Ok(h.volume(&v.points))
}

/// d-volume of an H-polytope.
pub fn polytope_volume(p: &HPolytope) -> Result<f64> {
    volume(&enumerate_vertices(p)?)
}

/// `P ∩ Q` reduced to its facets. Intersections without interior are
/// reported as [`GeometryError::EmptyPolytope`].
pub fn intersect(p: &HPolytope, q: &HPolytope) -> Result<HPolytope> {
    if p.dim != q.dim {
        return Err(GeometryError::DimensionMismatch {
            expected: p.dim,
            got: q.dim,
        });
    }
    let mut hs = p.halfspaces.clone();
    hs.extend(q.halfspaces.iter().cloned());
    let joint = HPolytope { dim: p.dim, halfspaces: hs };
    let (kept, v) = facet_rows(&joint)?;
    let refs: Vec<&[f64]> = v.points.iter().map(|x| x.as_slice()).collect();
    if linalg::affine_rank(&refs, 1e-9) < p.dim {
        return Err(GeometryError::EmptyPolytope);
    }
    Ok(HPolytope {
        dim: p.dim,
        halfspaces: kept.into_iter().map(|k| joint.halfspaces[k].clone()).collect(),
    })
}

/// (d−1)-volume of the convex hull of points lying in the hyperplane with
/// the given normal.
fn facet_measure(points: &[&[f64]], normal: &[f64]) -> f64 {
    let d = normal.len();
    if points.len() < d {
        return 0.0;
    }
    let basis = linalg::complement_basis(normal);
    let origin = points[0];
    let projected: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let diff = linalg::sub(p, origin);
            basis.iter().map(|b| dot(b, &diff)).collect()
        })
        .collect();
    if d - 1 == 1 {
        let (lo, hi) = projected
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[0]), hi.max(p[0]))
            });
        return hi - lo;
    }
    match hull::quickhull(&projected, d - 1) {
        Ok(h) => h.volume(&projected),
        Err(_) => 0.0,
    }
}

/// One description per halfspace of an irredundant polytope.
pub fn facets(p: &HPolytope) -> Result<Vec<FacetDescription>> {
    let v = enumerate_vertices(p)?;
    Ok(p
        .halfspaces
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let inc = incident(h, &v.points);
            let refs: Vec<&[f64]> = inc.iter().map(|&i| v.points[i].as_slice()).collect();
            let center = linalg::mean(&refs, p.dim);
            let measure = facet_measure(&refs, &h.normal);
            FacetDescription {
                halfspace_index: k,
                incident_vertex_indices: inc,
                center,
                measure,
            }
        })
        .collect())
}

/// Facet centers (mean of incident vertices) and the vertex set, without the
/// facet-measure computation.
pub fn facet_centers(p: &HPolytope) -> Result<(Vec<Vec<f64>>, VertexSet)> {
    let (kept, v) = facet_rows(p)?;
    let centers = kept
        .iter()
        .map(|&k| {
            let inc = incident(&p.halfspaces[k], &v.points);
            let refs: Vec<&[f64]> = inc.iter().map(|&i| v.points[i].as_slice()).collect();
            linalg::mean(&refs, p.dim)
        })
        .collect();
    Ok((centers, v))
}

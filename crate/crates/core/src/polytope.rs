//! Simplex over the reduced scheduling trajectory and online vertex membership.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scheduling::{assemble_system, reconstruct, LpvSystem, PcaReduction, SchedulingVector};
use crate::vehicle::VehicleParams;

/// Barycentric coordinates below this count as outside the simplex.
pub const HULL_TOL: f64 = 1e-9;

/// Reduced scheduling samples `H`, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory(pub DMatrix<f64>);

impl ReducedTrajectory {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn len(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.ncols() == 0
    }
}

/// Per-dimension lower and upper bounds of `H`.
pub fn bounds(h: &ReducedTrajectory) -> Result<(DVector<f64>, DVector<f64>)> {
    if h.is_empty() || h.dim() == 0 {
        return Err(Error::domain("empty reduced trajectory"));
    }
    let lo = DVector::from_fn(h.dim(), |i, _| h.0.row(i).min());
    let hi = DVector::from_fn(h.dim(), |i, _| h.0.row(i).max());
    Ok((lo, hi))
}

/// Box corner `index`: bit `i` selects the upper bound in dimension `i`.
pub fn box_corner(index: usize, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(lo.len(), |i, _| if (index >> i) & 1 == 1 { hi[i] } else { lo[i] })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolytopeConfig {
    /// Largest admissible condition number of `[V; 1^T]`.
    pub condition_cap: f64,
    /// Degeneracy threshold on `|det([v_2 - v_1, ..., v_{m+1} - v_1])|`.
    pub degeneracy: f64,
    /// Resolution of the inflation factor.
    pub inflation_resolution: f64,
}

impl Default for PolytopeConfig {
    fn default() -> Self {
        Self { condition_cap: 1e8, degeneracy: 1e-12, inflation_resolution: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    /// `m x (m+1)` vertex matrix.
    pub vertices: DMatrix<f64>,
    /// Box corners the vertices were taken from (before inflation).
    pub corners: Vec<usize>,
    /// Scaling about the centroid applied to reach containment (>= 1).
    pub inflation: f64,
    pub vertex_thetas: Vec<SchedulingVector>,
    pub vertex_systems: Vec<LpvSystem>,
    inverse: DMatrix<f64>,
}

/// Result of a membership query.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub xi: DVector<f64>,
    /// The query point lay outside the simplex and was projected onto it.
    pub out_of_hull: bool,
}

fn lifted(vertices: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, k) = vertices.shape();
    DMatrix::from_fn(m + 1, k, |i, j| if i < m { vertices[(i, j)] } else { 1.0 })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn edge_determinant(vertices: &DMatrix<f64>) -> f64 {
    let m = vertices.nrows();
    let edges = DMatrix::from_fn(m, m, |i, j| vertices[(i, j + 1)] - vertices[(i, 0)]);
    edges.determinant()
}

/// Simplex volume `|det([v_2 - v_1, ...])| / m!`.
pub fn simplex_volume(vertices: &DMatrix<f64>) -> f64 {
    edge_determinant(vertices).abs() / factorial(vertices.nrows())
}

fn condition_number(mat: &DMatrix<f64>) -> f64 {
    let sv = mat.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

impl Polytope {
    /// Builds the polytope from explicit vertices, reconstructing the vertex
    /// scheduling vectors and systems.
    pub fn from_vertices(
        vertices: DMatrix<f64>,
        corners: Vec<usize>,
        inflation: f64,
        reduction: &PcaReduction,
        params: &VehicleParams,
        cfg: &PolytopeConfig,
    ) -> Result<Self> {
        let m = vertices.nrows();
        if vertices.ncols() != m + 1 || m != reduction.dim() {
            return Err(Error::Geometry(format!(
                "vertex matrix must be {m} x {} for a {}-dimensional reduction",
                m + 1,
                reduction.dim()
            )));
        }
        let lift = lifted(&vertices);
        let cond = condition_number(&lift);
        if !(cond <= cfg.condition_cap) {
            return Err(Error::Geometry(format!(
                "vertex matrix condition number {cond:.3e} exceeds cap {:.3e}; use a larger m or more data",
                cfg.condition_cap
            )));
        }
        let inverse = lift.try_inverse().ok_or_else(|| Error::Geometry("singular vertex matrix".into()))?;
        let vertex_thetas: Vec<_> =
            (0..=m).map(|p| reconstruct(&vertices.column(p).into_owned(), reduction)).collect();
        let vertex_systems = vertex_thetas.iter().map(|t| assemble_system(t, params)).collect();
        Ok(Self { vertices, corners, inflation, vertex_thetas, vertex_systems, inverse })
    }

    pub fn dim(&self) -> usize {
        self.vertices.nrows()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.ncols()
    }

    pub fn centroid(&self) -> DVector<f64> {
        self.vertices.column_mean()
    }

    /// Raw `[V; 1^T]^{-1} [eta; 1]`, without clamping.
    pub fn raw_coordinates(&self, eta: &DVector<f64>) -> DVector<f64> {
        let m = self.dim();
        let rhs = DVector::from_fn(m + 1, |i, _| if i < m { eta[i] } else { 1.0 });
        &self.inverse * rhs
    }
}

/// Selects `m + 1` corners of the bounding box of `h`.
///
/// Among corner simplices containing every sample the smallest one wins. When
/// none does, each candidate is inflated about its centroid to the smallest
/// containing factor and the smallest inflated simplex wins. Volume ties
/// (1e-12 relative) keep the lexicographically first corner set.
pub fn select_simplex(
    h: &ReducedTrajectory,
    reduction: &PcaReduction,
    params: &VehicleParams,
    cfg: &PolytopeConfig,
) -> Result<Polytope> {
    let m = h.dim();
    if m != reduction.dim() {
        return Err(Error::domain("reduced trajectory and reduction dimensions differ"));
    }
    if h.len() < m + 1 {
        return Err(Error::domain(format!("need at least {} samples, got {}", m + 1, h.len())));
    }
    let (lo, hi) = bounds(h)?;
    let corners: Vec<DVector<f64>> = (0..1usize << m).map(|i| box_corner(i, &lo, &hi)).collect();

    struct Candidate {
        subset: Vec<usize>,
        /// Volume after inflation.
        score: f64,
        inflation: f64,
    }
    let mut containing: Option<Candidate> = None;
    let mut inflated: Option<Candidate> = None;
    let better = |score: f64, best: &Option<Candidate>| match best {
        None => true,
        Some(b) => score < b.score * (1.0 - 1e-12),
    };

    for subset in combinations(corners.len(), m + 1) {
        let verts = DMatrix::from_fn(m, m + 1, |i, j| corners[subset[j]][i]);
        let det = edge_determinant(&verts);
        if det.abs() <= cfg.degeneracy {
            continue;
        }
        let volume = det.abs() / factorial(m);
        let Some(inverse) = lifted(&verts).try_inverse() else { continue };
        let needed = required_inflation(&inverse, &h.0);
        if needed <= 1.0 {
            if better(volume, &containing) {
                containing = Some(Candidate { subset, score: volume, inflation: 1.0 });
            }
        } else if containing.is_none() {
            let steps = ((needed - 1.0) / cfg.inflation_resolution).ceil();
            let factor = 1.0 + steps * cfg.inflation_resolution;
            let inflated_volume = volume * factor.powi(m as i32);
            if better(inflated_volume, &inflated) {
                inflated = Some(Candidate { subset, score: inflated_volume, inflation: factor });
            }
        }
    }

    let chosen = containing
        .or(inflated)
        .ok_or_else(|| Error::Geometry("every corner subset is degenerate; reduce m".into()))?;
    let base = DMatrix::from_fn(m, m + 1, |i, j| corners[chosen.subset[j]][i]);
    let centroid = base.column_mean();
    let vertices = if chosen.inflation == 1.0 {
        base
    } else {
        DMatrix::from_fn(m, m + 1, |i, j| centroid[i] + chosen.inflation * (base[(i, j)] - centroid[i]))
    };
    let poly = Polytope::from_vertices(vertices, chosen.subset, chosen.inflation, reduction, params, cfg)?;

    let worst = (0..h.len())
        .map(|j| poly.raw_coordinates(&h.0.column(j).into_owned()).min())
        .fold(f64::INFINITY, f64::min);
    if worst < -HULL_TOL {
        return Err(Error::Geometry(format!("selected simplex misses training samples (min coordinate {worst:.3e})")));
    }
    Ok(poly)
}

/// Smallest centroid scaling making every column non-negative in barycentric
/// terms. Scaling by `f` maps `xi` to `1/(m+1) + (xi - 1/(m+1))/f`.
fn required_inflation(inverse: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    let k = inverse.nrows();
    let m = k - 1;
    let mut need: f64 = 1.0;
    let mut rhs = DVector::from_element(k, 1.0);
    for j in 0..h.ncols() {
        for i in 0..m {
            rhs[i] = h[(i, j)];
        }
        let xi = inverse * &rhs;
        let min = xi.min();
        if min < -HULL_TOL {
            need = need.max(1.0 - k as f64 * min);
        }
    }
    need
}

/// Lexicographic `k`-subsets of `0..n`.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out
}

/// Barycentric coordinates of `eta`; points outside the simplex are replaced
/// by their Euclidean projection onto it and flagged.
pub fn convex_coordinates(poly: &Polytope, eta: &DVector<f64>) -> Result<Membership> {
    if eta.len() != poly.dim() {
        return Err(Error::domain(format!("eta has {} entries, polytope is {}-dimensional", eta.len(), poly.dim())));
    }
    let xi = poly.raw_coordinates(eta);
    if xi.iter().all(|v| *v >= -HULL_TOL) {
        return Ok(Membership { xi, out_of_hull: false });
    }
    let xi = project_onto_simplex(&poly.vertices, eta);
    Ok(Membership { xi, out_of_hull: true })
}

/// Euclidean projection onto the simplex, returned as convex weights.
/// Every face is tried; the closest admissible face projection wins.
fn project_onto_simplex(vertices: &DMatrix<f64>, eta: &DVector<f64>) -> DVector<f64> {
    let k = vertices.ncols();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 1usize..(1 << k) {
        let face: Vec<usize> = (0..k).filter(|p| (mask >> p) & 1 == 1).collect();
        let Some(weights) = face_projection(vertices, &face, eta) else { continue };
        if weights.iter().any(|w| *w < -1e-12) {
            continue;
        }
        let mut xi = DVector::zeros(k);
        for (w, &p) in weights.iter().zip(&face) {
            xi[p] = w.max(0.0);
        }
        let total = xi.sum();
        xi /= total;
        let dist = (vertices * &xi - eta).norm_squared();
        if best.as_ref().is_none_or(|(d, _)| dist < *d - 1e-15) {
            best = Some((dist, xi));
        }
    }
    best.map(|(_, xi)| xi).expect("vertex faces always admit a projection")
}

/// Projection onto the affine hull of `face`: minimise `|sum w_p v_p - eta|`
/// subject to `sum w_p = 1` via the KKT system.
fn face_projection(vertices: &DMatrix<f64>, face: &[usize], eta: &DVector<f64>) -> Option<Vec<f64>> {
    let n = face.len();
    let mut kkt = DMatrix::zeros(n + 1, n + 1);
    let mut rhs = DVector::zeros(n + 1);
    for (a, &p) in face.iter().enumerate() {
        for (b, &q) in face.iter().enumerate() {
            kkt[(a, b)] = vertices.column(p).dot(&vertices.column(q));
        }
        kkt[(a, n)] = 1.0;
        kkt[(n, a)] = 1.0;
        rhs[a] = vertices.column(p).dot(eta);
    }
    rhs[n] = 1.0;
    let sol = kkt.lu().solve(&rhs)?;
    Some(sol.iter().take(n).copied().collect())
}

/// `sum_p xi_p G(theta_hat_vp)`.
pub fn combine_systems(poly: &Polytope, xi: &DVector<f64>) -> LpvSystem {
    poly.vertex_systems
        .iter()
        .zip(xi.iter())
        .fold(LpvSystem::zero(), |acc, (sys, w)| acc.add(&sys.scaled(*w)))
}

//! Scheduling variables, the affine LPV lateral model and PCA reduction of
//! sampled scheduling trajectories.

use nalgebra::{DMatrix, DVector, Matrix4, Matrix4x2, SVector, Vector4};

use crate::controller::longitudinal::{LongitudinalPd, SpeedPlanner};
use crate::error::{Error, Result};
use crate::sim::road::RoadProfile;
use crate::vehicle::{plant_stiffness, roll_derivative, RollState, StiffnessModel, VehicleParams};

/// Number of original scheduling variables.
pub const THETA_DIM: usize = 5;

pub type Vector5 = SVector<f64, THETA_DIM>;

/// `[Vx, 2C_af, 2C_af/Vx, 2C_ar, 2C_ar/Vx]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulingVector(pub Vector5);

impl SchedulingVector {
    pub fn vx(&self) -> f64 {
        self.0[0]
    }

    /// Per-tire front stiffness implied by `theta_2`.
    pub fn c_af(&self) -> f64 {
        self.0[1] / 2.0
    }

    pub fn c_ar(&self) -> f64 {
        self.0[3] / 2.0
    }

    /// Largest relative violation of `theta_3 * theta_1 = theta_2` and
    /// `theta_5 * theta_1 = theta_4`.
    pub fn coupling_error(&self) -> f64 {
        let t = &self.0;
        let rel = |prod: f64, target: f64| (prod - target).abs() / target.abs().max(f64::MIN_POSITIVE);
        rel(t[2] * t[0], t[1]).max(rel(t[4] * t[0], t[3]))
    }

    pub fn is_coupled(&self, tol: f64) -> bool {
        self.0[0] > 0.0 && self.coupling_error() <= tol
    }
}

pub fn build_theta(vx: f64, c_af: f64, c_ar: f64) -> Result<SchedulingVector> {
    if !(vx > 0.0) {
        return Err(Error::domain(format!("longitudinal speed must be positive, got {vx}")));
    }
    Ok(SchedulingVector(Vector5::new(vx, 2.0 * c_af, 2.0 * c_af / vx, 2.0 * c_ar, 2.0 * c_ar / vx)))
}

/// `x' = A x + B delta + B_phi phi` for one scheduling point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpvSystem {
    pub a: Matrix4<f64>,
    pub b: Vector4<f64>,
    pub b_phi: Matrix4x2<f64>,
}

impl LpvSystem {
    pub fn zero() -> Self {
        Self { a: Matrix4::zeros(), b: Vector4::zeros(), b_phi: Matrix4x2::zeros() }
    }

    pub fn scaled(&self, w: f64) -> Self {
        Self { a: self.a * w, b: self.b * w, b_phi: self.b_phi * w }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { a: self.a + other.a, b: self.b + other.b, b_phi: self.b_phi + other.b_phi }
    }

    /// Largest entrywise difference over `A`, `B` and `B_phi`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let da = (self.a - other.a).amax();
        let db = (self.b - other.b).amax();
        let dp = (self.b_phi - other.b_phi).amax();
        da.max(db).max(dp)
    }

    pub fn closed_loop(&self, gain: &nalgebra::RowVector4<f64>) -> Matrix4<f64> {
        self.a + self.b * gain
    }
}

/// Affine system matrices; valid for any finite `theta`, including
/// reconstructed vectors that violate the coupling constraints.
pub fn assemble_system(theta: &SchedulingVector, params: &VehicleParams) -> LpvSystem {
    let t = &theta.0;
    let (m, iz, lf, lr, l) = (params.m, params.i_z, params.l_f, params.l_r, params.look_ahead);
    #[rustfmt::skip]
    let a = Matrix4::new(
        0.0, 1.0, 0.0, -l,
        0.0, -t[2] / m - t[4] / m, t[1] / m + t[3] / m, -2.0 * t[0] - lf / m * t[2] + lr / m * t[4],
        0.0, 0.0, 0.0, -1.0,
        0.0, -lf / iz * t[2] + lr / iz * t[4], lf / iz * t[1] - lr / iz * t[3], -lf * lf / iz * t[2] - lr * lr / iz * t[4],
    );
    let b = Vector4::new(0.0, t[1] / m, 0.0, lf / iz * t[1]);
    #[rustfmt::skip]
    let b_phi = Matrix4x2::new(
        l, t[0],
        t[0], 0.0,
        1.0, 0.0,
        0.0, 0.0,
    );
    LpvSystem { a, b, b_phi }
}

/// Sampled scheduling trajectory, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub period: f64,
    pub samples: Vec<SchedulingVector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `5 x N` trajectory matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(THETA_DIM, self.samples.len(), |i, j| self.samples[j].0[i])
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::domain("trajectory needs at least two samples"));
        }
        if let Some((j, _)) = self.samples.iter().enumerate().find(|(_, s)| !s.is_coupled(1e-9)) {
            return Err(Error::domain(format!("sample {j} violates the scheduling invariants")));
        }
        Ok(())
    }

    /// Mean per-tire stiffness over the trajectory.
    pub fn mean_stiffness(&self) -> (f64, f64) {
        let n = self.samples.len().max(1) as f64;
        let f = self.samples.iter().map(|s| s.c_af()).sum::<f64>() / n;
        let r = self.samples.iter().map(|s| s.c_ar()).sum::<f64>() / n;
        (f, r)
    }
}

/// Row-wise affine maps onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationLaw {
    pub center: Vector5,
    pub half_range: Vector5,
}

impl NormalizationLaw {
    pub fn apply(&self, theta: &Vector5) -> Vector5 {
        Vector5::from_fn(|i, _| {
            if self.half_range[i] > 0.0 {
                (theta[i] - self.center[i]) / self.half_range[i]
            } else {
                0.0
            }
        })
    }

    pub fn invert(&self, normalized: &Vector5) -> Vector5 {
        Vector5::from_fn(|i, _| self.center[i] + self.half_range[i] * normalized[i])
    }

    pub fn apply_matrix(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(theta.nrows(), theta.ncols(), |i, j| {
            if self.half_range[i] > 0.0 {
                (theta[(i, j)] - self.center[i]) / self.half_range[i]
            } else {
                0.0
            }
        })
    }

    pub fn invert_matrix(&self, normalized: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(normalized.nrows(), normalized.ncols(), |i, j| {
            self.center[i] + self.half_range[i] * normalized[(i, j)]
        })
    }
}

/// Min-max normalisation of every row; constant rows map to zero.
pub fn normalize(traj: &Trajectory) -> Result<(DMatrix<f64>, NormalizationLaw)> {
    if traj.len() < 2 {
        return Err(Error::domain("trajectory needs at least two samples"));
    }
    let theta = traj.matrix();
    Ok(normalize_matrix(&theta))
}

pub(crate) fn normalize_matrix(theta: &DMatrix<f64>) -> (DMatrix<f64>, NormalizationLaw) {
    let mut center = Vector5::zeros();
    let mut half_range = Vector5::zeros();
    for i in 0..THETA_DIM {
        let row = theta.row(i);
        let lo = row.min();
        let hi = row.max();
        center[i] = 0.5 * (lo + hi);
        half_range[i] = 0.5 * (hi - lo);
    }
    let law = NormalizationLaw { center, half_range };
    (law.apply_matrix(theta), law)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaReduction {
    /// `5 x m` orthonormal basis of the dominant left-singular directions.
    pub basis: DMatrix<f64>,
    /// All five singular values, non-increasing.
    pub singular_values: Vector5,
    pub law: NormalizationLaw,
}

impl PcaReduction {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Fraction of total variation retained by the first `m_query` components.
    pub fn fraction_of_variation(&self, m_query: usize) -> Result<f64> {
        fraction_of_variation(self, m_query)
    }
}

/// SVD of the normalised trajectory, keeping `m` directions.
pub fn pca_reduce(normalized: &DMatrix<f64>, law: NormalizationLaw, m: usize) -> Result<PcaReduction> {
    if !(1..=THETA_DIM).contains(&m) {
        return Err(Error::domain(format!("reduction dimension must be in 1..=5, got {m}")));
    }
    if normalized.nrows() != THETA_DIM {
        return Err(Error::domain("normalized trajectory must have five rows"));
    }
    // zero columns leave the left singular vectors untouched and guarantee a full U
    let work = if normalized.ncols() < THETA_DIM {
        let mut padded = DMatrix::zeros(THETA_DIM, THETA_DIM);
        padded.view_mut((0, 0), (THETA_DIM, normalized.ncols())).copy_from(normalized);
        padded
    } else {
        normalized.clone()
    };
    let svd = work.svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Numerical { message: "SVD did not return U".into(), last_good_time: 0.0 })?;
    let sigma = svd.singular_values;

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    // stable: ties keep the decomposition's own order
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap_or(std::cmp::Ordering::Equal));

    let mut singular_values = Vector5::zeros();
    for (k, &idx) in order.iter().enumerate().take(THETA_DIM) {
        singular_values[k] = sigma[idx];
    }
    let mut basis = DMatrix::zeros(THETA_DIM, m);
    for (k, &idx) in order.iter().enumerate().take(m) {
        let mut col = u.column(idx).into_owned();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-14) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        basis.set_column(k, &col);
    }
    Ok(PcaReduction { basis, singular_values, law })
}

/// `v_m = sum_{i<=m} sigma_i^2 / sum_i sigma_i^2`.
pub fn fraction_of_variation(reduction: &PcaReduction, m_query: usize) -> Result<f64> {
    if !(1..=THETA_DIM).contains(&m_query) {
        return Err(Error::domain(format!("m must be in 1..=5, got {m_query}")));
    }
    let sq: Vec<f64> = reduction.singular_values.iter().map(|s| s * s).collect();
    let total: f64 = sq.iter().sum();
    if !(total > 0.0) {
        return Err(Error::domain("all singular values are zero"));
    }
    if m_query == THETA_DIM {
        return Ok(1.0);
    }
    Ok(sq[..m_query].iter().sum::<f64>() / total)
}

/// `eta = U_s^T N(theta)`.
pub fn reduce_point(theta: &SchedulingVector, reduction: &PcaReduction) -> DVector<f64> {
    let n = reduction.law.apply(&theta.0);
    reduction.basis.tr_mul(&DVector::from_column_slice(n.as_slice()))
}

/// `theta_hat = N^{-1}(U_s eta)`; the coupling constraints are not enforced.
pub fn reconstruct(eta: &DVector<f64>, reduction: &PcaReduction) -> SchedulingVector {
    let lifted = &reduction.basis * eta;
    SchedulingVector(reduction.law.invert(&Vector5::from_column_slice(lifted.as_slice())))
}

/// `H = U_s^T Theta^n`.
pub fn reduce_trajectory(normalized: &DMatrix<f64>, reduction: &PcaReduction) -> DMatrix<f64> {
    reduction.basis.tr_mul(normalized)
}

/// Per-variable relative RMS error of `theta_hat` against `theta` over a trajectory.
pub fn reconstruction_rel_rms(traj: &Trajectory, reduction: &PcaReduction) -> Vector5 {
    let mut err = Vector5::zeros();
    let mut norm = Vector5::zeros();
    for s in &traj.samples {
        let hat = reconstruct(&reduce_point(s, reduction), reduction);
        for i in 0..THETA_DIM {
            err[i] += (hat.0[i] - s.0[i]).powi(2);
            norm[i] += s.0[i].powi(2);
        }
    }
    Vector5::from_fn(|i, _| if norm[i] > 0.0 { (err[i] / norm[i]).sqrt() } else { err[i].sqrt() })
}

/// One data-collection drive.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingScenario {
    pub name: String,
    pub road: RoadProfile,
    pub initial_speed: f64,
    /// `None` holds the initial speed.
    pub planner: Option<SpeedPlanner>,
    /// Upper bound on the drive time; the drive also ends with the road.
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectionConfig {
    pub period: f64,
    /// Roll-model integration substeps per sample.
    pub substeps: usize,
    pub pd: LongitudinalPd,
    pub stiffness: StiffnessModel,
}

impl Default for CollectionConfig {
    fn default() -> Self {
        Self { period: 0.01, substeps: 10, pd: LongitudinalPd::default(), stiffness: StiffnessModel::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    pub trajectory: Trajectory,
    /// Samples dropped because the speed was not positive.
    pub rejected: usize,
}

/// Drives every scenario with ideal path following (`a_y = Vx^2 kappa`) and
/// samples `(Vx, C_af, C_ar)` from the roll-coupled stiffness model.
pub fn collect_trajectories(
    scenarios: &[DrivingScenario],
    params: &VehicleParams,
    cfg: &CollectionConfig,
) -> Result<Collection> {
    if scenarios.is_empty() {
        return Err(Error::domain("at least one driving scenario is required"));
    }
    params.validate()?;
    if !(cfg.period > 0.0) || cfg.substeps == 0 {
        return Err(Error::domain("sampling period and substeps must be positive"));
    }
    let mut samples = Vec::new();
    let mut rejected = 0;
    for sc in scenarios {
        if !(sc.duration > 0.0) {
            return Err(Error::domain(format!("scenario '{}' has non-positive duration", sc.name)));
        }
        let n = (sc.duration / cfg.period).round() as usize;
        let h = cfg.period / cfg.substeps as f64;
        let mut vx = sc.initial_speed;
        let mut s = 0.0;
        let mut roll = RollState::default();
        let mut pd = cfg.pd;
        pd.reset();
        for _ in 0..n {
            if s > sc.road.length() {
                break;
            }
            let kappa = sc.road.curvature(s);
            let a_y = vx * vx * kappa;
            let (c_af, c_ar) = plant_stiffness(roll, a_y, params, &cfg.stiffness);
            match build_theta(vx, c_af, c_ar) {
                Ok(theta) => samples.push(theta),
                Err(_) => rejected += 1,
            }
            let target = match &sc.planner {
                Some(p) => p.reference(&sc.road, s, params),
                None => sc.initial_speed,
            };
            let a_x = pd.command(vx, target, cfg.period);
            for _ in 0..cfg.substeps {
                let a_y = vx * vx * sc.road.curvature(s);
                roll = rk4_roll(roll, a_y, h, params);
                s += h * vx.max(0.0);
                vx += h * a_x;
            }
        }
    }
    Ok(Collection { trajectory: Trajectory { period: cfg.period, samples }, rejected })
}

fn rk4_roll(r: RollState, a_y: f64, h: f64, params: &VehicleParams) -> RollState {
    let f = |s: RollState| (s.phi_dot, roll_derivative(s, a_y, params));
    let add = |s: RollState, k: (f64, f64), w: f64| RollState { phi: s.phi + w * k.0, phi_dot: s.phi_dot + w * k.1 };
    let k1 = f(r);
    let k2 = f(add(r, k1, 0.5 * h));
    let k3 = f(add(r, k2, 0.5 * h));
    let k4 = f(add(r, k3, h));
    RollState {
        phi: r.phi + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        phi_dot: r.phi_dot + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    }
}

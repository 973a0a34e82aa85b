//! Vehicle parameters, one-DOF roll dynamics, the rollover-limited speed cap
//! and the coefficients of the error-coordinate lateral model.

use crate::error::{Error, Result};

/// Physical constants of the single-track and roll models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Total mass (kg).
    pub m: f64,
    /// Sprung mass (kg).
    pub m_s: f64,
    /// Yaw inertia (kg m^2).
    pub i_z: f64,
    /// Roll inertia of the sprung mass (kg m^2).
    pub i_x: f64,
    /// CG to front axle (m).
    pub l_f: f64,
    /// CG to rear axle (m).
    pub l_r: f64,
    /// Look-ahead distance (m).
    pub look_ahead: f64,
    /// Roll-center height below the CG (m).
    pub h_rc: f64,
    /// Roll stiffness (N m / rad).
    pub k_roll: f64,
    /// Roll damping (N m s / rad).
    pub c_roll: f64,
    /// Gravity (m/s^2).
    pub g: f64,
    /// Nominal front axle cornering stiffness, per tire (N/rad).
    pub c_af0: f64,
    /// Nominal rear axle cornering stiffness, per tire (N/rad).
    pub c_ar0: f64,
    /// Admissible steady-state roll angle (rad).
    pub phi_max: f64,
    /// Track width used for lateral load transfer (m).
    pub track: f64,
    /// Replace `sin(phi)` by `phi` in the roll model.
    pub small_angle: bool,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m: 1650.0,
            m_s: 1400.0,
            i_z: 2900.0,
            i_x: 600.0,
            l_f: 1.2,
            l_r: 1.5,
            look_ahead: 5.0,
            h_rc: 0.45,
            k_roll: 95_000.0,
            c_roll: 6000.0,
            g: 9.81,
            c_af0: 65_000.0,
            c_ar0: 65_000.0,
            phi_max: 0.02,
            track: 1.6,
            small_angle: false,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("m_s", self.m_s),
            ("i_z", self.i_z),
            ("i_x", self.i_x),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("look_ahead", self.look_ahead),
            ("h_rc", self.h_rc),
            ("k_roll", self.k_roll),
            ("c_roll", self.c_roll),
            ("g", self.g),
            ("c_af0", self.c_af0),
            ("c_ar0", self.c_ar0),
            ("track", self.track),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.phi_max.is_finite() && self.phi_max >= 0.0) {
            return Err(Error::Parameter(format!("phi_max must be >= 0, got {}", self.phi_max)));
        }
        if self.m_s > self.m {
            return Err(Error::Parameter("sprung mass exceeds total mass".into()));
        }
        if self.k_roll <= self.m_s * self.g * self.h_rc {
            return Err(Error::Parameter(format!(
                "k_roll = {} must exceed m_s*g*h_rc = {}",
                self.k_roll,
                self.m_s * self.g * self.h_rc
            )));
        }
        Ok(())
    }

    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }

    /// Effective roll stiffness once the gravity destabilisation is removed.
    pub fn net_roll_stiffness(&self) -> f64 {
        self.k_roll - self.m_s * self.g * self.h_rc
    }

    fn sin_phi(&self, phi: f64) -> f64 {
        if self.small_angle {
            phi
        } else {
            phi.sin()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RollState {
    pub phi: f64,
    pub phi_dot: f64,
}

/// Error-coordinate lateral state `[e_yL, e_y_dot, e_psi, psi_dot]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LateralState {
    pub e_yl: f64,
    pub e_y_dot: f64,
    pub e_psi: f64,
    pub psi_dot: f64,
}

impl LateralState {
    pub fn to_vector(&self) -> nalgebra::Vector4<f64> {
        nalgebra::Vector4::new(self.e_yl, self.e_y_dot, self.e_psi, self.psi_dot)
    }

    pub fn from_vector(v: &nalgebra::Vector4<f64>) -> Self {
        Self { e_yl: v[0], e_y_dot: v[1], e_psi: v[2], psi_dot: v[3] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Exogenous road inputs entering the lateral model through `B_phi`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RoadSignals {
    pub psi_dot_des: f64,
    /// Heading change between the vehicle position and the look-ahead point.
    pub e_psil_minus_e_psi: f64,
    pub kappa: f64,
}

/// Roll acceleration of the sprung mass for lateral acceleration `a_y`.
///
/// The restoring torque is `K_roll * phi`; this is the form from which the
/// steady-state speed cap in [`desired_speed`] follows.
pub fn roll_derivative(state: RollState, a_y: f64, params: &VehicleParams) -> f64 {
    let p = params;
    p.m_s * p.h_rc * (a_y + p.g * p.sin_phi(state.phi)) / p.i_x
        - p.k_roll / p.i_x * state.phi
        - p.c_roll / p.i_x * state.phi_dot
}

/// Highest speed on an arc of radius `radius` that keeps the steady roll angle
/// within `phi_max`, using `a_y ~ V^2 / R`.
pub fn desired_speed(radius: f64, params: &VehicleParams) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::domain(format!("turn radius must be positive, got {radius}")));
    }
    let net = params.net_roll_stiffness();
    if net <= 0.0 {
        return Err(Error::Parameter("k_roll must exceed m_s*g*h_rc".into()));
    }
    let radicand = radius * net * params.phi_max / (params.m_s * params.h_rc);
    if radicand < 0.0 {
        return Err(Error::Parameter("negative speed-cap radicand".into()));
    }
    Ok(radicand.sqrt())
}

/// Speed cap for signed curvature `kappa`; straight road returns `cruise`.
pub fn speed_cap(kappa: f64, params: &VehicleParams, cruise: f64) -> f64 {
    if kappa.abs() < 1e-9 {
        return cruise;
    }
    match desired_speed(1.0 / kappa.abs(), params) {
        Ok(v) => v.min(cruise),
        Err(_) => cruise,
    }
}

/// Named coefficients of the lateral model at speed `vx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub a22: f64,
    pub a23: f64,
    pub a24: f64,
    pub a24p: f64,
    pub a42: f64,
    pub a42p: f64,
    pub a43: f64,
    pub a44: f64,
}

pub fn coefficient_block(vx: f64, c_af: f64, c_ar: f64, params: &VehicleParams) -> Result<Coefficients> {
    if !(vx > 0.0) {
        return Err(Error::domain(format!("longitudinal speed must be positive, got {vx}")));
    }
    let (m, iz, lf, lr) = (params.m, params.i_z, params.l_f, params.l_r);
    let a22 = -(2.0 * c_af + 2.0 * c_ar) / (m * vx);
    let a23 = -a22 * vx;
    let a24 = -1.0 - (2.0 * c_af * lf - 2.0 * c_ar * lr) / (m * vx * vx);
    let a24p = (a24 - 1.0) * vx;
    let a42 = -(2.0 * c_af * lf - 2.0 * c_ar * lr) / iz;
    let a42p = a42 / vx;
    let a43 = -a42;
    let a44 = -(2.0 * c_af * lf * lf + 2.0 * c_ar * lr * lr) / (iz * vx);
    Ok(Coefficients { a22, a23, a24, a24p, a42, a42p, a43, a44 })
}

/// Cornering-stiffness droop under lateral load transfer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiffnessModel {
    /// Quadratic droop coefficient.
    pub droop: f64,
    /// Lower bound as a fraction of nominal stiffness.
    pub floor: f64,
}

impl Default for StiffnessModel {
    fn default() -> Self {
        Self { droop: 0.6, floor: 0.5 }
    }
}

/// True per-tire cornering stiffness `(C_af, C_ar)` of the plant.
///
/// The overturning moment `m_s h_rc (a_y + g sin phi)` is carried across the
/// track; each axle takes a share proportional to its static load, so the
/// relative load transfer is identical front and rear.
pub fn plant_stiffness(roll: RollState, a_y: f64, params: &VehicleParams, model: &StiffnessModel) -> (f64, f64) {
    let p = params;
    let moment = p.m_s * p.h_rc * (a_y + p.g * p.sin_phi(roll.phi));
    let wb = p.wheelbase();
    let scale = |c0: f64, axle_share: f64| {
        let static_load = p.m * p.g * axle_share / 2.0;
        let transfer = moment * axle_share / p.track;
        let ratio = transfer / static_load;
        let factor = (1.0 - model.droop * ratio * ratio).clamp(model.floor, 1.0);
        c0 * factor
    };
    (scale(p.c_af0, p.l_r / wb), scale(p.c_ar0, p.l_f / wb))
}

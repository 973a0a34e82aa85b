//! Closed-loop simulation of the roll-coupled lateral plant.

pub mod road;

use nalgebra::{DVector, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::artifacts::{fmt_num, parse_num};
use crate::controller::longitudinal::{LongitudinalPd, PdGains, SpeedPlanner};
use crate::controller::{LtiBaseline, ScheduledController};
use crate::error::{Error, Result};
use crate::scheduling::{assemble_system, build_theta, SchedulingVector};
use crate::vehicle::{plant_stiffness, roll_derivative, LateralState, RollState, StiffnessModel, VehicleParams};

pub use road::{road_signals, RoadProfile, Segment};

/// Global pose of the CG.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

fn pose_rate(pose: &Pose, vx: f64, vy: f64, psi_dot: f64) -> Pose {
    Pose {
        x: vx * pose.psi.cos() - vy * pose.psi.sin(),
        y: vx * pose.psi.sin() + vy * pose.psi.cos(),
        psi: psi_dot,
    }
}

fn pose_axpy(p: &Pose, k: &Pose, h: f64) -> Pose {
    Pose { x: p.x + h * k.x, y: p.y + h * k.y, psi: p.psi + h * k.psi }
}

/// One RK4 step of the planar kinematics with body velocities held constant.
pub fn global_pose_update(pose: Pose, vx: f64, vy: f64, psi_dot: f64, dt: f64) -> Pose {
    let k1 = pose_rate(&pose, vx, vy, psi_dot);
    let k2 = pose_rate(&pose_axpy(&pose, &k1, 0.5 * dt), vx, vy, psi_dot);
    let k3 = pose_rate(&pose_axpy(&pose, &k2, 0.5 * dt), vx, vy, psi_dot);
    let k4 = pose_rate(&pose_axpy(&pose, &k3, dt), vx, vy, psi_dot);
    Pose {
        x: pose.x + dt / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        y: pose.y + dt / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
        psi: pose.psi + dt / 6.0 * (k1.psi + 2.0 * k2.psi + 2.0 * k3.psi + k4.psi),
    }
}

/// Lateral body velocity from the error states: the CG offset rate is
/// `e_y_dot + Vx (e_psiL - e_psi)` and the heading error relative to the road
/// is `-e_psi`.
pub fn lateral_velocity(x: &LateralState, vx: f64, e_psil_minus_e_psi: f64) -> f64 {
    let offset_rate = x.e_y_dot + vx * e_psil_minus_e_psi;
    (offset_rate + vx * x.e_psi.sin()) / x.e_psi.cos()
}

/// Lateral offset of the CG from the centre line.
pub fn cg_offset(x: &LateralState, look_ahead: f64) -> f64 {
    x.e_yl - look_ahead * x.e_psi
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerChoice {
    Lpv,
    Lti,
}

/// Gaussian measurement noise on the lateral states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub seed: u64,
    pub std: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Plant step (s).
    pub dt: f64,
    pub controller_period: f64,
    /// `None` runs to the end of the road (with a safety cap of 600 s).
    pub duration: Option<f64>,
    pub initial_speed: f64,
    pub controller: ControllerChoice,
    pub speed_control: bool,
    pub planner: SpeedPlanner,
    pub pd: PdGains,
    pub stiffness: StiffnessModel,
    pub noise: Option<NoiseConfig>,
    /// Roll angle that aborts the run (rad).
    pub rollover_limit: f64,
    /// Lateral offset treated as divergence (m).
    pub divergence_limit: f64,
    pub metrics: MetricsWindow,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.001,
            controller_period: 0.01,
            duration: None,
            initial_speed: 25.0,
            controller: ControllerChoice::Lpv,
            speed_control: true,
            planner: SpeedPlanner::default(),
            pd: PdGains::default(),
            stiffness: StiffnessModel::default(),
            noise: None,
            rollover_limit: 0.2,
            divergence_limit: 50.0,
            metrics: MetricsWindow::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.controller_period >= self.dt) {
            return Err(Error::Parameter("need dt > 0 and controller period >= dt".into()));
        }
        let ratio = self.controller_period / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Parameter("controller period must be a multiple of dt".into()));
        }
        if let Some(d) = self.duration {
            if !(d > 0.0) {
                return Err(Error::Parameter("duration must be positive".into()));
            }
        }
        if !(self.initial_speed > 0.0) {
            return Err(Error::Parameter("initial speed must be positive".into()));
        }
        Ok(())
    }
}

/// Steering law in the loop.
#[derive(Debug, Clone, Copy)]
pub enum SteeringLaw<'a> {
    Scheduled(&'a ScheduledController),
    Constant(&'a LtiBaseline),
}

impl SteeringLaw<'_> {
    pub fn choice(&self) -> ControllerChoice {
        match self {
            SteeringLaw::Scheduled(_) => ControllerChoice::Lpv,
            SteeringLaw::Constant(_) => ControllerChoice::Lti,
        }
    }
}

/// Samples at the controller rate; every series has the same length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimLog {
    pub t: Vec<f64>,
    pub lateral: Vec<LateralState>,
    pub roll: Vec<RollState>,
    pub vx: Vec<f64>,
    pub delta: Vec<f64>,
    pub ax: Vec<f64>,
    pub c_af: Vec<f64>,
    pub c_ar: Vec<f64>,
    /// Reduced coordinates (empty rows for the constant-gain law).
    pub eta: Vec<DVector<f64>>,
    pub xi: Vec<DVector<f64>>,
    pub out_of_hull: Vec<bool>,
    pub pose: Vec<Pose>,
    pub s: Vec<f64>,
    pub kappa: Vec<f64>,
    pub vx_ref: Vec<f64>,
}

impl SimLog {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn theta(&self, i: usize) -> Result<SchedulingVector> {
        build_theta(self.vx[i], self.c_af[i], self.c_ar[i])
    }

    pub fn lateral_offset(&self, look_ahead: f64) -> Vec<f64> {
        self.lateral.iter().map(|x| cg_offset(x, look_ahead)).collect()
    }

    fn xi_width(&self) -> usize {
        self.xi.first().map_or(0, |v| v.len())
    }

    pub fn header(&self) -> String {
        let mut cols: Vec<String> =
            ["t", "e_yL", "ey_dot", "e_psi", "psi_dot", "phi", "vx", "delta", "ax", "caf", "car"].map(String::from).to_vec();
        cols.extend((1..=self.xi_width()).map(|i| format!("xi{i}")));
        cols.extend(["oohull", "X", "Y", "psi", "s", "kappa", "vx_ref"].map(String::from));
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for i in 0..self.len() {
            let x = &self.lateral[i];
            let mut row: Vec<String> = [
                self.t[i],
                x.e_yl,
                x.e_y_dot,
                x.e_psi,
                x.psi_dot,
                self.roll[i].phi,
                self.vx[i],
                self.delta[i],
                self.ax[i],
                self.c_af[i],
                self.c_ar[i],
            ]
            .into_iter()
            .map(fmt_num)
            .collect();
            row.extend(self.xi[i].iter().map(|v| fmt_num(*v)));
            row.push(u8::from(self.out_of_hull[i]).to_string());
            let p = &self.pose[i];
            row.extend([p.x, p.y, p.psi, self.s[i], self.kappa[i], self.vx_ref[i]].map(fmt_num));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Reads a log written by [`SimLog::to_csv`]; roll rate and `eta` are not stored.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::parse("empty log"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let n_xi = cols.iter().filter(|c| c.starts_with("xi")).count();
        let mut expected = SimLog { xi: vec![DVector::zeros(n_xi)], ..Default::default() };
        expected.t.push(0.0);
        if header.trim() != expected.header() {
            return Err(Error::parse(format!("unexpected log header '{header}'")));
        }
        let mut log = SimLog::default();
        for (r, line) in lines.enumerate() {
            let v: Vec<f64> = line.split(',').map(|w| parse_num(w.trim())).collect::<Result<_>>()?;
            if v.len() != cols.len() {
                return Err(Error::parse(format!("log row {} has {} columns, expected {}", r + 2, v.len(), cols.len())));
            }
            log.t.push(v[0]);
            log.lateral.push(LateralState { e_yl: v[1], e_y_dot: v[2], e_psi: v[3], psi_dot: v[4] });
            log.roll.push(RollState { phi: v[5], phi_dot: f64::NAN });
            log.vx.push(v[6]);
            log.delta.push(v[7]);
            log.ax.push(v[8]);
            log.c_af.push(v[9]);
            log.c_ar.push(v[10]);
            log.xi.push(DVector::from_column_slice(&v[11..11 + n_xi]));
            log.eta.push(DVector::zeros(0));
            let k = 11 + n_xi;
            log.out_of_hull.push(v[k] != 0.0);
            log.pose.push(Pose { x: v[k + 1], y: v[k + 2], psi: v[k + 3] });
            log.s.push(v[k + 4]);
            log.kappa.push(v[k + 5]);
            log.vx_ref.push(v[k + 6]);
        }
        if log.is_empty() {
            return Err(Error::parse("log has no rows"));
        }
        Ok(log)
    }
}

/// Which samples count as steady cornering for the roll metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsWindow {
    /// Time after reaching peak curvature before samples count (s).
    pub settle: f64,
}

impl Default for MetricsWindow {
    fn default() -> Self {
        Self { settle: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub rms_ey: f64,
    pub max_abs_ey: f64,
    pub peak_abs_roll: f64,
    /// Mean `|phi|` on the constant-curvature part after the settling time.
    pub steady_abs_roll: f64,
    /// `int delta^2 dt`.
    pub steering_effort: f64,
    pub out_of_hull_fraction: f64,
    pub speed_rms: f64,
    pub duration: f64,
    /// The roll limit was exceeded and the run stopped early.
    pub aborted: bool,
}

impl Metrics {
    pub fn pairs(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("rms_ey", self.rms_ey),
            ("max_abs_ey", self.max_abs_ey),
            ("peak_abs_roll", self.peak_abs_roll),
            ("steady_abs_roll", self.steady_abs_roll),
            ("steering_effort", self.steering_effort),
            ("out_of_hull_fraction", self.out_of_hull_fraction),
            ("speed_rms", self.speed_rms),
            ("duration", self.duration),
            ("aborted", f64::from(u8::from(self.aborted))),
        ]
    }

    pub fn to_text(&self) -> String {
        crate::artifacts::key_values_text(&self.pairs())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = crate::artifacts::parse_key_values(text)?;
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| Error::parse(format!("metrics missing '{k}'")));
        Ok(Self {
            rms_ey: get("rms_ey")?,
            max_abs_ey: get("max_abs_ey")?,
            peak_abs_roll: get("peak_abs_roll")?,
            steady_abs_roll: get("steady_abs_roll")?,
            steering_effort: get("steering_effort")?,
            out_of_hull_fraction: get("out_of_hull_fraction")?,
            speed_rms: get("speed_rms")?,
            duration: get("duration")?,
            aborted: get("aborted")? != 0.0,
        })
    }
}

/// Summary statistics of a log; `e_y` is the CG offset for `look_ahead`.
pub fn compute_metrics(log: &SimLog, look_ahead: f64, window: &MetricsWindow) -> Result<Metrics> {
    if log.is_empty() {
        return Err(Error::domain("empty simulation log"));
    }
    let n = log.len() as f64;
    let ey = log.lateral_offset(look_ahead);
    let rms_ey = (ey.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let max_abs_ey = ey.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let peak_abs_roll = log.roll.iter().map(|r| r.phi.abs()).fold(0.0, f64::max);
    let dt = if log.len() > 1 { log.t[1] - log.t[0] } else { 0.0 };
    let steering_effort = log.delta.iter().map(|d| d * d * dt).sum();
    let out_of_hull_fraction = log.out_of_hull.iter().filter(|b| **b).count() as f64 / n;
    let speed_rms = (log.vx.iter().zip(&log.vx_ref).map(|(v, r)| (v - r).powi(2)).sum::<f64>() / n).sqrt();

    let peak_kappa = log.kappa.iter().map(|k| k.abs()).fold(0.0, f64::max);
    let mut entered: Option<f64> = None;
    let mut steady = Vec::new();
    for i in 0..log.len() {
        if peak_kappa > 0.0 && (log.kappa[i].abs() - peak_kappa).abs() <= 1e-12 * peak_kappa.max(1.0) {
            let t0 = *entered.get_or_insert(log.t[i]);
            if log.t[i] - t0 >= window.settle {
                steady.push(log.roll[i].phi.abs());
            }
        } else {
            entered = None;
        }
    }
    let steady_abs_roll = if steady.is_empty() { 0.0 } else { steady.iter().sum::<f64>() / steady.len() as f64 };
    Ok(Metrics {
        rms_ey,
        max_abs_ey,
        peak_abs_roll,
        steady_abs_roll,
        steering_effort,
        out_of_hull_fraction,
        speed_rms,
        duration: log.t.last().copied().unwrap_or(0.0) - log.t[0],
        aborted: false,
    })
}

/// Full plant state integrated by RK4.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct PlantState {
    lateral: Vector4<f64>,
    roll: RollState,
    vx: f64,
    s: f64,
    pose: Pose,
}

impl PlantState {
    fn axpy(&self, k: &PlantState, h: f64) -> PlantState {
        PlantState {
            lateral: self.lateral + k.lateral * h,
            roll: RollState { phi: self.roll.phi + h * k.roll.phi, phi_dot: self.roll.phi_dot + h * k.roll.phi_dot },
            vx: self.vx + h * k.vx,
            s: self.s + h * k.s,
            pose: pose_axpy(&self.pose, &k.pose, h),
        }
    }

    fn is_finite(&self) -> bool {
        self.lateral.iter().all(|v| v.is_finite())
            && self.roll.phi.is_finite()
            && self.roll.phi_dot.is_finite()
            && self.vx.is_finite()
            && self.s.is_finite()
    }
}

struct Inputs {
    delta: f64,
    a_x: f64,
    c_af: f64,
    c_ar: f64,
}

/// Derivative and lateral acceleration.
fn plant_rate(
    st: &PlantState,
    u: &Inputs,
    road: &RoadProfile,
    params: &VehicleParams,
) -> Result<(PlantState, f64)> {
    let theta = build_theta(st.vx, u.c_af, u.c_ar)?;
    let sys = assemble_system(&theta, params);
    let (sig, _) = road_signals(road, st.s, st.vx, params.look_ahead);
    let phi = nalgebra::Vector2::new(sig.psi_dot_des, sig.e_psil_minus_e_psi);
    let dl = sys.a * st.lateral + sys.b * u.delta + sys.b_phi * phi;
    let a_y = st.vx * st.lateral[3] + dl[1];
    let x = LateralState::from_vector(&st.lateral);
    let vy = lateral_velocity(&x, st.vx, sig.e_psil_minus_e_psi);
    Ok((
        PlantState {
            lateral: dl,
            roll: RollState { phi: st.roll.phi_dot, phi_dot: roll_derivative(st.roll, a_y, params) },
            vx: u.a_x,
            s: st.vx,
            pose: pose_rate(&st.pose, st.vx, vy, st.lateral[3]),
        },
        a_y,
    ))
}

/// Closed-loop run on `road`. The plant uses the true, roll-dependent
/// stiffness; the controller sees the true states (plus optional noise) every
/// `controller_period` and holds its outputs in between.
pub fn run(road: &RoadProfile, cfg: &SimConfig, params: &VehicleParams, law: SteeringLaw<'_>) -> Result<(SimLog, Metrics)> {
    cfg.validate()?;
    params.validate()?;
    let per = (cfg.controller_period / cfg.dt).round() as usize;
    let max_time = cfg.duration.unwrap_or(600.0);
    let steps = (max_time / cfg.dt).round() as usize;

    let mut st = PlantState { vx: cfg.initial_speed, ..Default::default() };
    let mut a_y = 0.0;
    let mut pd = LongitudinalPd::new(cfg.pd);
    let mut noise = cfg.noise.map(|n| (ChaCha8Rng::seed_from_u64(n.seed), n.std));
    let mut log = SimLog::default();
    let mut u = Inputs { delta: 0.0, a_x: 0.0, c_af: params.c_af0, c_ar: params.c_ar0 };
    let mut aborted = false;
    let mut last_good = 0.0;

    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        if cfg.duration.is_none() && st.s > road.length() {
            break;
        }
        let (c_af, c_ar) = plant_stiffness(st.roll, a_y, params, &cfg.stiffness);
        u.c_af = c_af;
        u.c_ar = c_ar;

        if k % per == 0 {
            let mut x = LateralState::from_vector(&st.lateral);
            if let Some((rng, std)) = noise.as_mut() {
                let mut v = x.to_vector();
                for (i, s) in std.iter().enumerate() {
                    if *s > 0.0 {
                        v[i] += Normal::new(0.0, *s).map_err(|e| Error::Parameter(e.to_string()))?.sample(rng);
                    }
                }
                x = LateralState::from_vector(&v);
            }
            let theta = build_theta(st.vx, c_af, c_ar).map_err(|e| Error::Numerical {
                message: format!("speed left the model domain: {e}"),
                last_good_time: last_good,
            })?;
            let (delta, eta, xi, out) = match law {
                SteeringLaw::Scheduled(c) => {
                    let o = c.control(&x, &theta)?;
                    let eta = crate::scheduling::reduce_point(&theta, &c.reduction);
                    (o.delta, eta, o.xi, o.out_of_hull)
                }
                SteeringLaw::Constant(b) => (b.control(&x), DVector::zeros(0), DVector::zeros(0), false),
            };
            let vx_ref = if cfg.speed_control { cfg.planner.reference(road, st.s, params) } else { cfg.initial_speed };
            u.delta = delta;
            u.a_x = pd.command(st.vx, vx_ref, cfg.controller_period);

            log.t.push(t);
            log.lateral.push(LateralState::from_vector(&st.lateral));
            log.roll.push(st.roll);
            log.vx.push(st.vx);
            log.delta.push(delta);
            log.ax.push(u.a_x);
            log.c_af.push(c_af);
            log.c_ar.push(c_ar);
            log.eta.push(eta);
            log.xi.push(xi);
            log.out_of_hull.push(out);
            log.pose.push(st.pose);
            log.s.push(st.s);
            log.kappa.push(road.curvature(st.s));
            log.vx_ref.push(vx_ref);
        }

        let (k1, ay1) = plant_rate(&st, &u, road, params)?;
        let (k2, _) = plant_rate(&st.axpy(&k1, 0.5 * cfg.dt), &u, road, params)?;
        let (k3, _) = plant_rate(&st.axpy(&k2, 0.5 * cfg.dt), &u, road, params)?;
        let (k4, _) = plant_rate(&st.axpy(&k3, cfg.dt), &u, road, params)?;
        let mut next = st;
        next = next.axpy(&k1, cfg.dt / 6.0);
        next = next.axpy(&k2, cfg.dt / 3.0);
        next = next.axpy(&k3, cfg.dt / 3.0);
        next = next.axpy(&k4, cfg.dt / 6.0);
        a_y = ay1;

        if !next.is_finite() || cg_offset(&LateralState::from_vector(&next.lateral), params.look_ahead).abs() > cfg.divergence_limit {
            return Err(Error::Numerical { message: "plant state diverged".into(), last_good_time: last_good });
        }
        st = next;
        last_good = t + cfg.dt;
        if st.roll.phi.abs() > cfg.rollover_limit {
            aborted = true;
            break;
        }
    }
    let mut metrics = compute_metrics(&log, params.look_ahead, &cfg.metrics)?;
    metrics.aborted = aborted;
    Ok((log, metrics))
}

/// Row-aligned comparison of two runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub metric: &'static str,
    pub baseline: f64,
    pub candidate: f64,
    /// `100 (baseline - candidate) / baseline`; zero when both are zero.
    pub reduction_pct: f64,
}

impl Comparison {
    pub fn get(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<22} {:>14} {:>14} {:>11}\n", "metric", "baseline", "candidate", "reduction%");
        for r in &self.rows {
            s.push_str(&format!("{:<22} {:>14.6e} {:>14.6e} {:>11.2}\n", r.metric, r.baseline, r.candidate, r.reduction_pct));
        }
        s
    }
}

pub fn percent_reduction(baseline: f64, candidate: f64) -> f64 {
    if baseline == 0.0 {
        if candidate == 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        100.0 * (baseline - candidate) / baseline
    }
}

/// Compares two logs over their common time span; the time bases must agree.
pub fn compare_logs(baseline: &SimLog, candidate: &SimLog, look_ahead: f64, window: &MetricsWindow) -> Result<Comparison> {
    if baseline.is_empty() || candidate.is_empty() {
        return Err(Error::domain("cannot compare empty logs"));
    }
    let n = baseline.len().min(candidate.len());
    for i in [0, 1.min(n - 1), n - 1] {
        if (baseline.t[i] - candidate.t[i]).abs() > 1e-9 {
            return Err(Error::domain(format!("time bases differ at row {i}")));
        }
    }
    let mb = compute_metrics(baseline, look_ahead, window)?;
    let mc = compute_metrics(candidate, look_ahead, window)?;
    let rows = mb
        .pairs()
        .into_iter()
        .zip(mc.pairs())
        .filter(|((k, _), _)| *k != "aborted" && *k != "duration")
        .map(|((metric, b), (_, c))| ComparisonRow { metric, baseline: b, candidate: c, reduction_pct: percent_reduction(b, c) })
        .collect();
    Ok(Comparison { rows })
}

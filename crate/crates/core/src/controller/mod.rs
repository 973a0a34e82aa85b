//! Vertex gain synthesis, the robust-stability certificate and the online
//! gain-scheduled steering law.

pub mod longitudinal;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix4, RowVector4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::artifacts::{self, fmt_num, KeyedText};
use crate::error::{Error, Result};
use crate::lmi::{eig_extreme, solve, LmiProblem, Sense, SolveOptions, VarId};
use crate::polytope::{combine_systems, convex_coordinates, Polytope};
use crate::scheduling::{assemble_system, build_theta, reduce_point, LpvSystem, PcaReduction, SchedulingVector};
use crate::vehicle::{LateralState, VehicleParams};

/// Which block sits in the lower-right corner of the certificate LMI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplierBlock {
    /// `-tau I`, the S-procedure multiplier.
    Tau,
    /// `-gamma I`, with `tau` only scaling the `gamma^2 I` term.
    Gamma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    /// Decay rate of `V = x^T P x` (1/s).
    pub alpha: f64,
    /// Perturbation bound; `None` estimates it from the training data.
    pub gamma: Option<f64>,
    /// Bound on `|K^[p]|`, enforced through `[[-cap^2, M], [M^T, -Y]] <= 0`.
    pub gain_cap: Option<f64>,
    pub margin_scale: f64,
    pub multiplier: MultiplierBlock,
    /// Iterations per solver start.
    pub budget: usize,
    /// Times `alpha` is halved when the capped problem has no solution.
    pub alpha_halvings: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma: None,
            gain_cap: Some(1.0),
            margin_scale: 1e-7,
            multiplier: MultiplierBlock::Tau,
            budget: 20_000,
            alpha_halvings: 2,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Parameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        if let Some(g) = self.gamma {
            if !(g >= 0.0) {
                return Err(Error::Parameter(format!("gamma must be non-negative, got {g}")));
            }
        }
        if let Some(c) = self.gain_cap {
            if !(c > 0.0) {
                return Err(Error::Parameter(format!("gain cap must be positive, got {c}")));
            }
        }
        if !(self.margin_scale > 0.0) || self.budget == 0 {
            return Err(Error::Parameter("margin scale and budget must be positive".into()));
        }
        Ok(())
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions { budget: self.budget, ..SolveOptions::default() }
    }
}

/// Gains from the dual stabilisation LMI.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexGains {
    pub gains: Vec<RowVector4<f64>>,
    /// Shared `Y = P^{-1}` of the design problem.
    pub y: Matrix4<f64>,
    /// Decay rate actually achieved (lower than requested after halving).
    pub alpha: f64,
    pub iterations: usize,
}

impl VertexGains {
    pub fn max_gain_norm(&self) -> f64 {
        self.gains.iter().map(|k| k.norm()).fold(0.0, f64::max)
    }
}

fn dm4(m: &Matrix4<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(4, 4, m.as_slice())
}

fn dv4(v: &Vector4<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(4, 1, v.as_slice())
}

fn to_matrix4(m: &DMatrix<f64>) -> Matrix4<f64> {
    Matrix4::from_column_slice(m.as_slice())
}

/// Number of certificate constraints for `n` vertices: every `p <= q`.
pub fn pair_count(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Vertex pairs `p <= q` in the order the constraints are built.
pub fn vertex_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|p| (p..n).map(move |q| (p, q))).collect()
}

struct DesignProblem {
    problem: LmiProblem,
    y: VarId,
    m: Vec<VarId>,
}

fn design_problem(systems: &[LpvSystem], alpha: f64, cap: Option<f64>, margin_scale: f64) -> Result<DesignProblem> {
    let mut problem = LmiProblem::new();
    problem.margin_scale = margin_scale;
    let y = problem.add_symmetric("Y", 4);
    let m: Vec<VarId> = (0..systems.len()).map(|p| problem.add_matrix(&format!("M{p}"), 1, 4)).collect();
    let eye = DMatrix::<f64>::identity(4, 4);
    problem.add_constraint("Y>=I", Sense::PosDef, |v| v.get(y) - &eye)?;

    let psi = |p: usize, q: usize, v: &crate::lmi::Values| {
        let a = dm4(&systems[p].a);
        let b = dv4(&systems[p].b);
        let ym = v.get(y);
        let bm = &b * v.get(m[q]);
        &a * ym + ym * a.transpose() + &bm + bm.transpose() + ym * alpha
    };
    for (p, q) in vertex_pairs(systems.len()) {
        let name = format!("decay[{p},{q}]");
        if p == q {
            problem.add_constraint(&name, Sense::NegDef, |v| psi(p, p, v))?;
        } else {
            problem.add_constraint(&name, Sense::NegDef, |v| psi(p, q, v) + psi(q, p, v))?;
        }
    }
    if let Some(cap) = cap {
        for (q, &mq) in m.iter().enumerate() {
            problem.add_constraint(&format!("cap[{q}]"), Sense::NegDef, |v| {
                let mut blk = DMatrix::zeros(5, 5);
                blk[(0, 0)] = -cap * cap;
                blk.view_mut((0, 1), (1, 4)).copy_from(v.get(mq));
                blk.view_mut((1, 0), (4, 1)).copy_from(&v.get(mq).transpose());
                blk.view_mut((1, 1), (4, 4)).copy_from(&(-v.get(y)));
                blk
            })?;
        }
    }
    Ok(DesignProblem { problem, y, m })
}

fn try_design(systems: &[LpvSystem], alpha: f64, cap: Option<f64>, cfg: &SynthesisConfig) -> Result<std::result::Result<VertexGains, f64>> {
    let dp = design_problem(systems, alpha, cap, cfg.margin_scale)?;
    let sol = solve(&dp.problem, &cfg.solve_options());
    if !sol.is_feasible() {
        let worst = worst_violation(&dp.problem, &sol.extremes);
        return Ok(Err(worst));
    }
    let vals = dp.problem.values(&sol.x);
    let y = to_matrix4(vals.get(dp.y));
    let y_inv = y.try_inverse().ok_or_else(|| Error::Synthesis { message: "Y is singular".into(), worst_margin: 0.0 })?;
    let gains = dp
        .m
        .iter()
        .map(|&id| RowVector4::from_row_slice(vals.get(id).as_slice()) * y_inv)
        .collect();
    Ok(Ok(VertexGains { gains, y, alpha, iterations: sol.iterations }))
}

/// Largest signed violation `lambda + margin` (negative when satisfied).
fn worst_violation(problem: &LmiProblem, extremes: &[f64]) -> f64 {
    extremes
        .iter()
        .enumerate()
        .map(|(i, &e)| match problem.constraints[i].sense {
            Sense::NegDef => e + problem.margin(i),
            Sense::PosDef => problem.margin(i) - e,
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Common `Y` and per-vertex `M_p` with
/// `A_p Y + Y A_p^T + B_p M_q + M_q^T B_p^T + alpha Y < 0` (cross terms summed
/// for `p < q`); `K_p = M_p Y^{-1}` and `delta = K x`.
///
/// The uncapped problem is solved first; if a gain exceeds the cap the problem
/// is re-solved with the cap constraint, halving `alpha` on failure.
pub fn synthesize_vertex_gains(systems: &[LpvSystem], cfg: &SynthesisConfig) -> Result<VertexGains> {
    cfg.validate()?;
    if systems.is_empty() {
        return Err(Error::domain("no vertex systems"));
    }
    let free = try_design(systems, cfg.alpha, None, cfg)?;
    let worst = match (free, cfg.gain_cap) {
        (Ok(g), None) => return Ok(g),
        (Ok(g), Some(cap)) if g.max_gain_norm() <= cap => return Ok(g),
        (Ok(_), Some(_)) => f64::NAN,
        (Err(w), _) => w,
    };
    let Some(cap) = cfg.gain_cap else {
        return Err(Error::Synthesis {
            message: format!("no stabilising gains found at alpha = {}", cfg.alpha),
            worst_margin: worst,
        });
    };
    let mut alpha = cfg.alpha;
    let mut last = worst;
    for _ in 0..=cfg.alpha_halvings {
        match try_design(systems, alpha, Some(cap), cfg)? {
            Ok(g) => return Ok(g),
            Err(w) => last = w,
        }
        alpha *= 0.5;
    }
    Err(Error::Synthesis {
        message: format!("no gains within |K| <= {cap} found for alpha down to {}", alpha * 2.0),
        worst_margin: last,
    })
}

/// Margin of one certificate constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMargin {
    pub p: usize,
    pub q: usize,
    /// Largest eigenvalue of `Phi_pp` or `Phi_pq + Phi_qp`.
    pub max_eig: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub p: Matrix4<f64>,
    pub tau: f64,
    pub margins: Vec<PairMargin>,
    /// Required margin on every pair constraint.
    pub required: f64,
}

impl Certificate {
    pub fn worst(&self) -> PairMargin {
        *self.margins.iter().max_by(|a, b| a.max_eig.total_cmp(&b.max_eig)).expect("at least one pair")
    }
}

/// `Phi_pq` for a given `P` and `tau`.
pub fn phi_block(
    sys: &LpvSystem,
    gain: &RowVector4<f64>,
    p: &DMatrix<f64>,
    tau: f64,
    alpha: f64,
    gamma: f64,
    multiplier: MultiplierBlock,
) -> DMatrix<f64> {
    let at = dm4(&sys.closed_loop(gain));
    let eye = DMatrix::<f64>::identity(4, 4);
    let mut blk = DMatrix::zeros(8, 8);
    let top = at.transpose() * p + p * &at + p * alpha + &eye * (tau * gamma * gamma);
    blk.view_mut((0, 0), (4, 4)).copy_from(&top);
    blk.view_mut((0, 4), (4, 4)).copy_from(p);
    blk.view_mut((4, 0), (4, 4)).copy_from(p);
    let corner = match multiplier {
        MultiplierBlock::Tau => -tau,
        MultiplierBlock::Gamma => -gamma,
    };
    blk.view_mut((4, 4), (4, 4)).copy_from(&(&eye * corner));
    blk
}

/// Pair constraint `Phi_pp` or `Phi_pq + Phi_qp`, with `A~_pq = A_p + B_p K_q`.
pub fn pair_matrix(
    systems: &[LpvSystem],
    gains: &[RowVector4<f64>],
    (p, q): (usize, usize),
    pm: &DMatrix<f64>,
    tau: f64,
    alpha: f64,
    gamma: f64,
    multiplier: MultiplierBlock,
) -> DMatrix<f64> {
    let a = phi_block(&systems[p], &gains[q], pm, tau, alpha, gamma, multiplier);
    if p == q {
        a
    } else {
        a + phi_block(&systems[q], &gains[p], pm, tau, alpha, gamma, multiplier)
    }
}

/// Searches for `P >= I` and `tau >= 0` making every pair constraint negative
/// definite. Failure names the worst pair.
pub fn verify_certificate(
    systems: &[LpvSystem],
    gains: &[RowVector4<f64>],
    alpha: f64,
    gamma: f64,
    cfg: &SynthesisConfig,
) -> Result<Certificate> {
    if systems.len() != gains.len() || systems.is_empty() {
        return Err(Error::domain(format!("{} systems but {} gains", systems.len(), gains.len())));
    }
    if !(alpha > 0.0) || !(gamma >= 0.0) {
        return Err(Error::Parameter(format!("need alpha > 0 and gamma >= 0, got {alpha}, {gamma}")));
    }
    let mut problem = LmiProblem::new();
    problem.margin_scale = cfg.margin_scale;
    let pv = problem.add_symmetric("P", 4);
    let tv = problem.add_scalar("tau");
    let eye = DMatrix::<f64>::identity(4, 4);
    problem.add_constraint("P>=I", Sense::PosDef, |v| v.get(pv) - &eye)?;
    problem.add_constraint("tau>=0", Sense::PosDef, |v| DMatrix::from_element(1, 1, v.scalar(tv)))?;
    let pairs = vertex_pairs(systems.len());
    for &(p, q) in &pairs {
        problem.add_constraint(&format!("phi[{p},{q}]"), Sense::NegDef, |v| {
            pair_matrix(systems, gains, (p, q), v.get(pv), v.scalar(tv), alpha, gamma, cfg.multiplier)
        })?;
    }
    let sol = solve(&problem, &cfg.solve_options());
    let margins: Vec<PairMargin> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(p, q))| PairMargin { p, q, max_eig: sol.extremes[i + 2] })
        .collect();
    let vals = problem.values(&sol.x);
    let required = (2..problem.constraints.len()).map(|i| problem.margin(i)).fold(0.0, f64::max);
    if !sol.is_feasible() {
        let worst = margins.iter().max_by(|a, b| a.max_eig.total_cmp(&b.max_eig)).copied().expect("pairs");
        return Err(Error::Synthesis {
            message: format!(
                "certificate not found after {} iterations; worst pair ({}, {}) has max eigenvalue {:.3e}",
                sol.iterations, worst.p, worst.q, worst.max_eig
            ),
            worst_margin: worst.max_eig,
        });
    }
    Ok(Certificate { p: to_matrix4(vals.get(pv)), tau: vals.scalar(tv), margins, required })
}

/// `K(xi) = sum_p xi_p K^[p]`.
pub fn blend_gains(gains: &[RowVector4<f64>], xi: &DVector<f64>) -> RowVector4<f64> {
    gains.iter().zip(xi.iter()).fold(RowVector4::zeros(), |acc, (k, w)| acc + k * *w)
}

/// 99th percentile of `|(dA + dB K) x| / |x|` between the true and the
/// polytopic model over training samples and random directions, times 1.25.
pub fn estimate_gamma(
    samples: &[SchedulingVector],
    reduction: &PcaReduction,
    poly: &Polytope,
    gains: &[RowVector4<f64>],
    params: &VehicleParams,
    max_samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("no samples for the perturbation bound"));
    }
    let stride = samples.len().div_ceil(max_samples.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::new();
    for theta in samples.iter().step_by(stride) {
        let truth = assemble_system(theta, params);
        let xi = convex_coordinates(poly, &reduce_point(theta, reduction))?.xi;
        let model = combine_systems(poly, &xi);
        let k = blend_gains(gains, &xi);
        let delta = (truth.a - model.a) + (truth.b - model.b) * k;
        for _ in 0..4 {
            let x = Vector4::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let x: Vector4<f64> = x.normalize();
            ratios.push((delta * x).norm());
        }
    }
    ratios.sort_by(f64::total_cmp);
    let idx = ((0.99 * ratios.len() as f64).ceil() as usize).clamp(1, ratios.len()) - 1;
    Ok(1.25 * ratios[idx])
}

/// Synthesised gains with their certificate and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub gains: Vec<RowVector4<f64>>,
    pub y: Matrix4<f64>,
    pub alpha: f64,
    pub gamma: f64,
    pub multiplier: MultiplierBlock,
    pub certificate: Certificate,
    /// Hash of the reduction and polytope the gains belong to.
    pub provenance: String,
}

impl SynthesisResult {
    pub fn to_text(&self) -> String {
        let mut s = String::from("# vertex gains, steering delta = +K x, x = [e_yL, e_y_dot, e_psi, psi_dot]\n");
        let _ = writeln!(s, "provenance {}", self.provenance);
        let _ = writeln!(s, "alpha {}", fmt_num(self.alpha));
        let _ = writeln!(s, "gamma {}", fmt_num(self.gamma));
        let mult = match self.multiplier {
            MultiplierBlock::Tau => "tau",
            MultiplierBlock::Gamma => "gamma",
        };
        let _ = writeln!(s, "multiplier {mult}");
        for (p, k) in self.gains.iter().enumerate() {
            let _ = writeln!(s, "gain {p} {}", artifacts::gain_line(k));
        }
        let _ = writeln!(s, "y {}", artifacts::matrix4_line(&self.y));
        let _ = writeln!(s, "p {}", artifacts::matrix4_line(&self.certificate.p));
        let _ = writeln!(s, "tau {}", fmt_num(self.certificate.tau));
        let _ = writeln!(s, "required_margin {}", fmt_num(self.certificate.required));
        for m in &self.certificate.margins {
            let _ = writeln!(s, "margin {} {} {}", m.p, m.q, fmt_num(m.max_eig));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyedText::parse(text);
        let multiplier = match kv.word("multiplier")? {
            "tau" => MultiplierBlock::Tau,
            "gamma" => MultiplierBlock::Gamma,
            other => return Err(Error::parse(format!("unknown multiplier '{other}'"))),
        };
        let mut gains = Vec::new();
        for (i, words) in kv.all("gain").enumerate() {
            if words.first().map(String::as_str) != Some(i.to_string().as_str()) {
                return Err(Error::parse("gain lines must be numbered 0, 1, ..."));
            }
            gains.push(artifacts::parse_gain(&words[1..], "gain")?);
        }
        if gains.is_empty() {
            return Err(Error::parse("no gains"));
        }
        let margins = kv
            .all("margin")
            .map(|w| {
                if w.len() != 3 {
                    return Err(Error::parse("margin lines need p q value"));
                }
                Ok(PairMargin { p: artifacts::parse_num(&w[0])?, q: artifacts::parse_num(&w[1])?, max_eig: artifacts::parse_num(&w[2])? })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gains,
            y: artifacts::parse_matrix4(kv.get("y")?, "y")?,
            alpha: kv.number("alpha")?,
            gamma: kv.number("gamma")?,
            multiplier,
            certificate: Certificate {
                p: artifacts::parse_matrix4(kv.get("p")?, "p")?,
                tau: kv.number("tau")?,
                margins,
                required: kv.number("required_margin")?,
            },
            provenance: kv.word("provenance")?.to_string(),
        })
    }
}

/// Designs vertex gains for `poly`, estimates `gamma` when not given, and
/// verifies the certificate.
pub fn synthesize(
    reduction: &PcaReduction,
    poly: &Polytope,
    samples: &[SchedulingVector],
    params: &VehicleParams,
    cfg: &SynthesisConfig,
) -> Result<SynthesisResult> {
    let design = synthesize_vertex_gains(&poly.vertex_systems, cfg)?;
    let gamma = match cfg.gamma {
        Some(g) => g,
        None => estimate_gamma(samples, reduction, poly, &design.gains, params, 4000, 7)?,
    };
    let certificate = verify_certificate(&poly.vertex_systems, &design.gains, design.alpha, gamma, cfg)?;
    Ok(SynthesisResult {
        gains: design.gains,
        y: design.y,
        alpha: design.alpha,
        gamma,
        multiplier: cfg.multiplier,
        certificate,
        provenance: artifacts::provenance_hash(reduction, poly),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub delta: f64,
    pub xi: DVector<f64>,
    pub out_of_hull: bool,
}

/// Online law `delta = (sum_p xi_p K^[p]) x`, saturated.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledController {
    pub reduction: PcaReduction,
    pub poly: Polytope,
    pub gains: Vec<RowVector4<f64>>,
    pub delta_max: f64,
}

impl ScheduledController {
    /// Rejects gains designed on a different reduction or polytope.
    pub fn new(reduction: PcaReduction, poly: Polytope, result: &SynthesisResult, delta_max: f64) -> Result<Self> {
        let hash = artifacts::provenance_hash(&reduction, &poly);
        if hash != result.provenance {
            return Err(Error::Config(format!(
                "gains were designed for artifacts {} but the loaded reduction/polytope hash to {hash}",
                result.provenance
            )));
        }
        if result.gains.len() != poly.vertex_count() {
            return Err(Error::Config(format!("{} gains for {} vertices", result.gains.len(), poly.vertex_count())));
        }
        Ok(Self { reduction, poly, gains: result.gains.clone(), delta_max })
    }

    pub fn control(&self, x: &LateralState, theta: &SchedulingVector) -> Result<ControlOutput> {
        let member = convex_coordinates(&self.poly, &reduce_point(theta, &self.reduction))?;
        let k = blend_gains(&self.gains, &member.xi);
        let delta = (k * x.to_vector())[0].clamp(-self.delta_max, self.delta_max);
        Ok(ControlOutput { delta, xi: member.xi, out_of_hull: member.out_of_hull })
    }
}

/// Free-function form of [`ScheduledController::control`].
pub fn scheduled_control(
    x: &LateralState,
    theta: &SchedulingVector,
    reduction: &PcaReduction,
    poly: &Polytope,
    gains: &[RowVector4<f64>],
    delta_max: f64,
) -> Result<f64> {
    let member = convex_coordinates(poly, &reduce_point(theta, reduction))?;
    Ok((blend_gains(gains, &member.xi) * x.to_vector())[0].clamp(-delta_max, delta_max))
}

/// 50 km/h.
pub const LTI_DESIGN_SPEED: f64 = 50.0 / 3.6;

/// Constant-gain baseline designed on one frozen system.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiBaseline {
    pub gain: RowVector4<f64>,
    pub design_speed: f64,
    pub c_af: f64,
    pub c_ar: f64,
    pub alpha: f64,
    pub delta_max: f64,
}

impl LtiBaseline {
    pub fn system(&self, params: &VehicleParams) -> Result<LpvSystem> {
        Ok(assemble_system(&build_theta(self.design_speed, self.c_af, self.c_ar)?, params))
    }

    pub fn control(&self, x: &LateralState) -> f64 {
        (self.gain * x.to_vector())[0].clamp(-self.delta_max, self.delta_max)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# constant gain, steering delta = +K x\n");
        let _ = writeln!(s, "gain {}", artifacts::gain_line(&self.gain));
        let _ = writeln!(s, "design_speed {}", fmt_num(self.design_speed));
        let _ = writeln!(s, "c_af {}", fmt_num(self.c_af));
        let _ = writeln!(s, "c_ar {}", fmt_num(self.c_ar));
        let _ = writeln!(s, "alpha {}", fmt_num(self.alpha));
        let _ = writeln!(s, "delta_max {}", fmt_num(self.delta_max));
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyedText::parse(text);
        Ok(Self {
            gain: artifacts::parse_gain(kv.get("gain")?, "gain")?,
            design_speed: kv.number("design_speed")?,
            c_af: kv.number("c_af")?,
            c_ar: kv.number("c_ar")?,
            alpha: kv.number("alpha")?,
            delta_max: kv.number("delta_max")?,
        })
    }
}

/// Baseline gain for `build_theta(design_speed, c_af, c_ar)` using the same
/// design LMI as the vertex gains.
pub fn lti_gain(
    params: &VehicleParams,
    design_speed: f64,
    (c_af, c_ar): (f64, f64),
    cfg: &SynthesisConfig,
    delta_max: f64,
) -> Result<LtiBaseline> {
    let sys = assemble_system(&build_theta(design_speed, c_af, c_ar)?, params);
    let design = synthesize_vertex_gains(&[sys], cfg)?;
    Ok(LtiBaseline { gain: design.gains[0], design_speed, c_af, c_ar, alpha: design.alpha, delta_max })
}

/// Largest real part of the eigenvalues of `m`.
pub fn spectral_abscissa(m: &Matrix4<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max)
}

/// `true` if `lambda_max(m) <= -margin` by the independent eigenvalue routine.
pub fn negdef_with_margin(m: &DMatrix<f64>, margin: f64) -> Result<bool> {
    Ok(eig_extreme(m)?.1 <= -margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn chain() -> LpvSystem {
        let mut a = Matrix4::zeros();
        a[(0, 1)] = 1.0;
        a[(1, 2)] = 1.0;
        a[(2, 3)] = 1.0;
        LpvSystem { a, b: Vector4::new(0.0, 0.0, 0.0, 1.0), b_phi: Default::default() }
    }

    fn vehicle_pair() -> Vec<LpvSystem> {
        let p = VehicleParams::default();
        vec![
            assemble_system(&build_theta(12.0, 60000.0, 60000.0).unwrap(), &p),
            assemble_system(&build_theta(20.0, 50000.0, 50000.0).unwrap(), &p),
        ]
    }

    fn rk4(a: &Matrix4<f64>, x: Vector4<f64>, h: f64) -> Vector4<f64> {
        let k1 = a * x;
        let k2 = a * (x + k1 * (0.5 * h));
        let k3 = a * (x + k2 * (0.5 * h));
        let k4 = a * (x + k3 * h);
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }

    #[test]
    fn pair_counts() {
        assert_eq!(pair_count(4), 10);
        assert_eq!(vertex_pairs(3), vec![(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]);
    }

    #[test]
    fn integrator_chain_gets_requested_decay() {
        let cfg = SynthesisConfig { alpha: 1.0, gain_cap: None, ..Default::default() };
        let g = synthesize_vertex_gains(&[chain()], &cfg).unwrap();
        let cl = chain().closed_loop(&g.gains[0]);
        // V decays at alpha, so the state decays at alpha / 2
        assert!(spectral_abscissa(&cl) <= -0.5 * cfg.alpha + 1e-9);
    }

    #[test]
    fn huge_alpha_fails_cleanly() {
        let cfg = SynthesisConfig { alpha: 1000.0, budget: 2000, ..Default::default() };
        match synthesize_vertex_gains(&vehicle_pair(), &cfg) {
            Err(Error::Synthesis { worst_margin, .. }) => assert!(worst_margin > 0.0 || worst_margin.is_nan()),
            other => panic!("expected synthesis error, got {other:?}"),
        }
    }

    #[test]
    fn capped_gains_respect_cap_and_certify() {
        let cfg = SynthesisConfig::default();
        let systems = vehicle_pair();
        let g = synthesize_vertex_gains(&systems, &cfg).unwrap();
        assert!(g.max_gain_norm() <= 1.0 + 1e-9);
        let cert = verify_certificate(&systems, &g.gains, g.alpha, 0.0, &cfg).unwrap();
        assert_eq!(cert.margins.len(), 3);
        let pm = dm4(&cert.p);
        for m in &cert.margins {
            let blk = pair_matrix(&systems, &g.gains, (m.p, m.q), &pm, cert.tau, g.alpha, 0.0, cfg.multiplier);
            assert!(negdef_with_margin(&blk, cert.required).unwrap());
        }

        // double sum over random weights stays negative definite
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let w: f64 = rng.random_range(0.0..1.0);
            let xi = [w, 1.0 - w];
            let mut sum = DMatrix::zeros(8, 8);
            for p in 0..2 {
                for q in 0..2 {
                    sum += phi_block(&systems[p], &g.gains[q], &pm, cert.tau, g.alpha, 0.0, cfg.multiplier) * (xi[p] * xi[q]);
                }
            }
            assert!(eig_extreme(&sum).unwrap().1 < 0.0);
        }

        // Lyapunov function decays at alpha on the frozen vertices
        for (p, sys) in systems.iter().enumerate() {
            let cl = sys.closed_loop(&g.gains[p]);
            for _ in 0..20 {
                let mut x = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0));
                let h = 1e-3;
                let mut prev = (x.transpose() * cert.p * x)[0];
                for k in 1..2000 {
                    x = rk4(&cl, x, h);
                    let v = (x.transpose() * cert.p * x)[0] * (g.alpha * k as f64 * h).exp();
                    assert!(v <= prev * (1.0 + 1e-6));
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn lyapunov_certificate_matches_spectral_bound() {
        // gamma = 0, one vertex, K = 0: feasible iff alpha < 2 |max Re lambda|
        let mut a = Matrix4::zeros();
        for (i, l) in [-1.0, -2.0, -3.0, -4.0].iter().enumerate() {
            a[(i, i)] = *l;
        }
        a[(0, 1)] = 0.5;
        let sys = LpvSystem { a, b: Vector4::zeros(), b_phi: Default::default() };
        let k = [RowVector4::zeros()];
        let cfg = SynthesisConfig { budget: 3000, ..Default::default() };
        assert!(verify_certificate(&[sys], &k, 1.5, 0.0, &cfg).is_ok());
        assert!(verify_certificate(&[sys], &k, 2.5, 0.0, &cfg).is_err());
    }

    #[test]
    fn unstable_open_loop_has_no_certificate() {
        let mut sys = chain();
        sys.a[(3, 3)] = 0.1;
        let cfg = SynthesisConfig { budget: 2000, ..Default::default() };
        let err = verify_certificate(&[sys], &[RowVector4::zeros()], 0.1, 0.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::Synthesis { .. }));
    }

    #[test]
    fn blended_gain_stays_within_vertex_bounds() {
        let gains = vec![RowVector4::new(1.0, -2.0, 0.5, 0.0), RowVector4::new(-1.0, 3.0, 0.5, 2.0), RowVector4::new(0.0, 0.0, 1.0, -1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let mut xi = DVector::from_fn(3, |_, _| rng.random_range(0.0..1.0));
            xi /= xi.sum();
            let k = blend_gains(&gains, &xi);
            for i in 0..4 {
                let lo = gains.iter().map(|g| g[i]).fold(f64::INFINITY, f64::min);
                let hi = gains.iter().map(|g| g[i]).fold(f64::NEG_INFINITY, f64::max);
                assert!(k[i] >= lo - 1e-12 && k[i] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn lti_baseline_is_stable_and_constant() {
        let p = VehicleParams::default();
        let cfg = SynthesisConfig::default();
        let lti = lti_gain(&p, LTI_DESIGN_SPEED, (60000.0, 60000.0), &cfg, 0.5).unwrap();
        assert!((lti.design_speed - 13.889).abs() < 1e-3);
        let sys = lti.system(&p).unwrap();
        assert_eq!(sys, assemble_system(&build_theta(50.0 / 3.6, 60000.0, 60000.0).unwrap(), &p));
        assert!(spectral_abscissa(&sys.closed_loop(&lti.gain)) <= -0.5 * lti.alpha + 1e-9);
        let x = LateralState { e_yl: 0.3, e_y_dot: -0.1, e_psi: 0.02, psi_dot: 0.0 };
        assert_eq!(lti.control(&x), lti.control(&x));
        assert_eq!(LtiBaseline::parse(&lti.to_text()).unwrap(), lti);
    }

    #[test]
    fn zero_state_gives_zero_steering() {
        let lti = LtiBaseline {
            gain: RowVector4::new(-0.3, -0.1, -1.0, -0.2),
            design_speed: LTI_DESIGN_SPEED,
            c_af: 6e4,
            c_ar: 6e4,
            alpha: 1.0,
            delta_max: 0.5,
        };
        assert_eq!(lti.control(&LateralState::default()), 0.0);
        let big = LateralState { e_yl: 100.0, ..Default::default() };
        assert_eq!(lti.control(&big), -0.5);
    }
}

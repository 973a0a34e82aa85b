//! End-to-end runs built from a [`Config`].

use crate::config::Config;
use crate::controller::{lti_gain, synthesize, LtiBaseline, ScheduledController, SynthesisResult};
use crate::error::Result;
use crate::polytope::{select_simplex, Polytope, ReducedTrajectory};
use crate::scheduling::{collect_trajectories, normalize, pca_reduce, reduce_trajectory, PcaReduction, Trajectory};
use crate::sim::{self, compare_logs, Comparison, ControllerChoice, Metrics, SimLog, SteeringLaw};

/// Everything the offline design produces.
#[derive(Debug, Clone)]
pub struct Design {
    pub trajectory: Trajectory,
    pub reduction: PcaReduction,
    pub polytope: Polytope,
    pub synthesis: SynthesisResult,
    pub lti: LtiBaseline,
}

impl Design {
    pub fn controller(&self, cfg: &Config) -> Result<ScheduledController> {
        ScheduledController::new(self.reduction.clone(), self.polytope.clone(), &self.synthesis, cfg.delta_max)
    }
}

pub fn collect(cfg: &Config) -> Result<Trajectory> {
    Ok(collect_trajectories(&cfg.training_scenarios()?, &cfg.vehicle, &cfg.collection)?.trajectory)
}

/// PCA reduction and reduced samples of a trajectory.
pub fn reduce(traj: &Trajectory, m: usize) -> Result<(PcaReduction, ReducedTrajectory)> {
    let (normalized, law) = normalize(traj)?;
    let reduction = pca_reduce(&normalized, law, m)?;
    let h = ReducedTrajectory(reduce_trajectory(&normalized, &reduction));
    Ok((reduction, h))
}

/// Collection through synthesis, plus the constant-gain baseline.
pub fn design(cfg: &Config) -> Result<Design> {
    let trajectory = collect(cfg)?;
    design_from(cfg, trajectory)
}

pub fn design_from(cfg: &Config, trajectory: Trajectory) -> Result<Design> {
    let (reduction, h) = reduce(&trajectory, cfg.m)?;
    let polytope = select_simplex(&h, &reduction, &cfg.vehicle, &cfg.polytope)?;
    let synthesis = synthesize(&reduction, &polytope, &trajectory.samples, &cfg.vehicle, &cfg.synthesis)?;
    let lti = lti_gain(&cfg.vehicle, cfg.lti_speed, trajectory.mean_stiffness(), &cfg.synthesis, cfg.delta_max)?;
    Ok(Design { trajectory, reduction, polytope, synthesis, lti })
}

/// One closed-loop run on the configured road with the configured controller.
pub fn simulate(cfg: &Config, design: &Design) -> Result<(SimLog, Metrics)> {
    let road = cfg.road_profile()?;
    match cfg.sim.controller {
        ControllerChoice::Lpv => {
            let ctl = design.controller(cfg)?;
            sim::run(&road, &cfg.sim, &cfg.vehicle, SteeringLaw::Scheduled(&ctl))
        }
        ControllerChoice::Lti => sim::run(&road, &cfg.sim, &cfg.vehicle, SteeringLaw::Constant(&design.lti)),
    }
}

/// Constant-gain baseline against the scheduled controller on the same road.
pub fn compare_controllers(cfg: &Config, design: &Design) -> Result<(Comparison, SimLog, SimLog)> {
    let mut c = cfg.clone();
    c.sim.controller = ControllerChoice::Lti;
    let (lti, _) = simulate(&c, design)?;
    c.sim.controller = ControllerChoice::Lpv;
    let (lpv, _) = simulate(&c, design)?;
    let cmp = compare_logs(&lti, &lpv, cfg.vehicle.look_ahead, &cfg.sim.metrics)?;
    Ok((cmp, lti, lpv))
}

/// Scheduled controller at a fixed speed against the same controller with the
/// speed loop on. Both start at `speed`.
pub fn compare_speed_control(cfg: &Config, design: &Design, speed: f64) -> Result<(Comparison, SimLog, SimLog)> {
    let mut c = cfg.clone();
    c.sim.initial_speed = speed;
    c.sim.speed_control = false;
    let (fixed, _) = simulate(&c, design)?;
    c.sim.speed_control = true;
    let (planned, _) = simulate(&c, design)?;
    let cmp = compare_logs(&fixed, &planned, cfg.vehicle.look_ahead, &cfg.sim.metrics)?;
    Ok((cmp, fixed, planned))
}

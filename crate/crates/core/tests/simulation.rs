use std::sync::OnceLock;

use lpv_lanekeep::config::Config;
use lpv_lanekeep::controller::{synthesize_vertex_gains, ScheduledController};
use lpv_lanekeep::pipeline::{self, Design};
use lpv_lanekeep::scheduling::SchedulingVector;
use lpv_lanekeep::sim::{self, ControllerChoice, RoadProfile, SteeringLaw};
use lpv_lanekeep::vehicle::LateralState;
use lpv_lanekeep::Error;

fn design() -> &'static (Config, Design) {
    static D: OnceLock<(Config, Design)> = OnceLock::new();
    D.get_or_init(|| {
        let cfg = Config::default();
        let d = pipeline::design(&cfg).unwrap();
        (cfg, d)
    })
}

#[test]
fn default_collection_is_large_enough() {
    let (_, d) = design();
    assert!(d.trajectory.len() >= 10_000);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let (cfg, d) = design();
    let (a, ma) = pipeline::simulate(cfg, d).unwrap();
    let (b, mb) = pipeline::simulate(cfg, d).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(ma, mb);
}

#[test]
fn halving_the_step_barely_moves_the_peak_offset() {
    let (cfg, d) = design();
    let (_, coarse) = pipeline::simulate(cfg, d).unwrap();
    let mut fine = cfg.clone();
    fine.sim.dt = 0.0005;
    let (_, fine) = pipeline::simulate(&fine, d).unwrap();
    let rel = (fine.max_abs_ey - coarse.max_abs_ey).abs() / coarse.max_abs_ey;
    assert!(rel < 0.01, "relative change {rel}");
}

#[test]
fn scheduled_run_stays_mostly_inside_the_hull() {
    let (cfg, d) = design();
    let (_, m) = pipeline::simulate(cfg, d).unwrap();
    assert!(m.out_of_hull_fraction < 0.05, "{}", m.out_of_hull_fraction);
    assert!(!m.aborted);
}

#[test]
fn baseline_gain_is_independent_of_scheduling() {
    let (cfg, d) = design();
    let mut c = cfg.clone();
    c.sim.controller = ControllerChoice::Lti;
    let (log, _) = pipeline::simulate(&c, d).unwrap();
    assert!(log.xi.iter().all(|x| x.is_empty()));
    for i in (0..log.len()).step_by(97) {
        let expected = d.lti.control(&log.lateral[i]);
        assert!((expected - log.delta[i]).abs() < 1e-12);
    }
}

#[test]
fn mismatched_artifacts_are_rejected() {
    let (cfg, d) = design();
    let mut other = d.synthesis.clone();
    other.provenance = "0".repeat(64);
    let ctl = ScheduledController::new(d.reduction.clone(), d.polytope.clone(), &other, cfg.delta_max);
    assert!(matches!(ctl, Err(Error::Config(_))));
}

#[test]
fn lpv_run_beats_baseline_on_offset() {
    let (cfg, d) = design();
    let road = cfg.road_profile().unwrap();
    let ctl = d.controller(cfg).unwrap();
    let (_, lpv) = sim::run(&road, &cfg.sim, &cfg.vehicle, SteeringLaw::Scheduled(&ctl)).unwrap();
    let (_, lti) = sim::run(&road, &cfg.sim, &cfg.vehicle, SteeringLaw::Constant(&d.lti)).unwrap();
    assert!(lpv.max_abs_ey < lti.max_abs_ey);
}

#[test]
fn vertex_preimage_uses_that_vertex_gain() {
    let (cfg, d) = design();
    let ctl = d.controller(cfg).unwrap();
    let x = LateralState { e_yl: 0.02, e_y_dot: -0.01, e_psi: 0.01, psi_dot: 0.005 };
    for (p, th) in d.polytope.vertex_thetas.iter().enumerate() {
        let out = ctl.control(&x, th).unwrap();
        assert!((out.xi[p] - 1.0).abs() < 1e-9, "{}", out.xi);
        let expected = (d.synthesis.gains[p] * x.to_vector())[0];
        assert!((out.delta - expected).abs() < 1e-9);
    }
    let zero = ctl.control(&Default::default(), &d.trajectory.samples[100]).unwrap();
    assert_eq!(zero.delta, 0.0);
}

#[test]
fn steering_is_continuous_along_a_scheduling_path() {
    let (cfg, d) = design();
    let ctl = d.controller(cfg).unwrap();
    let x = LateralState { e_yl: 0.2, e_y_dot: 0.1, e_psi: 0.05, psi_dot: -0.02 };
    let kmax = d.synthesis.gains.iter().map(|k| k.norm()).fold(0.0, f64::max);
    let samples = &d.trajectory.samples;
    let (a, b) = (samples[0].0, samples[samples.len() / 2].0);
    let n = 2000;
    let mut prev = ctl.control(&x, &SchedulingVector(a)).unwrap();
    for i in 1..=n {
        let s = i as f64 / n as f64;
        let th = SchedulingVector(a * (1.0 - s) + b * s);
        let out = ctl.control(&x, &th).unwrap();
        let dxi = (&out.xi - &prev.xi).abs().sum();
        assert!(dxi < 1e-2);
        assert!((out.delta - prev.delta).abs() <= x.to_vector().norm() * kmax * dxi + 1e-12);
        prev = out;
    }
}

#[test]
fn straight_road_at_rest_stays_at_rest() {
    let (cfg, d) = design();
    let ctl = d.controller(cfg).unwrap();
    let road = RoadProfile::straight(500.0);
    let (_, m) = sim::run(&road, &cfg.sim, &cfg.vehicle, SteeringLaw::Scheduled(&ctl)).unwrap();
    assert!(m.max_abs_ey <= 1e-3);
}

#[test]
fn speed_control_lowers_peak_roll() {
    let (cfg, d) = design();
    let (cmp, _, _) = pipeline::compare_speed_control(cfg, d, 70.0 / 3.6).unwrap();
    let row = cmp.get("peak_abs_roll").unwrap();
    assert!(row.baseline > row.candidate);
}

#[test]
fn slow_decay_is_found_on_the_default_polytope() {
    let (cfg, d) = design();
    let mut sc = cfg.synthesis.clone();
    sc.alpha = 1e-3;
    sc.gain_cap = None;
    let g = synthesize_vertex_gains(&d.polytope.vertex_systems, &sc).unwrap();
    assert_eq!(g.gains.len(), 4);
}

//! `key = value` configuration with `[section]` headers.
//!
//! [`DEFAULT_CONFIG`] holds every setting; a user file only needs the keys it
//! changes. Unknown keys are errors so typos do not pass silently.

use std::f64::consts::PI;

use crate::controller::longitudinal::{LongitudinalPd, PdGains, SpeedPlanner};
use crate::controller::{MultiplierBlock, SynthesisConfig};
use crate::error::{Error, Result};
use crate::polytope::PolytopeConfig;
use crate::scheduling::{CollectionConfig, DrivingScenario};
use crate::sim::{ControllerChoice, MetricsWindow, NoiseConfig, RoadProfile, Segment, SimConfig};
use crate::vehicle::{StiffnessModel, VehicleParams};

pub const DEFAULT_CONFIG: &str = r#"# lane-keeping pipeline defaults

[run]
seed = 1

[vehicle]
m = 1650
m_s = 1400
i_z = 2900
i_x = 600
l_f = 1.2
l_r = 1.5
look_ahead = 5
h_rc = 0.45
k_roll = 95000
c_roll = 6000
g = 9.81
c_af0 = 65000
c_ar0 = 65000
phi_max = 0.02
track = 1.6
small_angle = false

[stiffness]
droop = 0.6
floor = 0.5

[speed]
cruise = 25
brake_decel = 1.5
preview = 200
preview_step = 1
kp = 2.0
kd = 0.2
a_min = -4
a_max = 2

[training]
# half-turn drives: every radius x cruise speed x direction
radii = 80 150
cruises = 15 20 25
straight = 150
blend = 40
# plus the test road with speed control and at a fixed speed
test_road = true
interchange_fixed_speed = 19.44
period = 0.01
max_duration = 300

[reduction]
m = 3

[polytope]
condition_cap = 1e8
degeneracy = 1e-12
inflation_resolution = 1e-6

[synthesis]
alpha = 1.0
# auto: estimated from the training data
gamma = auto
# none: uncapped
gain_cap = 1.0
margin_scale = 1e-7
multiplier = tau
budget = 20000
alpha_halvings = 2
lti_speed = 13.888888888888889
delta_max = 0.5

[road]
radius = 80
sweep = 180
straight = 150
clothoid = 40

[simulation]
dt = 0.001
controller_period = 0.01
# auto: until the end of the road
duration = auto
initial_speed = 25
controller = lpv
speed_control = true
rollover_limit = 0.2
divergence_limit = 50
settle = 3
noise = false
noise_std = 0.01 0.01 0.001 0.001
"#;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub radii: Vec<f64>,
    pub cruises: Vec<f64>,
    pub straight: f64,
    pub blend: f64,
    /// Also drive the configured test road.
    pub test_road: bool,
    pub interchange_fixed_speed: Option<f64>,
    pub max_duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadSpec {
    pub radius: f64,
    /// Degrees.
    pub sweep: f64,
    pub straight: f64,
    pub clothoid: f64,
}

impl RoadSpec {
    pub fn build(&self) -> Result<RoadProfile> {
        RoadProfile::interchange(self.radius, self.sweep.to_radians(), self.straight, self.clothoid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub vehicle: VehicleParams,
    pub stiffness: StiffnessModel,
    pub planner: SpeedPlanner,
    pub pd: PdGains,
    pub training: TrainingConfig,
    pub collection: CollectionConfig,
    pub m: usize,
    pub polytope: PolytopeConfig,
    pub synthesis: SynthesisConfig,
    pub lti_speed: f64,
    pub delta_max: f64,
    pub road: RoadSpec,
    pub sim: SimConfig,
    /// Measurement noise levels used when noise is switched on.
    pub noise_std: [f64; 4],
}

impl Default for Config {
    fn default() -> Self {
        Self::parse(DEFAULT_CONFIG).expect("embedded default config parses")
    }
}

/// Section/key/value triples in file order.
fn entries(text: &str) -> Result<Vec<(String, String, String)>> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", n + 1)))?;
        out.push((section.clone(), k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split_whitespace().map(|w| num(key, w)).collect()
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn auto_or<T: std::str::FromStr>(key: &str, v: &str, word: &str) -> Result<Option<T>> {
    if v == word {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

impl Config {
    /// Parses a full configuration; keys missing from `text` are an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::blank();
        let mut seen = std::collections::BTreeSet::new();
        for (sec, key, val) in entries(text)? {
            cfg.apply(&sec, &key, &val)?;
            seen.insert(format!("{sec}.{key}"));
        }
        let required = entries(DEFAULT_CONFIG)?.into_iter().map(|(s, k, _)| format!("{s}.{k}"));
        for r in required {
            if !seen.contains(&r) {
                return Err(Error::Config(format!("missing key {r}")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults overridden by the keys in `text`.
    pub fn with_overrides(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (sec, key, val) in entries(text)? {
            cfg.apply(&sec, &key, &val)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn blank() -> Self {
        Self {
            seed: 0,
            vehicle: VehicleParams::default(),
            stiffness: StiffnessModel::default(),
            planner: SpeedPlanner::default(),
            pd: PdGains::default(),
            training: TrainingConfig {
                radii: vec![],
                cruises: vec![],
                straight: 0.0,
                blend: 0.0,
                test_road: false,
                interchange_fixed_speed: None,
                max_duration: 0.0,
            },
            collection: CollectionConfig::default(),
            m: 3,
            polytope: PolytopeConfig::default(),
            synthesis: SynthesisConfig::default(),
            lti_speed: 0.0,
            delta_max: 0.5,
            road: RoadSpec { radius: 0.0, sweep: 0.0, straight: 0.0, clothoid: 0.0 },
            sim: SimConfig::default(),
            noise_std: [0.01, 0.01, 0.001, 0.001],
        }
    }

    pub fn apply(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        let k = format!("{section}.{key}");
        let k = k.as_str();
        let veh = &mut self.vehicle;
        match k {
            "run.seed" => self.seed = num(k, v)?,
            "vehicle.m" => veh.m = num(k, v)?,
            "vehicle.m_s" => veh.m_s = num(k, v)?,
            "vehicle.i_z" => veh.i_z = num(k, v)?,
            "vehicle.i_x" => veh.i_x = num(k, v)?,
            "vehicle.l_f" => veh.l_f = num(k, v)?,
            "vehicle.l_r" => veh.l_r = num(k, v)?,
            "vehicle.look_ahead" => veh.look_ahead = num(k, v)?,
            "vehicle.h_rc" => veh.h_rc = num(k, v)?,
            "vehicle.k_roll" => veh.k_roll = num(k, v)?,
            "vehicle.c_roll" => veh.c_roll = num(k, v)?,
            "vehicle.g" => veh.g = num(k, v)?,
            "vehicle.c_af0" => veh.c_af0 = num(k, v)?,
            "vehicle.c_ar0" => veh.c_ar0 = num(k, v)?,
            "vehicle.phi_max" => veh.phi_max = num(k, v)?,
            "vehicle.track" => veh.track = num(k, v)?,
            "vehicle.small_angle" => veh.small_angle = flag(k, v)?,
            "stiffness.droop" => self.stiffness.droop = num(k, v)?,
            "stiffness.floor" => self.stiffness.floor = num(k, v)?,
            "speed.cruise" => self.planner.cruise = num(k, v)?,
            "speed.brake_decel" => self.planner.brake_decel = num(k, v)?,
            "speed.preview" => self.planner.preview = num(k, v)?,
            "speed.preview_step" => self.planner.step = num(k, v)?,
            "speed.kp" => self.pd.kp = num(k, v)?,
            "speed.kd" => self.pd.kd = num(k, v)?,
            "speed.a_min" => self.pd.a_min = num(k, v)?,
            "speed.a_max" => self.pd.a_max = num(k, v)?,
            "training.radii" => self.training.radii = list(k, v)?,
            "training.cruises" => self.training.cruises = list(k, v)?,
            "training.straight" => self.training.straight = num(k, v)?,
            "training.blend" => self.training.blend = num(k, v)?,
            "training.test_road" => self.training.test_road = flag(k, v)?,
            "training.interchange_fixed_speed" => self.training.interchange_fixed_speed = auto_or(k, v, "none")?,
            "training.period" => self.collection.period = num(k, v)?,
            "training.max_duration" => self.training.max_duration = num(k, v)?,
            "reduction.m" => self.m = num(k, v)?,
            "polytope.condition_cap" => self.polytope.condition_cap = num(k, v)?,
            "polytope.degeneracy" => self.polytope.degeneracy = num(k, v)?,
            "polytope.inflation_resolution" => self.polytope.inflation_resolution = num(k, v)?,
            "synthesis.alpha" => self.synthesis.alpha = num(k, v)?,
            "synthesis.gamma" => self.synthesis.gamma = auto_or(k, v, "auto")?,
            "synthesis.gain_cap" => self.synthesis.gain_cap = auto_or(k, v, "none")?,
            "synthesis.margin_scale" => self.synthesis.margin_scale = num(k, v)?,
            "synthesis.multiplier" => {
                self.synthesis.multiplier = match v {
                    "tau" => MultiplierBlock::Tau,
                    "gamma" => MultiplierBlock::Gamma,
                    _ => return Err(Error::Config(format!("{k}: expected tau or gamma, got '{v}'"))),
                }
            }
            "synthesis.budget" => self.synthesis.budget = num(k, v)?,
            "synthesis.alpha_halvings" => self.synthesis.alpha_halvings = num(k, v)?,
            "synthesis.lti_speed" => self.lti_speed = num(k, v)?,
            "synthesis.delta_max" => self.delta_max = num(k, v)?,
            "road.radius" => self.road.radius = num(k, v)?,
            "road.sweep" => self.road.sweep = num(k, v)?,
            "road.straight" => self.road.straight = num(k, v)?,
            "road.clothoid" => self.road.clothoid = num(k, v)?,
            "simulation.dt" => self.sim.dt = num(k, v)?,
            "simulation.controller_period" => self.sim.controller_period = num(k, v)?,
            "simulation.duration" => self.sim.duration = auto_or(k, v, "auto")?,
            "simulation.initial_speed" => self.sim.initial_speed = num(k, v)?,
            "simulation.controller" => self.sim.controller = parse_controller(v)?,
            "simulation.speed_control" => self.sim.speed_control = flag(k, v)?,
            "simulation.rollover_limit" => self.sim.rollover_limit = num(k, v)?,
            "simulation.divergence_limit" => self.sim.divergence_limit = num(k, v)?,
            "simulation.settle" => self.sim.metrics = MetricsWindow { settle: num(k, v)? },
            "simulation.noise" => {
                let on = flag(k, v)?;
                self.sim.noise = match (on, self.sim.noise) {
                    (false, _) => None,
                    (true, Some(n)) => Some(n),
                    (true, None) => Some(NoiseConfig { seed: self.seed, std: self.noise_std }),
                }
            }
            "simulation.noise_std" => {
                let vals = list(k, v)?;
                if vals.len() != 4 {
                    return Err(Error::Config(format!("{k}: expected four values")));
                }
                let std = [vals[0], vals[1], vals[2], vals[3]];
                if let Some(n) = self.sim.noise.as_mut() {
                    n.std = std;
                }
                self.noise_std = std;
            }
            _ => return Err(Error::Config(format!("unknown key '{key}' in section [{section}]"))),
        }
        self.sync();
        Ok(())
    }

    /// Propagates shared settings into the component configs.
    fn sync(&mut self) {
        self.collection.pd = LongitudinalPd::new(self.pd);
        self.collection.stiffness = self.stiffness;
        self.sim.planner = self.planner;
        self.sim.pd = self.pd;
        self.sim.stiffness = self.stiffness;
        if let Some(n) = self.sim.noise.as_mut() {
            n.seed = self.seed;
            n.std = self.noise_std;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.synthesis.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.sim.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(1..=5).contains(&self.m) {
            return Err(Error::Config(format!("reduction.m must be in 1..=5, got {}", self.m)));
        }
        if !(self.lti_speed > 0.0) || !(self.delta_max > 0.0) {
            return Err(Error::Config("lti_speed and delta_max must be positive".into()));
        }
        self.road.build().map_err(|e| Error::Config(format!("road: {e}")))?;
        Ok(())
    }

    pub fn road_profile(&self) -> Result<RoadProfile> {
        self.road.build()
    }

    /// Data-collection drives: half turns for every radius, cruise speed and
    /// direction, then the test road with speed control and at a fixed speed.
    pub fn training_scenarios(&self) -> Result<Vec<DrivingScenario>> {
        let t = &self.training;
        let mut out = Vec::new();
        for &r in &t.radii {
            for &cruise in &t.cruises {
                for sign in [1.0, -1.0] {
                    let road = RoadProfile::new(
                        vec![
                            Segment { length: t.straight, curvature: 0.0 },
                            Segment { length: r * PI / 2.0, curvature: sign / r },
                            Segment { length: t.straight, curvature: 0.0 },
                        ],
                        t.blend,
                    )?;
                    out.push(DrivingScenario {
                        name: format!("turn r{r} v{cruise} {}", if sign > 0.0 { "left" } else { "right" }),
                        road,
                        initial_speed: cruise,
                        planner: Some(SpeedPlanner { cruise, ..self.planner }),
                        duration: t.max_duration,
                    });
                }
            }
        }
        if !t.test_road {
            return Ok(out);
        }
        let road = self.road_profile()?;
        out.push(DrivingScenario {
            name: "test road, speed control".into(),
            road: road.clone(),
            initial_speed: self.planner.cruise,
            planner: Some(self.planner),
            duration: t.max_duration,
        });
        if let Some(v) = t.interchange_fixed_speed {
            out.push(DrivingScenario {
                name: "test road, fixed speed".into(),
                road,
                initial_speed: v,
                planner: None,
                duration: t.max_duration,
            });
        }
        Ok(out)
    }
}

pub fn parse_controller(v: &str) -> Result<ControllerChoice> {
    match v {
        "lpv" => Ok(ControllerChoice::Lpv),
        "lti" => Ok(ControllerChoice::Lti),
        _ => Err(Error::Config(format!("controller must be lpv or lti, got '{v}'"))),
    }
}

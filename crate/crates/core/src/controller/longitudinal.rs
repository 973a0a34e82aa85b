//! Speed reference from the roll-limited cap and the PD speed loop.

use crate::sim::road::RoadProfile;
use crate::vehicle::{speed_cap, VehicleParams};

/// Speed reference with braking preview: the reference at `s` is the lowest
/// `sqrt(v_cap(s')^2 + 2 a_brake (s' - s))` over the preview window, so the
/// vehicle arrives at each curve already at its cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedPlanner {
    /// Cap on straights (m/s).
    pub cruise: f64,
    /// Planned deceleration (m/s^2).
    pub brake_decel: f64,
    /// Preview distance (m).
    pub preview: f64,
    /// Preview sampling step (m).
    pub step: f64,
}

impl Default for SpeedPlanner {
    fn default() -> Self {
        Self { cruise: 25.0, brake_decel: 1.5, preview: 200.0, step: 1.0 }
    }
}

impl SpeedPlanner {
    pub fn reference(&self, road: &RoadProfile, s: f64, params: &VehicleParams) -> f64 {
        let n = (self.preview / self.step).ceil() as usize;
        let mut best = self.cruise;
        for i in 0..=n {
            let ds = i as f64 * self.step;
            let cap = speed_cap(road.curvature(s + ds), params, self.cruise);
            best = best.min((cap * cap + 2.0 * self.brake_decel * ds).sqrt());
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
    pub a_min: f64,
    pub a_max: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self { kp: 2.0, kd: 0.2, a_min: -4.0, a_max: 2.0 }
    }
}

/// `a_x = kp e + kd (e - e_prev)/dt`, saturated. Returns the command and the
/// error to carry into the next call.
pub fn longitudinal_pd(vx: f64, vx_des: f64, prev_error: Option<f64>, dt: f64, gains: &PdGains) -> (f64, f64) {
    debug_assert!(dt > 0.0);
    let e = vx_des - vx;
    let de = prev_error.map_or(0.0, |p| (e - p) / dt);
    ((gains.kp * e + gains.kd * de).clamp(gains.a_min, gains.a_max), e)
}

/// Stateful wrapper around [`longitudinal_pd`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LongitudinalPd {
    pub gains: PdGains,
    prev_error: Option<f64>,
}

impl LongitudinalPd {
    pub fn new(gains: PdGains) -> Self {
        Self { gains, prev_error: None }
    }

    pub fn reset(&mut self) {
        self.prev_error = None;
    }

    pub fn command(&mut self, vx: f64, vx_des: f64, dt: f64) -> f64 {
        let (a, e) = longitudinal_pd(vx, vx_des, self.prev_error, dt, &self.gains);
        self.prev_error = Some(e);
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_zero_command() {
        let g = PdGains::default();
        assert_eq!(longitudinal_pd(10.0, 10.0, Some(0.0), 0.01, &g).0, 0.0);
        assert_eq!(longitudinal_pd(10.0, 10.0, None, 0.01, &g).0, 0.0);
    }

    #[test]
    fn saturates() {
        let g = PdGains::default();
        assert_eq!(longitudinal_pd(0.0, 1e6, None, 0.01, &g).0, g.a_max);
        assert_eq!(longitudinal_pd(1e6, 0.0, None, 0.01, &g).0, g.a_min);
    }

    #[test]
    fn step_response_settles() {
        let mut pd = LongitudinalPd::default();
        let (mut v, target, dt) = (10.0, 20.0, 0.01);
        let mut settled_at = None;
        for k in 0..2000 {
            let a = pd.command(v, target, dt);
            v += a * dt;
            let inside = (v - target).abs() <= 0.05 * target;
            match (inside, settled_at) {
                (true, None) => settled_at = Some(k),
                (false, _) => settled_at = None,
                _ => {}
            }
        }
        let t = settled_at.expect("never settled") as f64 * dt;
        assert!(t < 10.0, "settled at {t}");
    }

    #[test]
    fn planner_brakes_ahead_of_the_curve() {
        let p = VehicleParams::default();
        let road = RoadProfile::default_interchange();
        let planner = SpeedPlanner::default();
        assert_eq!(planner.reference(&road, 0.0, &p), planner.cruise);
        let arc_cap = crate::vehicle::desired_speed(80.0, &p).unwrap();
        let on_arc = planner.reference(&road, 300.0, &p);
        assert!((on_arc - arc_cap).abs() < 1e-9);
        let before = planner.reference(&road, 120.0, &p);
        assert!(before < planner.cruise && before > arc_cap);
    }
}

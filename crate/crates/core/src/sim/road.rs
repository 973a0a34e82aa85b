//! Piecewise-constant-curvature roads with linear (clothoid) blends.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::vehicle::RoadSignals;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub length: f64,
    /// Signed curvature, positive turning left (1/m).
    pub curvature: f64,
}

/// Road defined by constant-curvature segments. Each interior boundary is
/// replaced by a linear curvature ramp of length `blend` centred on it, which
/// keeps the total heading change of every segment.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadProfile {
    pub segments: Vec<Segment>,
    pub blend: f64,
    knots: Vec<(f64, f64)>,
    heading_at_knot: Vec<f64>,
}

impl RoadProfile {
    pub fn new(segments: Vec<Segment>, blend: f64) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::domain("road needs at least one segment"));
        }
        if !(blend >= 0.0) {
            return Err(Error::domain("blend length must be non-negative"));
        }
        for (i, seg) in segments.iter().enumerate() {
            if !(seg.length > 0.0) || !seg.curvature.is_finite() {
                return Err(Error::domain(format!("segment {i} needs positive length and finite curvature")));
            }
            let ramps = if i == 0 || i + 1 == segments.len() { 0.5 } else { 1.0 };
            if segments.len() > 1 && seg.length < ramps * blend {
                return Err(Error::domain(format!("segment {i} is shorter than its blends")));
            }
        }

        let mut knots = vec![(0.0, segments[0].curvature)];
        let mut start = 0.0;
        for w in 0..segments.len() - 1 {
            let boundary = start + segments[w].length;
            let (k0, k1) = (segments[w].curvature, segments[w + 1].curvature);
            knots.push((boundary - 0.5 * blend, k0));
            knots.push((boundary + 0.5 * blend, k1));
            start = boundary;
        }
        let total = start + segments.last().unwrap().length;
        knots.push((total, segments.last().unwrap().curvature));

        let mut heading_at_knot = vec![0.0];
        for w in knots.windows(2) {
            let (s0, k0) = w[0];
            let (s1, k1) = w[1];
            let last = *heading_at_knot.last().unwrap();
            heading_at_knot.push(last + 0.5 * (k0 + k1) * (s1 - s0));
        }
        Ok(Self { segments, blend, knots, heading_at_knot })
    }

    pub fn straight(length: f64) -> Self {
        Self::new(vec![Segment { length, curvature: 0.0 }], 0.0).expect("valid straight road")
    }

    /// Straight, clothoid, arc of `sweep` radians, clothoid, straight.
    pub fn interchange(radius: f64, sweep: f64, straight: f64, clothoid: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::domain("radius must be positive"));
        }
        let half = 0.5 * clothoid;
        Self::new(
            vec![
                Segment { length: straight + half, curvature: 0.0 },
                Segment { length: radius * sweep.abs(), curvature: sweep.signum() / radius },
                Segment { length: straight + half, curvature: 0.0 },
            ],
            clothoid,
        )
    }

    /// The test interchange: 150 m straight, 40 m clothoid, half loop of
    /// radius 80 m, 40 m clothoid, 150 m straight.
    pub fn default_interchange() -> Self {
        Self::interchange(80.0, PI, 150.0, 40.0).expect("valid interchange")
    }

    pub fn length(&self) -> f64 {
        self.knots.last().unwrap().0
    }

    /// Largest curvature change per metre across the blends.
    pub fn max_curvature_rate(&self) -> f64 {
        self.knots
            .windows(2)
            .filter(|w| w[1].0 > w[0].0)
            .map(|w| (w[1].1 - w[0].1).abs() / (w[1].0 - w[0].0))
            .fold(0.0, f64::max)
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.segments.iter().map(|s| s.curvature.abs()).fold(0.0, f64::max)
    }

    fn locate(&self, s: f64) -> usize {
        // index of the knot interval containing s
        match self.knots.binary_search_by(|k| k.0.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.knots.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.knots.len() - 2),
        }
    }

    /// Curvature at arc position `s`; outside the road the end values hold.
    pub fn curvature(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return self.knots[0].1;
        }
        if s >= self.length() {
            return self.knots.last().unwrap().1;
        }
        let i = self.locate(s);
        let (s0, k0) = self.knots[i];
        let (s1, k1) = self.knots[i + 1];
        if s1 <= s0 {
            return k1;
        }
        k0 + (k1 - k0) * (s - s0) / (s1 - s0)
    }

    /// Road heading `int_0^s kappa`.
    pub fn heading(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return self.knots[0].1 * s;
        }
        let end = self.length();
        if s >= end {
            return *self.heading_at_knot.last().unwrap() + self.knots.last().unwrap().1 * (s - end);
        }
        let i = self.locate(s);
        let (s0, k0) = self.knots[i];
        let (s1, k1) = self.knots[i + 1];
        let ks = if s1 > s0 { k0 + (k1 - k0) * (s - s0) / (s1 - s0) } else { k1 };
        self.heading_at_knot[i] + 0.5 * (k0 + ks) * (s - s0)
    }

    /// Centre-line points sampled every `ds` metres (midpoint rule on the heading).
    pub fn centerline(&self, ds: f64) -> Vec<(f64, f64, f64)> {
        let n = (self.length() / ds).ceil() as usize;
        let mut out = Vec::with_capacity(n + 1);
        let (mut x, mut y) = (0.0, 0.0);
        out.push((0.0, x, y));
        for i in 0..n {
            let s0 = i as f64 * ds;
            let h = (ds).min(self.length() - s0);
            let mid = self.heading(s0 + 0.5 * h);
            x += h * mid.cos();
            y += h * mid.sin();
            out.push((s0 + h, x, y));
        }
        out
    }
}

/// Road inputs at arc position `s` for speed `vx` and look-ahead `look_ahead`.
/// The boolean is set once `s` runs past the end of the road.
pub fn road_signals(road: &RoadProfile, s: f64, vx: f64, look_ahead: f64) -> (RoadSignals, bool) {
    let end_of_road = s > road.length();
    let kappa = road.curvature(s);
    let signals = RoadSignals {
        psi_dot_des: vx * kappa,
        e_psil_minus_e_psi: road.heading(s + look_ahead) - road.heading(s),
        kappa,
    };
    (signals, end_of_road)
}

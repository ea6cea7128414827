//! Intelligent driver model, used as the ego's longitudinal policy.

/// IDM constants. `b_comfort` enters the desired-gap term; `b_max` bounds
/// the returned deceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmParams {
    pub a_max: f64,
    pub b_comfort: f64,
    pub b_max: f64,
    pub min_gap: f64,
    pub time_headway: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            a_max: 2.0,
            b_comfort: 4.0,
            b_max: 9.0,
            min_gap: 2.0,
            time_headway: 1.5,
        }
    }
}

impl IdmParams {
    /// Desired dynamic gap `s*` for speed `v` closing at `dv` on the leader.
    pub fn desired_gap(&self, v: f64, dv: f64) -> f64 {
        let dynamic = v * self.time_headway + v * dv / (2.0 * (self.a_max * self.b_comfort).sqrt());
        self.min_gap + dynamic.max(0.0)
    }

    /// Acceleration for speed `v`, desired speed `v0`, bumper gap `gap`
    /// (`f64::INFINITY` without a leader) and approach rate `dv = v - v_lead`.
    pub fn accel(&self, v: f64, v0: f64, gap: f64, dv: f64) -> f64 {
        if gap <= 0.0 {
            return -self.b_max;
        }
        let free = 1.0 - (v / v0.max(1e-3)).powi(4);
        let interaction = if gap.is_finite() {
            (self.desired_gap(v, dv) / gap).powi(2)
        } else {
            0.0
        };
        (self.a_max * (free - interaction)).clamp(-self.b_max, self.a_max)
    }

    /// Steady-state bumper gap behind a leader cruising at `v < v0`.
    pub fn equilibrium_gap(&self, v: f64, v0: f64) -> f64 {
        (self.min_gap + v * self.time_headway) / (1.0 - (v / v0).powi(4)).sqrt()
    }
}

/// IDM acceleration with the default constants.
pub fn idm_accel(v: f64, v0: f64, gap: f64, dv: f64) -> f64 {
    IdmParams::default().accel(v, v0, gap, dv)
}

//! Criticalness of a simulated scenario: time-to-collision, collision
//! counts and the adversarial score built from them.

mod taxonomy;

use serde::{Deserialize, Serialize};

pub use taxonomy::{classify_collision, subclass_for, CollisionClass, CollisionLabel, Subclass};

use crate::error::{Error, Result};
use crate::sim::geometry::sat_overlap;
use crate::sim::{SimulationTrace, VehicleState};

/// Reward per collision in the adversarial score.
pub const P_COL: f64 = 100.0;
/// Time-to-collision horizon and cap.
pub const T_MAX: f64 = 10.0;
/// Resolution of the TTC sweep.
pub const TTC_STEP: f64 = 0.1;

/// Time until the two footprints first touch if both keep their current
/// velocity, sampled every [`TTC_STEP`] up to [`T_MAX`]. Returns 0 for
/// footprints already in contact and `f64::INFINITY` when no contact is
/// predicted inside the horizon.
pub fn ttc_at_step(ego: &VehicleState, npc: &VehicleState) -> f64 {
    let a = ego.footprint();
    let b = npc.footprint();
    if sat_overlap(&a, &b) {
        return 0.0;
    }
    let va = ego.velocity();
    let vb = npc.velocity();
    let dv = [vb[0] - va[0], vb[1] - va[1]];
    if dv[0] == 0.0 && dv[1] == 0.0 {
        return f64::INFINITY;
    }
    let dp = [b.center[0] - a.center[0], b.center[1] - a.center[1]];
    let reach = a.bounding_radius() + b.bounding_radius();
    let n = (T_MAX / TTC_STEP).round() as usize;
    for k in 1..=n {
        let t = k as f64 * TTC_STEP;
        let rel = [dp[0] + dv[0] * t, dp[1] + dv[1] * t];
        if rel[0].hypot(rel[1]) > reach {
            continue;
        }
        let a_t = a.translated([va[0] * t, va[1] * t]);
        let b_t = b.translated([vb[0] * t, vb[1] * t]);
        if sat_overlap(&a_t, &b_t) {
            return (t * 1e9).round() / 1e9;
        }
    }
    f64::INFINITY
}

/// Per-step minimum TTC between the ego and any NPC (`INFINITY` when no
/// contact is predicted).
pub fn ttc_series(trace: &SimulationTrace) -> Vec<f64> {
    trace
        .steps
        .iter()
        .map(|step| {
            let ego = &step.vehicles[0];
            step.vehicles[1..]
                .iter()
                .map(|npc| ttc_at_step(ego, npc))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Scenario-wide minimum TTC, capped at [`T_MAX`].
pub fn min_ttc(trace: &SimulationTrace) -> Result<f64> {
    if trace.steps.is_empty() {
        return Err(Error::Empty("trace has no steps".into()));
    }
    Ok(ttc_series(trace).into_iter().fold(T_MAX, f64::min))
}

/// `C * P_COL - minTTC`.
pub fn adv_raw(collision_count: usize, min_ttc: f64) -> f64 {
    collision_count as f64 * P_COL - min_ttc
}

/// Fixed affine map of the raw score onto [0, 1] given the most collisions
/// a trace can hold.
pub fn adv_normalize(adv_raw: f64, max_collisions: usize) -> f64 {
    ((adv_raw + T_MAX) / (max_collisions as f64 * P_COL + T_MAX)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub min_ttc_s: f64,
    pub collision_count: usize,
    pub adv_raw: f64,
    pub adv_norm: f64,
    pub collision_types: Vec<CollisionLabel>,
}

impl RiskReport {
    pub fn from_parts(min_ttc_s: f64, collision_types: Vec<CollisionLabel>, max_collisions: usize) -> Self {
        let collision_count = collision_types.len();
        let adv_raw = adv_raw(collision_count, min_ttc_s);
        Self {
            min_ttc_s,
            collision_count,
            adv_raw,
            adv_norm: adv_normalize(adv_raw, max_collisions),
            collision_types,
        }
    }
}

/// Full criticalness report of one trace; the normalization uses the
/// trace's NPC count as the collision ceiling.
pub fn adv(trace: &SimulationTrace) -> Result<RiskReport> {
    let ttc = min_ttc(trace)?;
    let labels = trace.collisions.iter().map(classify_collision).collect();
    Ok(RiskReport::from_parts(ttc, labels, trace.npc_count()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{catalog_entry, clamp_to_box};
    use crate::sim::{simulate, LaneRef};
    use proptest::prelude::*;

    fn state(x: f64, y: f64, heading: f64, speed: f64) -> VehicleState {
        VehicleState {
            actor: 0,
            x,
            y,
            heading,
            speed,
            lane: LaneRef::Index(0),
            length: 4.5,
            width: 2.0,
        }
    }

    #[test]
    fn lead_vehicle_ttc() {
        // Bumper gap 45.5 m closing at 10 m/s: analytic 4.55 s.
        let ego = state(0.0, 0.0, 0.0, 20.0);
        let lead = state(50.0, 0.0, 0.0, 10.0);
        let ttc = ttc_at_step(&ego, &lead);
        assert!((ttc - 4.55).abs() <= 0.1, "{ttc}");
        assert!(ttc == 4.5 || ttc == 4.6);
    }

    #[test]
    fn diverging_is_infinite() {
        let ego = state(0.0, 0.0, 0.0, 10.0);
        let other = state(0.0, 7.0, 0.3, 12.0);
        assert_eq!(ttc_at_step(&ego, &other), f64::INFINITY);
    }

    #[test]
    fn contact_is_zero() {
        let ego = state(0.0, 0.0, 0.0, 10.0);
        assert_eq!(ttc_at_step(&ego, &state(4.5, 0.0, 0.0, 10.0)), 0.0);
    }

    #[test]
    fn both_stopped_is_infinite() {
        let ego = state(0.0, 0.0, 0.0, 0.0);
        assert_eq!(ttc_at_step(&ego, &state(6.0, 0.0, 0.0, 0.0)), f64::INFINITY);
    }

    #[test]
    fn crossing_ttc_matches_sampling() {
        // Perpendicular approach; brute-force the first contact at 1 ms.
        let ego = state(0.0, -20.0, std::f64::consts::FRAC_PI_2, 10.0);
        let npc = state(-30.0, 0.0, 0.0, 15.0);
        let ttc = ttc_at_step(&ego, &npc);
        let mut t = 0.0;
        let exact = loop {
            t += 0.001;
            let a = ego.footprint().translated([0.0, 10.0 * t]);
            let b = npc.footprint().translated([15.0 * t, 0.0]);
            if sat_overlap(&a, &b) {
                break t;
            }
            assert!(t < T_MAX);
        };
        assert!(ttc >= exact - 1e-9 && ttc - exact < TTC_STEP + 1e-9, "{ttc} vs {exact}");
    }

    #[test]
    fn adv_examples() {
        assert!((adv_raw(1, 0.8) - 99.2).abs() < 1e-12);
        let r = RiskReport::from_parts(10.0, vec![], 1);
        assert!((r.adv_raw + 10.0).abs() < 1e-12);
        assert_eq!(r.adv_norm, 0.0);
        let hit = CollisionLabel::new(CollisionClass::C1, Subclass::M);
        let r = RiskReport::from_parts(0.0, vec![hit], 1);
        assert_eq!(r.adv_norm, 1.0);
    }

    #[test]
    fn min_ttc_of_collision_trace_is_zero() {
        let ls = catalog_entry("FB").unwrap();
        let cs = clamp_to_box(&ls, &[30.0, 10.0, 30.0, 1.0, 9.0]).unwrap();
        let trace = simulate(&ls, &cs).unwrap();
        assert_eq!(min_ttc(&trace).unwrap(), 0.0);
        let rep = adv(&trace).unwrap();
        assert_eq!(rep.collision_count, 1);
        assert_eq!(rep.collision_types.len(), 1);
    }

    #[test]
    fn never_closing_trace_hits_cap() {
        let ls = catalog_entry("FB").unwrap();
        // Lead faster than the ego and braking late and softly.
        let cs = clamp_to_box(&ls, &[10.0, 60.0, 30.0, 8.0, 2.0]).unwrap();
        let trace = simulate(&ls, &cs).unwrap();
        assert_eq!(min_ttc(&trace).unwrap(), T_MAX);
    }

    #[test]
    fn single_npc_min_equals_rescan() {
        let ls = catalog_entry("CutIn1").unwrap();
        let cs = clamp_to_box(&ls, &[25.0, 15.0, 18.0, 12.0, 2.5, 15.0]).unwrap();
        let trace = simulate(&ls, &cs).unwrap();
        let mut brute = T_MAX;
        for step in &trace.steps {
            brute = brute.min(ttc_at_step(&step.vehicles[0], &step.vehicles[1]));
        }
        assert_eq!(min_ttc(&trace).unwrap(), brute);
    }

    #[test]
    fn empty_trace_errors() {
        let ls = catalog_entry("FB").unwrap();
        let cs = clamp_to_box(&ls, &[20.0, 30.0, 20.0, 3.0, 4.0]).unwrap();
        let mut trace = simulate(&ls, &cs).unwrap();
        trace.steps.clear();
        assert!(min_ttc(&trace).is_err());
    }

    proptest! {
        #[test]
        fn adv_norm_bounded_and_monotone(c in 0usize..4, extra in 0usize..3, ttc in 0.0f64..=T_MAX, dt in 0.0f64..5.0) {
            let c_max = c + extra;
            let n = adv_normalize(adv_raw(c, ttc), c_max.max(1));
            prop_assert!((0.0..=1.0).contains(&n));
            prop_assert!(adv_normalize(adv_raw(c + 1, ttc), (c_max + 1).max(1)) >= adv_normalize(adv_raw(c, ttc), (c_max + 1).max(1)));
            prop_assert!(adv_normalize(adv_raw(c, (ttc + dt).min(T_MAX)), c_max.max(1)) <= n);
        }

        #[test]
        fn min_ttc_zero_iff_collision(v in prop::collection::vec(0.0f64..1.0, 6)) {
            let ls = catalog_entry("CutIn1").unwrap();
            let x: Vec<f64> = ls.parameters.iter().zip(&v).map(|(p, u)| p.lower + u * p.width()).collect();
            let cs = clamp_to_box(&ls, &x).unwrap();
            let trace = simulate(&ls, &cs).unwrap();
            let m = min_ttc(&trace).unwrap();
            prop_assert!((0.0..=T_MAX).contains(&m));
            prop_assert_eq!(m == 0.0, trace.has_collision());
        }
    }
}

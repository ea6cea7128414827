//! Risk-blended objective and the speciation-based particle swarm that
//! searches a logical scenario's box for it.

mod pso;

pub use pso::{run_search, speciation_pso, Particle, PsoOutcome, Scored, ScenarioSet, ScoredScenario, SearchConfig, SpeciesResult};

use crate::error::{Error, Result};
use crate::scenario::LogicalScenario;

/// `base^exp` with `0^0 = 1`.
fn pow0(base: f64, exp: f64) -> f64 {
    if exp == 0.0 {
        1.0
    } else {
        base.powf(exp)
    }
}

/// Blend of normalized criticalness and naturalness at risk level `omega`:
/// `(adv^(w^2) + nat^((1-w)^2))^(e^(w(1-w)))`. At `omega = 0` only `nat`
/// matters, at `omega = 1` only `adv`.
pub fn objective(adv_norm: f64, nat_norm: f64, omega: f64) -> f64 {
    let base = pow0(adv_norm, omega * omega) + pow0(nat_norm, (1.0 - omega) * (1.0 - omega));
    base.powf((omega * (1.0 - omega)).exp())
}

/// Per-dimension species radius `(b - a) / C^(1/D)`.
pub fn speciation_threshold(ls: &LogicalScenario, c_spec: f64) -> Vec<f64> {
    threshold_for(&ls.lower_bounds(), &ls.upper_bounds(), c_spec)
}

pub fn threshold_for(lower: &[f64], upper: &[f64], c_spec: f64) -> Vec<f64> {
    let root = c_spec.powf(1.0 / lower.len() as f64);
    lower.iter().zip(upper).map(|(a, b)| (b - a) / root).collect()
}

/// True when no coordinate differs by more than its threshold.
pub fn same_species(p1: &[f64], p2: &[f64], tau: &[f64]) -> Result<bool> {
    if p1.len() != p2.len() || p1.len() != tau.len() {
        return Err(Error::Dimension {
            expected: tau.len(),
            got: if p1.len() != tau.len() { p1.len() } else { p2.len() },
        });
    }
    Ok(p1.iter().zip(p2).zip(tau).all(|((a, b), t)| (a - b).abs() <= *t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub seed_index: usize,
    pub members: Vec<usize>,
    pub sbest_position: Vec<f64>,
    pub sbest_value: f64,
}

/// Greedy seeding over personal bests: the fittest unassigned particle
/// (lowest index on ties) founds a species and absorbs every unassigned
/// particle within `tau` of it.
pub fn speciate(particles: &[Particle], tau: &[f64]) -> Vec<Species> {
    let mut order: Vec<usize> = (0..particles.len()).collect();
    order.sort_by(|&a, &b| {
        particles[b]
            .pbest_value
            .total_cmp(&particles[a].pbest_value)
            .then(a.cmp(&b))
    });
    let mut assigned = vec![false; particles.len()];
    let mut species = Vec::new();
    for &seed in &order {
        if assigned[seed] {
            continue;
        }
        let center = &particles[seed].pbest_position;
        let members: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| !assigned[i])
            .filter(|&i| same_species(center, &particles[i].pbest_position, tau).unwrap_or(false))
            .collect();
        for &i in &members {
            assigned[i] = true;
        }
        species.push(Species {
            seed_index: seed,
            members,
            sbest_position: center.clone(),
            sbest_value: particles[seed].pbest_value,
        });
    }
    species
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::catalog_entry;
    use proptest::prelude::*;

    #[test]
    fn objective_examples() {
        assert!((objective(0.9, 0.5, 0.0) - 1.5).abs() < 1e-12);
        assert!((objective(0.9, 0.5, 1.0) - 1.9).abs() < 1e-12);
        let mid = (0.9f64.powf(0.25) + 0.5f64.powf(0.25)).powf(0.25f64.exp());
        assert!((objective(0.9, 0.5, 0.5) - mid).abs() < 1e-12);
        assert!((objective(0.9, 0.5, 0.5) - 2.1499).abs() < 1e-3);
    }

    #[test]
    fn zero_to_the_zero_is_one() {
        assert_eq!(objective(0.0, 0.0, 0.0), 1.0);
        assert_eq!(objective(0.0, 0.0, 1.0), 1.0);
        assert_eq!(objective(1.0, 0.0, 1.0), 2.0);
        assert_eq!(objective(0.0, 1.0, 0.0), 2.0);
    }

    #[test]
    fn threshold_examples() {
        let t = threshold_for(&[0.0; 5], &[10.0; 5], 32.0);
        assert!(t.iter().all(|&v| (v - 5.0).abs() < 1e-12));
        assert_eq!(threshold_for(&[1.0, 2.0], &[4.0, 2.0], 1.0), vec![3.0, 0.0]);
        let ls = catalog_entry("FB").unwrap();
        let t = speciation_threshold(&ls, 25.0);
        assert!((t[0] - 20.0 / 25f64.powf(0.2)).abs() < 1e-12);
    }

    #[test]
    fn membership_examples() {
        let tau = [5.0, 5.0];
        assert!(!same_species(&[0.0, 0.0], &[6.0, 0.0], &tau).unwrap());
        assert!(same_species(&[0.0, 0.0], &[4.0, 4.0], &tau).unwrap());
        assert!(same_species(&[1.0, 2.0], &[1.0, 2.0], &tau).unwrap());
        assert!(same_species(&[0.0], &[1.0, 2.0], &tau).is_err());
    }

    fn particle(pos: Vec<f64>, value: f64) -> Particle {
        Particle {
            velocity: vec![0.0; pos.len()],
            pbest_position: pos.clone(),
            position: pos,
            pbest_value: value,
            species_id: 0,
        }
    }

    #[test]
    fn speciation_examples() {
        let tau = [1.0, 1.0];
        let close: Vec<_> = (0..5).map(|i| particle(vec![0.1 * i as f64, 0.0], i as f64)).collect();
        assert_eq!(speciate(&close, &tau).len(), 1);
        let two: Vec<_> = (0..6).map(|i| particle(vec![if i < 3 { 0.0 } else { 5.0 }, 0.1 * i as f64], i as f64)).collect();
        let sp = speciate(&two, &tau);
        assert_eq!(sp.len(), 2);
        assert_eq!(sp[0].seed_index, 5);
        assert_eq!(sp[0].members, vec![5, 4, 3]);
        let far: Vec<_> = (0..4).map(|i| particle(vec![3.0 * i as f64, 0.0], 1.0)).collect();
        let sp = speciate(&far, &tau);
        assert_eq!(sp.len(), 4);
        assert_eq!(sp.iter().map(|s| s.seed_index).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    proptest! {
        #[test]
        fn omega_zero_ignores_adv(nat in 0.0f64..=1.0, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            prop_assert_eq!(objective(a, nat, 0.0), objective(b, nat, 0.0));
        }

        #[test]
        fn omega_one_ignores_nat(adv in 0.0f64..=1.0, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            prop_assert_eq!(objective(adv, a, 1.0), objective(adv, b, 1.0));
        }

        #[test]
        fn objective_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, n in 0.0f64..=1.0, w in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(objective(lo, n, w) <= objective(hi, n, w) + 1e-12);
            prop_assert!(objective(n, lo, w) <= objective(n, hi, w) + 1e-12);
        }

        #[test]
        fn speciation_partitions(points in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0, 0.0f64..1.0), 1..40), t in 0.1f64..6.0) {
            let ps: Vec<_> = points.iter().map(|&(x, y, v)| particle(vec![x, y], v)).collect();
            let tau = [t, t];
            let sp = speciate(&ps, &tau);
            let mut seen = vec![0; ps.len()];
            for s in &sp {
                prop_assert!(s.members.contains(&s.seed_index));
                for &m in &s.members {
                    seen[m] += 1;
                    prop_assert!(same_species(&ps[s.seed_index].pbest_position, &ps[m].pbest_position, &tau).unwrap());
                    prop_assert!(ps[m].pbest_value <= s.sbest_value);
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }
}

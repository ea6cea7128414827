use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{objective, speciate, threshold_for};
use crate::error::{Error, Result};
use crate::scenario::LogicalScenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub omega: f64,
    pub population: usize,
    pub iterations: usize,
    pub c_spec: f64,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity limit as a fraction of each dimension's width.
    pub velocity_clamp: f64,
    pub seed: u64,
    /// Evaluation threads; 0 lets the pool decide.
    #[serde(default)]
    pub threads: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            omega: 0.5,
            population: 20,
            iterations: 15,
            c_spec: 25.0,
            inertia: 0.7298,
            cognitive: 1.49618,
            social: 1.49618,
            velocity_clamp: 0.5,
            seed: 0,
            threads: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::validation("omega", format!("{} is outside [0, 1]", self.omega)));
        }
        if self.population < 2 {
            return Err(Error::validation("population", "need at least 2 particles"));
        }
        if self.iterations < 1 {
            return Err(Error::validation("iterations", "need at least 1 iteration"));
        }
        if !(self.c_spec >= 1.0) {
            return Err(Error::validation("c_spec", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub pbest_position: Vec<f64>,
    pub pbest_value: f64,
    pub species_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scored<T> {
    pub position: Vec<f64>,
    pub value: f64,
    pub payload: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesResult<T> {
    pub id: usize,
    pub seed_index: usize,
    pub members: Vec<usize>,
    pub sbest: Scored<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoOutcome<T> {
    pub species: Vec<SpeciesResult<T>>,
    pub particles: Vec<Particle>,
    /// Personal bests with their payloads, by particle index.
    pub pbests: Vec<Scored<T>>,
    pub evaluations: usize,
}

fn key(x: &[f64]) -> Vec<i64> {
    x.iter().map(|v| (v * 1e9).round() as i64).collect()
}

/// Random stream owned by one particle at one iteration.
fn stream(seed: u64, particle: usize, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64) << 32) | particle as u64);
    rng
}

/// Maximizes `f` over the box with a speciation-based swarm. `f` returns
/// the fitness and a payload kept alongside each personal best. Results do
/// not depend on `threads`.
pub fn speciation_pso<T, F>(lower: &[f64], upper: &[f64], cfg: &SearchConfig, f: F) -> Result<PsoOutcome<T>>
where
    T: Clone + Send + Sync,
    F: Fn(&[f64]) -> Result<(f64, T)> + Sync,
{
    cfg.validate()?;
    let dim = lower.len();
    let width: Vec<f64> = lower.iter().zip(upper).map(|(a, b)| b - a).collect();
    let tau = threshold_for(lower, upper, cfg.c_spec);
    let vmax: Vec<f64> = width.iter().map(|w| cfg.velocity_clamp * w).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::validation("threads", e.to_string()))?;

    let mut particles: Vec<Particle> = (0..cfg.population)
        .map(|i| {
            let mut rng = stream(cfg.seed, i, 0);
            let position: Vec<f64> = (0..dim).map(|d| lower[d] + rng.gen::<f64>() * width[d]).collect();
            let velocity: Vec<f64> = (0..dim).map(|d| (2.0 * rng.gen::<f64>() - 1.0) * vmax[d]).collect();
            Particle {
                pbest_position: position.clone(),
                position,
                velocity,
                pbest_value: f64::NEG_INFINITY,
                species_id: 0,
            }
        })
        .collect();
    let mut pbest_payload: Vec<Option<T>> = vec![None; cfg.population];
    let mut cache: HashMap<Vec<i64>, (f64, T)> = HashMap::new();
    let mut species = Vec::new();

    for iter in 0..cfg.iterations {
        // Evaluate the distinct uncached positions, merge in index order.
        let mut pending: Vec<(Vec<i64>, usize)> = Vec::new();
        for (i, p) in particles.iter().enumerate() {
            let k = key(&p.position);
            if !cache.contains_key(&k) && !pending.iter().any(|(q, _)| *q == k) {
                pending.push((k, i));
            }
        }
        let results: Vec<Result<(f64, T)>> = pool.install(|| {
            pending
                .par_iter()
                .map(|(_, i)| {
                    let x = &particles[*i].position;
                    f(x).map_err(|e| match e {
                        err @ Error::Evaluation { .. } => err,
                        other => Error::Evaluation {
                            values: x.clone(),
                            message: other.to_string(),
                        },
                    })
                })
                .collect()
        });
        for ((k, _), r) in pending.into_iter().zip(results) {
            cache.insert(k, r?);
        }

        for (i, p) in particles.iter_mut().enumerate() {
            let (value, payload) = &cache[&key(&p.position)];
            if *value > p.pbest_value {
                p.pbest_value = *value;
                p.pbest_position = p.position.clone();
                pbest_payload[i] = Some(payload.clone());
            }
        }

        species = speciate(&particles, &tau);
        let mut sbest_of = vec![0; particles.len()];
        for (s, sp) in species.iter().enumerate() {
            for &m in &sp.members {
                particles[m].species_id = s;
                sbest_of[m] = sp.seed_index;
            }
        }
        if iter + 1 == cfg.iterations {
            break;
        }

        let guides: Vec<Vec<f64>> = sbest_of.iter().map(|&s| particles[s].pbest_position.clone()).collect();
        for (i, p) in particles.iter_mut().enumerate() {
            let mut rng = stream(cfg.seed, i, iter + 1);
            for d in 0..dim {
                let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
                let v = cfg.inertia * p.velocity[d]
                    + cfg.cognitive * r1 * (p.pbest_position[d] - p.position[d])
                    + cfg.social * r2 * (guides[i][d] - p.position[d]);
                let v = v.clamp(-vmax[d], vmax[d]);
                let x = p.position[d] + v;
                if x < lower[d] || x > upper[d] {
                    p.position[d] = x.clamp(lower[d], upper[d]);
                    p.velocity[d] = 0.0;
                } else {
                    p.position[d] = x;
                    p.velocity[d] = v;
                }
            }
        }
    }

    let pbests: Vec<Scored<T>> = particles
        .iter()
        .zip(pbest_payload)
        .map(|(p, payload)| Scored {
            position: p.pbest_position.clone(),
            value: p.pbest_value,
            payload: payload.expect("every particle evaluated"),
        })
        .collect();
    let species = species
        .into_iter()
        .enumerate()
        .map(|(id, s)| SpeciesResult {
            id,
            seed_index: s.seed_index,
            sbest: pbests[s.seed_index].clone(),
            members: s.members,
        })
        .collect();
    Ok(PsoOutcome {
        species,
        particles,
        pbests,
        evaluations: cache.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredScenario {
    pub values: Vec<f64>,
    pub species_id: usize,
    pub g: f64,
    pub adv_norm: f64,
    pub nat_norm: f64,
}

/// Search output: every species' best first, then the remaining member
/// personal bests, all sorted by descending `g` within their group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub ls_id: String,
    pub omega: f64,
    pub species_count: usize,
    pub evaluations: usize,
    pub scenarios: Vec<ScoredScenario>,
}

impl ScenarioSet {
    /// Scenarios by descending `g`, ties kept in set order.
    pub fn ranked(&self) -> Vec<&ScoredScenario> {
        let mut out: Vec<&ScoredScenario> = self.scenarios.iter().collect();
        out.sort_by(|a, b| b.g.total_cmp(&a.g));
        out
    }
}

/// Runs the swarm on `ls` with `evaluator` returning `(adv_norm, nat_norm)`.
pub fn run_search<F>(ls: &LogicalScenario, cfg: &SearchConfig, evaluator: F) -> Result<ScenarioSet>
where
    F: Fn(&[f64]) -> Result<(f64, f64)> + Sync,
{
    let omega = cfg.omega;
    let outcome = speciation_pso(&ls.lower_bounds(), &ls.upper_bounds(), cfg, |x| {
        let (adv, nat) = evaluator(x)?;
        Ok((objective(adv, nat, omega), (adv, nat)))
    })?;
    let scored = |s: &Scored<(f64, f64)>, species_id| ScoredScenario {
        values: s.position.clone(),
        species_id,
        g: s.value,
        adv_norm: s.payload.0,
        nat_norm: s.payload.1,
    };
    let mut bests: Vec<ScoredScenario> = outcome.species.iter().map(|sp| scored(&sp.sbest, sp.id)).collect();
    let mut rest: Vec<ScoredScenario> = outcome
        .species
        .iter()
        .flat_map(|sp| sp.members.iter().filter(|&&m| m != sp.seed_index).map(|&m| scored(&outcome.pbests[m], sp.id)))
        .collect();
    bests.sort_by(|a, b| b.g.total_cmp(&a.g));
    rest.sort_by(|a, b| b.g.total_cmp(&a.g));
    bests.extend(rest);
    Ok(ScenarioSet {
        ls_id: ls.id.clone(),
        omega,
        species_count: outcome.species.len(),
        evaluations: outcome.evaluations,
        scenarios: bests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::catalog_entry;
    use std::f64::consts::PI;

    fn sin6(x: &[f64]) -> Result<(f64, ())> {
        Ok(((5.0 * PI * x[0]).sin().powi(6), ()))
    }

    fn peaks_found(out: &PsoOutcome<()>) -> usize {
        [0.1, 0.3, 0.5, 0.7, 0.9]
            .iter()
            .filter(|&&m| out.species.iter().any(|s| (s.sbest.position[0] - m).abs() <= 0.01))
            .count()
    }

    #[test]
    fn niching_finds_equal_maxima() {
        let mut found: Vec<usize> = (1..=10)
            .map(|seed| {
                let cfg = SearchConfig { population: 50, iterations: 60, c_spec: 25.0, seed, ..SearchConfig::default() };
                peaks_found(&speciation_pso(&[0.0], &[1.0], &cfg, sin6).unwrap())
            })
            .collect();
        found.sort();
        assert!(found[5] >= 4, "{found:?}");
    }

    #[test]
    fn single_iteration_is_initial_population() {
        let cfg = SearchConfig { population: 10, iterations: 1, seed: 3, ..SearchConfig::default() };
        let out = speciation_pso(&[0.0, 0.0], &[1.0, 2.0], &cfg, |x| Ok((x[0] + x[1], ()))).unwrap();
        assert_eq!(out.evaluations, 10);
        for p in &out.particles {
            assert_eq!(p.position, p.pbest_position);
            assert_eq!(p.pbest_value, p.position[0] + p.position[1]);
        }
        let cfg = SearchConfig { iterations: 0, ..cfg };
        assert!(speciation_pso(&[0.0], &[1.0], &cfg, sin6).is_err());
    }

    #[test]
    fn constant_objective_stays_in_box() {
        let cfg = SearchConfig { population: 15, iterations: 20, seed: 4, ..SearchConfig::default() };
        let out = speciation_pso(&[-1.0, 5.0], &[1.0, 6.0], &cfg, |_| Ok((1.0, ()))).unwrap();
        for p in &out.particles {
            assert!((-1.0..=1.0).contains(&p.position[0]) && (5.0..=6.0).contains(&p.position[1]));
            assert_eq!(p.pbest_value, 1.0);
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let f = |x: &[f64]| Ok(((3.0 * x[0]).sin() * x[1].cos(), x[0] * 2.0));
        let run = |threads| {
            let cfg = SearchConfig { population: 30, iterations: 12, seed: 9, threads, ..SearchConfig::default() };
            speciation_pso(&[0.0, 0.0], &[3.0, 3.0], &cfg, f).unwrap()
        };
        assert_eq!(run(1), run(8));
    }

    #[test]
    fn evaluator_failure_echoes_values() {
        let cfg = SearchConfig { population: 4, iterations: 2, seed: 1, ..SearchConfig::default() };
        let err = speciation_pso(&[0.0], &[1.0], &cfg, |_| -> Result<(f64, ())> { Err(Error::Empty("boom".into())) }).unwrap_err();
        match err {
            Error::Evaluation { values, message } => {
                assert_eq!(values.len(), 1);
                assert!(message.contains("boom"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn scenario_search_reports_consistent_g() {
        let ls = catalog_entry("CutIn1").unwrap();
        let cfg = SearchConfig { omega: 0.7, population: 12, iterations: 4, seed: 2, ..SearchConfig::default() };
        let set = run_search(&ls, &cfg, |x| Ok(((x[0] - 10.0) / 20.0, (40.0 - x[1]) / 60.0))).unwrap();
        assert!(set.species_count >= 1);
        assert_eq!(set.scenarios.len(), 12);
        for s in &set.scenarios {
            assert_eq!(s.g, objective(s.adv_norm, s.nat_norm, 0.7));
            assert!(s.values.iter().zip(&ls.parameters).all(|(v, p)| p.contains(*v)));
        }
        assert!(set.ranked().windows(2).all(|w| w[0].g >= w[1].g));
    }

    #[test]
    fn invalid_omega() {
        let cfg = SearchConfig { omega: 1.5, ..SearchConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Validation { .. })));
    }
}

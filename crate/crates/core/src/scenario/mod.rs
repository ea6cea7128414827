//! Scenario hierarchy: logical scenarios (a named parameter box bound to a
//! map and a cast of actors) and concrete scenarios (one point in that box).

mod catalog;
mod config;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::map::Route;

pub use catalog::{builtin_catalog, catalog_entry};
pub use config::{parse_scenario_config, to_config_string};

/// One searchable scenario parameter and its admissible range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub unit: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

impl ParameterSpec {
    pub fn new(name: &str, lower: f64, upper: f64, unit: &str, description: &str) -> Self {
        Self {
            name: name.to_string(),
            lower,
            upper,
            unit: unit.to_string(),
            description: description.to_string(),
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapTemplate {
    Highway2,
    Highway3,
    Junction4way,
}

impl MapTemplate {
    pub fn lane_count(self) -> u8 {
        match self {
            MapTemplate::Highway2 => 2,
            MapTemplate::Highway3 => 3,
            MapTemplate::Junction4way => 0,
        }
    }

    pub fn is_junction(self) -> bool {
        matches!(self, MapTemplate::Junction4way)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Ego,
    Npc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    IdmEgo,
    ScriptedNpc,
}

pub const DEFAULT_LENGTH_M: f64 = 4.5;
pub const DEFAULT_WIDTH_M: f64 = 2.0;

fn default_length() -> f64 {
    DEFAULT_LENGTH_M
}

fn default_width() -> f64 {
    DEFAULT_WIDTH_M
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorTemplate {
    pub role: Role,
    pub route: String,
    pub behavior: Behavior,
    #[serde(default = "default_length")]
    pub length_m: f64,
    #[serde(default = "default_width")]
    pub width_m: f64,
}

impl ActorTemplate {
    pub fn ego(route: &str) -> Self {
        Self {
            role: Role::Ego,
            route: route.to_string(),
            behavior: Behavior::IdmEgo,
            length_m: DEFAULT_LENGTH_M,
            width_m: DEFAULT_WIDTH_M,
        }
    }

    pub fn npc(route: &str) -> Self {
        Self {
            role: Role::Npc,
            route: route.to_string(),
            behavior: Behavior::ScriptedNpc,
            length_m: DEFAULT_LENGTH_M,
            width_m: DEFAULT_WIDTH_M,
        }
    }
}

/// A parameter box over one functional situation. The order of
/// `parameters` fixes the layout of every concrete value vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicalScenario {
    pub id: String,
    pub description: String,
    pub map_template: MapTemplate,
    pub horizon_s: f64,
    pub dt_s: f64,
    #[serde(rename = "parameter")]
    pub parameters: Vec<ParameterSpec>,
    #[serde(rename = "actor")]
    pub actors: Vec<ActorTemplate>,
}

impl LogicalScenario {
    pub fn dim(&self) -> usize {
        self.parameters.len()
    }

    pub fn step_count(&self) -> usize {
        (self.horizon_s / self.dt_s).round() as usize
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p.name == name)
    }

    pub fn lower_bounds(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.lower).collect()
    }

    pub fn upper_bounds(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.upper).collect()
    }

    pub fn ego(&self) -> &ActorTemplate {
        self.actors
            .iter()
            .find(|a| a.role == Role::Ego)
            .expect("validated scenario has an ego")
    }

    pub fn npcs(&self) -> impl Iterator<Item = &ActorTemplate> {
        self.actors.iter().filter(|a| a.role == Role::Npc)
    }

    pub fn npc_count(&self) -> usize {
        self.npcs().count()
    }

    /// Checks every structural invariant, including route resolution
    /// against the map template.
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::validation("id", "must not be empty"));
        }
        if self.parameters.is_empty() {
            return Err(Error::validation("parameter", "at least one parameter is required"));
        }
        for (i, p) in self.parameters.iter().enumerate() {
            if p.name.trim().is_empty() {
                return Err(Error::validation("parameter", format!("entry {i} has no name")));
            }
            if !p.lower.is_finite() || !p.upper.is_finite() {
                return Err(Error::validation(&p.name, "bounds must be finite"));
            }
            if p.lower > p.upper {
                return Err(Error::validation(
                    &p.name,
                    format!("lower bound {} exceeds upper bound {}", p.lower, p.upper),
                ));
            }
            if self.parameters[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::validation(&p.name, "duplicate parameter name"));
            }
        }
        if !(self.horizon_s > 0.0 && self.horizon_s.is_finite()) {
            return Err(Error::validation("horizon_s", "must be positive"));
        }
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return Err(Error::validation("dt_s", "must be positive"));
        }
        let ratio = self.horizon_s / self.dt_s;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::validation(
                "horizon_s",
                "must be an integer multiple of dt_s",
            ));
        }
        let egos = self.actors.iter().filter(|a| a.role == Role::Ego).count();
        if egos != 1 {
            return Err(Error::validation(
                "actor",
                format!("exactly one ego actor is required, found {egos}"),
            ));
        }
        for actor in &self.actors {
            let expected = match actor.role {
                Role::Ego => Behavior::IdmEgo,
                Role::Npc => Behavior::ScriptedNpc,
            };
            if actor.behavior != expected {
                return Err(Error::validation(
                    "actor",
                    format!("{:?} actor must use {:?} behavior", actor.role, expected),
                ));
            }
            if !(actor.length_m > 0.0 && actor.width_m > 0.0) {
                return Err(Error::validation("actor", "footprint extents must be positive"));
            }
            let route = Route::parse(self.map_template, &actor.route)?;
            if actor.role == Role::Ego && matches!(route, Route::LaneChange { .. }) {
                return Err(Error::validation(
                    "actor",
                    "the ego tracks its lane centerline and cannot take a lane-change route",
                ));
            }
        }
        Ok(())
    }
}

/// One fully instantiated scenario: a value for every parameter of a
/// logical scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcreteScenario {
    pub ls_id: String,
    pub values: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl ConcreteScenario {
    /// Builds a concrete scenario, rejecting values outside the box.
    pub fn new(ls: &LogicalScenario, values: Vec<f64>, seed: u64) -> Result<Self> {
        check_dim(ls, values.len())?;
        for (p, &v) in ls.parameters.iter().zip(&values) {
            if !p.contains(v) {
                return Err(Error::validation(
                    &p.name,
                    format!("value {v} outside [{}, {}]", p.lower, p.upper),
                ));
            }
        }
        Ok(Self {
            ls_id: ls.id.clone(),
            values,
            seed,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn value(&self, ls: &LogicalScenario, name: &str) -> Option<f64> {
        ls.param_index(name).map(|i| self.values[i])
    }
}

fn check_dim(ls: &LogicalScenario, got: usize) -> Result<()> {
    if got != ls.dim() {
        return Err(Error::Dimension {
            expected: ls.dim(),
            got,
        });
    }
    Ok(())
}

/// Projects an arbitrary vector onto the parameter box coordinate-wise.
pub fn clamp_to_box(ls: &LogicalScenario, values: &[f64]) -> Result<ConcreteScenario> {
    check_dim(ls, values.len())?;
    let values = ls
        .parameters
        .iter()
        .zip(values)
        .map(|(p, &v)| if v.is_nan() { p.lower } else { v.clamp(p.lower, p.upper) })
        .collect();
    Ok(ConcreteScenario {
        ls_id: ls.id.clone(),
        values,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_dim() -> LogicalScenario {
        LogicalScenario {
            id: "T".into(),
            description: String::new(),
            map_template: MapTemplate::Highway2,
            horizon_s: 20.0,
            dt_s: 0.1,
            parameters: vec![ParameterSpec::new("x", 0.0, 10.0, "m", "")],
            actors: vec![ActorTemplate::ego("lane0"), ActorTemplate::npc("lane0")],
        }
    }

    #[test]
    fn clamp_examples() {
        let ls = one_dim();
        assert_eq!(clamp_to_box(&ls, &[12.0]).unwrap().values, vec![10.0]);
        assert_eq!(clamp_to_box(&ls, &[5.0]).unwrap().values, vec![5.0]);
        assert_eq!(clamp_to_box(&ls, &[-3.0]).unwrap().values, vec![0.0]);
    }

    #[test]
    fn clamp_rejects_wrong_length() {
        let ls = one_dim();
        assert!(matches!(
            clamp_to_box(&ls, &[1.0, 2.0]),
            Err(Error::Dimension { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn concrete_rejects_out_of_box() {
        let ls = one_dim();
        assert!(ConcreteScenario::new(&ls, vec![11.0], 0).is_err());
        assert!(ConcreteScenario::new(&ls, vec![10.0], 0).is_ok());
    }

    #[test]
    fn validation_catches_bad_structure() {
        let mut ls = one_dim();
        ls.actors.push(ActorTemplate::ego("lane1"));
        assert!(ls.validate().is_err());

        let mut ls = one_dim();
        ls.dt_s = 0.3;
        ls.horizon_s = 1.0;
        assert!(ls.validate().is_err());

        let mut ls = one_dim();
        ls.actors[0].route = "lane1>lane0".into();
        assert!(ls.validate().is_err());

        let mut ls = one_dim();
        ls.parameters.push(ParameterSpec::new("x", 0.0, 1.0, "m", ""));
        assert!(ls.validate().is_err());
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent(v in prop::collection::vec(-1e3f64..1e3, 5)) {
            for ls in builtin_catalog().iter().filter(|ls| ls.dim() == 5) {
                let once = clamp_to_box(ls, &v).unwrap();
                let twice = clamp_to_box(ls, &once.values).unwrap();
                prop_assert_eq!(&once.values, &twice.values);
                prop_assert!(ConcreteScenario::new(ls, once.values.clone(), 0).is_ok());
            }
        }
    }
}

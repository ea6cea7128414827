//! Collision types: six impact classes, each split three ways by the
//! NPC-minus-ego speed difference.
//!
//! Classes are decided in precedence order:
//!
//! 1. `C6` angled: relative heading magnitude within [45, 135] degrees.
//! 2. `C5` cutoff: impact bearing within 120 degrees of dead ahead while the
//!    NPC moves sideways faster than 0.3 m/s.
//! 3. Bearing sectors of the impact point in the ego frame: `C1` front
//!    (|b| <= 30), `C3` left (30 < b <= 120), `C4` right (-120 <= b < -30),
//!    `C2` rear (everything else).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::sim::CollisionEvent;

pub const SUBCLASS_THRESHOLD: f64 = 5.0;
pub const LATERAL_CUTOFF_SPEED: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CollisionClass {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
}

impl CollisionClass {
    pub const ALL: [CollisionClass; 6] = [
        CollisionClass::C1,
        CollisionClass::C2,
        CollisionClass::C3,
        CollisionClass::C4,
        CollisionClass::C5,
        CollisionClass::C6,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subclass {
    H,
    M,
    L,
}

impl Subclass {
    pub const ALL: [Subclass; 3] = [Subclass::H, Subclass::M, Subclass::L];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CollisionLabel {
    pub class: CollisionClass,
    pub subclass: Subclass,
}

impl CollisionLabel {
    pub fn new(class: CollisionClass, subclass: Subclass) -> Self {
        Self { class, subclass }
    }
}

impl fmt::Display for CollisionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{:?}", self.class, self.subclass)
    }
}

impl FromStr for CollisionLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad collision label `{s}`");
        if s.len() != 3 {
            return Err(bad());
        }
        let class = CollisionClass::ALL
            .into_iter()
            .find(|c| format!("{c:?}") == s[..2])
            .ok_or_else(bad)?;
        let subclass = Subclass::ALL
            .into_iter()
            .find(|c| format!("{c:?}") == s[2..])
            .ok_or_else(bad)?;
        Ok(Self { class, subclass })
    }
}

impl Serialize for CollisionLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CollisionLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `H` above +5 m/s, `L` below -5 m/s, `M` otherwise (bounds inclusive).
pub fn subclass_for(dv: f64) -> Subclass {
    if dv > SUBCLASS_THRESHOLD {
        Subclass::H
    } else if dv < -SUBCLASS_THRESHOLD {
        Subclass::L
    } else {
        Subclass::M
    }
}

fn class_for(bearing_deg: f64, relative_heading_deg: f64, npc_lateral_speed: f64) -> CollisionClass {
    let rel = relative_heading_deg.abs();
    if (45.0..=135.0).contains(&rel) {
        return CollisionClass::C6;
    }
    let b = bearing_deg;
    if b.abs() <= 120.0 && npc_lateral_speed.abs() > LATERAL_CUTOFF_SPEED {
        return CollisionClass::C5;
    }
    if b.abs() <= 30.0 {
        CollisionClass::C1
    } else if b > 30.0 && b <= 120.0 {
        CollisionClass::C3
    } else if (-120.0..-30.0).contains(&b) {
        CollisionClass::C4
    } else {
        CollisionClass::C2
    }
}

pub fn classify_collision(ev: &CollisionEvent) -> CollisionLabel {
    let [x, y] = ev.impact_point_ego_frame;
    let bearing = y.atan2(x).to_degrees();
    CollisionLabel {
        class: class_for(bearing, ev.relative_heading.to_degrees(), ev.npc_lateral_speed),
        subclass: subclass_for(ev.npc_speed - ev.ego_speed),
    }
}

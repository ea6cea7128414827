//! Deterministic fixed-step kinematic traffic simulation.
//!
//! Every actor moves along the centerline of its route. The ego runs the
//! intelligent driver model against the nearest in-lane leader (and, at
//! junctions, against a virtual leader at the conflict point); NPCs follow
//! scripted profiles selected by the scenario's parameter names:
//!
//! | NPC `k` parameter (prefix `npc` for k = 1, `npc<k>` otherwise) | effect |
//! |---|---|
//! | `<p>_init_gap` / `<p>_init_long_offset` | initial bumper gap / center offset ahead of the ego |
//! | `<p>_init_speed` / `<p>_speed` | initial (or constant) speed |
//! | `brake_trigger_time`, `brake_decel` | lead braking profile |
//! | `cutin_trigger_gap`, `cutin_duration`, `<p>_target_speed` | lane-change profile |
//! | `<p>_init_dist_to_conflict`, `ego_init_dist_to_conflict` | junction placement |
//!
//! Maneuver parameters may also carry the NPC prefix to target a specific
//! actor.

pub mod export;
pub mod geometry;
pub mod idm;
pub mod map;

use std::fmt;
use std::sync::Arc;

use geometry::{normalize_angle, overlap_centroid, sat_overlap, OrientedRect};
use idm::IdmParams;
use map::{conflict_point, lane_center, Path, Pose, Route, LANE_WIDTH_M};

use crate::error::{Error, Result};
use crate::scenario::{ConcreteScenario, LogicalScenario, Role};

/// Hardest deceleration the ego vehicle can realize, whatever the policy
/// requests.
pub const EGO_MAX_BRAKE: f64 = 4.0;
/// Simulated time kept after the first collision.
pub const POST_COLLISION_S: f64 = 1.0;
/// Half-width of the arrival window the ego uses to decide yielding.
pub const YIELD_WINDOW_S: f64 = 1.5;

const DEFAULT_EGO_SPEED: f64 = 15.0;
const DEFAULT_GAP: f64 = 30.0;
const DEFAULT_CONFLICT_DIST: f64 = 40.0;
const DEFAULT_TRIGGER_GAP: f64 = 20.0;
const DEFAULT_CUTIN_DURATION: f64 = 3.0;
const STOP_LINE_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LaneRef {
    Index(i32),
    Route(Arc<str>),
}

impl fmt::Display for LaneRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LaneRef::Index(i) => write!(f, "{i}"),
            LaneRef::Route(r) => f.write_str(r),
        }
    }
}

/// Pose and speed of one actor at one step. `heading` follows the velocity
/// vector and is normalized to (-pi, pi].
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub actor: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub lane: LaneRef,
    pub length: f64,
    pub width: f64,
}

impl VehicleState {
    pub fn footprint(&self) -> OrientedRect {
        OrientedRect::new([self.x, self.y], self.heading, self.length, self.width)
    }

    pub fn velocity(&self) -> [f64; 2] {
        let (s, c) = self.heading.sin_cos();
        [self.speed * c, self.speed * s]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub vehicles: Vec<VehicleState>,
}

/// First contact between the ego and one NPC.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionEvent {
    pub time_s: f64,
    pub step: usize,
    pub npc: usize,
    pub npc_id: String,
    pub impact_point_ego_frame: [f64; 2],
    pub ego_speed: f64,
    pub npc_speed: f64,
    /// NPC heading minus ego heading, normalized to (-pi, pi].
    pub relative_heading: f64,
    /// NPC velocity component across its lane at impact.
    pub npc_lateral_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub ls_id: String,
    /// Actor names; index 0 is always the ego.
    pub actor_ids: Vec<String>,
    pub dt_s: f64,
    pub steps: Vec<Snapshot>,
    pub collisions: Vec<CollisionEvent>,
    pub ego_distance_m: f64,
    pub sim_time_s: f64,
}

impl SimulationTrace {
    pub fn npc_count(&self) -> usize {
        self.actor_ids.len() - 1
    }

    pub fn has_collision(&self) -> bool {
        !self.collisions.is_empty()
    }
}

#[derive(Debug, Clone)]
enum Script {
    Ego { v0: f64 },
    Cruise,
    Brake { at: f64, decel: f64 },
    Merge {
        trigger_gap: f64,
        duration: f64,
        target_speed: f64,
        offset0: f64,
        /// Starts behind the ego: merges once it has pulled ahead by the
        /// trigger gap rather than once it has closed to it.
        from_behind: bool,
        started: Option<(f64, f64)>,
    },
}

#[derive(Debug, Clone)]
struct Agent {
    name: String,
    route_name: Arc<str>,
    path: Path,
    junction: bool,
    length: f64,
    width: f64,
    s: f64,
    speed: f64,
    lateral: f64,
    lateral_speed: f64,
    script: Script,
    frozen: bool,
    /// Conflict point with the ego as (ego arc length, own arc length).
    conflict: Option<(f64, f64)>,
}

impl Agent {
    fn pose(&self) -> Pose {
        let base = self.path.pose_at(self.s);
        if self.lateral == 0.0 && self.lateral_speed == 0.0 {
            return base;
        }
        let (sn, cs) = base.heading.sin_cos();
        Pose {
            x: base.x - self.lateral * sn,
            y: base.y + self.lateral * cs,
            heading: normalize_angle(base.heading + self.lateral_speed.atan2(self.speed)),
        }
    }

    fn state(&self, actor: usize) -> VehicleState {
        let pose = self.pose();
        let lane = if self.junction {
            LaneRef::Route(self.route_name.clone())
        } else {
            LaneRef::Index((pose.y / LANE_WIDTH_M).round() as i32)
        };
        VehicleState {
            actor,
            x: pose.x,
            y: pose.y,
            heading: pose.heading,
            speed: self.speed.hypot(self.lateral_speed),
            lane,
            length: self.length,
            width: self.width,
        }
    }
}

struct Params<'a> {
    ls: &'a LogicalScenario,
    values: &'a [f64],
}

impl Params<'_> {
    fn get(&self, name: &str) -> Option<f64> {
        self.ls.param_index(name).map(|i| self.values[i])
    }

    fn npc(&self, prefix: &str, name: &str) -> Option<f64> {
        self.get(&format!("{prefix}_{name}"))
    }

    /// Maneuver parameter: prefixed form first, bare form for the first NPC.
    fn maneuver(&self, prefix: &str, first: bool, name: &str) -> Option<f64> {
        self.npc(prefix, name)
            .or_else(|| if first { self.get(name) } else { None })
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn smoothstep_rate(t: f64) -> f64 {
    if (0.0..=1.0).contains(&t) {
        6.0 * t * (1.0 - t)
    } else {
        0.0
    }
}

fn build_agents(ls: &LogicalScenario, values: &[f64]) -> Result<Vec<Agent>> {
    let params = Params { ls, values };
    let junction = ls.map_template.is_junction();
    let ego_t = ls.ego();
    let ego_route = Route::parse(ls.map_template, &ego_t.route)?;
    let ego_speed = params.get("ego_init_speed").unwrap_or(DEFAULT_EGO_SPEED);
    let mut agents = vec![Agent {
        name: "ego".into(),
        route_name: Arc::from(ego_t.route.as_str()),
        path: ego_route.path(),
        junction,
        length: ego_t.length_m,
        width: ego_t.width_m,
        s: 0.0,
        speed: ego_speed,
        lateral: 0.0,
        lateral_speed: 0.0,
        script: Script::Ego { v0: ego_speed },
        frozen: false,
        conflict: None,
    }];

    let mut ego_s: Option<f64> = None;
    for (k, npc_t) in ls.actors.iter().filter(|a| a.role == Role::Npc).enumerate() {
        let first = k == 0;
        let prefix = if first { "npc".to_string() } else { format!("npc{}", k + 1) };
        let route = Route::parse(ls.map_template, &npc_t.route)?;
        let path = route.path();
        let speed = params
            .npc(&prefix, "init_speed")
            .or_else(|| params.npc(&prefix, "speed"))
            .unwrap_or(ego_speed);
        let mut agent = Agent {
            name: format!("npc{}", k + 1),
            route_name: Arc::from(npc_t.route.as_str()),
            path,
            junction,
            length: npc_t.length_m,
            width: npc_t.width_m,
            s: 0.0,
            speed,
            lateral: 0.0,
            lateral_speed: 0.0,
            script: Script::Cruise,
            frozen: false,
            conflict: None,
        };
        if junction {
            let dist = params
                .npc(&prefix, "init_dist_to_conflict")
                .unwrap_or(DEFAULT_CONFLICT_DIST);
            match conflict_point(&agents[0].path, &agent.path) {
                Some((se, sn)) => {
                    agent.s = sn - dist;
                    agent.conflict = Some((se, sn));
                    ego_s.get_or_insert(se);
                }
                None => agent.s = map::JUNCTION_LEG_M - dist,
            }
        } else {
            let half = 0.5 * (agents[0].length + agent.length);
            agent.s = match params.npc(&prefix, "init_gap") {
                Some(gap) => gap + half,
                None => params
                    .npc(&prefix, "init_long_offset")
                    .unwrap_or(DEFAULT_GAP + half),
            };
            if let Route::LaneChange { from, to } = route {
                agent.lateral = lane_center(from) - lane_center(to);
                agent.script = Script::Merge {
                    trigger_gap: params
                        .maneuver(&prefix, first, "cutin_trigger_gap")
                        .unwrap_or(DEFAULT_TRIGGER_GAP),
                    duration: params
                        .maneuver(&prefix, first, "cutin_duration")
                        .unwrap_or(DEFAULT_CUTIN_DURATION)
                        .max(1e-3),
                    target_speed: params.npc(&prefix, "target_speed").unwrap_or(speed),
                    offset0: agent.lateral,
                    from_behind: agent.s - half < 0.0,
                    started: None,
                };
            } else if let (Some(at), Some(decel)) = (
                params.maneuver(&prefix, first, "brake_trigger_time"),
                params.maneuver(&prefix, first, "brake_decel"),
            ) {
                agent.script = Script::Brake { at, decel };
            }
        }
        agents.push(agent);
    }

    if junction {
        let ego_dist = params
            .get("ego_init_dist_to_conflict")
            .unwrap_or(DEFAULT_CONFLICT_DIST);
        agents[0].s = ego_s.unwrap_or(map::JUNCTION_LEG_M) - ego_dist;
    }
    Ok(agents)
}

struct EgoView {
    pose: Pose,
}

impl EgoView {
    /// Position of `p` in the ego's lane frame: (ahead, left).
    fn local(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.pose.heading.sin_cos();
        let d = [p[0] - self.pose.x, p[1] - self.pose.y];
        [d[0] * c + d[1] * s, -d[0] * s + d[1] * c]
    }
}

fn ego_accel(agents: &[Agent], states: &[VehicleState], idm: &IdmParams) -> f64 {
    let ego = &agents[0];
    let Script::Ego { v0 } = ego.script else {
        unreachable!("actor 0 is the ego")
    };
    let v = ego.speed;
    let view = EgoView {
        pose: ego.path.pose_at(ego.s),
    };
    let mut acc = idm.accel(v, v0, f64::INFINITY, 0.0);

    // Nearest leader whose center intrudes into the ego lane.
    let mut leader: Option<(f64, f64)> = None;
    for (other, st) in agents.iter().zip(states).skip(1) {
        let rel = view.local([st.x, st.y]);
        if rel[0] <= 0.0 || rel[1].abs() >= 0.5 * (LANE_WIDTH_M + other.width) {
            continue;
        }
        let gap = rel[0] - 0.5 * (ego.length + other.length);
        let vel = st.velocity();
        let d = view.pose.direction();
        let v_along = vel[0] * d[0] + vel[1] * d[1];
        if leader.map_or(true, |(g, _)| gap < g) {
            leader = Some((gap, v - v_along));
        }
    }
    if let Some((gap, dv)) = leader {
        acc = acc.min(idm.accel(v, v0, gap, dv));
    }

    // Virtual leader at a conflict point the ego would reach together with
    // an NPC.
    for other in &agents[1..] {
        let Some((se, sn)) = other.conflict else { continue };
        let d_ego = se - ego.s;
        let stop_gap = d_ego - 0.5 * ego.length - 0.5 * other.width - STOP_LINE_MARGIN;
        if stop_gap <= 0.0 {
            continue;
        }
        let d_npc = sn - other.s;
        let clear = 0.5 * other.length + 0.5 * ego.width + STOP_LINE_MARGIN;
        if d_npc < -clear {
            continue;
        }
        let t_ego = d_ego.max(0.0) / v.max(0.1);
        let t_npc = d_npc.max(0.0) / other.speed.max(0.1);
        if (t_ego - t_npc).abs() <= YIELD_WINDOW_S || d_npc.abs() <= clear {
            acc = acc.min(idm.accel(v, v0, stop_gap, v));
        }
    }
    acc.max(-EGO_MAX_BRAKE)
}

/// Runs one concrete scenario to the horizon, or until
/// [`POST_COLLISION_S`] after the first collision.
pub fn simulate(ls: &LogicalScenario, cs: &ConcreteScenario) -> Result<SimulationTrace> {
    if cs.values.len() != ls.dim() {
        return Err(Error::Dimension {
            expected: ls.dim(),
            got: cs.values.len(),
        });
    }
    let mut agents = build_agents(ls, &cs.values)?;
    let idm = IdmParams::default();
    let dt = ls.dt_s;
    let n_steps = ls.step_count();
    let post_steps = (POST_COLLISION_S / dt).round() as usize;
    let mut collided = vec![false; agents.len()];
    let mut collisions = Vec::new();
    let mut first_hit: Option<usize> = None;
    let mut steps = Vec::with_capacity(n_steps + 1);
    let mut ego_distance = 0.0;

    for k in 0..=n_steps {
        let time = (k as f64 * dt * 1e9).round() / 1e9;
        let states: Vec<VehicleState> = agents.iter().enumerate().map(|(i, a)| a.state(i)).collect();

        let ego_rect = states[0].footprint();
        for i in 1..agents.len() {
            if collided[i] {
                continue;
            }
            let npc_rect = states[i].footprint();
            if !sat_overlap(&ego_rect, &npc_rect) {
                continue;
            }
            collided[i] = true;
            let impact = overlap_centroid(&ego_rect, &npc_rect).unwrap_or(npc_rect.center);
            collisions.push(CollisionEvent {
                time_s: time,
                step: k,
                npc: i,
                npc_id: agents[i].name.clone(),
                impact_point_ego_frame: ego_rect.to_local(impact),
                ego_speed: states[0].speed,
                npc_speed: states[i].speed,
                relative_heading: normalize_angle(states[i].heading - states[0].heading),
                npc_lateral_speed: agents[i].lateral_speed,
            });
            first_hit.get_or_insert(k);
            for idx in [0, i] {
                agents[idx].frozen = true;
                agents[idx].speed = 0.0;
                agents[idx].lateral_speed = 0.0;
            }
        }
        steps.push(Snapshot {
            time,
            vehicles: states,
        });
        if k == n_steps || first_hit.is_some_and(|h| k >= h + post_steps) {
            break;
        }

        let states = &steps[k].vehicles;
        let t = k as f64 * dt;
        let ego_x = states[0].x;
        let ego_len = agents[0].length;
        let mut accels = vec![0.0; agents.len()];
        accels[0] = ego_accel(&agents, states, &idm);
        for (i, a) in agents.iter_mut().enumerate().skip(1) {
            accels[i] = match &mut a.script {
                Script::Ego { .. } => unreachable!(),
                Script::Cruise => 0.0,
                Script::Brake { at, decel } => {
                    if t + 1e-9 >= *at {
                        -*decel
                    } else {
                        0.0
                    }
                }
                Script::Merge {
                    trigger_gap,
                    duration,
                    target_speed,
                    from_behind,
                    started,
                    ..
                } => {
                    if started.is_none() {
                        let gap = states[i].x - ego_x - 0.5 * (ego_len + a.length);
                        let reached = if *from_behind { gap >= *trigger_gap } else { gap <= *trigger_gap };
                        if reached {
                            *started = Some((t, a.speed));
                        }
                    }
                    match *started {
                        Some((t0, v_start)) if t < t0 + *duration - 1e-9 => {
                            (*target_speed - v_start) / *duration
                        }
                        _ => 0.0,
                    }
                }
            };
        }

        let t_next = (k + 1) as f64 * dt;
        for (i, a) in agents.iter_mut().enumerate() {
            if a.frozen {
                continue;
            }
            let ds = a.speed * dt;
            a.s += ds;
            if i == 0 {
                ego_distance += ds;
            }
            a.speed = (a.speed + accels[i] * dt).max(0.0);
            if let Script::Merge {
                duration,
                offset0,
                started: Some((t0, _)),
                target_speed,
                ..
            } = a.script
            {
                let tau = (t_next - t0) / duration;
                a.lateral = offset0 * (1.0 - smoothstep(tau));
                a.lateral_speed = -offset0 * smoothstep_rate(tau) / duration;
                if tau >= 1.0 - 1e-9 {
                    a.lateral = 0.0;
                    a.lateral_speed = 0.0;
                    a.speed = target_speed;
                }
            }
        }
    }

    let sim_time_s = ((steps.len() - 1) as f64 * dt * 1e9).round() / 1e9;
    Ok(SimulationTrace {
        ls_id: ls.id.clone(),
        actor_ids: agents.into_iter().map(|a| a.name).collect(),
        dt_s: dt,
        steps,
        collisions,
        ego_distance_m: ego_distance,
        sim_time_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{catalog_entry, clamp_to_box, ActorTemplate, MapTemplate, ParameterSpec};

    fn cs(ls: &LogicalScenario, pairs: &[(&str, f64)]) -> ConcreteScenario {
        let mut v: Vec<f64> = ls.parameters.iter().map(|p| 0.5 * (p.lower + p.upper)).collect();
        for (name, val) in pairs {
            v[ls.param_index(name).unwrap()] = *val;
        }
        ConcreteScenario::new(ls, v, 0).unwrap()
    }

    #[test]
    fn front_brake_at_short_gap_collides() {
        let ls = catalog_entry("FB").unwrap();
        let c = cs(
            &ls,
            &[
                ("ego_init_speed", 30.0),
                ("npc_init_speed", 30.0),
                ("npc_init_gap", 10.0),
                ("brake_decel", 9.0),
                ("brake_trigger_time", 1.0),
            ],
        );
        let trace = simulate(&ls, &c).unwrap();
        assert!(!trace.collisions.is_empty());
        let ev = &trace.collisions[0];
        assert!(ev.impact_point_ego_frame[0] > 0.0);
    }

    // Oracle for the braking case: an ego limited to EGO_MAX_BRAKE stops
    // over v^2 / (2 b) = 112.5 m from 30 m/s, while the lead (30 m/s, 9 m/s^2
    // from t = 1 s) stops 30 + 50 = 80 m downstream of its start, 10 m ahead.
    #[test]
    fn front_brake_stopping_distance_oracle() {
        let ego_stop = 30.0f64.powi(2) / (2.0 * EGO_MAX_BRAKE);
        let lead_stop = 10.0 + 30.0 * 1.0 + 30.0f64.powi(2) / (2.0 * 9.0);
        assert!(ego_stop > lead_stop);
    }

    #[test]
    fn distant_equal_speed_cut_in_is_safe() {
        let ls = catalog_entry("CutIn1").unwrap();
        for v in [10.0, 20.0, 30.0] {
            for dur in [1.0, 3.0, 5.0] {
                let c = cs(
                    &ls,
                    &[
                        ("ego_init_speed", v),
                        ("npc_init_speed", v),
                        ("npc_target_speed", v),
                        ("npc_init_long_offset", 40.0),
                        ("cutin_trigger_gap", 40.0),
                        ("cutin_duration", dur),
                    ],
                );
                let trace = simulate(&ls, &c).unwrap();
                assert!(trace.collisions.is_empty(), "v={v} dur={dur}");
                // The merge actually happened.
                let last = trace.steps.last().unwrap();
                assert_eq!(last.vehicles[1].lane, LaneRef::Index(0));
            }
        }
    }

    #[test]
    fn late_cut_in_collides_mid_merge() {
        let ls = catalog_entry("CutIn1").unwrap();
        let c = cs(
            &ls,
            &[
                ("ego_init_speed", 20.0),
                ("npc_init_speed", 22.0),
                ("npc_target_speed", 5.0),
                ("npc_init_long_offset", 0.0),
                ("cutin_trigger_gap", 5.0),
                ("cutin_duration", 2.0),
            ],
        );
        let trace = simulate(&ls, &c).unwrap();
        assert_eq!(trace.collisions.len(), 1);
        let ev = &trace.collisions[0];
        assert!(ev.impact_point_ego_frame[0] > 0.0, "impact ahead of the ego center");
        assert!(ev.npc_lateral_speed < -0.3);
    }

    // An NPC starting behind merges only after pulling ahead by the trigger
    // gap; if it is slower it never merges.
    #[test]
    fn merge_from_behind_waits_for_the_gap() {
        let ls = catalog_entry("CutIn1").unwrap();
        let base = [("ego_init_speed", 20.0), ("npc_init_long_offset", -15.0), ("cutin_trigger_gap", 10.0), ("cutin_duration", 2.0)];
        let slow = simulate(&ls, &cs(&ls, &[&base[..], &[("npc_init_speed", 18.0), ("npc_target_speed", 18.0)]].concat())).unwrap();
        assert!(slow.collisions.is_empty());
        assert!(slow.steps.iter().all(|s| s.vehicles[1].lane != LaneRef::Index(0)));

        let fast = simulate(&ls, &cs(&ls, &[&base[..], &[("npc_init_speed", 25.0), ("npc_target_speed", 25.0)]].concat())).unwrap();
        assert!(fast.collisions.is_empty());
        let first_move = fast
            .steps
            .iter()
            .position(|s| (s.vehicles[1].y - fast.steps[0].vehicles[1].y).abs() > 1e-9)
            .unwrap();
        let st = &fast.steps[first_move - 1];
        let gap = st.vehicles[1].x - st.vehicles[0].x - 4.5;
        assert!((gap - 10.0).abs() < 5.0 * 0.1 + 1e-9, "merge began at gap {gap}");
    }

    #[test]
    fn runs_stop_one_second_after_collision() {
        let ls = catalog_entry("FB").unwrap();
        let c = cs(
            &ls,
            &[
                ("ego_init_speed", 30.0),
                ("npc_init_speed", 30.0),
                ("npc_init_gap", 10.0),
                ("brake_decel", 9.0),
                ("brake_trigger_time", 1.0),
            ],
        );
        let trace = simulate(&ls, &c).unwrap();
        let hit = trace.collisions[0].step;
        assert_eq!(trace.steps.len(), hit + 11);
        assert!((trace.sim_time_s - (trace.steps.len() - 1) as f64 * 0.1).abs() < 1e-9);
        // Collided vehicles stay in contact.
        let last = trace.steps.last().unwrap();
        assert!(sat_overlap(&last.vehicles[0].footprint(), &last.vehicles[1].footprint()));
    }

    #[test]
    fn deterministic_traces() {
        for ls in crate::scenario::builtin_catalog() {
            let mid: Vec<f64> = ls.parameters.iter().map(|p| 0.3 * p.lower + 0.7 * p.upper).collect();
            let c = clamp_to_box(&ls, &mid).unwrap();
            assert_eq!(simulate(&ls, &c).unwrap(), simulate(&ls, &c).unwrap());
        }
    }

    #[test]
    fn junction_entries_run() {
        for id in ["OVTP", "NJLT", "NJRT"] {
            let ls = catalog_entry(id).unwrap();
            // Simultaneous arrival at speed: the ego cannot stop in time.
            let hot = cs(
                &ls,
                &[
                    ("ego_init_speed", 15.0),
                    ("ego_init_dist_to_conflict", 20.0),
                    ("npc_init_dist_to_conflict", 20.0),
                    ("npc_speed", 15.0),
                ],
            );
            let trace = simulate(&ls, &hot).unwrap();
            assert!(trace.has_collision(), "{id}");
            let ev = &trace.collisions[0];
            if id == "OVTP" {
                let rel = ev.relative_heading.abs().to_degrees();
                assert!((30.0..=150.0).contains(&rel), "{id}: {rel}");
            }
            // An NPC far behind in time: the ego goes first.
            let calm = cs(
                &ls,
                &[
                    ("ego_init_speed", 10.0),
                    ("ego_init_dist_to_conflict", 20.0),
                    ("npc_init_dist_to_conflict", 60.0),
                    ("npc_speed", 5.0),
                ],
            );
            assert!(!simulate(&ls, &calm).unwrap().has_collision(), "{id}");
        }
    }

    #[test]
    fn ego_yields_to_crossing_npc() {
        let ls = catalog_entry("OVTP").unwrap();
        let c = cs(
            &ls,
            &[
                ("ego_init_speed", 8.0),
                ("ego_init_dist_to_conflict", 60.0),
                ("npc_init_dist_to_conflict", 55.0),
                ("npc_speed", 8.0),
            ],
        );
        let trace = simulate(&ls, &c).unwrap();
        assert!(!trace.has_collision());
        let min_speed = trace
            .steps
            .iter()
            .map(|s| s.vehicles[0].speed)
            .fold(f64::INFINITY, f64::min);
        assert!(min_speed < 6.0, "ego slowed down: {min_speed}");
    }

    #[test]
    fn continuity_of_ego_motion() {
        for ls in crate::scenario::builtin_catalog() {
            let c = clamp_to_box(&ls, &ls.upper_bounds()).unwrap();
            let trace = simulate(&ls, &c).unwrap();
            let v_max = trace
                .steps
                .iter()
                .map(|s| s.vehicles[0].speed)
                .fold(0.0, f64::max);
            for w in trace.steps.windows(2) {
                let (a, b) = (&w[0].vehicles[0], &w[1].vehicles[0]);
                let moved = (b.x - a.x).hypot(b.y - a.y);
                assert!(moved <= v_max * ls.dt_s + 1e-9);
            }
        }
    }

    fn follow_scenario() -> LogicalScenario {
        LogicalScenario {
            id: "follow".into(),
            description: String::new(),
            map_template: MapTemplate::Highway2,
            horizon_s: 60.0,
            dt_s: 0.1,
            parameters: vec![
                ParameterSpec::new("ego_init_speed", 10.0, 30.0, "m/s", ""),
                ParameterSpec::new("npc_init_gap", 5.0, 80.0, "m", ""),
                ParameterSpec::new("npc_init_speed", 5.0, 30.0, "m/s", ""),
            ],
            actors: vec![ActorTemplate::ego("lane0"), ActorTemplate::npc("lane0")],
        }
    }

    #[test]
    fn idm_converges_to_equilibrium() {
        let ls = follow_scenario();
        let idm = IdmParams::default();
        for (v0, gap0, lead) in [(30.0, 60.0, 20.0), (25.0, 30.0, 15.0), (20.0, 40.0, 12.0)] {
            let c = ConcreteScenario::new(&ls, vec![v0, gap0, lead], 0).unwrap();
            let trace = simulate(&ls, &c).unwrap();
            assert!(trace.collisions.is_empty());
            let last = trace.steps.last().unwrap();
            let (e, l) = (&last.vehicles[0], &last.vehicles[1]);
            let gap = l.x - e.x - 4.5;
            assert!((e.speed - lead).abs() < 0.1, "speed {}", e.speed);
            assert!((gap - idm.equilibrium_gap(lead, v0)).abs() < 0.2, "gap {gap}");
        }
    }
}

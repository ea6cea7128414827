//! Synthetic trajectory source, so training runs without external data.
//!
//! Each episode stages one event of the requested scenario shape in a
//! private 40 s time slot with fresh vehicle ids, sampled at 10 Hz. The
//! event is placed at episode time `t* = 5 s` (for lead braking, at the
//! sampled trigger time) and every driver not executing the scripted
//! maneuver follows the intelligent driver model toward a desired speed
//! drawn near its initial speed.
//!
//! Draws are truncated normals restricted to the parameter box. One episode
//! in twenty is a spill episode whose draws may leave the box by up to 10 %
//! of its width on each side:
//!
//! | shape | draw |
//! |---|---|
//! | lane change | ego speed N(20, 6); changer speed ego + N(0, 5) with drift N(0, 0.3) m/s^2; trigger gap N(18, 10) m; duration N(3, 1.2) s; target speed changer + N(-1, 4) |
//! | second NPC | offset N(-20, 8) m behind the ego; speed ego + N(0, 2), constant |
//! | lead braking | ego speed N(20, 4); gap N(30, 10) m; lead speed ego + N(0, 2); trigger N(3, 1) s capped at 5; deceleration N(4.5, 1.5) |
//! | junction | ego speed N(9, 2.5); NPC speed N(11, 3); arrival gap N(0, 2) s within 5 s |
//!
//! Desired speeds are the initial speed plus N(0, 1) (N(0, 0.8) at
//! junctions). Following drivers brake no harder than the simulated ego
//! can, and an episode that ends in contact is redrawn: recorded traffic
//! holds no crashes. The initial NPC offset for lane changes and the initial
//! distances at junctions follow from the draws and the motion; episodes
//! where they leave the allowed range are redrawn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{extract_events, EventSample, TrajectoryPoint};
use crate::error::{Error, Result};
use crate::scenario::{LogicalScenario, Role, DEFAULT_LENGTH_M, DEFAULT_WIDTH_M};
use crate::sim::idm::idm_accel;
use crate::sim::EGO_MAX_BRAKE;
use crate::sim::map::{conflict_point, lane_center, Path, Route, LANE_WIDTH_M};

const FRAME_HZ: f64 = 10.0;
const DT: f64 = 1.0 / FRAME_HZ;
const SLOT_FRAMES: u64 = 400;
const LEAD_IN_FRAMES: usize = 10;
const EPISODE_FRAMES: usize = 150;
const SPILL: f64 = 0.1;
const SPILL_EPISODE_P: f64 = 0.05;
const EVENT_AT: f64 = 5.0;
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy)]
enum Shape {
    Follow { lane: u8 },
    CutIn { from: u8, to: u8, second: bool },
    Junction { ego: Route, npc: Route },
}

/// Endless stream of episodes for one logical scenario.
#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    ls: LogicalScenario,
    shape: Shape,
    rng: ChaCha8Rng,
    episode: u64,
}

fn shape(ls: &LogicalScenario) -> Result<Shape> {
    let unsupported = || Error::validation("scenario", format!("{}: no synthetic source for this actor layout", ls.id));
    let ego = Route::parse(ls.map_template, &ls.ego().route)?;
    let mut npcs = ls.actors.iter().filter(|a| a.role == Role::Npc);
    let npc = Route::parse(ls.map_template, &npcs.next().ok_or_else(unsupported)?.route)?;
    let second = npcs.next().is_some();
    match (ego, npc) {
        (Route::Junction { .. }, Route::Junction { .. }) => Ok(Shape::Junction { ego, npc }),
        (Route::Lane(a), Route::Lane(b)) if a == b => Ok(Shape::Follow { lane: a }),
        (Route::Lane(a), Route::LaneChange { from, to }) if a == to => Ok(Shape::CutIn { from, to, second }),
        _ => Err(unsupported()),
    }
}

fn truncated(rng: &mut ChaCha8Rng, mean: f64, sd: f64, (lo, hi): (f64, f64)) -> f64 {
    let normal = Normal::new(mean, sd).expect("positive sd");
    for _ in 0..MAX_REDRAWS {
        let v = normal.sample(rng);
        if (lo..=hi).contains(&v) {
            return v;
        }
    }
    rng.gen_range(lo..=hi)
}

fn gauss(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    Normal::new(0.0, sd).expect("positive sd").sample(rng)
}

/// Frame times relative to the event origin, lead-in included.
fn tau(k: usize) -> f64 {
    (k as f64 - LEAD_IN_FRAMES as f64) * DT
}

fn interp(xs: &[f64], t: f64) -> f64 {
    let f = t / DT + LEAD_IN_FRAMES as f64;
    let j = (f.floor().max(0.0) as usize).min(xs.len() - 2);
    let w = f - j as f64;
    xs[j] + w * (xs[j + 1] - xs[j])
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Free-road IDM run from rest of the lead-in at constant speed: returns
/// per-frame (position, speed) starting at position 0 when `tau = 0`.
fn free_road(v0: f64, v_des: f64) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; EPISODE_FRAMES + 1];
    let mut v = vec![v0; EPISODE_FRAMES + 1];
    for k in 0..=EPISODE_FRAMES {
        if k <= LEAD_IN_FRAMES {
            x[k] = v0 * tau(k);
            continue;
        }
        v[k] = (v[k - 1] + idm_accel(v[k - 1], v_des, f64::INFINITY, 0.0) * DT).max(0.0);
        x[k] = x[k - 1] + v[k - 1] * DT;
    }
    (x, v)
}

struct Vehicle {
    long: Vec<f64>,
    lat: Vec<f64>,
    speed: Vec<f64>,
}

impl SyntheticGenerator {
    pub fn new(ls: &LogicalScenario, seed: u64) -> Result<Self> {
        Ok(Self {
            shape: shape(ls)?,
            ls: ls.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            episode: 0,
        })
    }

    /// Parameter box, widened by the spill margin when `spill`, or
    /// `fallback` when the scenario has no such parameter.
    fn range(&self, name: &str, fallback: (f64, f64), spill: bool) -> (f64, f64) {
        let margin = if spill { SPILL } else { 0.0 };
        self.ls
            .parameters
            .iter()
            .find(|p| p.name == name)
            .map(|p| (p.lower - margin * p.width(), p.upper + margin * p.width()))
            .unwrap_or(fallback)
    }

    /// Next episode's points, vehicle-major and time-sorted.
    pub fn episode(&mut self) -> Vec<TrajectoryPoint> {
        let vehicles = loop {
            let spill = self.rng.gen_bool(SPILL_EPISODE_P);
            let drawn = match self.shape {
                Shape::Follow { lane } => self.follow(lane, spill),
                Shape::CutIn { from, to, second } => self.cut_in(from, to, second, spill),
                Shape::Junction { ego, npc } => self.junction(ego, npc, spill),
            };
            if let Some(v) = drawn {
                break v;
            }
        };
        let e = self.episode;
        self.episode += 1;
        let mut out = Vec::with_capacity(vehicles.len() * (EPISODE_FRAMES + 1));
        for (i, veh) in vehicles.iter().enumerate() {
            for k in 0..=EPISODE_FRAMES {
                let lane = if matches!(self.shape, Shape::Junction { .. }) {
                    0
                } else {
                    (veh.lat[k] / LANE_WIDTH_M).round() as i32
                };
                out.push(TrajectoryPoint {
                    vehicle_id: e * 8 + i as u64 + 1,
                    time: (e * SLOT_FRAMES + k as u64) as f64 / FRAME_HZ,
                    coords: [veh.long[k], veh.lat[k]],
                    speed: veh.speed[k],
                    lane,
                    front_id: None,
                    rear_id: None,
                });
            }
        }
        out.retain(|p| p.coords[0].is_finite());
        link_neighbors(&mut out);
        out
    }

    fn follow(&mut self, lane: u8, spill: bool) -> Option<Vec<Vehicle>> {
        let b_ego = self.range("ego_init_speed", (8.0, 32.0), spill);
        let b_gap = self.range("npc_init_gap", (5.0, 65.0), spill);
        let b_vl = self.range("npc_init_speed", (8.0, 32.0), spill);
        let b_trig = self.range("brake_trigger_time", (0.3, 8.7), spill);
        let b_decel = self.range("brake_decel", (1.3, 9.7), spill);
        let rng = &mut self.rng;
        let v_e = truncated(rng, 20.0, 4.0, b_ego);
        let v_des = (v_e + gauss(rng, 1.0)).max(1.0);
        let gap = truncated(rng, 30.0, 10.0, b_gap);
        let v_l = truncated(rng, v_e, 2.0, b_vl);
        let trig = truncated(rng, 3.0, 1.0, (b_trig.0.max(DT), EVENT_AT));
        let decel = truncated(rng, 4.5, 1.5, b_decel);
        let n = EPISODE_FRAMES;
        let lat = vec![lane_center(lane); n + 1];
        let mut xl = vec![0.0; n + 1];
        let mut vl = vec![v_l; n + 1];
        let mut xf = vec![0.0; n + 1];
        let mut vf = vec![v_e; n + 1];
        for k in 0..=n {
            let t = tau(k);
            if k <= LEAD_IN_FRAMES {
                xl[k] = gap + DEFAULT_LENGTH_M + v_l * t;
                xf[k] = v_e * t;
                continue;
            }
            let t_prev = tau(k - 1);
            let braking = (t - t_prev.max(trig)).max(0.0);
            vl[k] = (vl[k - 1] - decel * braking).max(0.0);
            xl[k] = xl[k - 1] + 0.5 * (vl[k - 1] + vl[k]) * DT;
            let g = xl[k - 1] - xf[k - 1] - DEFAULT_LENGTH_M;
            let a = idm_accel(vf[k - 1], v_des, g, vf[k - 1] - vl[k - 1]).max(-EGO_MAX_BRAKE);
            vf[k] = (vf[k - 1] + a * DT).max(0.0);
            xf[k] = xf[k - 1] + vf[k - 1] * DT;
            if xl[k] - xf[k] < DEFAULT_LENGTH_M {
                return None;
            }
        }
        // Neither vehicle is observed before the pair forms.
        for k in 0..LEAD_IN_FRAMES {
            xl[k] = f64::NAN;
            xf[k] = f64::NAN;
        }
        Some(vec![
            Vehicle { long: xf, lat: lat.clone(), speed: vf },
            Vehicle { long: xl, lat, speed: vl },
        ])
    }

    fn cut_in(&mut self, from: u8, to: u8, second: bool, spill: bool) -> Option<Vec<Vehicle>> {
        let b_ego = self.range("ego_init_speed", (8.0, 32.0), spill);
        let b_vn = self.range("npc_init_speed", (2.5, 32.5), spill);
        let b_gap = self.range("cutin_trigger_gap", (1.5, 43.5), spill);
        let b_dur = self.range("cutin_duration", (0.6, 5.4), spill);
        let b_vt = self.range("npc_target_speed", (2.5, 32.5), spill);
        let b_off = self.range("npc_init_long_offset", (-26.0, 46.0), spill);
        let b_off2 = self.range("npc2_init_long_offset", (-44.0, 4.0), spill);
        let b_v2 = self.range("npc2_speed", (8.0, 32.0), spill);
        let rng = &mut self.rng;
        let v_e = truncated(rng, 20.0, 6.0, b_ego);
        let v_des = (v_e + gauss(rng, 1.0)).max(1.0);
        let v_n = truncated(rng, v_e, 5.0, b_vn);
        let drift = gauss(rng, 0.3);
        let gap = truncated(rng, 18.0, 10.0, b_gap);
        let dur = truncated(rng, 3.0, 1.2, b_dur);
        let v_t = truncated(rng, v_n - 1.0, 4.0, b_vt);
        let (off2, v2) = if second {
            (truncated(rng, -20.0, 8.0, b_off2), truncated(rng, v_e, 2.0, b_v2))
        } else {
            (0.0, 0.0)
        };

        let t_m = EVENT_AT - 0.5 * dur;
        let v_m = (v_n + drift * t_m).max(0.5);
        let drift = (v_m - v_n) / t_m;
        // Changer position relative to its own start.
        let rel = |t: f64| -> f64 {
            if t <= 0.0 {
                v_n * t
            } else if t <= t_m {
                v_n * t + 0.5 * drift * t * t
            } else {
                let s = (t - t_m).min(dur);
                let base = v_n * t_m + 0.5 * drift * t_m * t_m + v_m * s + 0.5 * (v_t - v_m) * s * s / dur;
                base + v_t * (t - t_m - s)
            }
        };
        let n_speed = |t: f64| -> f64 {
            if t <= 0.0 {
                v_n
            } else if t <= t_m {
                v_n + drift * t
            } else {
                v_m + (v_t - v_m) * ((t - t_m) / dur).min(1.0)
            }
        };
        let (lat_from, lat_to) = (lane_center(from), lane_center(to));
        let lat_n = |t: f64| lat_from + (lat_to - lat_from) * smoothstep((t - t_m) / dur);

        let n = EPISODE_FRAMES;
        let (mut xe, mut ve) = free_road(v_e, v_des);
        let offset = gap + DEFAULT_LENGTH_M + interp(&xe, t_m) - rel(t_m);
        if !(b_off.0..=b_off.1).contains(&offset) {
            return None;
        }
        let react_from = (t_m / DT).floor() as usize + LEAD_IN_FRAMES;
        for k in react_from.max(LEAD_IN_FRAMES + 1)..=n {
            let t_prev = tau(k - 1);
            let lateral = (lat_n(t_prev) - lat_to).abs();
            let a = if lateral < 0.5 * (LANE_WIDTH_M + 2.0) {
                let g = offset + rel(t_prev) - xe[k - 1] - DEFAULT_LENGTH_M;
                idm_accel(ve[k - 1], v_des, g, ve[k - 1] - n_speed(t_prev))
            } else {
                idm_accel(ve[k - 1], v_des, f64::INFINITY, 0.0)
            };
            ve[k] = (ve[k - 1] + a.max(-EGO_MAX_BRAKE) * DT).max(0.0);
            xe[k] = xe[k - 1] + ve[k - 1] * DT;
            let t = tau(k);
            if (lat_n(t) - lat_to).abs() < DEFAULT_WIDTH_M && (offset + rel(t) - xe[k]).abs() < DEFAULT_LENGTH_M {
                return None;
            }
        }
        let mut out = vec![
            Vehicle { long: xe, lat: vec![lane_center(to); n + 1], speed: ve },
            Vehicle {
                long: (0..=n).map(|k| offset + rel(tau(k))).collect(),
                lat: (0..=n).map(|k| lat_n(tau(k))).collect(),
                speed: (0..=n)
                    .map(|k| {
                        let t = tau(k);
                        let u = (t - t_m) / dur;
                        let lat_rate = if (0.0..=1.0).contains(&u) {
                            (lat_to - lat_from) * 6.0 * u * (1.0 - u) / dur
                        } else {
                            0.0
                        };
                        n_speed(t).hypot(lat_rate)
                    })
                    .collect(),
            },
        ];
        if second {
            out.push(Vehicle {
                long: (0..=n).map(|k| off2 + v2 * tau(k)).collect(),
                lat: vec![lat_from; n + 1],
                speed: vec![v2; n + 1],
            });
        }
        Some(out)
    }

    fn junction(&mut self, ego: Route, npc: Route, spill: bool) -> Option<Vec<Vehicle>> {
        let b_ve = self.range("ego_init_speed", (4.0, 16.0), spill);
        let b_vn = self.range("npc_speed", (3.5, 21.5), spill);
        let b_de = self.range("ego_init_dist_to_conflict", (16.0, 64.0), spill);
        let b_dn = self.range("npc_init_dist_to_conflict", (16.0, 64.0), spill);
        let rng = &mut self.rng;
        let v_e = truncated(rng, 9.0, 2.5, b_ve);
        let v_n = truncated(rng, 11.0, 3.0, b_vn);
        let des_e = (v_e + gauss(rng, 0.8)).max(1.0);
        let des_n = (v_n + gauss(rng, 0.8)).max(1.0);
        let lag = truncated(rng, 0.0, 2.0, (-4.9, 4.9));
        let (ego_path, npc_path) = (ego.path(), npc.path());
        let (s_e, s_n) = conflict_point(&ego_path, &npc_path)?;
        let (de, ve) = free_road(v_e, des_e);
        let (dn, vn) = free_road(v_n, des_n);
        let (arr_e, arr_n) = if lag >= 0.0 { (EVENT_AT, EVENT_AT + lag) } else { (EVENT_AT - lag, EVENT_AT) };
        let (d_e, d_n) = (interp(&de, arr_e), interp(&dn, arr_n));
        if !(b_de.0..=b_de.1).contains(&d_e) || !(b_dn.0..=b_dn.1).contains(&d_n) {
            return None;
        }
        let place = |path: &Path, s_c: f64, d: f64, dist: &[f64], speed: Vec<f64>| {
            let poses: Vec<_> = dist.iter().map(|x| path.pose_at(s_c - d + x)).collect();
            Vehicle {
                long: poses.iter().map(|p| p.x).collect(),
                lat: poses.iter().map(|p| p.y).collect(),
                speed,
            }
        };
        Some(vec![
            place(&ego_path, s_e, d_e, &de, ve),
            place(&npc_path, s_n, d_n, &dn, vn),
        ])
    }
}

/// Fills front/rear neighbor ids per frame from same-lane positions.
fn link_neighbors(points: &mut [TrajectoryPoint]) {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (&points[a], &points[b]);
        p.time
            .total_cmp(&q.time)
            .then(p.lane.cmp(&q.lane))
            .then(p.coords[0].total_cmp(&q.coords[0]))
    });
    for w in order.windows(2) {
        let (rear, front) = (w[0], w[1]);
        if points[rear].time == points[front].time && points[rear].lane == points[front].lane {
            points[rear].front_id = Some(points[front].vehicle_id);
            points[front].rear_id = Some(points[rear].vehicle_id);
        }
    }
}

impl Iterator for SyntheticGenerator {
    type Item = Vec<TrajectoryPoint>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.episode())
    }
}

/// Points of `episodes` consecutive episodes.
pub fn synthetic_points(ls: &LogicalScenario, episodes: usize, seed: u64) -> Result<Vec<TrajectoryPoint>> {
    Ok(SyntheticGenerator::new(ls, seed)?.take(episodes).flatten().collect())
}

/// Extracted samples of `episodes` episodes; equal to running
/// [`extract_events`] over [`synthetic_points`], without holding every
/// point in memory.
pub fn synthetic_events(ls: &LogicalScenario, episodes: usize, seed: u64) -> Result<Vec<EventSample>> {
    Ok(SyntheticGenerator::new(ls, seed)?
        .take(episodes)
        .flat_map(|pts| extract_events(&pts, ls))
        .collect())
}

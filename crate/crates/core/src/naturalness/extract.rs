//! Event extraction: finds the moments in trajectory data that match a
//! logical scenario and measures its parameters around them.
//!
//! | scenario shape | trigger `t*` | window start `t0` |
//! |---|---|---|
//! | same-lane lead NPC (FB) | leader acceleration stays <= -2 m/s^2 for 1 s, follower present | earliest time within 5 s before `t*` from which the pair is continuously in one lane |
//! | lane-change NPC (CutIn1/2) | lane id of the changer switches with a rear vehicle in the target lane within 60 m | `t* - 5` |
//! | junction crossing | first arrival at the conflict point, other track arriving within 5 s | `t* - 5` |
//!
//! Initial-state parameters are read at `t0`. Lane-change timing assumes
//! the smooth-step lateral profile used by the simulator: the 10 % and 90 %
//! lateral-progress crossings give the duration and maneuver start.
//! Samples with any feature outside the parameter box are dropped.

use std::collections::{BTreeMap, HashMap};

use super::{EventSample, TrajectoryPoint};
use crate::scenario::{LogicalScenario, Role, DEFAULT_LENGTH_M};
use crate::sim::map::{conflict_point, Cardinal, Path, Route};

/// Half-width of the event window around `t*`.
pub const EVENT_WINDOW_S: f64 = 5.0;
const LEAD_DECEL: f64 = -2.0;
const BRAKE_END_DECEL: f64 = -1.0;
const SUSTAIN_S: f64 = 1.0;
const REAR_RANGE_M: f64 = 60.0;
const FOLLOW_RANGE_M: f64 = 100.0;
const ARRIVAL_GAP_S: f64 = 5.0;
const ROUTE_TOLERANCE_M: f64 = 1.0;
const EPS: f64 = 1e-6;

/// Smooth-step parameter at which 10 % of the lateral offset is covered.
pub(crate) const SMOOTH_U10: f64 = 0.195_800_105_659_091_7;

#[derive(Debug, Clone, Copy)]
struct At {
    long: f64,
    lat: f64,
    speed: f64,
    lane: i32,
}

struct Track<'a> {
    id: u64,
    pts: Vec<&'a TrajectoryPoint>,
}

impl<'a> Track<'a> {
    fn start(&self) -> f64 {
        self.pts[0].time
    }

    fn end(&self) -> f64 {
        self.pts[self.pts.len() - 1].time
    }

    fn covers(&self, a: f64, b: f64) -> bool {
        self.start() <= a + EPS && self.end() >= b - EPS
    }

    /// Linear interpolation; the lane is taken from the earlier point.
    fn at(&self, t: f64) -> Option<At> {
        if !self.covers(t, t) {
            return None;
        }
        let j = self.pts.partition_point(|p| p.time <= t + EPS).max(1) - 1;
        let p = self.pts[j];
        let Some(q) = self.pts.get(j + 1).filter(|q| q.time > p.time) else {
            return Some(At { long: p.coords[0], lat: p.coords[1], speed: p.speed, lane: p.lane });
        };
        let w = ((t - p.time) / (q.time - p.time)).clamp(0.0, 1.0);
        let lerp = |a: f64, b: f64| a + w * (b - a);
        Some(At {
            long: lerp(p.coords[0], q.coords[0]),
            lat: lerp(p.coords[1], q.coords[1]),
            speed: lerp(p.speed, q.speed),
            lane: p.lane,
        })
    }

    fn in_window(&self, a: f64, b: f64) -> impl Iterator<Item = &&'a TrajectoryPoint> {
        self.pts.iter().filter(move |p| p.time >= a - EPS && p.time <= b + EPS)
    }
}

fn tracks(points: &[TrajectoryPoint]) -> Vec<Track<'_>> {
    let mut by_id: BTreeMap<u64, Vec<&TrajectoryPoint>> = BTreeMap::new();
    for p in points {
        by_id.entry(p.vehicle_id).or_default().push(p);
    }
    by_id
        .into_iter()
        .map(|(id, mut pts)| {
            pts.sort_by(|a, b| a.time.total_cmp(&b.time));
            Track { id, pts }
        })
        .collect()
}

enum Kind {
    Follow,
    CutIn { second: bool },
    Junction { ego: Route, npc: Route },
}

fn kind(ls: &LogicalScenario) -> Option<Kind> {
    let ego = Route::parse(ls.map_template, &ls.ego().route).ok()?;
    let mut npcs = ls.actors.iter().filter(|a| a.role == Role::Npc);
    let npc = Route::parse(ls.map_template, &npcs.next()?.route).ok()?;
    let second = npcs.next().is_some();
    match (ego, npc) {
        (Route::Junction { .. }, Route::Junction { .. }) => Some(Kind::Junction { ego, npc }),
        (Route::Lane(a), Route::Lane(b)) if a == b => Some(Kind::Follow),
        (Route::Lane(a), Route::LaneChange { to, .. }) if a == to => Some(Kind::CutIn { second }),
        _ => None,
    }
}

type Features = HashMap<&'static str, f64>;

/// Applies the scenario's event predicate to time-sorted trajectories and
/// returns one in-box feature vector per detected event.
pub fn extract_events(points: &[TrajectoryPoint], ls: &LogicalScenario) -> Vec<EventSample> {
    let Some(kind) = kind(ls) else {
        return Vec::new();
    };
    let tracks = tracks(points);
    let raw = match kind {
        Kind::Follow => follow_events(&tracks),
        Kind::CutIn { second } => cut_in_events(&tracks, second),
        Kind::Junction { ego, npc } => junction_events(&tracks, ego, npc),
    };
    raw.into_iter()
        .filter_map(|(features, window)| {
            let values: Option<Vec<f64>> = ls
                .parameters
                .iter()
                .map(|p| features.get(p.name.as_str()).copied().filter(|v| v.is_finite() && p.contains(*v)))
                .collect();
            values.map(|features| EventSample { features, source_window: window })
        })
        .collect()
}

fn follow_events(tracks: &[Track]) -> Vec<(Features, (f64, f64))> {
    let mut out = Vec::new();
    for lead in tracks {
        let pts = &lead.pts;
        let accel: Vec<f64> = pts
            .windows(2)
            .map(|w| (w[1].speed - w[0].speed) / (w[1].time - w[0].time).max(EPS))
            .collect();
        let mut j = 0;
        while j < accel.len() {
            let mut k = j;
            while k < accel.len() && accel[k] <= LEAD_DECEL {
                k += 1;
            }
            let sustained = k > j && pts[k].time - pts[j].time >= SUSTAIN_S - EPS;
            if !sustained {
                j = k.max(j + 1);
                continue;
            }
            let t_star = pts[j].time;
            let mut e = j;
            while e < accel.len() && accel[e] <= BRAKE_END_DECEL && pts[e + 1].time <= t_star + EVENT_WINDOW_S + EPS {
                e += 1;
            }
            if let Some(ev) = follow_event(tracks, lead, t_star, pts[e].time) {
                out.push(ev);
            }
            while e < accel.len() && accel[e] <= BRAKE_END_DECEL {
                e += 1;
            }
            j = e.max(j + 1);
        }
    }
    out
}

fn follow_event(tracks: &[Track], lead: &Track, t_star: f64, t_end: f64) -> Option<(Features, (f64, f64))> {
    let l = lead.at(t_star)?;
    let follower = tracks
        .iter()
        .filter(|f| f.id != lead.id)
        .filter_map(|f| f.at(t_star).map(|s| (f, s)))
        .filter(|(_, s)| s.lane == l.lane && s.long < l.long && l.long - s.long <= FOLLOW_RANGE_M)
        .max_by(|a, b| a.1.long.total_cmp(&b.1.long))?
        .0;
    let paired = |t: f64| match (lead.at(t), follower.at(t)) {
        (Some(a), Some(b)) => a.lane == b.lane && b.long < a.long,
        _ => false,
    };
    let mut t_start = t_star;
    for p in lead.pts.iter().rev() {
        if p.time > t_star + EPS {
            continue;
        }
        if p.time < t_star - EVENT_WINDOW_S - EPS || !paired(p.time) {
            break;
        }
        t_start = p.time;
    }
    if t_star - t_start < EPS || t_end - t_star < EPS {
        return None;
    }
    let (l0, f0) = (lead.at(t_start)?, follower.at(t_start)?);
    let decel = (lead.at(t_star)?.speed - lead.at(t_end)?.speed) / (t_end - t_star);
    let features = HashMap::from([
        ("ego_init_speed", f0.speed),
        ("npc_init_gap", l0.long - f0.long - DEFAULT_LENGTH_M),
        ("npc_init_long_offset", l0.long - f0.long),
        ("npc_init_speed", l0.speed),
        ("brake_trigger_time", t_star - t_start),
        ("brake_decel", decel),
    ]);
    Some((features, (t_start, t_star + EVENT_WINDOW_S)))
}

/// First time the fraction `(lat - lat0) / delta` reaches `level`.
fn lateral_crossing(track: &Track, t0: f64, t1: f64, lat0: f64, delta: f64, level: f64) -> Option<f64> {
    let pts: Vec<_> = track.in_window(t0, t1).collect();
    let frac = |p: &TrajectoryPoint| (p.coords[1] - lat0) / delta;
    for w in pts.windows(2) {
        let (a, b) = (frac(w[0]), frac(w[1]));
        if a < level && b >= level {
            return Some(w[0].time + (level - a) / (b - a) * (w[1].time - w[0].time));
        }
    }
    None
}

fn steady_lane(track: &Track, t0: f64, t1: f64, lane: i32) -> bool {
    track.in_window(t0, t1).all(|p| p.lane == lane)
}

fn cut_in_events(tracks: &[Track], second: bool) -> Vec<(Features, (f64, f64))> {
    let mut out = Vec::new();
    for npc in tracks {
        for w in npc.pts.windows(2) {
            if w[0].lane == w[1].lane {
                continue;
            }
            let (src, dst, t_star) = (w[0].lane, w[1].lane, w[1].time);
            if let Some(ev) = cut_in_event(tracks, npc, src, dst, t_star, second) {
                out.push(ev);
            }
        }
    }
    out
}

fn cut_in_event(
    tracks: &[Track],
    npc: &Track,
    src: i32,
    dst: i32,
    t_star: f64,
    second: bool,
) -> Option<(Features, (f64, f64))> {
    let (t0, t1) = (t_star - EVENT_WINDOW_S, t_star + EVENT_WINDOW_S);
    if !npc.covers(t0, t1) {
        return None;
    }
    let n_star = npc.at(t_star)?;
    let ego = tracks
        .iter()
        .filter(|e| e.id != npc.id && e.covers(t0, t1))
        .filter_map(|e| e.at(t_star).map(|s| (e, s)))
        .filter(|(_, s)| s.lane == dst && s.long < n_star.long && n_star.long - s.long <= REAR_RANGE_M)
        .max_by(|a, b| a.1.long.total_cmp(&b.1.long))?
        .0;
    if !steady_lane(ego, t0, t1, dst) {
        return None;
    }
    let (n0, e0) = (npc.at(t0)?, ego.at(t0)?);
    let delta = npc.at(t1)?.lat - n0.lat;
    if delta.abs() < 1.0 {
        return None;
    }
    let t10 = lateral_crossing(npc, t0, t1, n0.lat, delta, 0.1)?;
    let t90 = lateral_crossing(npc, t0, t1, n0.lat, delta, 0.9)?;
    let duration = (t90 - t10) / (1.0 - 2.0 * SMOOTH_U10);
    let t_m = t10 - SMOOTH_U10 * duration;
    let (nm, em) = (npc.at(t_m)?, ego.at(t_m)?);
    let target = npc.at((t_m + duration).min(t1))?;
    let mut features = HashMap::from([
        ("ego_init_speed", e0.speed),
        ("npc_init_long_offset", n0.long - e0.long),
        ("npc_init_speed", n0.speed),
        ("cutin_trigger_gap", nm.long - em.long - DEFAULT_LENGTH_M),
        ("cutin_duration", duration),
        ("npc_target_speed", target.speed),
    ]);
    if second {
        let (rear, r0) = tracks
            .iter()
            .filter(|r| r.id != npc.id && r.id != ego.id && r.covers(t0, t1))
            .filter_map(|r| r.at(t0).map(|s| (r, s)))
            .filter(|(_, s)| s.lane == src && s.long < e0.long && e0.long - s.long <= REAR_RANGE_M)
            .max_by(|a, b| a.1.long.total_cmp(&b.1.long))?;
        if !steady_lane(rear, t0, t1, src) {
            return None;
        }
        let speeds: Vec<f64> = rear.in_window(t0, t1).map(|p| p.speed).collect();
        features.insert("npc2_init_long_offset", r0.long - e0.long);
        features.insert("npc2_speed", speeds.iter().sum::<f64>() / speeds.len() as f64);
    }
    Some((features, (t0, t1)))
}

const CARDINALS: [Cardinal; 4] = [Cardinal::North, Cardinal::South, Cardinal::East, Cardinal::West];

/// Junction route a track follows, if any lies within tolerance of its
/// first, middle and last points in driving order.
fn classify_route(track: &Track) -> Option<Route> {
    let probe = [track.pts[0], track.pts[track.pts.len() / 2], track.pts[track.pts.len() - 1]];
    let mut best: Option<(f64, Route)> = None;
    for from in CARDINALS {
        for to in CARDINALS.into_iter().filter(|&to| to != from) {
            let route = Route::Junction { from, to };
            let path = route.path();
            let proj: Vec<(f64, f64)> = probe.iter().map(|p| path.project(p.coords)).collect();
            let worst = proj.iter().map(|p| p.0).fold(0.0, f64::max);
            if worst > ROUTE_TOLERANCE_M || proj[2].1 <= proj[0].1 {
                continue;
            }
            if best.map_or(true, |(d, _)| worst < d) {
                best = Some((worst, route));
            }
        }
    }
    best.map(|(_, r)| r)
}

struct OnPath<'t, 'a> {
    track: &'t Track<'a>,
    s: Vec<f64>,
}

impl OnPath<'_, '_> {
    fn new<'t, 'a>(track: &'t Track<'a>, path: &Path) -> OnPath<'t, 'a> {
        let s = track.pts.iter().map(|p| path.project(p.coords).1).collect();
        OnPath { track, s }
    }

    fn arrival(&self, s_c: f64) -> Option<f64> {
        let pts = &self.track.pts;
        (1..pts.len()).find_map(|j| {
            let (a, b) = (self.s[j - 1], self.s[j]);
            (a < s_c && b >= s_c).then(|| pts[j - 1].time + (s_c - a) / (b - a) * (pts[j].time - pts[j - 1].time))
        })
    }

    fn s_at(&self, t: f64) -> Option<f64> {
        let pts = &self.track.pts;
        let j = pts.partition_point(|p| p.time <= t + EPS);
        if j == 0 || !self.track.covers(t, t) {
            return None;
        }
        let j = j - 1;
        match pts.get(j + 1) {
            Some(q) if q.time > pts[j].time => {
                let w = (t - pts[j].time) / (q.time - pts[j].time);
                Some(self.s[j] + w.clamp(0.0, 1.0) * (self.s[j + 1] - self.s[j]))
            }
            _ => Some(self.s[j]),
        }
    }
}

fn junction_events(tracks: &[Track], ego_route: Route, npc_route: Route) -> Vec<(Features, (f64, f64))> {
    let (ego_path, npc_path) = (ego_route.path(), npc_route.path());
    let Some((s_e, s_n)) = conflict_point(&ego_path, &npc_path) else {
        return Vec::new();
    };
    let routes: Vec<Option<Route>> = tracks.iter().map(classify_route).collect();
    let pick = |route: Route, path: &Path| -> Vec<OnPath> {
        tracks
            .iter()
            .zip(&routes)
            .filter(|(_, r)| **r == Some(route))
            .map(|(t, _)| OnPath::new(t, path))
            .collect()
    };
    let egos = pick(ego_route, &ego_path);
    let npcs = pick(npc_route, &npc_path);
    let mut out = Vec::new();
    for a in &egos {
        let Some(t_a) = a.arrival(s_e) else { continue };
        for b in npcs.iter().filter(|b| b.track.id != a.track.id) {
            let Some(t_b) = b.arrival(s_n) else { continue };
            if (t_a - t_b).abs() >= ARRIVAL_GAP_S {
                continue;
            }
            let t_star = t_a.min(t_b);
            let t0 = t_star - EVENT_WINDOW_S;
            if !a.track.covers(t0, t_star) || !b.track.covers(t0, t_star) {
                continue;
            }
            let (Some(ea), Some(nb), Some(sa), Some(sb)) = (a.track.at(t0), b.track.at(t0), a.s_at(t0), b.s_at(t0)) else {
                continue;
            };
            let speeds: Vec<f64> = b.track.in_window(t0, t_star).map(|p| p.speed).collect();
            let features = HashMap::from([
                ("ego_init_speed", ea.speed),
                ("ego_init_dist_to_conflict", s_e - sa),
                ("npc_init_dist_to_conflict", s_n - sb),
                ("npc_init_speed", nb.speed),
                ("npc_speed", speeds.iter().sum::<f64>() / speeds.len() as f64),
            ]);
            out.push((features, (t0, t_star + EVENT_WINDOW_S)));
        }
    }
    out
}

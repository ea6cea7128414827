//! Built-in map templates and the routes actors follow on them.
//!
//! Highways run along +x with lane `k` centered at `y = 3.5 k`; lane 0 is
//! the rightmost. The junction is two perpendicular two-lane roads crossing
//! at the origin with right-hand traffic; turns are quarter arcs.

use std::f64::consts::FRAC_PI_2;

use super::geometry::{cross, dot, normalize_angle, sub, Vec2};
use crate::error::{Error, Result};
use crate::scenario::MapTemplate;

pub const LANE_WIDTH_M: f64 = 3.5;
pub const TURN_RADIUS_M: f64 = 8.0;
/// Length of each junction approach and exit leg.
pub const JUNCTION_LEG_M: f64 = 150.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cardinal {
    North,
    South,
    East,
    West,
}

impl Cardinal {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "N" => Some(Cardinal::North),
            "S" => Some(Cardinal::South),
            "E" => Some(Cardinal::East),
            "W" => Some(Cardinal::West),
            _ => None,
        }
    }

    /// Unit vector pointing from the junction toward this side.
    fn outward(self) -> Vec2 {
        match self {
            Cardinal::North => [0.0, 1.0],
            Cardinal::South => [0.0, -1.0],
            Cardinal::East => [1.0, 0.0],
            Cardinal::West => [-1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Turn {
    Straight,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Lane(u8),
    LaneChange { from: u8, to: u8 },
    Junction { from: Cardinal, to: Cardinal },
}

impl Route {
    /// Resolves a route identifier against a map template.
    ///
    /// Highway routes are `lane<k>` or `lane<a>>lane<b>` for adjacent lanes;
    /// junction routes are `<from>><to>` over `N`, `S`, `E`, `W`.
    pub fn parse(template: MapTemplate, route: &str) -> Result<Self> {
        let bad = |why: &str| Error::validation("route", format!("`{route}` on {template:?}: {why}"));
        if template.is_junction() {
            let (a, b) = route.split_once('>').ok_or_else(|| bad("expected <from>><to>"))?;
            let from = Cardinal::parse(a).ok_or_else(|| bad("unknown approach"))?;
            let to = Cardinal::parse(b).ok_or_else(|| bad("unknown exit"))?;
            if from == to {
                return Err(bad("U-turns are not supported"));
            }
            return Ok(Route::Junction { from, to });
        }
        let lanes = template.lane_count();
        let lane = |s: &str| -> Result<u8> {
            let k: u8 = s
                .strip_prefix("lane")
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| bad("expected lane<k>"))?;
            if k >= lanes {
                return Err(bad("lane index out of range"));
            }
            Ok(k)
        };
        match route.split_once('>') {
            None => Ok(Route::Lane(lane(route)?)),
            Some((a, b)) => {
                let (from, to) = (lane(a)?, lane(b)?);
                if from.abs_diff(to) != 1 {
                    return Err(bad("lane changes must target an adjacent lane"));
                }
                Ok(Route::LaneChange { from, to })
            }
        }
    }

    pub fn turn(&self) -> Option<Turn> {
        match *self {
            Route::Junction { from, to } => {
                let d_in = neg(from.outward());
                let d_out = to.outward();
                let c = cross(d_in, d_out);
                Some(if c > 0.5 {
                    Turn::Left
                } else if c < -0.5 {
                    Turn::Right
                } else {
                    Turn::Straight
                })
            }
            _ => None,
        }
    }

    /// Centerline the actor tracks. Lane changes follow the target lane
    /// with a decaying lateral offset.
    pub fn path(&self) -> Path {
        match *self {
            Route::Lane(k) | Route::LaneChange { to: k, .. } => Path::new(vec![Segment::Line {
                start: [0.0, lane_center(k)],
                heading: 0.0,
                length: f64::INFINITY,
            }]),
            Route::Junction { from, to } => junction_path(from, to),
        }
    }
}

pub fn lane_center(k: u8) -> f64 {
    LANE_WIDTH_M * k as f64
}

fn neg(v: Vec2) -> Vec2 {
    [-v[0], -v[1]]
}

fn scale(v: Vec2, k: f64) -> Vec2 {
    [v[0] * k, v[1] * k]
}

fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

fn right_normal(d: Vec2) -> Vec2 {
    [d[1], -d[0]]
}

fn left_normal(d: Vec2) -> Vec2 {
    [-d[1], d[0]]
}

fn junction_path(from: Cardinal, to: Cardinal) -> Path {
    let d_in = neg(from.outward());
    let d_out = to.outward();
    let half = 0.5 * LANE_WIDTH_M;
    let o_in = scale(right_normal(d_in), half);
    let o_out = scale(right_normal(d_out), half);
    let h_in = d_in[1].atan2(d_in[0]);
    let h_out = d_out[1].atan2(d_out[0]);
    let turn = cross(d_in, d_out);
    if turn.abs() < 0.5 {
        return Path::new(vec![Segment::Line {
            start: sub(o_in, scale(d_in, JUNCTION_LEG_M)),
            heading: h_in,
            length: 2.0 * JUNCTION_LEG_M,
        }]);
    }
    let corner = add(o_in, scale(d_in, dot(sub(o_out, o_in), d_in)));
    let r = TURN_RADIUS_M;
    let arc_start = sub(corner, scale(d_in, r));
    let normal = if turn > 0.0 { left_normal(d_in) } else { right_normal(d_in) };
    let center = add(arc_start, scale(normal, r));
    let rel = sub(arc_start, center);
    Path::new(vec![
        Segment::Line {
            start: sub(corner, scale(d_in, JUNCTION_LEG_M)),
            heading: h_in,
            length: JUNCTION_LEG_M - r,
        },
        Segment::Arc {
            center,
            radius: r,
            start_angle: rel[1].atan2(rel[0]),
            sweep: FRAC_PI_2 * turn.signum(),
        },
        Segment::Line {
            start: add(corner, scale(d_out, r)),
            heading: h_out,
            length: JUNCTION_LEG_M - r,
        },
    ])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn position(&self) -> Vec2 {
        [self.x, self.y]
    }

    pub fn direction(&self) -> Vec2 {
        let (s, c) = self.heading.sin_cos();
        [c, s]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Line {
        start: Vec2,
        heading: f64,
        length: f64,
    },
    Arc {
        center: Vec2,
        radius: f64,
        start_angle: f64,
        /// Signed turning angle; positive is counter-clockwise.
        sweep: f64,
    },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Line { length, .. } => length,
            Segment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn pose_at(&self, u: f64) -> Pose {
        match *self {
            Segment::Line { start, heading, .. } => {
                let (s, c) = heading.sin_cos();
                Pose {
                    x: start[0] + u * c,
                    y: start[1] + u * s,
                    heading,
                }
            }
            Segment::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let sign = sweep.signum();
                let theta = start_angle + sign * u / radius;
                Pose {
                    x: center[0] + radius * theta.cos(),
                    y: center[1] + radius * theta.sin(),
                    heading: normalize_angle(theta + sign * FRAC_PI_2),
                }
            }
        }
    }

    /// Closest point on the segment: (distance, arc length along segment).
    fn project(&self, p: Vec2) -> (f64, f64) {
        match *self {
            Segment::Line { start, heading, length } => {
                let (s, c) = heading.sin_cos();
                let d = sub(p, start);
                let u = dot(d, [c, s]).clamp(0.0, length);
                let q = [start[0] + u * c, start[1] + u * s];
                let e = sub(p, q);
                (e[0].hypot(e[1]), u)
            }
            Segment::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let rel = sub(p, center);
                let ang = rel[1].atan2(rel[0]);
                let delta = normalize_angle(ang - start_angle) * sweep.signum();
                let u = if (0.0..=sweep.abs()).contains(&delta) {
                    delta * radius
                } else {
                    // Outside the swept sector: nearest endpoint.
                    let d0 = sub(p, self.pose_at(0.0).position());
                    let d1 = sub(p, self.pose_at(self.length()).position());
                    if d0[0].hypot(d0[1]) <= d1[0].hypot(d1[1]) {
                        0.0
                    } else {
                        self.length()
                    }
                };
                let q = self.pose_at(u).position();
                let e = sub(p, q);
                (e[0].hypot(e[1]), u)
            }
        }
    }
}

/// A piecewise line/arc centerline parameterized by arc length. Poses
/// outside `[0, length]` extrapolate the end tangents.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    segments: Vec<Segment>,
    starts: Vec<f64>,
    length: f64,
}

impl Path {
    pub fn new(segments: Vec<Segment>) -> Self {
        let mut starts = Vec::with_capacity(segments.len());
        let mut acc = 0.0;
        for seg in &segments {
            starts.push(acc);
            acc += seg.length();
        }
        Self {
            segments,
            starts,
            length: acc,
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn pose_at(&self, s: f64) -> Pose {
        if s < 0.0 {
            let p = self.segments[0].pose_at(0.0);
            let d = p.direction();
            return Pose {
                x: p.x + s * d[0],
                y: p.y + s * d[1],
                ..p
            };
        }
        let idx = self.starts.partition_point(|&st| st <= s).saturating_sub(1);
        let seg = &self.segments[idx];
        let u = s - self.starts[idx];
        if u <= seg.length() {
            return seg.pose_at(u);
        }
        let p = seg.pose_at(seg.length());
        let d = p.direction();
        let extra = u - seg.length();
        Pose {
            x: p.x + extra * d[0],
            y: p.y + extra * d[1],
            ..p
        }
    }

    /// Distance from `p` to the path and the arc length of the foot point.
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        self.segments
            .iter()
            .zip(&self.starts)
            .map(|(seg, &st)| {
                let (d, u) = seg.project(p);
                (d, st + u)
            })
            .fold((f64::INFINITY, 0.0), |best, cur| if cur.0 < best.0 { cur } else { best })
    }
}

/// First point along `a` where it meets `b`, as arc lengths `(s_a, s_b)`.
/// Covers crossings and merges (where the paths join tangentially).
pub fn conflict_point(a: &Path, b: &Path) -> Option<(f64, f64)> {
    if !a.length().is_finite() {
        return None;
    }
    const COARSE: f64 = 0.25;
    const FINE: f64 = 0.005;
    const HIT: f64 = 1e-3;
    let n = (a.length() / COARSE).ceil() as usize;
    let first = (0..=n)
        .map(|i| (i as f64 * COARSE).min(a.length()))
        .find(|&s| b.project(a.pose_at(s).position()).0 < COARSE)?;
    // Refine: first sample within HIT of b, else the closest sample.
    let lo = (first - 2.0 * COARSE).max(0.0);
    let steps = ((6.0 * COARSE + 2.0) / FINE) as usize;
    let mut best = (f64::INFINITY, lo, 0.0);
    for i in 0..=steps {
        let s = (lo + i as f64 * FINE).min(a.length());
        let (d, sb) = b.project(a.pose_at(s).position());
        if d < HIT {
            return Some((s, sb));
        }
        if d < best.0 {
            best = (d, s, sb);
        }
    }
    Some((best.1, best.2))
}

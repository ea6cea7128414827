//! Oriented rectangles and the separating-axis overlap test.

pub type Vec2 = [f64; 2];

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(mut a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    a %= TAU;
    if a <= -PI {
        a += TAU;
    } else if a > PI {
        a -= TAU;
    }
    a
}

/// A vehicle footprint: center, heading and half extents along and across
/// the heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: Vec2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedRect {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            heading,
            half_length: 0.5 * length,
            half_width: 0.5 * width,
        }
    }

    /// Unit vectors along and across the heading.
    pub fn axes(&self) -> (Vec2, Vec2) {
        let (s, c) = self.heading.sin_cos();
        ([c, s], [-s, c])
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Vec2; 4] {
        let (u, v) = self.axes();
        let [cx, cy] = self.center;
        let (l, w) = (self.half_length, self.half_width);
        let at = |a: f64, b: f64| [cx + a * u[0] + b * v[0], cy + a * u[1] + b * v[1]];
        [at(l, -w), at(l, w), at(-l, w), at(-l, -w)]
    }

    pub fn bounding_radius(&self) -> f64 {
        self.half_length.hypot(self.half_width)
    }

    fn projected_radius(&self, axis: Vec2) -> f64 {
        let (u, v) = self.axes();
        self.half_length * dot(u, axis).abs() + self.half_width * dot(v, axis).abs()
    }

    pub fn translated(&self, offset: Vec2) -> Self {
        Self {
            center: [self.center[0] + offset[0], self.center[1] + offset[1]],
            ..*self
        }
    }

    /// Expresses a world point in this rectangle's body frame.
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        let (u, v) = self.axes();
        let d = sub(p, self.center);
        [dot(d, u), dot(d, v)]
    }
}

/// True iff the two rectangles intersect. Touching counts as overlap.
pub fn sat_overlap(a: &OrientedRect, b: &OrientedRect) -> bool {
    let d = sub(b.center, a.center);
    let (au, av) = a.axes();
    let (bu, bv) = b.axes();
    for axis in [au, av, bu, bv] {
        if dot(d, axis).abs() > a.projected_radius(axis) + b.projected_radius(axis) {
            return false;
        }
    }
    true
}

/// Centroid of the overlap region of two rectangles, if they overlap.
pub fn overlap_centroid(a: &OrientedRect, b: &OrientedRect) -> Option<Vec2> {
    if !sat_overlap(a, b) {
        return None;
    }
    let mut poly: Vec<Vec2> = b.corners().to_vec();
    let clip = a.corners();
    for i in 0..4 {
        let (p0, p1) = (clip[i], clip[(i + 1) % 4]);
        let edge = sub(p1, p0);
        let inside = |p: Vec2| cross(edge, sub(p, p0)) >= 0.0;
        let input = std::mem::take(&mut poly);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (cin, pin) = (inside(cur), inside(prev));
            if cin != pin {
                let dp = sub(cur, prev);
                let denom = cross(edge, dp);
                if denom.abs() > 1e-15 {
                    let t = cross(sub(p0, prev), edge) / -denom;
                    poly.push([prev[0] + t * dp[0], prev[1] + t * dp[1]]);
                }
            }
            if cin {
                poly.push(cur);
            }
        }
        if poly.is_empty() {
            break;
        }
    }
    if poly.is_empty() {
        return Some([
            0.5 * (a.center[0] + b.center[0]),
            0.5 * (a.center[1] + b.center[1]),
        ]);
    }
    let mut area = 0.0;
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let w = cross(p, q);
        area += w;
        cx += (p[0] + q[0]) * w;
        cy += (p[1] + q[1]) * w;
    }
    if area.abs() < 1e-12 {
        let n = poly.len() as f64;
        let sx: f64 = poly.iter().map(|p| p[0]).sum();
        let sy: f64 = poly.iter().map(|p| p[1]).sum();
        return Some([sx / n, sy / n]);
    }
    Some([cx / (3.0 * area), cy / (3.0 * area)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn car(x: f64, y: f64, h: f64) -> OrientedRect {
        OrientedRect::new([x, y], h, 4.5, 2.0)
    }

    #[test]
    fn identical_rectangles_overlap() {
        assert!(sat_overlap(&car(1.0, 2.0, 0.3), &car(1.0, 2.0, 0.3)));
    }

    #[test]
    fn far_apart_on_x() {
        assert!(!sat_overlap(&car(0.0, 0.0, 0.0), &car(10.0, 0.0, 0.0)));
    }

    #[test]
    fn close_on_x() {
        assert!(sat_overlap(&car(0.0, 0.0, 0.0), &car(4.4, 0.0, 0.0)));
        assert!(sat_overlap(&car(0.0, 0.0, 0.0), &car(4.5, 0.0, 0.0)));
        assert!(!sat_overlap(&car(0.0, 0.0, 0.0), &car(4.51, 0.0, 0.0)));
    }

    #[test]
    fn rotated_corner_cases() {
        // A diamond whose tip sits just short of the other box.
        let a = car(0.0, 0.0, 0.0);
        let tip = 2.25 + 1.0 * 2f64.sqrt() + 0.01;
        let b = OrientedRect::new([tip, 0.0], FRAC_PI_4, 2.0, 2.0);
        assert!(!sat_overlap(&a, &b));
        let b = b.translated([-0.02, 0.0]);
        assert!(sat_overlap(&a, &b));
        // Perpendicular crossing.
        assert!(sat_overlap(&car(0.0, 0.0, 0.0), &car(0.0, 2.0, FRAC_PI_2)));
        assert!(!sat_overlap(&car(0.0, 0.0, 0.0), &car(0.0, 3.3, FRAC_PI_2)));
    }

    #[test]
    fn centroid_of_rear_end_overlap() {
        let a = car(0.0, 0.0, 0.0);
        let b = car(4.0, 0.0, 0.0);
        let c = overlap_centroid(&a, &b).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-12 && c[1].abs() < 1e-12);
        assert!(overlap_centroid(&a, &car(9.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn normalize_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-12);
    }

    // Brute-force oracle: sample points of one rectangle densely and test
    // containment in the other.
    fn sampled_overlap(a: &OrientedRect, b: &OrientedRect) -> bool {
        let (u, v) = b.axes();
        let n = 60;
        for i in 0..=n {
            for j in 0..=n {
                let s = -b.half_length + 2.0 * b.half_length * i as f64 / n as f64;
                let t = -b.half_width + 2.0 * b.half_width * j as f64 / n as f64;
                let p = [
                    b.center[0] + s * u[0] + t * v[0],
                    b.center[1] + s * u[1] + t * v[1],
                ];
                let q = a.to_local(p);
                if q[0].abs() <= a.half_length && q[1].abs() <= a.half_width {
                    return true;
                }
            }
        }
        false
    }

    proptest! {
        #[test]
        fn agrees_with_sampling(x in -7.0f64..7.0, y in -5.0f64..5.0, h in -PI..PI) {
            let a = car(0.0, 0.0, 0.0);
            let b = car(x, y, h);
            let sat = sat_overlap(&a, &b);
            // Sampling can miss slivers thinner than its grid; only demand
            // agreement away from the boundary.
            let grown = OrientedRect { half_length: a.half_length + 0.08, half_width: a.half_width + 0.08, ..a };
            let shrunk = OrientedRect { half_length: a.half_length - 0.08, half_width: a.half_width - 0.08, ..a };
            if sampled_overlap(&shrunk, &b) { prop_assert!(sat); }
            if !sat_overlap(&grown, &b) { prop_assert!(!sampled_overlap(&a, &b)); }
            prop_assert_eq!(sat, sat_overlap(&b, &a));
        }
    }
}

//! Local frames for query-centric encoding.
//!
//! Every scene element is expressed in its own frame (origin at a chosen
//! point, +x along its heading). Origins are then described relative to a
//! per-scene anchor, so a rigid motion of the whole scene changes nothing
//! the network sees.

use std::f64::consts::PI;

use crate::tensor::Tensor;

pub type Point = [f64; 2];

/// `(sin x, cos x)`. The C library's fused sincos and its separate sin and
/// cos can differ in the last bit, and fusing depends on inlining; one
/// out-of-line call keeps every build bit-identical.
#[inline(never)]
pub fn sin_cos(x: f64) -> (f64, f64) {
    x.sin_cos()
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    /// Radians in `(-π, π]`.
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn position(&self) -> Point {
        [self.x, self.y]
    }

    /// This pose expressed in `frame`.
    pub fn relative_to(&self, frame: &Pose2) -> Pose2 {
        let p = to_local_point([self.x, self.y], frame);
        Pose2::new(p[0], p[1], self.heading - frame.heading)
    }
}

fn rotate(p: Point, c: f64, s: f64) -> Point {
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

pub fn to_local_point(p: Point, origin: &Pose2) -> Point {
    let (s, c) = sin_cos(origin.heading);
    let d = [p[0] - origin.x, p[1] - origin.y];
    rotate(d, c, -s)
}

pub fn to_global_point(p: Point, origin: &Pose2) -> Point {
    let (s, c) = sin_cos(origin.heading);
    let r = rotate(p, c, s);
    [r[0] + origin.x, r[1] + origin.y]
}

/// Rotates a free vector (velocity, direction) into the frame.
pub fn to_local_vector(v: Point, origin: &Pose2) -> Point {
    let (s, c) = sin_cos(origin.heading);
    rotate(v, c, -s)
}

pub fn to_global_vector(v: Point, origin: &Pose2) -> Point {
    let (s, c) = sin_cos(origin.heading);
    rotate(v, c, s)
}

pub fn to_local(points: &[Point], origin: &Pose2) -> Vec<Point> {
    points.iter().map(|p| to_local_point(*p, origin)).collect()
}

pub fn to_global(points: &[Point], origin: &Pose2) -> Vec<Point> {
    points.iter().map(|p| to_global_point(*p, origin)).collect()
}

/// `p ↦ R(rotation)·p + translation`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: f64,
    pub translation: Point,
}

impl RigidTransform {
    pub fn new(rotation: f64, translation: Point) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, [0.0, 0.0])
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == 0.0 && self.translation == [0.0, 0.0]
    }

    pub fn apply_point(&self, p: Point) -> Point {
        let r = self.apply_vector(p);
        if self.translation == [0.0, 0.0] {
            r
        } else {
            [r[0] + self.translation[0], r[1] + self.translation[1]]
        }
    }

    pub fn apply_vector(&self, v: Point) -> Point {
        if self.rotation == 0.0 {
            return v;
        }
        let (s, c) = sin_cos(self.rotation);
        rotate(v, c, s)
    }

    pub fn apply_heading(&self, h: f64) -> f64 {
        if self.rotation == 0.0 {
            h
        } else {
            normalize_angle(h + self.rotation)
        }
    }

    pub fn apply_pose(&self, p: &Pose2) -> Pose2 {
        let q = self.apply_point([p.x, p.y]);
        Pose2 {
            x: q[0],
            y: q[1],
            heading: self.apply_heading(p.heading),
        }
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = sin_cos(self.rotation);
        let t = rotate(self.translation, c, -s);
        Self::new(-self.rotation, [-t[0], -t[1]])
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &RigidTransform) -> Self {
        let t = self.apply_point(first.translation);
        Self::new(self.rotation + first.rotation, t)
    }
}

/// Number of relative-pose channels fed to the sinusoid: x, y, cos Δh, sin Δh.
const POSE_CHANNELS: usize = 4;

/// Sinusoidal encoding of `origin` relative to `anchor`.
///
/// The relative pose `r = (x, y, cos Δh, sin Δh)` (position in the anchor
/// frame, metres) is expanded into `dim/2` (sin, cos) pairs. Pair `i` uses
/// channel `i % 4` at frequency `100^(-b/B)` where `b = i / 4` and
/// `B = ceil(dim / 8)`, so low bands resolve metres and high bands hundreds
/// of metres. Every output lies in `[-1, 1]`.
pub fn encode_origin(origin: &Pose2, anchor: &Pose2, dim: usize) -> Tensor {
    assert!(dim % 2 == 0 && dim > 0, "encoding dim must be even, got {dim}");
    let rel = origin.relative_to(anchor);
    let (hs, hc) = sin_cos(rel.heading);
    let r = [rel.x, rel.y, hc, hs];
    let pairs = dim / 2;
    let bands = pairs.div_ceil(POSE_CHANNELS);
    let mut out = Vec::with_capacity(dim);
    for i in 0..pairs {
        let ch = i % POSE_CHANNELS;
        let band = i / POSE_CHANNELS;
        let freq = 100f64.powf(-(band as f64) / bands as f64);
        let (s, c) = sin_cos(freq * r[ch]);
        out.push(s);
        out.push(c);
    }
    Tensor::row(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: Point, b: Point, tol: f64) -> bool {
        (a[0] - b[0]).abs() < tol && (a[1] - b[1]).abs() < tol
    }

    #[test]
    fn angle_normalization_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn local_frame_examples() {
        let o = Pose2::new(3.0, -2.0, 0.7);
        assert!(close(to_local_point([3.0, -2.0], &o), [0.0, 0.0], 1e-15));
        let id = Pose2::origin();
        assert_eq!(to_local_point([1.5, -4.0], &id), [1.5, -4.0]);
        assert_eq!(to_global_point([1.5, -4.0], &id), [1.5, -4.0]);
        let q = Pose2::new(0.0, 0.0, FRAC_PI_2);
        assert!(close(to_local_point([1.0, 0.0], &q), [0.0, -1.0], 1e-15));
        assert!(close(to_global_point([0.0, -1.0], &q), [1.0, 0.0], 1e-15));
        // origin heading maps onto +x
        let ahead = [o.x + o.heading.cos(), o.y + o.heading.sin()];
        assert!(close(to_local_point(ahead, &o), [1.0, 0.0], 1e-15));
    }

    #[test]
    fn encoding_spot_values() {
        // relative pose (1, 2, π/4) at dim 8: one band at frequency 1
        let anchor = Pose2::new(5.0, -1.0, 0.3);
        let origin_local = [1.0, 2.0];
        let g = to_global_point(origin_local, &anchor);
        let origin = Pose2::new(g[0], g[1], 0.3 + PI / 4.0);
        let enc = encode_origin(&origin, &anchor, 8);
        // computed independently: [sin 1, cos 1, sin 2, cos 2, sin(cos π/4), cos(cos π/4), sin(sin π/4), cos(sin π/4)]
        let want = [
            0.841_470_984_807_896_5,
            0.540_302_305_868_139_8,
            0.909_297_426_825_681_7,
            -0.416_146_836_547_142_4,
            0.649_636_939_080_159_7,
            0.760_244_597_075_369_1,
            0.649_636_939_080_159_7,
            0.760_244_597_075_369_1,
        ];
        for (a, b) in enc.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn encoding_of_anchor_is_constant() {
        let a = Pose2::new(10.0, 20.0, -1.0);
        let b = Pose2::new(-3.0, 7.0, 2.5);
        let ea = encode_origin(&a, &a, 16);
        let eb = encode_origin(&b, &b, 16);
        for (x, y) in ea.data().iter().zip(eb.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn round_trips(x in -500.0..500.0f64, y in -500.0..500.0f64, h in -4.0..4.0f64,
                       px in -500.0..500.0f64, py in -500.0..500.0f64) {
            let o = Pose2::new(x, y, h);
            let p = [px, py];
            prop_assert!(close(to_global_point(to_local_point(p, &o), &o), p, 1e-9));
            prop_assert!(close(to_local_point(to_global_point(p, &o), &o), p, 1e-9));
        }

        #[test]
        fn transform_inverse_is_identity(r in -7.0..7.0f64, tx in -300.0..300.0f64, ty in -300.0..300.0f64,
                                         px in -300.0..300.0f64, py in -300.0..300.0f64) {
            let g = RigidTransform::new(r, [tx, ty]);
            let p = [px, py];
            prop_assert!(close(g.inverse().apply_point(g.apply_point(p)), p, 1e-9));
            prop_assert!(close(g.compose(&g.inverse()).apply_point(p), p, 1e-9));
        }

        #[test]
        fn encoding_is_bounded_and_rigid_invariant(x in -200.0..200.0f64, y in -200.0..200.0f64, h in -4.0..4.0f64,
                                                   ax in -200.0..200.0f64, ay in -200.0..200.0f64, ah in -4.0..4.0f64,
                                                   r in -4.0..4.0f64, tx in -100.0..100.0f64, ty in -100.0..100.0f64) {
            let o = Pose2::new(x, y, h);
            let a = Pose2::new(ax, ay, ah);
            let g = RigidTransform::new(r, [tx, ty]);
            let e1 = encode_origin(&o, &a, 32);
            let e2 = encode_origin(&g.apply_pose(&o), &g.apply_pose(&a), 32);
            for (u, v) in e1.data().iter().zip(e2.data()) {
                prop_assert!(u.abs() <= 1.0);
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }
}

//! Reference paths built from straight and circular pieces.

use crate::geometry::{sin_cos, Point, RigidTransform};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Piece {
    Straight(f64),
    /// Signed turn angle; positive turns left.
    Arc { radius: f64, angle: f64 },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Straight(l) => l,
            Piece::Arc { radius, angle } => radius * angle.abs(),
        }
    }

    fn curvature(&self) -> f64 {
        match *self {
            Piece::Straight(_) => 0.0,
            Piece::Arc { radius, angle } => angle.signum() / radius,
        }
    }
}

/// Pose along a path; the heading is not wrapped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathPose {
    pub x: f64,
    pub y: f64,
    pub h: f64,
}

#[derive(Clone, Debug)]
pub struct Path {
    pieces: Vec<Piece>,
    /// Pose and arc length at the start of each piece.
    starts: Vec<(f64, PathPose)>,
    end: (f64, PathPose),
}

fn advance(p: PathPose, kappa: f64, l: f64) -> PathPose {
    let (s0, c0) = sin_cos(p.h);
    if kappa == 0.0 {
        PathPose {
            x: p.x + l * c0,
            y: p.y + l * s0,
            h: p.h,
        }
    } else {
        let h = p.h + kappa * l;
        let (s1, c1) = sin_cos(h);
        PathPose {
            x: p.x + (s1 - s0) / kappa,
            y: p.y - (c1 - c0) / kappa,
            h,
        }
    }
}

impl Path {
    pub fn new(start: PathPose, pieces: Vec<Piece>) -> Self {
        let mut starts = Vec::with_capacity(pieces.len());
        let mut s = 0.0;
        let mut p = start;
        for piece in &pieces {
            starts.push((s, p));
            p = advance(p, piece.curvature(), piece.length());
            s += piece.length();
        }
        Self {
            pieces,
            starts,
            end: (s, p),
        }
    }

    pub fn length(&self) -> f64 {
        self.end.0
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn start(&self) -> PathPose {
        self.starts.first().map(|s| s.1).unwrap_or(self.end.1)
    }

    #[cfg(test)]
    pub fn end_pose(&self) -> PathPose {
        self.end.1
    }

    fn locate(&self, s: f64) -> Option<usize> {
        if s < 0.0 || self.pieces.is_empty() {
            return None;
        }
        let i = self.starts.partition_point(|(s0, _)| *s0 <= s);
        if i == 0 || s >= self.end.0 {
            return None;
        }
        Some(i - 1)
    }

    /// Pose at arc length `s`; straight extrapolation outside `[0, length]`.
    pub fn pose_at(&self, s: f64) -> PathPose {
        if s < 0.0 {
            return advance(self.start(), 0.0, s);
        }
        match self.locate(s) {
            Some(i) => {
                let (s0, p0) = self.starts[i];
                advance(p0, self.pieces[i].curvature(), s - s0)
            }
            None => advance(self.end.1, 0.0, s - self.end.0),
        }
    }

    #[cfg(test)]
    pub fn curvature_at(&self, s: f64) -> f64 {
        self.locate(s).map(|i| self.pieces[i].curvature()).unwrap_or(0.0)
    }

    /// `(start s, end s, |curvature|)` of every arc.
    pub fn arcs(&self) -> Vec<(f64, f64, f64)> {
        self.pieces
            .iter()
            .zip(&self.starts)
            .filter(|(p, _)| matches!(p, Piece::Arc { .. }))
            .map(|(p, (s0, _))| (*s0, s0 + p.length(), p.curvature().abs()))
            .collect()
    }

    pub fn transformed(&self, g: &RigidTransform) -> Path {
        let s = self.start();
        let q = g.apply_point([s.x, s.y]);
        Path::new(
            PathPose {
                x: q[0],
                y: q[1],
                h: s.h + g.rotation,
            },
            self.pieces.clone(),
        )
    }

    /// Points every `step` metres over `[from, to]`.
    pub fn sample(&self, from: f64, to: f64, step: f64) -> Vec<(f64, Point)> {
        let n = ((to - from) / step).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| {
                let s = from + (to - from) * i as f64 / n as f64;
                let p = self.pose_at(s);
                (s, [p.x, p.y])
            })
            .collect()
    }
}

/// Closest pair of points between two path windows: `(s_a, s_b, distance)`.
pub fn closest_points(a: &Path, a_range: (f64, f64), b: &Path, b_range: (f64, f64)) -> (f64, f64, f64) {
    let pa = a.sample(a_range.0, a_range.1, 0.5);
    let pb = b.sample(b_range.0, b_range.1, 0.5);
    let mut best = (0.0, 0.0, f64::INFINITY);
    for (sa, p) in &pa {
        for (sb, q) in &pb {
            let d = (p[0] - q[0]).hypot(p[1] - q[1]);
            if d < best.2 {
                best = (*sa, *sb, d);
            }
        }
    }
    best
}

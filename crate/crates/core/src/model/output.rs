//! Decoded predictions in plain arrays.

use crate::geometry::{to_global_point, to_global_vector, Point, Pose2};

/// Per-step Gaussian means with axis-aligned spreads and a mode score.
/// Means are global; `sigmas` stay aligned with the agent's own frame.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianTrajectory {
    pub means: Vec<Point>,
    pub sigmas: Vec<[f64; 2]>,
    pub score: f64,
}

impl GaussianTrajectory {
    /// Moves local-frame means into the global frame of `origin`.
    pub fn globalized(mut self, origin: &Pose2) -> Self {
        for p in &mut self.means {
            *p = to_global_point(*p, origin);
        }
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QueryTag {
    pub category: usize,
    pub mode: usize,
    /// Pair slot, 0 or 1.
    pub agent: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub trajectory: GaussianTrajectory,
    /// `(x, y, vx, vy)` at the 3 s, 5 s and 8 s steps.
    pub keypoints: [[f64; 4]; 3],
    pub content: Vec<f64>,
    pub tag: QueryTag,
}

/// Local-frame keypoints: means at `steps` with backward-difference
/// velocities (the step before the first future step is the origin).
pub fn keypoints(means: &[Point], steps: [usize; 3], hz: f64) -> [[f64; 4]; 3] {
    steps.map(|k| {
        let p = means[k];
        let q = if k == 0 { [0.0, 0.0] } else { means[k - 1] };
        [p[0], p[1], (p[0] - q[0]) * hz, (p[1] - q[1]) * hz]
    })
}

pub fn globalize_keypoints(kp: [[f64; 4]; 3], origin: &Pose2) -> [[f64; 4]; 3] {
    kp.map(|k| {
        let p = to_global_point([k[0], k[1]], origin);
        let v = to_global_vector([k[2], k[3]], origin);
        [p[0], p[1], v[0], v[1]]
    })
}

/// One scene-level mode: both agents' futures under a shared score.
#[derive(Clone, Debug, PartialEq)]
pub struct JointMode {
    pub agents: [GaussianTrajectory; 2],
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct JointPrediction {
    pub modes: Vec<JointMode>,
}

impl JointPrediction {
    /// The `k` most probable products of two marginal mode sets, scores
    /// renormalized. Ties keep the lower (i, j) order.
    pub fn from_marginals(a: &[GaussianTrajectory], b: &[GaussianTrajectory], k: usize) -> Self {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
        for (i, ta) in a.iter().enumerate() {
            for (j, tb) in b.iter().enumerate() {
                pairs.push((ta.score * tb.score, i, j));
            }
        }
        pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
        pairs.truncate(k);
        let total: f64 = pairs.iter().map(|p| p.0).sum();
        let modes = pairs
            .into_iter()
            .map(|(s, i, j)| {
                let score = if total > 0.0 { s / total } else { 1.0 / k as f64 };
                JointMode {
                    agents: [a[i].clone(), b[j].clone()],
                    score,
                }
            })
            .collect();
        JointPrediction { modes }
    }

    pub fn score_sum(&self) -> f64 {
        self.modes.iter().map(|m| m.score).sum()
    }
}

/// Everything one forward pass produces, in the global frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Stage-1 proposals per pair slot.
    pub proposals: [Vec<Proposal>; 2],
    /// Whether stage 1 scored its modes jointly.
    pub joint_proposals: bool,
    /// Stage-2 output when the variant has one.
    pub refined: Option<JointPrediction>,
    /// What the metrics see: `refined`, or the best marginal products.
    pub joint: JointPrediction,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(score: f64) -> GaussianTrajectory {
        GaussianTrajectory {
            means: vec![[score, 0.0]],
            sigmas: vec![[1.0, 1.0]],
            score,
        }
    }

    #[test]
    fn marginal_products_rank_and_normalize() {
        let a = [traj(0.7), traj(0.3)];
        let b = [traj(0.4), traj(0.6)];
        let j = JointPrediction::from_marginals(&a, &b, 3);
        let s: Vec<f64> = j.modes.iter().map(|m| m.score).collect();
        let tot = 0.42 + 0.28 + 0.18;
        assert!((s[0] - 0.42 / tot).abs() < 1e-15);
        assert!((s[1] - 0.28 / tot).abs() < 1e-15);
        assert!((s[2] - 0.18 / tot).abs() < 1e-15);
        assert_eq!(j.modes[0].agents[1].means[0][0], 0.6);
        assert!((j.score_sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn keypoint_velocity_is_backward_difference() {
        let means: Vec<Point> = (1..=16).map(|i| [i as f64 * i as f64, -(i as f64)]).collect();
        let kp = keypoints(&means, [0, 9, 15], 2.0);
        assert_eq!(kp[0], [1.0, -1.0, 2.0, -2.0]);
        assert_eq!(kp[1], [100.0, -10.0, (100.0 - 81.0) * 2.0, -2.0]);
        assert_eq!(kp[2], [256.0, -16.0, (256.0 - 225.0) * 2.0, -2.0]);
    }
}

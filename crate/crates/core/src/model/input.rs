//! Scene arrays to network inputs. Every element is expressed in its own
//! frame; frames are related to the scene anchor only through the origin
//! encoding.

use crate::geometry::{encode_origin, normalize_angle, sin_cos, to_local, to_local_point, to_local_vector, Point, Pose2};
use crate::scene::{AgentType, SceneSample, CROSSWALK_CODE, D_P, LANE_CODE};
use crate::tensor::Tensor;

/// Per-step history features: x, y, cos, sin, vx, vy, valid.
pub const HIST_FEATURES: usize = 7;
/// Per-point map features: x, y, ux, uy, lane, crosswalk.
pub const MAP_FEATURES: usize = 6;
/// Position and velocity inputs are divided by this.
pub const INPUT_SCALE: f64 = 10.0;

#[derive(Clone, Debug)]
pub struct SceneInputs {
    pub anchor: Pose2,
    pub pair: [usize; 2],
    pub types: Vec<AgentType>,
    /// Current pose of every agent (meaningless when absent).
    pub origins: Vec<Pose2>,
    pub present: Vec<bool>,
    /// Per history step: `[n_agents, HIST_FEATURES]`.
    pub history: Vec<Tensor>,
    /// Per history step, per agent.
    pub step_valid: Vec<Vec<bool>>,
    /// `[n_agents, pe_dim]`, zero rows for absent agents.
    pub agent_pe: Tensor,
    /// Per pair slot: `[n_map * n_points, MAP_FEATURES]`.
    pub map_points: [Tensor; 2],
    /// Per pair slot: `[n_map, pe_dim]`.
    pub map_pe: [Tensor; 2],
    pub map_valid: [Vec<bool>; 2],
}

impl SceneInputs {
    pub fn new(scene: &SceneSample, pe_dim: usize) -> Self {
        let d = scene.dims;
        let na = d.n_agents;
        let anchor = scene.anchor();
        let present: Vec<bool> = (0..na).map(|a| scene.is_present(a)).collect();
        let origins: Vec<Pose2> = (0..na).map(|a| scene.current_pose(a)).collect();

        let mut history = Vec::with_capacity(d.t_hist);
        let mut step_valid = Vec::with_capacity(d.t_hist);
        for k in 0..d.t_hist {
            let mut data = vec![0.0; na * HIST_FEATURES];
            let mut valid = vec![false; na];
            for a in 0..na {
                if !present[a] || !scene.history_valid(a, k) {
                    continue;
                }
                let s = scene.history(a, k);
                let o = &origins[a];
                let p = to_local_point([s[0], s[1]], o);
                let v = to_local_vector([s[3], s[4]], o);
                let (sh, ch) = sin_cos(normalize_angle(s[2] - o.heading));
                data[a * HIST_FEATURES..(a + 1) * HIST_FEATURES].copy_from_slice(&[
                    p[0] / INPUT_SCALE,
                    p[1] / INPUT_SCALE,
                    ch,
                    sh,
                    v[0] / INPUT_SCALE,
                    v[1] / INPUT_SCALE,
                    1.0,
                ]);
                valid[a] = true;
            }
            history.push(Tensor::matrix(na, HIST_FEATURES, data));
            step_valid.push(valid);
        }

        let mut pe = vec![0.0; na * pe_dim];
        for a in (0..na).filter(|&a| present[a]) {
            pe[a * pe_dim..(a + 1) * pe_dim].copy_from_slice(encode_origin(&origins[a], &anchor, pe_dim).data());
        }

        let slot = |s: usize| map_slot(scene, s, &anchor, pe_dim);
        let (p0, e0, v0) = slot(0);
        let (p1, e1, v1) = slot(1);
        SceneInputs {
            anchor,
            pair: scene.pair,
            types: scene.agent_types.clone(),
            origins,
            present,
            history,
            step_valid,
            agent_pe: Tensor::matrix(na, pe_dim, pe),
            map_points: [p0, p1],
            map_pe: [e0, e1],
            map_valid: [v0, v1],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.present.len()
    }

    pub fn pair_origin(&self, slot: usize) -> Pose2 {
        self.origins[self.pair[slot]]
    }

    pub fn pair_type(&self, slot: usize) -> AgentType {
        self.types[self.pair[slot]]
    }
}

/// Frame of a polyline: its first point, facing the second.
pub fn element_frame(points: &[Point]) -> Pose2 {
    let (a, b) = (points[0], points[1]);
    Pose2::new(a[0], a[1], (b[1] - a[1]).atan2(b[0] - a[0]))
}

fn map_slot(scene: &SceneSample, slot: usize, anchor: &Pose2, pe_dim: usize) -> (Tensor, Tensor, Vec<bool>) {
    let d = scene.dims;
    let np = d.n_points;
    let mut pts = vec![0.0; d.n_map * np * MAP_FEATURES];
    let mut pe = vec![0.0; d.n_map * pe_dim];
    let mut valid = vec![false; d.n_map];
    for e in 0..d.n_map {
        if !scene.map_element_valid(slot, e) {
            continue;
        }
        valid[e] = true;
        let raw = scene.map_element(slot, e);
        let xy: Vec<Point> = raw.chunks_exact(D_P).map(|p| [p[0], p[1]]).collect();
        let frame = element_frame(&xy);
        for (i, p) in raw.chunks_exact(D_P).enumerate() {
            let q = to_local_point([p[0], p[1]], &frame);
            let u = to_local_vector([p[2], p[3]], &frame);
            let row = &mut pts[(e * np + i) * MAP_FEATURES..(e * np + i + 1) * MAP_FEATURES];
            row.copy_from_slice(&[
                q[0] / INPUT_SCALE,
                q[1] / INPUT_SCALE,
                u[0],
                u[1],
                f64::from(p[4] == LANE_CODE),
                f64::from(p[4] == CROSSWALK_CODE),
            ]);
        }
        pe[e * pe_dim..(e + 1) * pe_dim].copy_from_slice(encode_origin(&frame, anchor, pe_dim).data());
    }
    (Tensor::matrix(d.n_map * np, MAP_FEATURES, pts), Tensor::matrix(d.n_map, pe_dim, pe), valid)
}

/// Ground-truth futures of the pair, each in its own agent frame.
pub fn pair_targets(scene: &SceneSample) -> [Vec<Point>; 2] {
    scene.pair.map(|a| to_local(&scene.future(a), &scene.current_pose(a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use crate::scene::{generate_scene, ScenarioKind, SceneDims, SynthOptions};

    fn scene() -> SceneSample {
        generate_scene(ScenarioKind::Crossing, 4, &SynthOptions::new(SceneDims::micro())).unwrap()
    }

    #[test]
    fn present_agent_ends_at_its_origin() {
        let s = scene();
        let inp = SceneInputs::new(&s, 16);
        let last = inp.history.last().unwrap();
        for a in 0..inp.n_agents() {
            let r = last.row_slice(a);
            if inp.present[a] {
                assert!(r[0].abs() < 1e-12 && r[1].abs() < 1e-12);
                assert!((r[2] - 1.0).abs() < 1e-12 && r[3].abs() < 1e-12);
                assert_eq!(r[6], 1.0);
            } else {
                assert!(r.iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn inputs_are_rigid_invariant() {
        let s = scene();
        let g = RigidTransform::new(2.1, [-310.0, 47.5]);
        let a = SceneInputs::new(&s, 16);
        let b = SceneInputs::new(&s.transformed(&g), 16);
        let close = |x: &Tensor, y: &Tensor| x.data().iter().zip(y.data()).all(|(p, q)| (p - q).abs() < 1e-9);
        for k in 0..a.history.len() {
            assert!(close(&a.history[k], &b.history[k]));
        }
        assert!(close(&a.agent_pe, &b.agent_pe));
        for slot in 0..2 {
            assert!(close(&a.map_points[slot], &b.map_points[slot]));
            assert!(close(&a.map_pe[slot], &b.map_pe[slot]));
            assert_eq!(a.map_valid[slot], b.map_valid[slot]);
        }
        let (ta, tb) = (pair_targets(&s), pair_targets(&s.transformed(&g)));
        for slot in 0..2 {
            for (p, q) in ta[slot].iter().zip(&tb[slot]) {
                assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn element_frame_faces_second_point() {
        let f = element_frame(&[[1.0, 1.0], [1.0, 3.0], [0.0, 9.0]]);
        assert_eq!((f.x, f.y), (1.0, 1.0));
        assert!((f.heading - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}

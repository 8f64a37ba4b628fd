//! Synthetic interactive scenes and the dataset file that stores them.

mod file;
mod path;
mod synth;

pub use file::{decode_dataset, encode_dataset, read_dataset, write_dataset, DatasetError, MAGIC as DATASET_MAGIC};
pub use synth::{check_kinematics, closest_approach, generate_dataset, generate_scene, SynthOptions};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, Pose2, RigidTransform};

/// Per-step agent state: x, y, heading, vx, vy, valid.
pub const D_S: usize = 6;
/// Per-point map feature: x, y, unit dx, unit dy, lane-type code.
pub const D_P: usize = 5;

pub const LANE_CODE: f64 = 1.0;
pub const CROSSWALK_CODE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentType {
    Vehicle,
    Pedestrian,
    Cyclist,
}

impl AgentType {
    pub const ALL: [AgentType; 3] = [AgentType::Vehicle, AgentType::Pedestrian, AgentType::Cyclist];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentType::Vehicle => "vehicle",
            AgentType::Pedestrian => "pedestrian",
            AgentType::Cyclist => "cyclist",
        }
    }

    /// Upper bound on speed, m/s.
    pub fn max_speed(self) -> f64 {
        match self {
            AgentType::Vehicle => 30.0,
            AgentType::Pedestrian => 3.0,
            AgentType::Cyclist => 12.0,
        }
    }
}

impl fmt::Display for AgentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Crossing,
    Merge,
    Yield,
    Follow,
    TurnConflict,
}

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("unknown scenario kind `{0}`")]
    UnknownKind(String),
    #[error("kind mix weights sum to {0}, expected 1")]
    InvalidMix(f64),
    #[error("invalid kind mix entry `{0}`")]
    BadMixEntry(String),
    #[error("scene count must be at least 1")]
    NoScenes,
    #[error("U-turn rate {0} outside [0, 1]")]
    BadRate(f64),
    #[error("profile needs at least 2 agents, 1 map element and 2 points per element")]
    BadDims,
    #[error("could not satisfy scene constraints for {kind} after {attempts} attempts")]
    Exhausted { kind: ScenarioKind, attempts: usize },
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Crossing,
        ScenarioKind::Merge,
        ScenarioKind::Yield,
        ScenarioKind::Follow,
        ScenarioKind::TurnConflict,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Crossing => "crossing",
            ScenarioKind::Merge => "merge",
            ScenarioKind::Yield => "yield",
            ScenarioKind::Follow => "follow",
            ScenarioKind::TurnConflict => "turn-conflict",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| SceneError::UnknownKind(s.to_string()))
    }
}

/// Array extents of a scene profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneDims {
    /// Agents per scene, interacting pair included.
    pub n_agents: usize,
    pub t_hist: usize,
    pub t_future: usize,
    /// Map elements per interacting agent.
    pub n_map: usize,
    pub n_points: usize,
    pub hz: f64,
}

impl SceneDims {
    /// 10 Hz, 1.1 s history, 8 s horizon, 32 neighbours.
    pub fn full() -> Self {
        Self {
            n_agents: 34,
            t_hist: 11,
            t_future: 80,
            n_map: 8,
            n_points: 20,
            hz: 10.0,
        }
    }

    /// 2 Hz, 8 s horizon, 4 neighbours; for tests and desk runs.
    pub fn micro() -> Self {
        Self {
            n_agents: 6,
            t_hist: 3,
            t_future: 16,
            n_map: 8,
            n_points: 10,
            hz: 2.0,
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.hz
    }

    pub fn history_len(&self) -> usize {
        self.n_agents * self.t_hist * D_S
    }

    pub fn map_len(&self) -> usize {
        2 * self.n_map * self.n_points * D_P
    }

    pub fn future_len(&self) -> usize {
        self.n_agents * self.t_future * 2
    }

    /// Future step index (0-based) nearest to `seconds` after the present.
    pub fn step_at(&self, seconds: f64) -> usize {
        let k = (seconds * self.hz).round() as usize;
        k.clamp(1, self.t_future) - 1
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.n_agents < 2 || self.n_map < 1 || self.n_points < 2 || self.t_hist < 1 || self.t_future < 1 || !(self.hz > 0.0) {
            return Err(SceneError::BadDims);
        }
        Ok(())
    }
}

/// One interactive scene in global coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample {
    pub dims: SceneDims,
    pub kind: ScenarioKind,
    /// Indices of the two interacting agents.
    pub pair: [usize; 2],
    pub agent_types: Vec<AgentType>,
    /// `n_agents × t_hist × D_S`
    pub histories: Vec<f64>,
    /// `2 × n_map × n_points × D_P`, one block per interacting agent.
    pub map: Vec<f64>,
    /// `n_agents × t_future × 2`
    pub futures: Vec<f64>,
}

impl SceneSample {
    pub fn history(&self, agent: usize, step: usize) -> &[f64] {
        let o = (agent * self.dims.t_hist + step) * D_S;
        &self.histories[o..o + D_S]
    }

    pub fn history_valid(&self, agent: usize, step: usize) -> bool {
        self.history(agent, step)[5] > 0.5
    }

    /// Agents whose present state is observed.
    pub fn is_present(&self, agent: usize) -> bool {
        self.history_valid(agent, self.dims.t_hist - 1)
    }

    /// Last observed pose; the origin of the agent's frame.
    pub fn current_pose(&self, agent: usize) -> Pose2 {
        let s = self.history(agent, self.dims.t_hist - 1);
        Pose2::new(s[0], s[1], s[2])
    }

    pub fn future(&self, agent: usize) -> Vec<Point> {
        let t = self.dims.t_future;
        let o = agent * t * 2;
        (0..t).map(|k| [self.futures[o + 2 * k], self.futures[o + 2 * k + 1]]).collect()
    }

    /// Map block of pair member `slot` (0 or 1): `n_map × n_points × D_P`.
    pub fn map_block(&self, slot: usize) -> &[f64] {
        let n = self.dims.n_map * self.dims.n_points * D_P;
        &self.map[slot * n..(slot + 1) * n]
    }

    pub fn map_element(&self, slot: usize, element: usize) -> &[f64] {
        let n = self.dims.n_points * D_P;
        &self.map_block(slot)[element * n..(element + 1) * n]
    }

    /// Padded elements are all zeros and carry lane code 0.
    pub fn map_element_valid(&self, slot: usize, element: usize) -> bool {
        self.map_element(slot, element)[4] != 0.0
    }

    /// Scene anchor: midpoint of the pair's current positions, heading of
    /// the first pair member.
    pub fn anchor(&self) -> Pose2 {
        let a = self.current_pose(self.pair[0]);
        let b = self.current_pose(self.pair[1]);
        Pose2::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y), a.heading)
    }

    /// Applies `g` to every position, heading and velocity. Padding and
    /// validity flags are left alone.
    pub fn transformed(&self, g: &RigidTransform) -> SceneSample {
        let mut out = self.clone();
        let d = self.dims;
        for a in 0..d.n_agents {
            for k in 0..d.t_hist {
                let o = (a * d.t_hist + k) * D_S;
                let s = &mut out.histories[o..o + D_S];
                if s[5] <= 0.5 {
                    continue;
                }
                let p = g.apply_point([s[0], s[1]]);
                let v = g.apply_vector([s[3], s[4]]);
                s[0] = p[0];
                s[1] = p[1];
                s[2] = g.apply_heading(s[2]);
                s[3] = v[0];
                s[4] = v[1];
            }
            if !self.is_present(a) {
                continue;
            }
            for k in 0..d.t_future {
                let o = (a * d.t_future + k) * 2;
                let p = g.apply_point([out.futures[o], out.futures[o + 1]]);
                out.futures[o] = p[0];
                out.futures[o + 1] = p[1];
            }
        }
        for pt in out.map.chunks_exact_mut(D_P) {
            if pt[4] == 0.0 {
                continue;
            }
            let p = g.apply_point([pt[0], pt[1]]);
            let u = g.apply_vector([pt[2], pt[3]]);
            pt[..4].copy_from_slice(&[p[0], p[1], u[0], u[1]]);
        }
        out
    }

    /// Moves background agent slots around; the pair follows its agents.
    pub fn permute_agents(&self, order: &[usize]) -> SceneSample {
        let d = self.dims;
        assert_eq!(order.len(), d.n_agents);
        let mut out = self.clone();
        for (new, &old) in order.iter().enumerate() {
            let hs = d.t_hist * D_S;
            out.histories[new * hs..(new + 1) * hs].copy_from_slice(&self.histories[old * hs..(old + 1) * hs]);
            let fs = d.t_future * 2;
            out.futures[new * fs..(new + 1) * fs].copy_from_slice(&self.futures[old * fs..(old + 1) * fs]);
            out.agent_types[new] = self.agent_types[old];
        }
        for slot in 0..2 {
            out.pair[slot] = order.iter().position(|&o| o == self.pair[slot]).expect("pair agent in permutation");
        }
        out
    }
}

/// Applies a rigid motion to a whole scene.
pub fn rigid_transform_scene(scene: &SceneSample, g: &RigidTransform) -> SceneSample {
    scene.transformed(g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetHeader {
    pub version: u32,
    pub n_scenes: usize,
    pub dims: SceneDims,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub scenes: Vec<SceneSample>,
}

/// What to generate.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub n_scenes: usize,
    pub dims: SceneDims,
    pub mix: Vec<(ScenarioKind, f64)>,
    /// Fraction of scenes where one interacting agent makes a U-turn.
    pub uturn_rate: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.n_scenes == 0 {
            return Err(SceneError::NoScenes);
        }
        self.dims.validate()?;
        let sum: f64 = self.mix.iter().map(|(_, w)| *w).sum();
        if self.mix.is_empty() || (sum - 1.0).abs() > 1e-9 || self.mix.iter().any(|(_, w)| !(*w >= 0.0)) {
            return Err(SceneError::InvalidMix(sum));
        }
        if !(0.0..=1.0).contains(&self.uturn_rate) {
            return Err(SceneError::BadRate(self.uturn_rate));
        }
        Ok(())
    }
}

/// Parses `crossing:0.4,merge:0.6`.
pub fn parse_mix(s: &str) -> Result<Vec<(ScenarioKind, f64)>, SceneError> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|part| {
            let (k, w) = part.split_once(':').ok_or_else(|| SceneError::BadMixEntry(part.to_string()))?;
            let w: f64 = w.trim().parse().map_err(|_| SceneError::BadMixEntry(part.to_string()))?;
            Ok((k.parse()?, w))
        })
        .collect()
}

/// Equal weights over every kind.
pub fn uniform_mix() -> Vec<(ScenarioKind, f64)> {
    ScenarioKind::ALL.iter().map(|k| (*k, 1.0 / ScenarioKind::ALL.len() as f64)).collect()
}

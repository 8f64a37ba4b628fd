//! Joint-prediction metrics over the interacting pair.
//!
//! Every scene is first reduced to a [`SceneRecord`]: per mode and per
//! horizon the displacement errors and whether the mode is a hit. Rates,
//! precision curves and tables are computed from records only.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::model::{JointMode, JointPrediction};
use crate::scene::{AgentType, SceneDims};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction has no modes")]
    NoModes,
    #[error("no valid ground-truth steps up to step {0}")]
    NoValidSteps(usize),
    #[error("evaluation set is empty")]
    EmptySet,
    #[error("{preds} predictions for {gts} ground truths")]
    LengthMismatch { preds: usize, gts: usize },
    #[error("thresholds must be positive and non-decreasing with horizon")]
    BadThresholds,
    #[error("missing group {0}")]
    MissingGroup(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub seconds: f64,
    /// Isotropic position threshold, meters.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub horizons: Vec<Horizon>,
}

impl Default for ThresholdTable {
    /// 2 m at 3 s, 3.6 m at 5 s, 6 m at 8 s.
    fn default() -> Self {
        let h = |seconds, threshold| Horizon { seconds, threshold };
        Self {
            horizons: vec![h(3.0, 2.0), h(5.0, 3.6), h(8.0, 6.0)],
        }
    }
}

impl ThresholdTable {
    pub fn validate(&self) -> Result<()> {
        let ok = !self.horizons.is_empty()
            && self.horizons.iter().all(|h| h.threshold > 0.0 && h.seconds > 0.0)
            && self
                .horizons
                .windows(2)
                .all(|w| w[1].seconds > w[0].seconds && w[1].threshold >= w[0].threshold);
        if ok {
            Ok(())
        } else {
            Err(MetricsError::BadThresholds)
        }
    }

    /// `(future step, threshold)` per horizon.
    pub fn gates(&self, dims: &SceneDims) -> Vec<Gate> {
        self.horizons
            .iter()
            .map(|h| Gate {
                step: dims.step_at(h.seconds),
                threshold: h.threshold,
            })
            .collect()
    }
}

/// A horizon resolved to a step index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gate {
    pub step: usize,
    pub threshold: f64,
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Mean displacement over both agents and steps `0..=step`.
pub fn joint_ade(mode: &JointMode, gt: &[Vec<Point>; 2], step: usize) -> Result<f64> {
    if gt.iter().any(|g| g.len() <= step) {
        return Err(MetricsError::NoValidSteps(step));
    }
    let mut sum = 0.0;
    for (agent, g) in mode.agents.iter().zip(gt) {
        for t in 0..=step {
            sum += dist(agent.means[t], g[t]);
        }
    }
    Ok(sum / (2 * (step + 1)) as f64)
}

/// Displacement at `step`, averaged over both agents.
pub fn joint_fde(mode: &JointMode, gt: &[Vec<Point>; 2], step: usize) -> Result<f64> {
    if gt.iter().any(|g| g.len() <= step) {
        return Err(MetricsError::NoValidSteps(step));
    }
    Ok(0.5 * (dist(mode.agents[0].means[step], gt[0][step]) + dist(mode.agents[1].means[step], gt[1][step])))
}

/// Both agents within the threshold at every gate.
pub fn is_hit(mode: &JointMode, gt: &[Vec<Point>; 2], gates: &[Gate]) -> bool {
    gates.iter().all(|g| (0..2).all(|a| dist(mode.agents[a].means[g.step], gt[a][g.step]) <= g.threshold))
}

fn min_over(pred: &JointPrediction, f: impl Fn(&JointMode) -> Result<f64>) -> Result<f64> {
    if pred.modes.is_empty() {
        return Err(MetricsError::NoModes);
    }
    let mut best = f64::INFINITY;
    for m in &pred.modes {
        best = best.min(f(m)?);
    }
    Ok(best)
}

pub fn min_ade_joint(pred: &JointPrediction, gt: &[Vec<Point>; 2], step: usize) -> Result<f64> {
    min_over(pred, |m| joint_ade(m, gt, step))
}

pub fn min_fde_joint(pred: &JointPrediction, gt: &[Vec<Point>; 2], step: usize) -> Result<f64> {
    min_over(pred, |m| joint_fde(m, gt, step))
}

/// Fraction of scenes where no single mode is a hit at every gate.
pub fn miss_rate_joint(preds: &[JointPrediction], gts: &[[Vec<Point>; 2]], gates: &[Gate]) -> Result<f64> {
    check_lengths(preds.len(), gts.len())?;
    let misses = preds
        .iter()
        .zip(gts)
        .filter(|(p, g)| !p.modes.iter().any(|m| is_hit(m, g, gates)))
        .count();
    Ok(misses as f64 / preds.len() as f64)
}

fn check_lengths(preds: usize, gts: usize) -> Result<()> {
    if preds != gts {
        return Err(MetricsError::LengthMismatch { preds, gts });
    }
    if preds == 0 {
        return Err(MetricsError::EmptySet);
    }
    Ok(())
}

/// One scored mode in a precision-recall ranking.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankedMode {
    pub score: f64,
    pub scene: usize,
    pub mode: usize,
    pub hit: bool,
}

/// 11-point interpolated AP over `n_gt` scenes. The first hit of a scene
/// is a true positive; later hits of that scene are false positives, or
/// skipped when `soft`. Misses are false positives.
pub fn average_precision(modes: &[RankedMode], n_gt: usize, soft: bool) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut order: Vec<&RankedMode> = modes.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then((a.scene, a.mode).cmp(&(b.scene, b.mode))));
    let mut matched = std::collections::HashSet::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    // (true positives so far, precision)
    let mut curve: Vec<(usize, f64)> = Vec::with_capacity(order.len());
    for m in order {
        if m.hit && matched.insert(m.scene) {
            tp += 1;
        } else if m.hit && soft {
            continue;
        } else {
            fp += 1;
        }
        curve.push((tp, tp as f64 / (tp + fp) as f64));
    }
    let mut sum = 0.0;
    for i in 0..=10usize {
        // recall tp / n_gt >= i / 10, in integers
        let p = curve
            .iter()
            .filter(|(t, _)| 10 * t >= i * n_gt)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        sum += p;
    }
    sum / 11.0
}

/// Per-category AP averaged over categories with at least one scene.
/// Returns `(mAP, soft mAP)`.
pub fn map_score(
    preds: &[JointPrediction],
    gts: &[[Vec<Point>; 2]],
    categories: &[usize],
    gates: &[Gate],
) -> Result<(f64, f64)> {
    check_lengths(preds.len(), gts.len())?;
    check_lengths(preds.len(), categories.len())?;
    let records: Vec<Vec<(f64, bool)>> = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| p.modes.iter().map(|m| (m.score, is_hit(m, g, gates))).collect())
        .collect();
    Ok(map_from_hits(&records, categories))
}

fn map_from_hits(scenes: &[Vec<(f64, bool)>], categories: &[usize]) -> (f64, f64) {
    let mut cats: Vec<usize> = categories.to_vec();
    cats.sort_unstable();
    cats.dedup();
    let (mut hard, mut soft) = (0.0, 0.0);
    for &c in &cats {
        let mut ranked = Vec::new();
        let mut n_gt = 0;
        for (s, modes) in scenes.iter().enumerate().filter(|(s, _)| categories[*s] == c) {
            n_gt += 1;
            for (k, &(score, hit)) in modes.iter().enumerate() {
                ranked.push(RankedMode { score, scene: s, mode: k, hit });
            }
        }
        hard += average_precision(&ranked, n_gt, false);
        soft += average_precision(&ranked, n_gt, true);
    }
    let n = cats.len().max(1) as f64;
    (hard / n, soft / n)
}

/// Per-mode quantities of one scene at one horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeRecord {
    pub score: f64,
    pub ade: f64,
    pub fde: f64,
    pub hit: bool,
}

/// Everything the metrics need from one scene, per horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneRecord {
    /// Type of the first pair member.
    pub agent_type: AgentType,
    /// Behavior category of the first pair member's future.
    pub category: usize,
    pub horizons: Vec<Vec<ModeRecord>>,
}

impl SceneRecord {
    pub fn new(
        pred: &JointPrediction,
        gt: &[Vec<Point>; 2],
        agent_type: AgentType,
        category: usize,
        gates: &[Gate],
    ) -> Result<Self> {
        if pred.modes.is_empty() {
            return Err(MetricsError::NoModes);
        }
        let horizons = gates
            .iter()
            .map(|g| {
                pred.modes
                    .iter()
                    .map(|m| {
                        Ok(ModeRecord {
                            score: m.score,
                            ade: joint_ade(m, gt, g.step)?,
                            fde: joint_fde(m, gt, g.step)?,
                            hit: is_hit(m, gt, std::slice::from_ref(g)),
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            agent_type,
            category,
            horizons,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    /// An agent type name, or an `(Avg)` group label in aggregated tables.
    pub agent_type: String,
    /// Horizon in seconds, or `avg` in aggregated rows.
    pub horizon: String,
    pub scenes: usize,
    pub min_ade: f64,
    pub min_fde: f64,
    pub miss_rate: f64,
    pub map: f64,
    pub soft_map: f64,
}

/// One row per (agent type present, horizon).
pub fn metrics_rows(model: &str, records: &[SceneRecord], table: &ThresholdTable) -> Result<Vec<MetricsRow>> {
    if records.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let mut rows = Vec::new();
    for ty in AgentType::ALL {
        let group: Vec<&SceneRecord> = records.iter().filter(|r| r.agent_type == ty).collect();
        if group.is_empty() {
            continue;
        }
        for (h, horizon) in table.horizons.iter().enumerate() {
            let n = group.len() as f64;
            let min = |f: fn(&ModeRecord) -> f64| -> f64 {
                group
                    .iter()
                    .map(|r| r.horizons[h].iter().map(f).fold(f64::INFINITY, f64::min))
                    .sum::<f64>()
                    / n
            };
            let misses = group.iter().filter(|r| !r.horizons[h].iter().any(|m| m.hit)).count();
            let hits: Vec<Vec<(f64, bool)>> = group
                .iter()
                .map(|r| r.horizons[h].iter().map(|m| (m.score, m.hit)).collect())
                .collect();
            let cats: Vec<usize> = group.iter().map(|r| r.category).collect();
            let (map, soft_map) = map_from_hits(&hits, &cats);
            rows.push(MetricsRow {
                model: model.to_string(),
                agent_type: ty.name().to_string(),
                horizon: horizon.seconds.to_string(),
                scenes: group.len(),
                min_ade: min(|m| m.ade),
                min_fde: min(|m| m.fde),
                miss_rate: misses as f64 / n,
                map,
                soft_map,
            });
        }
    }
    Ok(rows)
}

/// Per-type averages over horizons plus an `All(Avg)` row averaging every
/// (type, horizon) row equally. Every type must cover the same horizons.
pub fn aggregate_table(rows: &[MetricsRow]) -> Result<Vec<MetricsRow>> {
    let first = rows.first().ok_or(MetricsError::EmptySet)?;
    let model = &first.model;
    let mut horizons: Vec<&str> = Vec::new();
    for r in rows {
        if !horizons.contains(&r.horizon.as_str()) {
            horizons.push(&r.horizon);
        }
    }
    let mut types: Vec<&str> = Vec::new();
    for r in rows {
        if !types.contains(&r.agent_type.as_str()) {
            types.push(&r.agent_type);
        }
    }
    for ty in &types {
        for h in &horizons {
            if !rows.iter().any(|r| r.agent_type == *ty && r.horizon == *h) {
                return Err(MetricsError::MissingGroup(format!("{ty} at {h} s")));
            }
        }
    }
    let mean = |label: String, group: &[&MetricsRow]| {
        let n = group.len() as f64;
        let avg = |f: fn(&MetricsRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
        MetricsRow {
            model: model.clone(),
            agent_type: label,
            horizon: "avg".to_string(),
            scenes: group.iter().map(|r| r.scenes).max().unwrap_or(0),
            min_ade: avg(|r| r.min_ade),
            min_fde: avg(|r| r.min_fde),
            miss_rate: avg(|r| r.miss_rate),
            map: avg(|r| r.map),
            soft_map: avg(|r| r.soft_map),
        }
    };
    let mut out: Vec<MetricsRow> = types
        .iter()
        .map(|ty| {
            let group: Vec<&MetricsRow> = rows.iter().filter(|r| r.agent_type == *ty).collect();
            mean(format!("{}(Avg)", capitalize(ty)), &group)
        })
        .collect();
    let all: Vec<&MetricsRow> = rows.iter().collect();
    let mut total = mean("All(Avg)".to_string(), &all);
    total.scenes = out.iter().map(|r| r.scenes).sum();
    out.push(total);
    Ok(out)
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

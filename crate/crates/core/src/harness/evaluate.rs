use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::train::CheckpointMeta;
use super::{pool, write_file, HarnessError, Result, RunConfig};
use crate::geometry::Point;
use crate::metrics::{aggregate_table, metrics_rows, MetricsRow, SceneRecord, ThresholdTable};
use crate::model::{pair_targets, GaussianTrajectory, JamModel, JointMode, JointPrediction};
use crate::scene::{read_dataset, Dataset, SceneSample};
use crate::taxonomy::{gt_category, Scheme};
use crate::tensor::read_checkpoint;

/// Anything that produces scored joint modes for a scene.
pub trait JointPredictor: Sync {
    fn predict_joint(&self, scene: &SceneSample) -> Result<JointPrediction>;
}

impl JointPredictor for JamModel {
    fn predict_joint(&self, scene: &SceneSample) -> Result<JointPrediction> {
        Ok(self.predict(scene)?.joint)
    }
}

/// Returns the ground truth as its single mode.
pub struct GroundTruthPredictor;

impl JointPredictor for GroundTruthPredictor {
    fn predict_joint(&self, scene: &SceneSample) -> Result<JointPrediction> {
        let agent = |a: usize| GaussianTrajectory {
            means: scene.future(a),
            sigmas: vec![[1.0, 1.0]; scene.dims.t_future],
            score: 1.0,
        };
        Ok(JointPrediction {
            modes: vec![JointMode {
                agents: [agent(scene.pair[0]), agent(scene.pair[1])],
                score: 1.0,
            }],
        })
    }
}

/// Metric records for every scene, in dataset order.
pub fn scene_records<P: JointPredictor>(pred: &P, ds: &Dataset, table: &ThresholdTable) -> Result<Vec<SceneRecord>> {
    let gates = table.gates(&ds.header.dims);
    pool().install(|| {
        ds.scenes
            .par_iter()
            .map(|s| {
                let p = pred.predict_joint(s)?;
                let gt: [Vec<Point>; 2] = s.pair.map(|a| s.future(a));
                let first = s.pair[0];
                let category = gt_category(&pair_targets(s)[0], s.agent_types[first], Scheme::Behavior8, None)?;
                Ok(SceneRecord::new(&p, &gt, s.agent_types[first], category, &gates)?)
            })
            .collect()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// One row per (agent type, horizon).
    pub rows: Vec<MetricsRow>,
    /// Per-type and overall averages.
    pub summary: Vec<MetricsRow>,
}

impl Evaluation {
    pub fn overall(&self) -> &MetricsRow {
        self.summary.last().expect("summary has an All(Avg) row")
    }
}

pub fn evaluate<P: JointPredictor>(pred: &P, name: &str, ds: &Dataset, table: &ThresholdTable) -> Result<Evaluation> {
    let records = scene_records(pred, ds, table)?;
    let rows = metrics_rows(name, &records, table)?;
    let summary = aggregate_table(&rows)?;
    Ok(Evaluation { rows, summary })
}

/// Mean single-threaded forward time per scene, milliseconds.
pub(crate) fn latency_ms(model: &JamModel, ds: &Dataset, max_scenes: usize) -> Result<f64> {
    let scenes = &ds.scenes[..ds.scenes.len().min(max_scenes)];
    let start = Instant::now();
    for s in scenes {
        model.predict(s)?;
    }
    Ok(start.elapsed().as_secs_f64() * 1e3 / scenes.len().max(1) as f64)
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointMeta, JamModel)> {
    let ck = read_checkpoint(path)?;
    let meta: CheckpointMeta = toml::from_str(&ck.metadata).map_err(|e| HarnessError::Mismatch(e.to_string()))?;
    meta.config.validate()?;
    let mut model = JamModel::new(meta.config.model_config()?)?;
    model.params.copy_values_from(&ck.params).map_err(HarnessError::Mismatch)?;
    Ok((meta, model))
}

/// `jam eval`: metrics of a checkpoint on a dataset file, rows then
/// summary, to `out`.
pub fn evaluate_checkpoint(checkpoint: &Path, dataset: &Path, out: &Path) -> Result<Evaluation> {
    let (meta, model) = load_checkpoint(checkpoint)?;
    let ds = read_dataset(dataset)?;
    if ds.header.dims != model.config().dims {
        return Err(HarnessError::Mismatch(format!(
            "dataset dims {:?} vs model dims {:?}",
            ds.header.dims,
            model.config().dims
        )));
    }
    let cfg: &RunConfig = &meta.config;
    let ev = evaluate(&model, cfg.variant.name(), &ds, &cfg.eval)?;
    let all: Vec<MetricsRow> = ev.rows.iter().chain(&ev.summary).cloned().collect();
    write_metrics_csv(out, &all)?;
    Ok(ev)
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.to_string()))?;
    write_file(path, &bytes)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use crate::scene::{generate_dataset, uniform_mix, DatasetSpec, SceneDims};
    use crate::tensor::write_checkpoint;

    fn data() -> Dataset {
        generate_dataset(&DatasetSpec {
            n_scenes: 12,
            dims: SceneDims::micro(),
            mix: uniform_mix(),
            uturn_rate: 0.2,
            seed: 9,
        })
        .unwrap()
    }

    #[test]
    fn ground_truth_predictor_is_perfect() {
        let ev = evaluate(&GroundTruthPredictor, "gt", &data(), &ThresholdTable::default()).unwrap();
        for r in ev.rows.iter().chain(&ev.summary) {
            assert_eq!((r.min_ade, r.min_fde, r.miss_rate), (0.0, 0.0, 0.0));
            assert_eq!((r.map, r.soft_map), (1.0, 1.0));
        }
    }

    #[test]
    fn checkpoint_evaluation_is_repeatable() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::desk(Variant::Jam);
        let model = JamModel::new(cfg.model_config().unwrap()).unwrap();
        let ck = dir.path().join("m.ckpt");
        write_checkpoint(&ck, &model.params, &super::super::checkpoint_meta(&cfg, 0)).unwrap();
        let ds_path = dir.path().join("v.jamd");
        crate::scene::write_dataset(&ds_path, &data()).unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        let ev = evaluate_checkpoint(&ck, &ds_path, &a).unwrap();
        evaluate_checkpoint(&ck, &ds_path, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let back = read_metrics_csv(&a).unwrap();
        assert_eq!(back.len(), ev.rows.len() + ev.summary.len());
        assert_eq!(&back[..ev.rows.len()], &ev.rows[..]);
        let direct = evaluate(&model, "jam", &data(), &cfg.eval).unwrap();
        assert_eq!(direct, ev);
    }
}

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{clip_global_norm, Adam};
use super::{create_dir, pool, write_file, HarnessError, Result, RunConfig};
use crate::model::{JamModel, Proposer, SceneInputs};
use crate::objective::{total_loss, LossBreakdown, Targets};
use crate::scene::{read_dataset, Dataset};
use crate::taxonomy::AnchorSet;
use crate::tensor::{write_checkpoint, Tape};

/// A scene ready for the network.
#[derive(Clone, Debug)]
pub struct Example {
    pub inputs: SceneInputs,
    pub targets: Targets,
}

pub fn prepare_examples(model: &JamModel, ds: &Dataset, anchors: Option<&AnchorSet>) -> Result<Vec<Example>> {
    let scheme = model.config().scheme;
    ds.scenes
        .iter()
        .map(|s| {
            Ok(Example {
                inputs: model.inputs(s)?,
                targets: Targets::new(s, scheme, anchors)?,
            })
        })
        .collect()
}

fn k_per_category(model: &JamModel) -> usize {
    match model.config().proposer() {
        Proposer::Marginal => model.config().k_m,
        Proposer::Joint => 1,
    }
}

/// Loss and dense per-parameter gradients of one scene.
pub fn scene_gradient(model: &JamModel, ex: &Example) -> Result<(LossBreakdown, Vec<Vec<f64>>)> {
    let mut t = Tape::new(&model.params);
    let out = model.net.forward(&mut t, &ex.inputs);
    let loss = total_loss(&mut t, &out, &ex.targets, k_per_category(model));
    let parts = loss.read(&t);
    let grads = t.backward(loss.total)?;
    let dense = model.params.ids().map(|id| grads.dense(id, &model.params)).collect();
    Ok((parts, dense))
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub nll1: f64,
    pub ce1: f64,
    pub nll2: f64,
    pub ce2: f64,
    pub total: f64,
}

/// Stored as the checkpoint metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub config: RunConfig,
}

pub fn checkpoint_meta(config: &RunConfig, epoch: usize) -> String {
    toml::to_string(&CheckpointMeta {
        epoch,
        config: config.clone(),
    })
    .expect("metadata serializes")
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: JamModel,
    pub log: Vec<StepLog>,
    /// Mean total loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub checkpoints: Vec<PathBuf>,
    pub clipped_steps: usize,
}

/// Trains from the dataset files named in the config and writes
/// checkpoints and the log under its output directory.
pub fn train(config: &RunConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let ds = read_dataset(&config.data.train)?;
    let anchors = match &config.data.anchors {
        Some(p) => Some(AnchorSet::read(p)?),
        None => None,
    };
    train_on(config, &ds, anchors.as_ref(), Some(&config.data.out_dir))
}

/// Trains on an in-memory dataset. With `out_dir`, a checkpoint is written
/// after every epoch and the step log goes to `train_log.csv`.
pub fn train_on(
    config: &RunConfig,
    ds: &Dataset,
    anchors: Option<&AnchorSet>,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut model = JamModel::new(config.model_config()?)?;
    let examples = prepare_examples(&model, ds, anchors)?;
    if examples.is_empty() {
        return Err(HarnessError::Config("empty training set".into()));
    }
    let mut log_file = match out_dir {
        Some(dir) => {
            create_dir(dir)?;
            write_file(&dir.join("config.toml"), config.to_toml().as_bytes())?;
            let path = dir.join("train_log.csv");
            let f = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
            let mut w = csv::Writer::from_writer(std::io::BufWriter::new(f));
            w.write_record(["step", "epoch", "lr", "nll1", "ce1", "nll2", "ce2", "total"])?;
            Some(w)
        }
        None => None,
    };

    let pool = pool();
    let mut opt = Adam::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut outcome_log = Vec::new();
    let mut epoch_loss = Vec::new();
    let mut checkpoints = Vec::new();
    let mut clipped_steps = 0;
    let mut step = 0;

    for epoch in 1..=config.train.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for batch in order.chunks(config.train.batch_size) {
            step += 1;
            let results: Vec<Result<(LossBreakdown, Vec<Vec<f64>>)>> =
                pool.install(|| batch.par_iter().map(|&i| scene_gradient(&model, &examples[i])).collect());
            let scale = 1.0 / batch.len() as f64;
            let mut parts = LossBreakdown::default();
            let mut grads: Vec<Vec<f64>> = model.params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
            for r in results {
                let (p, g) = r?;
                parts.add(&p);
                for (acc, gi) in grads.iter_mut().zip(&g) {
                    acc.iter_mut().zip(gi).for_each(|(a, b)| *a += b);
                }
            }
            let parts = parts.scaled(scale);
            if !parts.total.is_finite() {
                return Err(HarnessError::NonFinite { epoch, step });
            }
            grads.iter_mut().flatten().for_each(|g| *g *= scale);
            let norm = clip_global_norm(&mut grads, config.train.clip_norm);
            if norm > config.train.clip_norm {
                clipped_steps += 1;
                log::debug!("step {step}: gradient norm {norm:.4} clipped to {}", config.train.clip_norm);
            }
            opt.update(&mut model.params, &grads, lr);

            let row = StepLog {
                step,
                epoch,
                lr,
                nll1: parts.nll1,
                ce1: parts.ce1,
                nll2: parts.nll2,
                ce2: parts.ce2,
                total: parts.total,
            };
            if let Some(w) = log_file.as_mut() {
                w.serialize(row)?;
            }
            outcome_log.push(row);
            sum += parts.total;
            batches += 1;
        }
        let mean = sum / batches as f64;
        epoch_loss.push(mean);
        log::info!("{} epoch {epoch}: loss {mean:.4}, lr {lr:e}", config.variant);
        if let Some(dir) = out_dir {
            let path = dir.join(format!("epoch-{epoch:03}.ckpt"));
            write_checkpoint(&path, &model.params, &checkpoint_meta(config, epoch))?;
            checkpoints.push(path);
        }
    }
    if let Some(mut w) = log_file {
        w.flush().map_err(|e| HarnessError::io(Path::new("train_log.csv"), e))?;
    }
    if clipped_steps > 0 {
        log::info!("gradient clipping was active on {clipped_steps} of {step} steps");
    }
    Ok(TrainOutcome {
        model,
        log: outcome_log,
        epoch_loss,
        checkpoints,
        clipped_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use crate::scene::{generate_dataset, uniform_mix, DatasetSpec, SceneDims};

    fn data(n: usize, seed: u64) -> Dataset {
        generate_dataset(&DatasetSpec {
            n_scenes: n,
            dims: SceneDims::micro(),
            mix: uniform_mix(),
            uturn_rate: 0.2,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn batch_gradient_is_mean_of_scene_gradients() {
        let cfg = RunConfig::desk(Variant::Jam);
        let model = JamModel::new(cfg.model_config().unwrap()).unwrap();
        let ds = data(3, 1);
        let ex = prepare_examples(&model, &ds, None).unwrap();
        let (l0, g0) = scene_gradient(&model, &ex[0]).unwrap();
        let (l1, _) = scene_gradient(&model, &ex[1]).unwrap();
        assert!(l0.total.is_finite() && l1.total.is_finite());
        assert!((l0.nll1 + l0.ce1 + l0.nll2 + l0.ce2 - l0.total).abs() < 1e-9 * l0.total.abs());
        assert_eq!(g0.len(), model.params.len());
    }

    #[test]
    fn same_seed_same_bytes() {
        let mut cfg = RunConfig::desk(Variant::Jam);
        cfg.train.epochs = 1;
        cfg.train.batch_size = 4;
        let ds = data(8, 2);
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let runs: Vec<TrainOutcome> = dirs.iter().map(|d| train_on(&cfg, &ds, None, Some(d.path())).unwrap()).collect();
        let read = |p: &Path| std::fs::read(p).unwrap();
        assert_eq!(read(&runs[0].checkpoints[0]), read(&runs[1].checkpoints[0]));
        assert_eq!(
            read(&dirs[0].path().join("train_log.csv")),
            read(&dirs[1].path().join("train_log.csv"))
        );
        let header = String::from_utf8(read(&dirs[0].path().join("train_log.csv"))).unwrap();
        assert!(header.starts_with("step,epoch,lr,nll1,ce1,nll2,ce2,total\n"));
        assert_eq!(runs[0].log.len(), 2);
    }

    #[test]
    fn training_loss_decreases() {
        let mut cfg = RunConfig::desk(Variant::Jam);
        cfg.train.epochs = 5;
        let out = train_on(&cfg, &data(200, 5), None, None).unwrap();
        assert!(out.epoch_loss.windows(2).all(|w| w[1] < w[0]), "{:?}", out.epoch_loss);
    }
}

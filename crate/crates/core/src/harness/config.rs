//! Run configuration: a sectioned TOML file naming every model and scene
//! symbol explicitly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::metrics::ThresholdTable;
use crate::model::{ModelConfig, Variant};
use crate::scene::{SceneDims, D_P, D_S};
use crate::taxonomy::Scheme;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    #[serde(rename = "N_a")]
    pub n_agents: usize,
    #[serde(rename = "T_h")]
    pub t_hist: usize,
    #[serde(rename = "T")]
    pub t_future: usize,
    pub d_s: usize,
    pub d_p: usize,
    #[serde(rename = "N_m")]
    pub n_map: usize,
    #[serde(rename = "N_p")]
    pub n_points: usize,
    pub hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(rename = "D_dim")]
    pub d_dim: usize,
    #[serde(rename = "E")]
    pub e: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub pe_dim: usize,
    #[serde(rename = "Y_m")]
    pub y_m: usize,
    #[serde(rename = "K_m")]
    pub k_m: usize,
    #[serde(rename = "K_j")]
    pub k_j: usize,
    #[serde(rename = "Y_j")]
    pub y_j: usize,
    /// Predicted joint modes per scene.
    #[serde(rename = "K")]
    pub k: usize,
    pub scheme: Scheme,
    pub output_scale: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// First epoch (1-based) at a halved rate.
    pub decay_start: usize,
    pub decay_every: usize,
    pub clip_norm: f64,
    /// Shuffling seed.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train: PathBuf,
    pub valid: PathBuf,
    /// Only needed by the anchor scheme.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    pub scene: SceneSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub data: DataSection,
    #[serde(default)]
    pub eval: ThresholdTable,
}

impl RunConfig {
    /// Desk defaults: micro scenes and network, 15 epochs, batch 32.
    pub fn desk(variant: Variant) -> Self {
        let m = ModelConfig::micro(variant);
        Self::from_model(&m, Path::new("data"), Path::new("runs"))
    }

    /// Wraps a model configuration with the default training schedule.
    pub fn from_model(m: &ModelConfig, data_dir: &Path, out_dir: &Path) -> Self {
        let d = m.dims;
        RunConfig {
            variant: m.variant,
            scene: SceneSection {
                n_agents: d.n_agents,
                t_hist: d.t_hist,
                t_future: d.t_future,
                d_s: D_S,
                d_p: D_P,
                n_map: d.n_map,
                n_points: d.n_points,
                hz: d.hz,
            },
            model: ModelSection {
                d_dim: m.d_dim,
                e: m.e,
                heads: m.heads,
                ff_dim: m.ff_dim,
                pe_dim: m.pe_dim,
                y_m: m.y_m,
                k_m: m.k_m,
                k_j: m.k_j,
                y_j: m.y_j,
                k: m.k_j,
                scheme: m.scheme,
                output_scale: m.output_scale,
                seed: m.seed,
            },
            train: TrainSection {
                epochs: 15,
                batch_size: 32,
                lr: 1e-4,
                decay_start: 20,
                decay_every: 2,
                clip_norm: 1.0,
                seed: 0,
            },
            data: DataSection {
                train: data_dir.join("train.jamd"),
                valid: data_dir.join("valid.jamd"),
                anchors: None,
                out_dir: out_dir.to_path_buf(),
            },
            eval: ThresholdTable::default(),
        }
    }

    pub fn dims(&self) -> SceneDims {
        let s = &self.scene;
        SceneDims {
            n_agents: s.n_agents,
            t_hist: s.t_hist,
            t_future: s.t_future,
            n_map: s.n_map,
            n_points: s.n_points,
            hz: s.hz,
        }
    }

    /// The network this run trains. Variant structure overrides the
    /// `Y_m`, `K_m` and scheme entries where the variant fixes them.
    pub fn model_config(&self) -> Result<ModelConfig, HarnessError> {
        let m = &self.model;
        let mut c = ModelConfig {
            variant: self.variant,
            dims: self.dims(),
            d_dim: m.d_dim,
            e: m.e,
            heads: m.heads,
            ff_dim: m.ff_dim,
            pe_dim: m.pe_dim,
            y_m: m.y_m,
            k_m: m.k_m,
            k_j: m.k_j,
            y_j: m.y_j,
            scheme: m.scheme,
            use_keypoints: true,
            use_proposals: true,
            output_scale: m.output_scale,
            seed: m.seed,
        };
        c.apply_variant();
        if (c.y_m, c.k_m, c.scheme) != (m.y_m, m.k_m, m.scheme) {
            log::info!(
                "{}: using Y_m={} K_m={} scheme={}",
                self.variant,
                c.y_m,
                c.k_m,
                c.scheme.name()
            );
        }
        c.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.scene.d_s != D_S || self.scene.d_p != D_P {
            return bad("d_s and d_p are fixed by the scene format (6 and 5)");
        }
        if self.model.y_j != 1 {
            return bad("Y_j must be 1");
        }
        if self.model.k != self.model.k_j {
            return bad("K must equal K_j");
        }
        let t = &self.train;
        if t.epochs == 0 || t.batch_size == 0 || t.decay_every == 0 {
            return bad("epochs, batch_size and decay_every must be positive");
        }
        if !(t.lr > 0.0) || !(t.clip_norm > 0.0) {
            return bad("lr and clip_norm must be positive");
        }
        self.eval.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.model_config()?;
        Ok(())
    }

    pub fn from_toml(s: &str) -> Result<Self, HarnessError> {
        let c: RunConfig = toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let s = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&s)
    }

    /// Rate for 1-based `epoch`: halved every `decay_every` epochs from
    /// `decay_start` on.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        lr_schedule(self.train.lr, epoch, self.train.decay_start, self.train.decay_every)
    }
}

pub fn lr_schedule(base: f64, epoch: usize, decay_start: usize, decay_every: usize) -> f64 {
    let halvings = if epoch >= decay_start {
        (epoch - decay_start) / decay_every + 1
    } else {
        0
    };
    base * 0.5f64.powi(halvings as i32)
}

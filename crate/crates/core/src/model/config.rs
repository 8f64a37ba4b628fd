//! Model hyperparameters and framework variants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::scene::SceneDims;
use crate::taxonomy::Scheme;

/// Framework under comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Marginal decoder with free (unclassified) queries.
    MarginalFree,
    /// Marginal decoder with classified queries.
    MarginalAware,
    /// Joint proposer followed by joint re-prediction without keypoints.
    JointOnestep,
    Jam,
    /// JAM with the keypoint embedding zeroed.
    JamNoKeypoints,
    /// Joint proposer followed by keypoint-guided re-prediction.
    JamNoClassification,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::MarginalFree,
        Variant::MarginalAware,
        Variant::JointOnestep,
        Variant::Jam,
        Variant::JamNoKeypoints,
        Variant::JamNoClassification,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::MarginalFree => "marginal-free",
            Variant::MarginalAware => "marginal-aware",
            Variant::JointOnestep => "joint-onestep",
            Variant::Jam => "jam",
            Variant::JamNoKeypoints => "jam-no-keypoints",
            Variant::JamNoClassification => "jam-no-classification",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown variant `{s}`")))
    }
}

/// How stage 1 produces proposals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Proposer {
    /// `y_m * k_m` per-agent queries.
    Marginal,
    /// `k_j` queries shared by the pair.
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub dims: SceneDims,
    pub d_dim: usize,
    /// Encoder layers.
    pub e: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Width of the sinusoidal origin encoding.
    pub pe_dim: usize,
    pub y_m: usize,
    pub k_m: usize,
    pub k_j: usize,
    pub y_j: usize,
    pub scheme: Scheme,
    pub use_keypoints: bool,
    pub use_proposals: bool,
    /// Metres per unit of per-step displacement output.
    pub output_scale: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// Test-sized network for the micro scene profile.
    pub fn micro(variant: Variant) -> Self {
        let mut c = ModelConfig {
            variant,
            dims: SceneDims::micro(),
            d_dim: 32,
            e: 2,
            heads: 4,
            ff_dim: 64,
            pe_dim: 16,
            y_m: 8,
            k_m: 1,
            k_j: 6,
            y_j: 1,
            scheme: Scheme::Behavior8,
            use_keypoints: true,
            use_proposals: true,
            output_scale: 2.0,
            seed: 0,
        };
        c.apply_variant();
        c
    }

    /// Full desk network on the full scene profile.
    pub fn full(variant: Variant) -> Self {
        let mut c = ModelConfig {
            dims: SceneDims::full(),
            d_dim: 256,
            e: 6,
            heads: 8,
            ff_dim: 1024,
            pe_dim: 64,
            y_m: 64,
            k_j: 6,
            scheme: Scheme::Anchor64,
            output_scale: 1.0,
            ..ModelConfig::micro(variant)
        };
        c.apply_variant();
        c
    }

    /// Forces the variant's structural settings.
    pub fn apply_variant(&mut self) {
        match self.variant {
            Variant::MarginalFree => {
                self.y_m = 1;
                self.k_m = 64;
                self.scheme = Scheme::None;
                self.use_proposals = false;
                self.use_keypoints = false;
            }
            Variant::MarginalAware => {
                self.y_m = 8;
                self.k_m = 3;
                self.scheme = Scheme::Behavior8;
                self.use_proposals = false;
                self.use_keypoints = false;
            }
            Variant::Jam | Variant::JamNoKeypoints => {
                self.k_m = 1;
                if self.scheme == Scheme::None {
                    self.scheme = Scheme::Behavior8;
                }
                self.y_m = self.scheme.categories();
                self.use_proposals = true;
                self.use_keypoints = self.variant == Variant::Jam;
            }
            Variant::JointOnestep | Variant::JamNoClassification => {
                self.y_m = 1;
                self.k_m = self.k_j;
                self.scheme = Scheme::None;
                self.use_proposals = true;
                self.use_keypoints = self.variant == Variant::JamNoClassification;
            }
        }
    }

    pub fn proposer(&self) -> Proposer {
        match self.variant {
            Variant::JointOnestep | Variant::JamNoClassification => Proposer::Joint,
            _ => Proposer::Marginal,
        }
    }

    /// Whether the keypoint-guided joint stage exists.
    pub fn has_stage2(&self) -> bool {
        !matches!(self.variant, Variant::MarginalFree | Variant::MarginalAware)
    }

    /// Stage-1 modes per agent.
    pub fn stage1_modes(&self) -> usize {
        match self.proposer() {
            Proposer::Marginal => self.y_m * self.k_m,
            Proposer::Joint => self.k_j,
        }
    }

    /// Future steps of the 3 s, 5 s and 8 s keypoints.
    pub fn keypoint_steps(&self) -> [usize; 3] {
        [3.0, 5.0, 8.0].map(|s| self.dims.step_at(s))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        self.dims.validate().map_err(|e| ModelError::Config(e.to_string()))?;
        if self.d_dim == 0 || self.heads == 0 || self.d_dim % self.heads != 0 {
            return bad(format!("d_dim {} must be a positive multiple of heads {}", self.d_dim, self.heads));
        }
        if self.pe_dim == 0 || self.pe_dim % 2 != 0 {
            return bad(format!("pe_dim {} must be positive and even", self.pe_dim));
        }
        if self.y_m == 0 || self.k_m == 0 || self.k_j == 0 || self.ff_dim == 0 {
            return bad("mode counts and ff_dim must be positive".into());
        }
        if self.y_j != 1 {
            return bad(format!("y_j must be 1, got {}", self.y_j));
        }
        if self.proposer() == Proposer::Marginal && self.y_m != self.scheme.categories() {
            return bad(format!(
                "y_m {} does not match the {} scheme ({} categories)",
                self.y_m,
                self.scheme.name(),
                self.scheme.categories()
            ));
        }
        if !(self.output_scale > 0.0) {
            return bad("output_scale must be positive".into());
        }
        Ok(())
    }
}

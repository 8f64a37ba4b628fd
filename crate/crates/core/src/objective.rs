//! Best-mode Gaussian negative log-likelihood with a cross-entropy score
//! term, for both stages.

use thiserror::Error;

use crate::geometry::Point;
use crate::model::{pair_targets, ForwardVars, ModeSet, SIGMA_MAX, SIGMA_MIN};
use crate::scene::SceneSample;
use crate::taxonomy::{gt_category, AnchorSet, Scheme, TaxonomyError};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("sigma {0} outside [{SIGMA_MIN}, {SIGMA_MAX}]")]
    SigmaOutOfBounds(f64),
    #[error("mode probability {0} is not in (0, 1]")]
    BadProbability(f64),
    #[error("no modes to select from")]
    NoModes,
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

/// Mean Euclidean displacement over the shared steps.
pub fn ade(pred: &[Point], gt: &[Point]) -> f64 {
    let n = pred.len().min(gt.len());
    let s: f64 = (0..n).map(|k| (pred[k][0] - gt[k][0]).hypot(pred[k][1] - gt[k][1])).sum();
    s / n as f64
}

/// Index of the mode whose means are closest to `gt`, summed over agents.
/// A mode is a list of per-agent trajectories; with one agent this is the
/// marginal criterion, with two the joint one. Ties go to the lowest index.
pub fn select_best_mode<M: AsRef<[Vec<Point>]>>(modes: &[M], gt: &[Vec<Point>]) -> Result<usize, ObjectiveError> {
    let mut best = (0, f64::INFINITY);
    for (i, m) in modes.iter().enumerate() {
        let e: f64 = m.as_ref().iter().zip(gt).map(|(p, g)| ade(p, g)).sum();
        if e < best.1 {
            best = (i, e);
        }
    }
    if modes.is_empty() {
        return Err(ObjectiveError::NoModes);
    }
    Ok(best.0)
}

/// One agent's Gaussian sequence.
#[derive(Clone, Copy, Debug)]
pub struct GaussianSeq<'a> {
    pub means: &'a [Point],
    pub sigmas: &'a [[f64; 2]],
}

/// Negative log-likelihood of the selected mode: per step
/// `log sx + log sy + ((dx/sx)^2 + (dy/sy)^2) / 2`, summed over steps and
/// agents, minus the log of the mode probability.
pub fn nll_gmm(agents: &[GaussianSeq], gt: &[Vec<Point>], prob: f64) -> Result<f64, ObjectiveError> {
    if !(prob > 0.0 && prob <= 1.0) {
        return Err(ObjectiveError::BadProbability(prob));
    }
    let mut total = 0.0;
    for (a, g) in agents.iter().zip(gt) {
        for ((m, s), p) in a.means.iter().zip(a.sigmas).zip(g) {
            for j in 0..2 {
                if !(SIGMA_MIN..=SIGMA_MAX).contains(&s[j]) {
                    return Err(ObjectiveError::SigmaOutOfBounds(s[j]));
                }
                let z = (m[j] - p[j]) / s[j];
                total += s[j].ln() + 0.5 * z * z;
            }
        }
    }
    Ok(total - prob.ln())
}

/// Tape form of the Gaussian part of [`nll_gmm`] for row `mode` of
/// `mu`/`sigma` (`[modes, 2T]`) against a local-frame target.
pub fn gaussian_nll(t: &mut Tape, mu: Var, sigma: Var, mode: usize, gt: &[Point]) -> Var {
    let target: Vec<f64> = gt.iter().flat_map(|p| [p[0], p[1]]).collect();
    let m = t.slice_rows(mu, mode, 1);
    let s = t.slice_rows(sigma, mode, 1);
    let g = t.constant(Tensor::row(target));
    let d = t.sub(m, g);
    let z = t.div(d, s);
    let z2 = t.square(z);
    let quad = t.sum_all(z2);
    let quad = t.scale(quad, 0.5);
    let ls = t.log(s);
    let ls = t.sum_all(ls);
    t.add(ls, quad)
}

/// `-log softmax(logits)[target]` for a `[1, n]` logit row.
pub fn cross_entropy(t: &mut Tape, logits: Var, target: usize) -> Var {
    let lp = t.log_softmax(logits);
    let p = t.pick(lp, target);
    t.scale(p, -1.0)
}

/// What the loss needs from a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Targets {
    /// Pair futures in each agent's own frame.
    pub gt: [Vec<Point>; 2],
    /// Stage-1 category of each pair member under the model's scheme.
    pub category: [usize; 2],
}

impl Targets {
    pub fn new(scene: &SceneSample, scheme: Scheme, anchors: Option<&AnchorSet>) -> Result<Self, ObjectiveError> {
        let gt = pair_targets(scene);
        let mut category = [0; 2];
        for s in 0..2 {
            category[s] = gt_category(&gt[s], scene.agent_types[scene.pair[s]], scheme, anchors)?;
        }
        Ok(Targets { gt, category })
    }
}

/// The scalar parts of a loss evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub nll1: f64,
    pub ce1: f64,
    pub nll2: f64,
    pub ce2: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn add(&mut self, o: &LossBreakdown) {
        self.nll1 += o.nll1;
        self.ce1 += o.ce1;
        self.nll2 += o.nll2;
        self.ce2 += o.ce2;
        self.total += o.total;
    }

    pub fn scaled(&self, c: f64) -> LossBreakdown {
        LossBreakdown {
            nll1: self.nll1 * c,
            ce1: self.ce1 * c,
            nll2: self.nll2 * c,
            ce2: self.ce2 * c,
            total: self.total * c,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub nll1: Var,
    pub ce1: Var,
    pub nll2: Var,
    pub ce2: Var,
    pub total: Var,
}

impl LossVars {
    pub fn read(&self, t: &Tape) -> LossBreakdown {
        let v = |x: Var| t.value(x).item();
        LossBreakdown {
            nll1: v(self.nll1),
            ce1: v(self.ce1),
            nll2: v(self.nll2),
            ce2: v(self.ce2),
            total: v(self.total),
        }
    }
}

fn mode_means(t: &Tape, mu: Var, mode: usize) -> Vec<Point> {
    t.value(mu).row_slice(mode).chunks_exact(2).map(|p| [p[0], p[1]]).collect()
}

/// Best mode within category `y` (`k` modes per category) of one agent.
pub fn marginal_assignment(t: &Tape, set: &ModeSet, slot: usize, y: usize, k: usize, gt: &[Point]) -> usize {
    let modes: Vec<Vec<Vec<Point>>> = (0..k).map(|i| vec![mode_means(t, set.mu[slot], y * k + i)]).collect();
    y * k + select_best_mode(&modes, &[gt.to_vec()]).expect("k > 0")
}

/// Joint best mode over both agents.
pub fn joint_assignment(t: &Tape, set: &ModeSet, gt: &[Vec<Point>; 2]) -> usize {
    let n = t.value(set.mu[0]).rows();
    let modes: Vec<Vec<Vec<Point>>> = (0..n)
        .map(|i| vec![mode_means(t, set.mu[0], i), mode_means(t, set.mu[1], i)])
        .collect();
    select_best_mode(&modes, gt).expect("modes > 0")
}

/// Returns (nll, ce) of a mode set. Marginal sets use per-category
/// assignment with `y_gt` and `k_per_category`; joint sets ignore both.
pub fn set_loss(t: &mut Tape, set: &ModeSet, targets: &Targets, k_per_category: usize) -> (Var, Var) {
    if set.joint {
        let k = joint_assignment(t, set, &targets.gt);
        let a = gaussian_nll(t, set.mu[0], set.sigma[0], k, &targets.gt[0]);
        let b = gaussian_nll(t, set.mu[1], set.sigma[1], k, &targets.gt[1]);
        let nll = t.add(a, b);
        let ce = cross_entropy(t, set.logits[0], k);
        (nll, ce)
    } else {
        let mut nll = Vec::with_capacity(2);
        let mut ce = Vec::with_capacity(2);
        for s in 0..2 {
            let k = marginal_assignment(t, set, s, targets.category[s], k_per_category, &targets.gt[s]);
            nll.push(gaussian_nll(t, set.mu[s], set.sigma[s], k, &targets.gt[s]));
            ce.push(cross_entropy(t, set.logits[s], k));
        }
        (t.add(nll[0], nll[1]), t.add(ce[0], ce[1]))
    }
}

/// Equal-weight sum of both stages' NLL and cross-entropy.
pub fn total_loss(t: &mut Tape, out: &ForwardVars, targets: &Targets, k_per_category: usize) -> LossVars {
    let (nll1, ce1) = set_loss(t, &out.stage1, targets, k_per_category);
    let (nll2, ce2) = match &out.stage2 {
        Some(s2) => set_loss(t, s2, targets, 1),
        None => (t.constant(Tensor::scalar(0.0)), t.constant(Tensor::scalar(0.0))),
    };
    let total = t.add_scalars(&[nll1, ce1, nll2, ce2]);
    LossVars {
        nll1,
        ce1,
        nll2,
        ce2,
        total,
    }
}

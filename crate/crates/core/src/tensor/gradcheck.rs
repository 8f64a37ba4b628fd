//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use super::tape::{Tape, Var};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// A difference quotient is trusted only when the derivative exceeds its
/// round-off, about `eps * |loss| / FD_STEP`, by this factor.
pub const RESOLUTION_MARGIN: f64 = 1e5;

/// `|a-b| / max(|a|, |b|, 1e-8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Probe {
    /// Derivative along a random unit-length sign direction over the whole tensor.
    Direction,
    /// Partial derivative w.r.t. one flat element.
    Element(usize),
}

#[derive(Clone, Debug)]
pub struct GradEntry {
    pub param: String,
    pub probe: Probe,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    /// Whether the derivative is large enough for the difference quotient
    /// to resolve; unresolvable entries do not count towards the maximum.
    pub resolvable: bool,
}

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub entries: Vec<GradEntry>,
    /// Over resolvable entries; non-finite values make this infinite.
    pub max_rel_error: f64,
    /// Smallest derivative magnitude the difference quotient resolves.
    pub floor: f64,
}

impl GradReport {
    pub fn worst(&self) -> Option<&GradEntry> {
        self.entries
            .iter()
            .filter(|e| e.resolvable)
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn entries_for<'a>(&'a self, param: &'a str) -> impl Iterator<Item = &'a GradEntry> + 'a {
        self.entries.iter().filter(move |e| e.param == param)
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Elements probed per parameter tensor; tensors with fewer elements are
    /// probed exhaustively. Larger tensors sample among elements whose
    /// analytic gradient is at least 1e-3 of the tensor's largest and above
    /// the report's resolution floor; the directional probe covers the rest.
    pub elements_per_param: usize,
    /// Also probe one random direction per tensor.
    pub directional: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            elements_per_param: 3,
            directional: true,
        }
    }
}

fn eval_loss<F>(params: &ParamStore, loss: &F) -> f64
where
    F: Fn(&mut Tape) -> Var,
{
    let mut t = Tape::new(params);
    let out = loss(&mut t);
    t.value(out).item()
}

/// Compares analytic gradients of the scalar built by `loss` against central
/// differences for every parameter. Probed elements and directions are drawn
/// from `seed`. Parameter values are restored before returning.
pub fn check_gradients<F>(params: &mut ParamStore, loss: F, seed: u64, opts: &GradCheckOptions) -> GradReport
where
    F: Fn(&mut Tape) -> Var,
{
    let (grads, value) = {
        let mut t = Tape::new(params);
        let out = loss(&mut t);
        match t.backward(out) {
            Ok(g) => (g, t.value(out).item()),
            Err(e) => {
                log::warn!("gradient check: {e}");
                return GradReport {
                    entries: Vec::new(),
                    max_rel_error: f64::INFINITY,
                    floor: f64::NAN,
                };
            }
        }
    };
    let floor = RESOLUTION_MARGIN * f64::EPSILON * value.abs().max(1.0) / FD_STEP;
    let entry = |name: &str, probe: Probe, analytic: f64, numeric: f64| GradEntry {
        param: name.to_string(),
        probe,
        analytic,
        numeric,
        rel_error: relative_error(analytic, numeric),
        resolvable: analytic.abs().max(numeric.abs()) >= floor || (analytic == 0.0 && numeric == 0.0),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let name = params.name(id).to_string();
        let analytic = grads.dense(id, params);
        let n = analytic.len();
        if n == 0 {
            continue;
        }
        let picks: Vec<usize> = if n <= opts.elements_per_param {
            (0..n).collect()
        } else {
            let peak = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            let cut = (1e-3 * peak).max(floor);
            let candidates: Vec<usize> = (0..n).filter(|&i| analytic[i].abs() >= cut).collect();
            let take = opts.elements_per_param.min(candidates.len());
            let mut v: Vec<usize> = sample(&mut rng, candidates.len(), take)
                .into_iter()
                .map(|j| candidates[j])
                .collect();
            v.sort_unstable();
            v
        };
        for i in picks {
            let orig = params.get(id).data()[i];
            params.get_mut(id).data_mut()[i] = orig + FD_STEP;
            let up = eval_loss(params, &loss);
            params.get_mut(id).data_mut()[i] = orig - FD_STEP;
            let down = eval_loss(params, &loss);
            params.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            entries.push(entry(&name, Probe::Element(i), analytic[i], numeric));
        }
        if opts.directional {
            let unit = 1.0 / (n as f64).sqrt();
            let dir: Vec<f64> = (0..n).map(|_| if rng.gen::<bool>() { unit } else { -unit }).collect();
            let orig = params.get(id).data().to_vec();
            let shifted = |s: f64| -> Vec<f64> { orig.iter().zip(&dir).map(|(o, d)| o + s * d).collect() };
            params.get_mut(id).data_mut().copy_from_slice(&shifted(FD_STEP));
            let up = eval_loss(params, &loss);
            params.get_mut(id).data_mut().copy_from_slice(&shifted(-FD_STEP));
            let down = eval_loss(params, &loss);
            params.get_mut(id).data_mut().copy_from_slice(&orig);
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a: f64 = analytic.iter().zip(&dir).map(|(g, d)| g * d).sum();
            entries.push(entry(&name, Probe::Direction, a, numeric));
        }
    }
    let max_rel_error = entries
        .iter()
        .filter(|e| e.resolvable || !e.rel_error.is_finite())
        .map(|e| if e.rel_error.is_finite() { e.rel_error } else { f64::INFINITY })
        .fold(0.0, f64::max);
    GradReport {
        entries,
        max_rel_error,
        floor,
    }
}

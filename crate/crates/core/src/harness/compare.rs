use std::path::Path;

use super::evaluate::latency_ms;
use super::{evaluate, train_on, Evaluation, Result, RunConfig};
use crate::metrics::MetricsRow;
use crate::model::Variant;
use crate::scene::Dataset;
use crate::taxonomy::AnchorSet;

#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub evaluation: Evaluation,
    /// Mean training loss of the last epoch.
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantResult {
    pub variant: Variant,
    pub params: usize,
    /// Informational; varies between runs.
    pub latency_ms: f64,
    pub seeds: Vec<SeedResult>,
}

impl VariantResult {
    /// Overall minADE per seed.
    pub fn min_ade_per_seed(&self) -> Vec<f64> {
        self.seeds.iter().map(|s| s.evaluation.overall().min_ade).collect()
    }

    /// Summary rows averaged over seeds.
    pub fn mean_summary(&self) -> Vec<MetricsRow> {
        let n = self.seeds.len() as f64;
        let mut out = self.seeds[0].evaluation.summary.clone();
        for (i, row) in out.iter_mut().enumerate() {
            let col = |f: fn(&MetricsRow) -> f64| self.seeds.iter().map(|s| f(&s.evaluation.summary[i])).sum::<f64>() / n;
            row.min_ade = col(|r| r.min_ade);
            row.min_fde = col(|r| r.min_fde);
            row.miss_rate = col(|r| r.miss_rate);
            row.map = col(|r| r.map);
            row.soft_map = col(|r| r.soft_map);
        }
        out
    }

    pub fn mean_overall(&self) -> MetricsRow {
        self.mean_summary().pop().expect("All(Avg) row")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultsTable {
    pub variants: Vec<VariantResult>,
    /// False when some variant failed; its error is in `failures`.
    pub complete: bool,
    pub failures: Vec<(Variant, String)>,
}

impl ResultsTable {
    pub fn get(&self, v: Variant) -> Option<&VariantResult> {
        self.variants.iter().find(|r| r.variant == v)
    }
}

/// Trains and evaluates every variant on every seed. Each run uses `base`
/// with the variant swapped in and both the model and shuffle seeds set.
/// A failing variant stops the comparison; the table keeps what finished
/// and is flagged incomplete.
pub fn compare_frameworks(
    base: &RunConfig,
    variants: &[Variant],
    seeds: &[u64],
    train: &Dataset,
    valid: &Dataset,
    anchors: Option<&AnchorSet>,
    out_dir: Option<&Path>,
) -> Result<ResultsTable> {
    let mut table = ResultsTable {
        variants: Vec::new(),
        complete: true,
        failures: Vec::new(),
    };
    for &v in variants {
        match run_variant(base, v, seeds, train, valid, anchors, out_dir) {
            Ok(r) => table.variants.push(r),
            Err(e) => {
                log::error!("{v} failed: {e}");
                table.complete = false;
                table.failures.push((v, e.to_string()));
                break;
            }
        }
    }
    Ok(table)
}

fn run_variant(
    base: &RunConfig,
    variant: Variant,
    seeds: &[u64],
    train: &Dataset,
    valid: &Dataset,
    anchors: Option<&AnchorSet>,
    out_dir: Option<&Path>,
) -> Result<VariantResult> {
    let mut results = Vec::new();
    let mut params = 0;
    let mut latency = 0.0;
    for &seed in seeds {
        let mut cfg = base.clone();
        cfg.variant = variant;
        cfg.model.seed = seed;
        cfg.train.seed = seed;
        let dir = out_dir.map(|d| d.join(variant.name()).join(format!("seed-{seed}")));
        let out = train_on(&cfg, train, anchors, dir.as_deref())?;
        let evaluation = evaluate(&out.model, variant.name(), valid, &cfg.eval)?;
        log::info!("{variant} seed {seed}: minADE {:.4}", evaluation.overall().min_ade);
        params = out.model.num_params();
        latency += latency_ms(&out.model, valid, 50)?;
        results.push(SeedResult {
            seed,
            evaluation,
            final_loss: out.epoch_loss.last().copied().unwrap_or(f64::NAN),
        });
    }
    Ok(VariantResult {
        variant,
        params,
        latency_ms: latency / seeds.len().max(1) as f64,
        seeds: results,
    })
}

//! Runs one selection strategy over many samples and scores the result.

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use setsel::counter::EvalCounter;
use setsel::model::{PointSet, SetClassifier};
use setsel::objective::{GainEval, NeuralObjective, SetObjective};
use setsel::selection::{select, ScoreStrategy, SelectOptions, SelectionTrace};
use setsel::tensor::Scalar;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub strategy: ScoreStrategy,
    pub k: usize,
    pub seed: u64,
    pub full_forward_gains: bool,
    pub record_objective: bool,
}

impl AttackConfig {
    pub fn new(strategy: ScoreStrategy, k: usize, seed: u64) -> Self {
        AttackConfig {
            strategy,
            k,
            seed,
            full_forward_gains: false,
            record_objective: true,
        }
    }

    fn gain_eval(&self) -> GainEval {
        if self.full_forward_gains {
            GainEval::FullForward
        } else {
            GainEval::ReuseFeatures
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub name: String,
    pub label: usize,
    pub trace: SelectionTrace,
    /// `(removed, predicted class)` at 0 and at each grid step.
    pub predictions: Vec<(usize, usize)>,
    /// Loss on the final subset.
    pub final_loss: f64,
}

impl SampleOutcome {
    pub fn correct_at(&self, removed: usize) -> Option<bool> {
        self.predictions
            .iter()
            .find(|(r, _)| *r == removed)
            .map(|&(_, p)| p == self.label)
    }

    pub fn elapsed(&self) -> Duration {
        self.trace.elapsed
    }
}

/// Removal counts at which accuracy is reported: every `⌈k/10⌉` and `k`.
pub fn report_grid(k: usize) -> Vec<usize> {
    let step = k.div_ceil(10).max(1);
    let mut g: Vec<usize> = (step..=k).step_by(step).collect();
    if g.last() != Some(&k) {
        g.push(k);
    }
    g
}

/// Per-sample seed for random scores, so samples do not share a stream.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

pub fn attack_sample<T: Scalar>(
    model: &SetClassifier<T>,
    ps: &PointSet,
    index: usize,
    cfg: &AttackConfig,
    grid: &[usize],
) -> Result<SampleOutcome> {
    let obj = NeuralObjective::new(model, ps.label())?.with_gain_eval(cfg.gain_eval());
    let options = SelectOptions {
        seed: sample_seed(cfg.seed, index),
        record_objective: cfg.record_objective,
    };
    let trace = select(&obj, ps, &cfg.strategy, cfg.k, &options)?;
    let scratch = EvalCounter::new();
    let mut predictions = Vec::with_capacity(grid.len() + 1);
    for removed in std::iter::once(0).chain(grid.iter().copied()) {
        let kept = ps.subset(trace.keep_after(removed).positions())?;
        predictions.push((removed, model.predict(&kept, &scratch)?));
    }
    let final_loss = obj.value_with(ps, &trace.keep, &scratch)?;
    Ok(SampleOutcome {
        name: ps.name().to_string(),
        label: ps.label(),
        trace,
        predictions,
        final_loss,
    })
}

/// Attacks every sample; results come back in input order either way.
pub fn attack_all<T: Scalar>(
    model: &SetClassifier<T>,
    samples: &[PointSet],
    cfg: &AttackConfig,
    parallel: bool,
) -> Result<Vec<SampleOutcome>> {
    let grid = report_grid(cfg.k);
    if parallel {
        samples
            .par_iter()
            .enumerate()
            .map(|(i, ps)| attack_sample(model, ps, i, cfg, &grid))
            .collect()
    } else {
        samples
            .iter()
            .enumerate()
            .map(|(i, ps)| attack_sample(model, ps, i, cfg, &grid))
            .collect()
    }
}

/// Fraction of samples still classified correctly after `removed` removals.
pub fn accuracy_at(outcomes: &[SampleOutcome], removed: usize) -> f64 {
    let hits = outcomes
        .iter()
        .filter(|o| o.correct_at(removed).unwrap_or(false))
        .count();
    hits as f64 / outcomes.len().max(1) as f64
}

pub fn mean_final_loss(outcomes: &[SampleOutcome]) -> f64 {
    outcomes.iter().map(|o| o.final_loss).sum::<f64>() / outcomes.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_steps() {
        assert_eq!(report_grid(64), vec![7, 14, 21, 28, 35, 42, 49, 56, 63, 64]);
        assert_eq!(report_grid(50), vec![5, 10, 15, 20, 25, 30, 35, 40, 45, 50]);
        assert_eq!(report_grid(3), vec![1, 2, 3]);
        assert_eq!(report_grid(1), vec![1]);
    }

    #[test]
    fn seeds_differ_per_sample() {
        assert_ne!(sample_seed(0, 0), sample_seed(0, 1));
        assert_eq!(sample_seed(5, 3), sample_seed(5, 3));
    }
}

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::scores::{saliency_from_pass, score_random, sfo_from_pass};
use super::ScoreStrategy;
use crate::counter::{CounterSnapshot, EvalCounter};
use crate::error::{Error, Result};
use crate::model::{ElementId, PointSet};
use crate::objective::{DifferentiableObjective, GainContext, GradientPass, SetObjective, Subset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectOptions {
    /// Seeds the random score and random-inner hybrids.
    pub seed: u64,
    /// Fill objective values the strategy does not compute for free, using
    /// evaluations outside the counted and timed loop.
    pub record_objective: bool,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            seed: 0,
            record_objective: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub iteration: usize,
    pub removed_id: ElementId,
    pub removed_pos: usize,
    pub score: f64,
    /// `φ` after the removal.
    pub objective: Option<f64>,
    /// Counter totals since the run started, after this iteration.
    pub counts: CounterSnapshot,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub strategy: String,
    pub n: usize,
    pub steps: Vec<TraceStep>,
    /// Counted evaluations of the selection itself.
    pub counts: CounterSnapshot,
    /// Evaluations spent filling the objective column.
    pub monitor: CounterSnapshot,
    pub elapsed: Duration,
    pub keep: Subset,
}

/// One CSV row of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub sample: String,
    pub strategy: String,
    pub iteration: usize,
    pub removed_id: ElementId,
    pub score: f64,
    pub objective: Option<f64>,
    pub forwards_cum: u64,
    pub backwards_cum: u64,
    pub ms_cum: f64,
}

impl SelectionTrace {
    pub fn k(&self) -> usize {
        self.steps.len()
    }

    pub fn removed_ids(&self) -> Vec<ElementId> {
        self.steps.iter().map(|s| s.removed_id).collect()
    }

    /// The subset after the first `i` removals.
    pub fn keep_after(&self, i: usize) -> Subset {
        let mut keep = Subset::full(self.n);
        for s in &self.steps[..i.min(self.steps.len())] {
            keep.remove(s.removed_pos);
        }
        keep
    }

    pub fn rows(&self, sample: &str) -> Vec<TraceRow> {
        self.steps
            .iter()
            .map(|s| TraceRow {
                sample: sample.to_string(),
                strategy: self.strategy.clone(),
                iteration: s.iteration,
                removed_id: s.removed_id,
                score: s.score,
                objective: s.objective,
                forwards_cum: s.counts.forwards,
                backwards_cum: s.counts.backwards,
                ms_cum: s.elapsed.as_secs_f64() * 1e3,
            })
            .collect()
    }
}

/// Index of the best score, lowest id on ties.
fn best_of(scores: &[f64], ids: &[ElementId]) -> Result<usize> {
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score of element {}", ids[i])));
    }
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] || (scores[i] == scores[best] && ids[i] < ids[best]) {
            best = i;
        }
    }
    Ok(best)
}

/// Indices of the `m` highest scores, lowest id first on ties.
fn top_m(scores: &[f64], ids: &[ElementId], m: usize) -> Result<Vec<usize>> {
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score of element {}", ids[i])));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(ids[a].cmp(&ids[b]))
    });
    idx.truncate(m);
    idx.sort_unstable();
    Ok(idx)
}

fn need_gradient(obj: &dyn SetObjective) -> Result<&dyn DifferentiableObjective> {
    obj.differentiable().ok_or_else(|| {
        Error::Unsupported(format!("{:?} objective has no embedding gradient", obj.kind()))
    })
}

/// Surrogate scores, plus the gradient pass they came from.
fn surrogate<'a>(
    strategy: &ScoreStrategy,
    obj: &'a dyn SetObjective,
    ps: &'a PointSet,
    keep: &'a Subset,
    seed: u64,
    iteration: usize,
) -> Result<(Vec<f64>, Option<GradientPass<'a>>)> {
    match strategy {
        ScoreStrategy::Random => Ok((score_random(keep, seed, iteration), None)),
        ScoreStrategy::Sfo(emb) => {
            let pass = need_gradient(obj)?.gradient_pass(ps, keep)?;
            Ok((sfo_from_pass(&pass, emb, ps, keep)?, Some(pass)))
        }
        ScoreStrategy::Saliency => {
            let pass = need_gradient(obj)?.gradient_pass(ps, keep)?;
            Ok((saliency_from_pass(&pass)?, Some(pass)))
        }
        ScoreStrategy::Exact | ScoreStrategy::Hybrid { .. } => {
            unreachable!("not a surrogate")
        }
    }
}

/// Forwards and backwards one iteration must cost.
fn expected_cost(strategy: &ScoreStrategy, keep_len: usize) -> CounterSnapshot {
    let (forwards, backwards) = match strategy {
        ScoreStrategy::Exact => (keep_len + 1, 0),
        ScoreStrategy::Sfo(_) | ScoreStrategy::Saliency => (1, 1),
        ScoreStrategy::Random => (0, 0),
        ScoreStrategy::Hybrid { m, inner } => {
            let grad = inner.uses_gradient() as usize;
            ((*m).min(keep_len) + 1, grad)
        }
    };
    CounterSnapshot {
        forwards: forwards as u64,
        backwards: backwards as u64,
    }
}

struct Choice {
    row: usize,
    score: f64,
    objective: Option<f64>,
    /// `φ(keep)` before the removal, when the iteration computed it.
    base: Option<f64>,
}

fn exact_choice(ctx: &dyn GainContext, keep: &Subset, ids: &[ElementId], rows: &[usize]) -> Result<Choice> {
    let mut values = Vec::with_capacity(rows.len());
    for &r in rows {
        values.push(ctx.value_without(keep.positions()[r])?);
    }
    let gains: Vec<f64> = values.iter().map(|v| v - ctx.base()).collect();
    let cand_ids: Vec<ElementId> = rows.iter().map(|&r| ids[r]).collect();
    let b = best_of(&gains, &cand_ids)?;
    Ok(Choice {
        row: rows[b],
        score: gains[b],
        objective: Some(values[b]),
        base: Some(ctx.base()),
    })
}

/// Removes `k` elements one at a time, each time the member with the
/// highest score under `strategy`. The objective's counter is checked
/// against the strategy's cost after every iteration.
pub fn select(
    obj: &dyn SetObjective,
    ps: &PointSet,
    strategy: &ScoreStrategy,
    k: usize,
    options: &SelectOptions,
) -> Result<SelectionTrace> {
    let n = ps.len();
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!("k must lie in [1, n-1] = [1, {}], got {k}", n.saturating_sub(1))));
    }
    strategy.validate(n)?;
    obj.check_set(ps)?;
    if strategy.uses_gradient() {
        need_gradient(obj)?;
    }

    let counter = obj.counter();
    let start_counts = counter.snapshot();
    let mut keep = Subset::full(n);
    let mut steps: Vec<TraceStep> = Vec::with_capacity(k);
    let mut elapsed = Duration::ZERO;

    for iteration in 0..k {
        let before = counter.snapshot();
        let t0 = Instant::now();
        let ids = keep.ids(ps);
        let choice = match strategy {
            ScoreStrategy::Exact => {
                let ctx = obj.gains(ps, &keep)?;
                let all: Vec<usize> = (0..keep.len()).collect();
                exact_choice(ctx.as_ref(), &keep, &ids, &all)?
            }
            ScoreStrategy::Hybrid { m, inner } => {
                let (scores, pass) = surrogate(inner, obj, ps, &keep, options.seed, iteration)?;
                let rows = top_m(&scores, &ids, (*m).min(keep.len()))?;
                let ctx = match pass {
                    Some(p) => p.gains,
                    None => obj.gains(ps, &keep)?,
                };
                exact_choice(ctx.as_ref(), &keep, &ids, &rows)?
            }
            _ => {
                let (scores, pass) = surrogate(strategy, obj, ps, &keep, options.seed, iteration)?;
                let row = best_of(&scores, &ids)?;
                Choice {
                    row,
                    score: scores[row],
                    objective: None,
                    base: pass.map(|p| p.value),
                }
            }
        };
        let pos = keep.positions()[choice.row];
        keep.remove(pos);
        elapsed += t0.elapsed();

        let spent = counter.snapshot().since(before);
        let want = expected_cost(strategy, keep.len() + 1);
        if spent != want {
            return Err(Error::Contract(format!(
                "{strategy} iteration {iteration} cost {spent:?}, expected {want:?}"
            )));
        }
        if let (Some(base), Some(prev)) = (choice.base, steps.last_mut()) {
            prev.objective.get_or_insert(base);
        }
        steps.push(TraceStep {
            iteration,
            removed_id: ps.ids()[pos],
            removed_pos: pos,
            score: choice.score,
            objective: choice.objective,
            counts: counter.snapshot().since(start_counts),
            elapsed,
        });
    }
    let counts = counter.snapshot().since(start_counts);

    let monitor = EvalCounter::new();
    if options.record_objective {
        let mut replay = Subset::full(n);
        for step in steps.iter_mut() {
            replay.remove(step.removed_pos);
            if step.objective.is_none() {
                step.objective = Some(obj.value_with(ps, &replay, &monitor)?);
            }
        }
    }

    Ok(SelectionTrace {
        strategy: strategy.to_string(),
        n,
        steps,
        counts,
        monitor: monitor.snapshot(),
        elapsed,
        keep,
    })
}

/// [`select`] with a hybrid strategy built from `inner` and `m`.
pub fn select_hybrid(
    obj: &dyn SetObjective,
    ps: &PointSet,
    inner: ScoreStrategy,
    m: usize,
    k: usize,
    options: &SelectOptions,
) -> Result<SelectionTrace> {
    select(obj, ps, &ScoreStrategy::hybrid(m, inner), k, options)
}

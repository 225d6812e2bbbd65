//! Iterative subset selection: start from the full set and repeatedly
//! remove the member with the highest score.

mod engine;
mod premise;
mod scores;
mod strategy;

pub use engine::{select, select_hybrid, SelectOptions, SelectionTrace, TraceRow, TraceStep};
pub use premise::{check_premise, PremiseCheck};
pub use scores::{
    column_min, first_order_scores, lower_median, reference_embedding, saliency_scores, score_exact,
    score_random, score_saliency, score_sfo,
};
pub use strategy::{ScoreStrategy, Uninformative, DEFAULT_HYBRID_M};

//! Removes points from a synthetic shape with a small classifier and
//! compares the exact greedy with the first-order scores.
//!
//! cargo run --release -p setsel-core --example select

use setsel::data::{make_shape, ShapeFamily, ShapeSpec};
use setsel::model::{Architecture, SetClassifier};
use setsel::objective::{NeuralObjective, SetObjective};
use setsel::selection::{select, ScoreStrategy, SelectOptions};

fn main() -> setsel::Result<()> {
    let spec = ShapeSpec::new(ShapeFamily::ALL[0], 1.0, 1.0)?;
    let ps = make_shape(&spec, 128, 3)?;
    let model = SetClassifier::<f64>::new(Architecture::default(), 0)?;
    for strategy in ["exact", "sfo-median", "saliency", "hybrid-sfo-median:8", "random"] {
        let strategy: ScoreStrategy = strategy.parse()?;
        let obj = NeuralObjective::new(&model, ps.label())?;
        let trace = select(&obj, &ps, &strategy, 16, &SelectOptions::default())?;
        let final_loss = obj.evaluate(&ps, &trace.keep)?;
        println!(
            "{:<22} loss after 16 removals {:>8.4}  forwards {:>5}  backwards {:>3}",
            strategy.to_string(),
            final_loss,
            trace.counts.forwards,
            trace.counts.backwards
        );
    }
    Ok(())
}

//! Minibatch SGD with momentum and a cosine learning-rate schedule.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PointSet, SetClassifier};
use crate::counter::EvalCounter;
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Half-width of uniform per-coordinate jitter added to training inputs.
    pub jitter: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch: 32,
            lr: 0.01,
            momentum: 0.9,
            seed: 0,
            jitter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
}

fn check_samples(samples: &[PointSet], d: usize, classes: usize, what: &str) -> Result<()> {
    for ps in samples {
        if ps.dim() != d {
            return Err(Error::Data(format!(
                "{what} sample '{}' has dimension {} but the model expects {d}",
                ps.name(),
                ps.dim()
            )));
        }
        if ps.label() >= classes {
            return Err(Error::Data(format!(
                "{what} sample '{}' has label {} outside [0, {classes})",
                ps.name(),
                ps.label()
            )));
        }
    }
    Ok(())
}

/// Mean cross-entropy and accuracy over `samples`.
pub fn evaluate<T: Scalar>(model: &SetClassifier<T>, samples: &[PointSet]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let per: Vec<(f64, bool)> = samples
        .par_iter()
        .map(|ps| {
            let rec = model.forward(ps, &EvalCounter::new())?;
            let pred = crate::tensor::argmax(rec.logits.row(0)).expect("classes");
            Ok((rec.loss.expect("labelled").as_f64(), pred == ps.label()))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let loss = per.iter().map(|p| p.0).sum::<f64>() / n;
    let acc = per.iter().filter(|p| p.1).count() as f64 / n;
    Ok((loss, acc))
}

fn jittered<T: Scalar>(ps: &PointSet, amount: f64, seed: u64) -> Matrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = ps.coords().clone();
    for v in m.data_mut() {
        *v += rng.gen_range(-amount..=amount);
    }
    m.cast()
}

/// Trains `model` in place. Results depend only on the inputs and
/// `config.seed`, not on the number of worker threads: per-sample gradients
/// are summed in batch order.
pub fn train<T: Scalar>(
    model: &mut SetClassifier<T>,
    train_set: &[PointSet],
    test_set: Option<&[PointSet]>,
    config: &TrainConfig,
) -> Result<Vec<EpochMetrics>> {
    if train_set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if config.batch == 0 || config.epochs == 0 || !(config.lr > 0.0) {
        return Err(Error::Parameter(format!(
            "epochs, batch and lr must be positive: {config:?}"
        )));
    }
    let d = model.input_dim();
    let classes = model.classes();
    check_samples(train_set, d, classes, "training")?;
    if let Some(t) = test_set {
        check_samples(t, d, classes, "test")?;
    }

    let mut velocity: Vec<Matrix<T>> = model
        .layers()
        .flat_map(|l| [Matrix::zeros(l.weight.rows(), l.weight.cols()), Matrix::zeros(1, l.bias.cols())])
        .collect();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let momentum = T::lit(config.momentum);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let progress = epoch as f64 / config.epochs as f64;
        let lr = 0.5 * config.lr * (1.0 + (std::f64::consts::PI * progress).cos());
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;

        for batch in order.chunks(config.batch) {
            let per_sample: Vec<(T, Vec<Matrix<T>>, usize)> = batch
                .par_iter()
                .map(|&i| {
                    let ps = &train_set[i];
                    let coords = match config.jitter {
                        Some(a) if a > 0.0 => jittered(
                            ps,
                            a,
                            config.seed ^ ((epoch as u64) << 32) ^ (i as u64).wrapping_mul(0x9e37_79b9),
                        ),
                        _ => model.coords_of(ps),
                    };
                    model.parameter_gradients(coords, ps.label())
                })
                .collect::<Result<_>>()?;

            let scale = T::one() / T::lit(batch.len() as f64);
            let mut grad: Vec<Matrix<T>> = velocity
                .iter()
                .map(|v| Matrix::zeros(v.rows(), v.cols()))
                .collect();
            for (&i, (loss, g, pred)) in batch.iter().zip(&per_sample) {
                loss_sum += loss.as_f64();
                if *pred == train_set[i].label() {
                    correct += 1;
                }
                for (acc, gi) in grad.iter_mut().zip(g) {
                    acc.add_scaled(scale, gi)?;
                }
            }

            let step = T::lit(lr);
            let params = model
                .layers_mut()
                .flat_map(|l| [&mut l.weight, &mut l.bias]);
            for ((p, v), g) in params.zip(&mut velocity).zip(&grad) {
                for ((pv, vv), &gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                    *vv = momentum * *vv + gv;
                    *pv = *pv - step * *vv;
                }
            }
        }

        let n = train_set.len() as f64;
        let (test_loss, test_accuracy) = match test_set {
            Some(t) if !t.is_empty() => {
                let (l, a) = evaluate(model, t)?;
                (Some(l), Some(a))
            }
            _ => (None, None),
        };
        let train_loss = loss_sum / n;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        history.push(EpochMetrics {
            epoch,
            lr,
            train_loss,
            train_accuracy: correct as f64 / n,
            test_loss,
            test_accuracy,
        });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    fn blob(seed: u64, label: usize, n: usize) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * 3)
            .map(|_| rng.gen_range(-1.0..1.0) * (1.0 + label as f64))
            .collect();
        PointSet::from_coords(Matrix::from_vec(n, 3, data).unwrap(), label, "b").unwrap()
    }

    fn small_arch() -> Architecture {
        Architecture {
            input_dim: 3,
            point_widths: vec![16, 16],
            head_widths: vec![8],
            classes: 2,
        }
    }

    #[test]
    fn single_sample_loss_strictly_decreases() {
        let mut m = SetClassifier::<f64>::new(Architecture::default(), 1).unwrap();
        let data = vec![blob(3, 2, 64)];
        let cfg = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        let h = train(&mut m, &data, None, &cfg).unwrap();
        for w in h.windows(2) {
            assert!(w[1].train_loss < w[0].train_loss, "{h:?}");
        }
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let data: Vec<_> = (0..10).map(|i| blob(i, (i % 2) as usize, 16)).collect();
        let cfg = TrainConfig {
            epochs: 3,
            batch: 4,
            seed: 9,
            jitter: Some(0.01),
            ..TrainConfig::default()
        };
        let mut a = SetClassifier::<f64>::new(small_arch(), 2).unwrap();
        let mut b = SetClassifier::<f64>::new(small_arch(), 2).unwrap();
        let ha = train(&mut a, &data, Some(&data), &cfg).unwrap();
        let hb = train(&mut b, &data, Some(&data), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
    }

    #[test]
    fn learns_a_separable_toy_problem() {
        let train_set: Vec<_> = (0..40).map(|i| blob(i, (i % 2) as usize, 32)).collect();
        let test_set: Vec<_> = (100..120).map(|i| blob(i, (i % 2) as usize, 32)).collect();
        let mut m = SetClassifier::<f64>::new(small_arch(), 0).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch: 8,
            ..TrainConfig::default()
        };
        let h = train(&mut m, &train_set, Some(&test_set), &cfg).unwrap();
        assert!(h.last().unwrap().test_accuracy.unwrap() >= 0.9, "{:?}", h.last());
    }

    #[test]
    fn rejects_empty_and_mismatched_data() {
        let mut m = SetClassifier::<f64>::new(small_arch(), 0).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(train(&mut m, &[], None, &cfg), Err(Error::Data(_))));
        let bad = PointSet::from_coords(Matrix::zeros(4, 2), 0, "2d").unwrap();
        assert!(matches!(train(&mut m, &[bad], None, &cfg), Err(Error::Data(_))));
    }
}

//! Classifier loss `φ(S′) = loss(y, f(S′))` at a fixed label.

use super::{
    check_keep, check_removal, DifferentiableObjective, DirectGains, GainContext, GradientPass,
    ObjectiveKind, SetObjective, Subset,
};
use crate::counter::EvalCounter;
use crate::error::{Error, Result};
use crate::model::{PointSet, SetClassifier};
use crate::tensor::{self, Matrix, Scalar};

/// How `φ(keep ∖ {e})` is computed for a marginal gain. Both count one
/// forward per candidate and give identical values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainEval {
    /// A full forward pass on the reduced set.
    FullForward,
    /// Re-pools the pointwise rows of the current subset without `e` and
    /// reruns only the head. `g1` is row-wise, so this is the same
    /// arithmetic as the full pass.
    #[default]
    ReuseFeatures,
}

pub struct NeuralObjective<'m, T: Scalar = f64> {
    model: &'m SetClassifier<T>,
    label: usize,
    mode: GainEval,
    counter: EvalCounter,
}

impl<'m, T: Scalar> NeuralObjective<'m, T> {
    pub fn new(model: &'m SetClassifier<T>, label: usize) -> Result<Self> {
        if label >= model.classes() {
            return Err(Error::Index {
                what: "label",
                index: label,
                len: model.classes(),
            });
        }
        Ok(NeuralObjective {
            model,
            label,
            mode: GainEval::default(),
            counter: EvalCounter::new(),
        })
    }

    pub fn with_gain_eval(mut self, mode: GainEval) -> Self {
        self.mode = mode;
        self
    }

    pub fn gain_eval(&self) -> GainEval {
        self.mode
    }

    pub fn model(&self) -> &'m SetClassifier<T> {
        self.model
    }

    pub fn label(&self) -> usize {
        self.label
    }

    fn input(&self, ps: &PointSet, keep: &Subset) -> Matrix<T> {
        keep.coords(ps).cast()
    }

    fn cached<'a>(
        &'a self,
        ps: &'a PointSet,
        keep: &'a Subset,
        base: f64,
        features: &Matrix<T>,
        pooled: &Matrix<T>,
        witness: &[usize],
    ) -> Box<dyn GainContext + 'a> {
        match self.mode {
            GainEval::FullForward => Box::new(DirectGains {
                objective: self,
                ps,
                keep,
                base,
            }),
            GainEval::ReuseFeatures => {
                let runner_up = (0..features.cols())
                    .map(|j| {
                        (0..features.rows())
                            .filter(|&r| r != witness[j])
                            .map(|r| features.get(r, j))
                            .fold(None, |best: Option<T>, v| match best {
                                Some(b) if !(v > b) => Some(b),
                                _ => Some(v),
                            })
                    })
                    .collect();
                Box::new(PooledGains {
                    objective: self,
                    ps,
                    keep,
                    base,
                    pooled: pooled.row(0).to_vec(),
                    witness: witness.to_vec(),
                    runner_up,
                })
            }
        }
    }
}

impl<T: Scalar> SetObjective for NeuralObjective<'_, T> {
    fn kind(&self) -> ObjectiveKind {
        ObjectiveKind::Neural
    }

    fn counter(&self) -> &EvalCounter {
        &self.counter
    }

    fn check_set(&self, ps: &PointSet) -> Result<()> {
        if ps.dim() != self.model.input_dim() {
            return Err(Error::Dimension {
                op: "neural objective",
                left: format!("model input {}", self.model.input_dim()),
                right: format!("point dimension {}", ps.dim()),
            });
        }
        Ok(())
    }

    fn value_with(&self, ps: &PointSet, keep: &Subset, counter: &EvalCounter) -> Result<f64> {
        check_keep(ps, keep)?;
        self.check_set(ps)?;
        let rec = self.model.forward_coords(&self.input(ps, keep), Some(self.label), counter)?;
        Ok(rec.loss.expect("labelled").as_f64())
    }

    fn gains<'a>(&'a self, ps: &'a PointSet, keep: &'a Subset) -> Result<Box<dyn GainContext + 'a>> {
        check_keep(ps, keep)?;
        self.check_set(ps)?;
        let rec = self
            .model
            .forward_coords(&self.input(ps, keep), Some(self.label), &self.counter)?;
        let base = rec.loss.expect("labelled").as_f64();
        Ok(self.cached(ps, keep, base, &rec.features, &rec.pooled, rec.witness.as_slice()))
    }

    fn differentiable(&self) -> Option<&dyn DifferentiableObjective> {
        Some(self)
    }

    fn as_dyn(&self) -> &dyn SetObjective {
        self
    }
}

impl<T: Scalar> DifferentiableObjective for NeuralObjective<'_, T> {
    fn gradient_pass<'a>(&'a self, ps: &'a PointSet, keep: &'a Subset) -> Result<GradientPass<'a>> {
        check_keep(ps, keep)?;
        self.check_set(ps)?;
        let input = self.input(ps, keep);
        let p = self.model.gradient_pass(&input, self.label, &self.counter)?;
        let value = p.loss.as_f64();
        let gains = self.cached(ps, keep, value, &p.features, &p.pooled, p.witness.as_slice());
        Ok(GradientPass {
            value,
            inputs: input.cast(),
            input_grad: p.input_grad.cast(),
            features: p.features.cast(),
            feature_grad: p.feature_grad.cast(),
            gains,
        })
    }
}

/// Removal gains from the pool of the current subset: only features whose
/// maximum sits on the removed row change, and they fall to the runner-up.
struct PooledGains<'a, 'm, T: Scalar> {
    objective: &'a NeuralObjective<'m, T>,
    ps: &'a PointSet,
    keep: &'a Subset,
    base: f64,
    pooled: Vec<T>,
    witness: Vec<usize>,
    runner_up: Vec<Option<T>>,
}

impl<T: Scalar> GainContext for PooledGains<'_, '_, T> {
    fn base(&self) -> f64 {
        self.base
    }

    fn value_without(&self, pos: usize) -> Result<f64> {
        check_removal(self.ps, self.keep, pos)?;
        let row = self.keep.row_of(pos).expect("member");
        let mut pooled = self.pooled.clone();
        for (j, v) in pooled.iter_mut().enumerate() {
            if self.witness[j] == row {
                *v = self.runner_up[j].expect("at least two rows");
            }
        }
        let logits = self.objective.model.head_logits(&Matrix::row_vector(pooled))?;
        let loss = tensor::softmax_xent(&logits, self.objective.label)?;
        self.objective.counter.add_forward();
        Ok(loss.as_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> SetClassifier {
        let arch = Architecture {
            input_dim: 3,
            point_widths: vec![16, 12],
            head_widths: vec![8],
            classes: 3,
        };
        SetClassifier::new(arch, 5).unwrap()
    }

    fn cloud(n: usize, seed: u64) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        PointSet::from_coords(Matrix::from_vec(n, 3, data).unwrap(), 1, "c").unwrap()
    }

    #[test]
    fn reused_features_match_full_forwards_bitwise() {
        let m = model();
        let ps = cloud(20, 1);
        let keep = Subset::from_positions(20, (0..20).filter(|i| i % 3 != 1)).unwrap();
        let full = NeuralObjective::new(&m, 1).unwrap().with_gain_eval(GainEval::FullForward);
        let fast = NeuralObjective::new(&m, 1).unwrap();
        let a = full.gains(&ps, &keep).unwrap();
        let b = fast.gains(&ps, &keep).unwrap();
        assert_eq!(a.base().to_bits(), b.base().to_bits());
        for &p in keep.positions() {
            assert_eq!(a.gain(p).unwrap().to_bits(), b.gain(p).unwrap().to_bits());
        }
        assert_eq!(full.counter().snapshot(), fast.counter().snapshot());
        assert_eq!(fast.counter().forwards(), 1 + keep.len() as u64);
    }

    #[test]
    fn gradient_pass_base_matches_evaluate() {
        let m = model();
        let ps = cloud(12, 2);
        let keep = Subset::full(12);
        let obj = NeuralObjective::new(&m, 2).unwrap();
        let pass = obj.gradient_pass(&ps, &keep).unwrap();
        assert_eq!(pass.value.to_bits(), obj.evaluate(&ps, &keep).unwrap().to_bits());
        let g = pass.gains.gain(4).unwrap();
        let direct = obj.evaluate(&ps, &keep.without(4)).unwrap() - pass.value;
        assert_eq!(g.to_bits(), direct.to_bits());
        assert_eq!((obj.counter().forwards(), obj.counter().backwards()), (4, 1));
    }

    #[test]
    fn duplicate_rows_keep_the_pool_when_one_is_removed() {
        let m = model();
        let mut rows = vec![[0.5, -0.2, 0.9]; 2];
        rows.push([-0.3, 0.1, 0.0]);
        let ps = PointSet::from_coords(Matrix::from_rows(&rows).unwrap(), 0, "d").unwrap();
        let obj = NeuralObjective::new(&m, 0).unwrap();
        let keep = Subset::full(3);
        let ctx = obj.gains(&ps, &keep).unwrap();
        assert_eq!(ctx.gain(0).unwrap(), 0.0);
        assert_eq!(ctx.gain(1).unwrap(), 0.0);
    }

    #[test]
    fn f32_mode_tracks_f64() {
        let m = model();
        let m32 = m.cast::<f32>();
        let ps = cloud(16, 3);
        let keep = Subset::full(16);
        let a = NeuralObjective::new(&m, 0).unwrap().evaluate(&ps, &keep).unwrap();
        let b = NeuralObjective::new(&m32, 0).unwrap().evaluate(&ps, &keep).unwrap();
        assert!((a - b).abs() < 1e-5 * a.abs().max(1.0));
    }

    #[test]
    fn rejects_bad_labels_and_dimensions() {
        let m = model();
        assert!(NeuralObjective::new(&m, 3).is_err());
        let obj = NeuralObjective::new(&m, 0).unwrap();
        let flat = PointSet::from_coords(Matrix::zeros(4, 2), 0, "f").unwrap();
        assert!(matches!(obj.evaluate(&flat, &Subset::full(4)), Err(Error::Dimension { .. })));
    }
}

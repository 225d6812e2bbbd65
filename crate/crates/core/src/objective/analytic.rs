//! Closed-form set functions used as oracles for the selection engine.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    check_keep, DifferentiableObjective, DirectGains, GradientPass, ObjectiveKind, SetObjective, Subset,
};
use crate::counter::EvalCounter;
use crate::error::{Error, Result};
use crate::model::PointSet;
use crate::tensor::Matrix;

/// Largest ground set a tabulated instance may enumerate.
const TABULATED_LIMIT: usize = 20;

/// A set function over elements `0..n`, independent of coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticInstance {
    /// `Σ_{e∈S} w_e`.
    Modular { weights: Vec<f64> },
    /// Weight of the union of the items each element covers.
    Coverage {
        item_weights: Vec<f64>,
        covers: Vec<Vec<usize>>,
    },
    /// `Σ_c max_{e∈S} sim[e][c]`, rows are elements.
    FacilityLocation { similarity: Vec<Vec<f64>> },
    /// Explicit table indexed by the bitmask of member positions.
    Tabulated { values: Vec<f64> },
}

impl AnalyticInstance {
    pub fn kind(&self) -> ObjectiveKind {
        match self {
            AnalyticInstance::Modular { .. } => ObjectiveKind::Modular,
            AnalyticInstance::Coverage { .. } => ObjectiveKind::Coverage,
            AnalyticInstance::FacilityLocation { .. } => ObjectiveKind::FacilityLocation,
            AnalyticInstance::Tabulated { .. } => ObjectiveKind::Tabulated,
        }
    }

    /// Number of elements.
    pub fn elements(&self) -> usize {
        match self {
            AnalyticInstance::Modular { weights } => weights.len(),
            AnalyticInstance::Coverage { covers, .. } => covers.len(),
            AnalyticInstance::FacilityLocation { similarity } => similarity.len(),
            AnalyticInstance::Tabulated { values } => values.len().trailing_zeros() as usize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64], what: &str| {
            if v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(Error::NonFinite(format!("{what} of an analytic instance")))
            }
        };
        match self {
            AnalyticInstance::Modular { weights } => finite(weights, "weights")?,
            AnalyticInstance::Coverage { item_weights, covers } => {
                finite(item_weights, "item weights")?;
                if item_weights.iter().any(|&w| w < 0.0) {
                    return Err(Error::Parameter("coverage item weights must be >= 0".into()));
                }
                for (e, items) in covers.iter().enumerate() {
                    if let Some(&bad) = items.iter().find(|&&i| i >= item_weights.len()) {
                        return Err(Error::Parameter(format!(
                            "element {e} covers item {bad} but there are {} items",
                            item_weights.len()
                        )));
                    }
                }
            }
            AnalyticInstance::FacilityLocation { similarity } => {
                let clients = similarity.first().map_or(0, Vec::len);
                for row in similarity {
                    if row.len() != clients {
                        return Err(Error::Parameter("similarity rows differ in length".into()));
                    }
                    finite(row, "similarities")?;
                    if row.iter().any(|&s| s < 0.0) {
                        return Err(Error::Parameter("similarities must be >= 0".into()));
                    }
                }
            }
            AnalyticInstance::Tabulated { values } => {
                if !values.len().is_power_of_two() || values.len() > 1 << TABULATED_LIMIT {
                    return Err(Error::Parameter(format!(
                        "a table needs 2^n entries with n <= {TABULATED_LIMIT}, got {}",
                        values.len()
                    )));
                }
                finite(values, "table values")?;
            }
        }
        if self.elements() == 0 {
            return Err(Error::Parameter("analytic instance has no elements".into()));
        }
        Ok(())
    }

    /// Value on the members of `mask`, `φ(∅) = 0` apart from a table's own entry.
    pub fn value(&self, mask: &[bool]) -> f64 {
        let members = || mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i);
        match self {
            AnalyticInstance::Modular { weights } => members().map(|e| weights[e]).sum(),
            AnalyticInstance::Coverage { item_weights, covers } => {
                let mut covered = vec![false; item_weights.len()];
                for e in members() {
                    for &i in &covers[e] {
                        covered[i] = true;
                    }
                }
                item_weights
                    .iter()
                    .zip(&covered)
                    .filter(|(_, &c)| c)
                    .map(|(w, _)| w)
                    .sum()
            }
            AnalyticInstance::FacilityLocation { similarity } => {
                let clients = similarity.first().map_or(0, Vec::len);
                (0..clients)
                    .map(|c| members().map(|e| similarity[e][c]).fold(0.0, f64::max))
                    .sum()
            }
            AnalyticInstance::Tabulated { values } => {
                let idx = members().fold(0usize, |acc, e| acc | 1 << e);
                values[idx]
            }
        }
    }

    /// A coordinate-free point set with ids `0..n` to select over.
    pub fn ground_set(&self) -> PointSet {
        PointSet::from_coords(Matrix::zeros(self.elements().max(1), 1), 0, "instance")
            .expect("non-empty")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<AnalyticInstance> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let inst: AnalyticInstance = serde_json::from_str(&text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug)]
pub struct AnalyticObjective {
    instance: AnalyticInstance,
    counter: EvalCounter,
}

impl AnalyticObjective {
    pub fn new(instance: AnalyticInstance) -> Result<Self> {
        instance.validate()?;
        Ok(AnalyticObjective {
            instance,
            counter: EvalCounter::new(),
        })
    }

    pub fn instance(&self) -> &AnalyticInstance {
        &self.instance
    }
}

fn check_elements(ps: &PointSet, n: usize) -> Result<()> {
    if ps.len() != n {
        return Err(Error::Data(format!(
            "objective is defined over {n} elements but the set has {}",
            ps.len()
        )));
    }
    Ok(())
}

impl SetObjective for AnalyticObjective {
    fn kind(&self) -> ObjectiveKind {
        self.instance.kind()
    }

    fn counter(&self) -> &EvalCounter {
        &self.counter
    }

    fn check_set(&self, ps: &PointSet) -> Result<()> {
        check_elements(ps, self.instance.elements())
    }

    fn value_with(&self, ps: &PointSet, keep: &Subset, counter: &EvalCounter) -> Result<f64> {
        check_keep(ps, keep)?;
        self.check_set(ps)?;
        counter.add_forward();
        Ok(self.instance.value(keep.mask()))
    }

    fn as_dyn(&self) -> &dyn SetObjective {
        self
    }
}

/// `φ(S) = Σ_{e∈S} wᵀT(e)`: additive in the embeddings, so first-order
/// scores are exact.
#[derive(Debug)]
pub struct LinearEmbedding {
    weights: Vec<f64>,
    counter: EvalCounter,
}

impl LinearEmbedding {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Parameter("linear weights must be finite and non-empty".into()));
        }
        Ok(LinearEmbedding {
            weights,
            counter: EvalCounter::new(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn term(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }
}

impl SetObjective for LinearEmbedding {
    fn kind(&self) -> ObjectiveKind {
        ObjectiveKind::LinearEmbedding
    }

    fn counter(&self) -> &EvalCounter {
        &self.counter
    }

    fn check_set(&self, ps: &PointSet) -> Result<()> {
        if ps.dim() != self.weights.len() {
            return Err(Error::Dimension {
                op: "linear objective",
                left: format!("{} weights", self.weights.len()),
                right: format!("dimension {}", ps.dim()),
            });
        }
        Ok(())
    }

    fn value_with(&self, ps: &PointSet, keep: &Subset, counter: &EvalCounter) -> Result<f64> {
        check_keep(ps, keep)?;
        self.check_set(ps)?;
        counter.add_forward();
        Ok(keep.positions().iter().map(|&p| self.term(ps.coords().row(p))).sum())
    }

    fn differentiable(&self) -> Option<&dyn DifferentiableObjective> {
        Some(self)
    }

    fn as_dyn(&self) -> &dyn SetObjective {
        self
    }
}

impl DifferentiableObjective for LinearEmbedding {
    fn gradient_pass<'a>(&'a self, ps: &'a PointSet, keep: &'a Subset) -> Result<GradientPass<'a>> {
        let value = self.evaluate(ps, keep)?;
        self.counter.add_backward();
        let inputs = keep.coords(ps);
        let grad = Matrix::from_vec(
            keep.len(),
            self.weights.len(),
            self.weights.repeat(keep.len()),
        )?;
        Ok(GradientPass {
            value,
            features: inputs.clone(),
            feature_grad: grad.clone(),
            inputs,
            input_grad: grad,
            gains: Box::new(DirectGains {
                objective: self,
                ps,
                keep,
                base: value,
            }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::marginal_gain;

    fn coverage() -> AnalyticInstance {
        AnalyticInstance::Coverage {
            item_weights: vec![1.0, 2.0, 4.0, 8.0],
            covers: vec![vec![0, 1], vec![1, 2], vec![3], vec![]],
        }
    }

    #[test]
    fn coverage_values_by_hand() {
        let c = coverage();
        assert_eq!(c.value(&[false; 4]), 0.0);
        assert_eq!(c.value(&[true, true, false, false]), 7.0);
        assert_eq!(c.value(&[true, false, true, true]), 11.0);
        assert_eq!(c.value(&[true; 4]), 15.0);
    }

    #[test]
    fn facility_location_by_hand() {
        let f = AnalyticInstance::FacilityLocation {
            similarity: vec![vec![1.0, 0.0, 0.5], vec![0.2, 0.9, 0.6]],
        };
        assert_eq!(f.value(&[true, false]), 1.5);
        assert!((f.value(&[true, true]) - 2.5).abs() < 1e-15);
        assert_eq!(f.value(&[false, false]), 0.0);
    }

    #[test]
    fn tabulated_indexes_by_mask() {
        let t = AnalyticInstance::Tabulated {
            values: vec![0.0, 1.0, 2.0, 5.0],
        };
        assert_eq!(t.elements(), 2);
        assert_eq!(t.value(&[true, true]), 5.0);
        assert_eq!(t.value(&[false, true]), 2.0);
        assert!(AnalyticInstance::Tabulated { values: vec![0.0; 3] }.validate().is_err());
    }

    #[test]
    fn marginal_gain_of_removal() {
        let obj = AnalyticObjective::new(coverage()).unwrap();
        let ps = obj.instance().ground_set();
        let keep = Subset::full(4);
        // element 0 still covers item 1, so only item 2 is lost
        assert_eq!(marginal_gain(&obj, &ps, &keep, 1).unwrap(), -4.0);
        assert_eq!(marginal_gain(&obj, &ps, &keep, 3).unwrap(), 0.0);
        assert_eq!(obj.counter().forwards(), 4);
        let ctx = obj.gains(&ps, &keep).unwrap();
        assert_eq!(ctx.gain(2).unwrap(), -8.0);
        assert_eq!(obj.counter().forwards(), 6);
    }

    #[test]
    fn bad_arguments() {
        let obj = AnalyticObjective::new(coverage()).unwrap();
        let ps = obj.instance().ground_set();
        let keep = Subset::from_positions(4, [0, 2]).unwrap();
        assert!(matches!(marginal_gain(&obj, &ps, &keep, 1), Err(Error::NotMember(1))));
        assert!(matches!(marginal_gain(&obj, &ps, &keep, 9), Err(Error::UnknownId(9))));
        let single = Subset::from_positions(4, [0]).unwrap();
        assert!(matches!(marginal_gain(&obj, &ps, &single, 0), Err(Error::EmptySet(_))));
        assert!(matches!(obj.evaluate(&ps, &Subset::empty(4)), Err(Error::EmptySet(_))));
        let other = PointSet::from_coords(Matrix::zeros(3, 1), 0, "x").unwrap();
        assert!(obj.evaluate(&other, &Subset::full(3)).is_err());
    }

    #[test]
    fn instance_json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cov.json");
        coverage().save(&path).unwrap();
        assert_eq!(AnalyticInstance::load(&path).unwrap(), coverage());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"kind\": \"coverage\""));
        std::fs::write(&path, r#"{"kind":"coverage","item_weights":[1],"covers":[[3]]}"#).unwrap();
        assert!(matches!(AnalyticInstance::load(&path), Err(Error::Parameter(_))));
    }

    #[test]
    fn linear_gradient_is_the_weight_vector() {
        let obj = LinearEmbedding::new(vec![1.0, -2.0]).unwrap();
        let ps = PointSet::from_coords(Matrix::from_rows(&[[1.0, 1.0], [3.0, 0.5], [0.0, -1.0]]).unwrap(), 0, "l").unwrap();
        let keep = Subset::from_positions(3, [0, 2]).unwrap();
        let pass = obj.gradient_pass(&ps, &keep).unwrap();
        assert_eq!(pass.value, -1.0 + 2.0);
        assert_eq!(pass.input_grad.row(1), &[1.0, -2.0]);
        assert_eq!(pass.gains.gain(2).unwrap(), -2.0);
        assert_eq!((obj.counter().forwards(), obj.counter().backwards()), (2, 1));
    }
}

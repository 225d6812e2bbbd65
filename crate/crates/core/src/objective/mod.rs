//! Set functions `φ` over subsets of a [`PointSet`], with exact evaluation
//! counting.
//!
//! Subsets are tracked by row position. Element ids only appear at the API
//! edges and in tie-breaks.

mod analytic;
mod brute;
mod neural;

use serde::{Deserialize, Serialize};

pub use crate::counter::{CounterSnapshot, EvalCounter};
use crate::error::{Error, Result};
use crate::model::{ElementId, PointSet};
use crate::tensor::Matrix;
pub use analytic::{AnalyticInstance, AnalyticObjective, LinearEmbedding};
pub use brute::{brute_force, brute_force_opt, verify_submodular, Cardinality, SubmodularityReport, BRUTE_FORCE_LIMIT};
pub use neural::{GainEval, NeuralObjective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Neural,
    Coverage,
    FacilityLocation,
    Modular,
    LinearEmbedding,
    Tabulated,
}

/// A subset of the rows of a point set, as sorted positions plus a mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Subset {
    positions: Vec<usize>,
    mask: Vec<bool>,
}

impl Subset {
    pub fn full(n: usize) -> Subset {
        Subset {
            positions: (0..n).collect(),
            mask: vec![true; n],
        }
    }

    pub fn empty(n: usize) -> Subset {
        Subset {
            positions: Vec::new(),
            mask: vec![false; n],
        }
    }

    /// Duplicates are ignored.
    pub fn from_positions(n: usize, positions: impl IntoIterator<Item = usize>) -> Result<Subset> {
        let mut mask = vec![false; n];
        for p in positions {
            if p >= n {
                return Err(Error::Index {
                    what: "subset position",
                    index: p,
                    len: n,
                });
            }
            mask[p] = true;
        }
        Ok(Self::from_mask(mask))
    }

    pub fn from_mask(mask: Vec<bool>) -> Subset {
        let positions = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        Subset { positions, mask }
    }

    pub fn from_ids(ps: &PointSet, ids: &[ElementId]) -> Result<Subset> {
        let pos = ids
            .iter()
            .map(|&id| ps.position_of(id).ok_or(Error::UnknownId(id)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_positions(ps.len(), pos)
    }

    /// Size of the ground set.
    pub fn universe(&self) -> usize {
        self.mask.len()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.mask.get(pos).copied().unwrap_or(false)
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Row of `pos` within the subset's own ordering.
    pub fn row_of(&self, pos: usize) -> Option<usize> {
        self.positions.binary_search(&pos).ok()
    }

    pub fn ids(&self, ps: &PointSet) -> Vec<ElementId> {
        self.positions.iter().map(|&p| ps.ids()[p]).collect()
    }

    pub fn remove(&mut self, pos: usize) -> bool {
        match self.row_of(pos) {
            Some(r) => {
                self.positions.remove(r);
                self.mask[pos] = false;
                true
            }
            None => false,
        }
    }

    pub fn insert(&mut self, pos: usize) -> Result<bool> {
        if pos >= self.universe() {
            return Err(Error::Index {
                what: "subset position",
                index: pos,
                len: self.universe(),
            });
        }
        match self.positions.binary_search(&pos) {
            Ok(_) => Ok(false),
            Err(r) => {
                self.positions.insert(r, pos);
                self.mask[pos] = true;
                Ok(true)
            }
        }
    }

    pub fn without(&self, pos: usize) -> Subset {
        let mut s = self.clone();
        s.remove(pos);
        s
    }

    /// Coordinates of the member rows, in subset order.
    pub fn coords(&self, ps: &PointSet) -> Matrix<f64> {
        ps.coords().select_rows(&self.positions)
    }
}

/// Per-iteration evaluation state for one subset. `base` is `φ(keep)`;
/// every [`GainContext::value_without`] call counts one forward.
pub trait GainContext {
    fn base(&self) -> f64;

    /// `φ(keep ∖ {pos})`.
    fn value_without(&self, pos: usize) -> Result<f64>;

    /// `Δ(e | keep) = φ(keep ∖ {e}) − φ(keep)`.
    fn gain(&self, pos: usize) -> Result<f64> {
        Ok(self.value_without(pos)? - self.base())
    }
}

/// One forward and one backward pass at `keep`. Rows follow subset order.
pub struct GradientPass<'a> {
    pub value: f64,
    /// Raw element embeddings `T(e)`.
    pub inputs: Matrix<f64>,
    pub input_grad: Matrix<f64>,
    /// Pointwise feature rows that get pooled, and the gradient there.
    pub features: Matrix<f64>,
    pub feature_grad: Matrix<f64>,
    /// Marginal gains that reuse this pass's forward as their base.
    pub gains: Box<dyn GainContext + 'a>,
}

pub trait SetObjective: Sync {
    fn kind(&self) -> ObjectiveKind;

    fn counter(&self) -> &EvalCounter;

    /// Rejects point sets the objective is not defined over.
    fn check_set(&self, _ps: &PointSet) -> Result<()> {
        Ok(())
    }

    /// `φ(keep)` tallied on `counter`. Analytic kinds define `φ(∅) = 0`.
    fn value_with(&self, ps: &PointSet, keep: &Subset, counter: &EvalCounter) -> Result<f64>;

    /// `φ(keep)` for a non-empty `keep`. Counts one forward.
    fn evaluate(&self, ps: &PointSet, keep: &Subset) -> Result<f64> {
        check_keep(ps, keep)?;
        if keep.is_empty() {
            return Err(Error::EmptySet("cannot evaluate the empty subset".into()));
        }
        self.check_set(ps)?;
        self.value_with(ps, keep, self.counter())
    }

    /// Evaluates `φ(keep)` once so later gains need one forward each.
    fn gains<'a>(&'a self, ps: &'a PointSet, keep: &'a Subset) -> Result<Box<dyn GainContext + 'a>> {
        let base = self.evaluate(ps, keep)?;
        Ok(Box::new(DirectGains {
            objective: self.as_dyn(),
            ps,
            keep,
            base,
        }))
    }

    fn differentiable(&self) -> Option<&dyn DifferentiableObjective> {
        None
    }

    fn as_dyn(&self) -> &dyn SetObjective;
}

pub trait DifferentiableObjective: SetObjective {
    /// Counts one forward and one backward.
    fn gradient_pass<'a>(&'a self, ps: &'a PointSet, keep: &'a Subset) -> Result<GradientPass<'a>>;
}

pub(crate) fn check_keep(ps: &PointSet, keep: &Subset) -> Result<()> {
    if keep.universe() != ps.len() {
        return Err(Error::Dimension {
            op: "subset",
            left: format!("subset over {} elements", keep.universe()),
            right: format!("point set of {}", ps.len()),
        });
    }
    Ok(())
}

pub(crate) fn check_removal(ps: &PointSet, keep: &Subset, pos: usize) -> Result<()> {
    if !keep.contains(pos) {
        return Err(match ps.ids().get(pos) {
            Some(&id) => Error::NotMember(id),
            None => Error::Index {
                what: "element position",
                index: pos,
                len: ps.len(),
            },
        });
    }
    if keep.len() < 2 {
        return Err(Error::EmptySet("removing the last element leaves nothing to evaluate".into()));
    }
    Ok(())
}

/// Gains evaluated from scratch on `keep ∖ {e}`.
pub(crate) struct DirectGains<'a> {
    pub objective: &'a dyn SetObjective,
    pub ps: &'a PointSet,
    pub keep: &'a Subset,
    pub base: f64,
}

impl GainContext for DirectGains<'_> {
    fn base(&self) -> f64 {
        self.base
    }

    fn value_without(&self, pos: usize) -> Result<f64> {
        check_removal(self.ps, self.keep, pos)?;
        self.objective
            .value_with(self.ps, &self.keep.without(pos), self.objective.counter())
    }
}

/// `Δ(e | keep)` from two fresh evaluations. Inside a selection loop prefer
/// [`SetObjective::gains`], which shares `φ(keep)` across candidates.
pub fn marginal_gain(obj: &dyn SetObjective, ps: &PointSet, keep: &Subset, e: ElementId) -> Result<f64> {
    check_keep(ps, keep)?;
    let pos = ps.position_of(e).ok_or(Error::UnknownId(e))?;
    check_removal(ps, keep, pos)?;
    let base = obj.evaluate(ps, keep)?;
    Ok(obj.evaluate(ps, &keep.without(pos))? - base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_bookkeeping() {
        let mut s = Subset::from_positions(6, [4, 1, 1, 3]).unwrap();
        assert_eq!(s.positions(), &[1, 3, 4]);
        assert_eq!(s.row_of(3), Some(1));
        assert!(s.remove(3));
        assert!(!s.remove(3));
        assert_eq!(s.positions(), &[1, 4]);
        assert!(s.insert(0).unwrap());
        assert_eq!(s.positions(), &[0, 1, 4]);
        assert_eq!(s.mask(), &[true, true, false, false, true, false]);
        assert!(Subset::from_positions(3, [3]).is_err());
        assert_eq!(Subset::full(3).without(1).positions(), &[0, 2]);
    }

    #[test]
    fn ids_map_through_the_point_set() {
        let ps = PointSet::new(vec![10, 20, 30], Matrix::zeros(3, 1), 0, "p").unwrap();
        let s = Subset::from_ids(&ps, &[30, 10]).unwrap();
        assert_eq!(s.positions(), &[0, 2]);
        assert_eq!(s.ids(&ps), vec![10, 30]);
        assert!(matches!(Subset::from_ids(&ps, &[7]), Err(Error::UnknownId(7))));
    }
}

//! Checks whether swapping in `T′(e)` really simulates deleting `e`.

use super::scores::{column_min, reference_embedding};
use super::Uninformative;
use crate::counter::EvalCounter;
use crate::error::{Error, Result};
use crate::model::{ElementId, PointSet, SetClassifier};
use crate::objective::Subset;
use crate::tensor::{self, Matrix, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct PremiseCheck {
    pub id: ElementId,
    /// `g1(T′(e))` lies strictly below `g1(T(ê))` for every other member `ê`
    /// in every feature.
    pub dominated: bool,
    /// Weaker condition that already leaves the pool unchanged: strictly
    /// below the pool of the other members in every feature.
    pub below_pool: bool,
    /// Largest absolute logit difference between replacing `e` and
    /// removing it.
    pub logit_gap: f64,
}

/// Replace-versus-remove comparison for every member of `keep`. Costs
/// nothing on any selection counter.
pub fn check_premise<T: Scalar>(
    model: &SetClassifier<T>,
    ps: &PointSet,
    keep: &Subset,
    emb: &Uninformative,
) -> Result<Vec<PremiseCheck>> {
    if keep.len() < 2 {
        return Err(Error::EmptySet("premise check needs at least two members".into()));
    }
    let scratch = EvalCounter::new();
    let coords = keep.coords(ps);
    let features: Matrix<f64> = model.point_features(&coords.cast())?.cast();
    let t_prime = reference_embedding(emb, ps, keep)?;
    let replacement: Vec<f64> = match &t_prime {
        Some(t) => {
            if t.len() != ps.dim() {
                return Err(Error::Dimension {
                    op: "uninformative embedding",
                    left: format!("length {}", t.len()),
                    right: format!("dimension {}", ps.dim()),
                });
            }
            let row = Matrix::row_vector(t.iter().map(|&v| T::lit(v)).collect());
            model.point_features(&row)?.cast().into_vec()
        }
        None => column_min(&features)?,
    };
    let ids = keep.ids(ps);
    let mut out = Vec::with_capacity(keep.len());
    for (r, &id) in ids.iter().enumerate() {
        let others: Vec<usize> = (0..keep.len()).filter(|&o| o != r).collect();
        let mut dominated = true;
        let mut below_pool = true;
        for (j, &f) in replacement.iter().enumerate() {
            let col = others.iter().map(|&o| features.get(o, j));
            let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            dominated &= f < lo;
            below_pool &= f < hi;
        }
        let removed_logits = {
            let rec = model.forward_coords(&coords.select_rows(&others).cast(), None, &scratch)?;
            rec.logits.cast::<f64>()
        };
        let replaced_logits = match &t_prime {
            Some(t) => {
                let mut c = coords.clone();
                c.row_mut(r).copy_from_slice(t);
                model.forward_coords(&c.cast(), None, &scratch)?.logits.cast::<f64>()
            }
            None => {
                let mut f = features.clone();
                f.row_mut(r).copy_from_slice(&replacement);
                let (pooled, _) = tensor::feature_max(&f.cast::<T>())?;
                model.head_logits(&pooled)?.cast::<f64>()
            }
        };
        let logit_gap = removed_logits
            .data()
            .iter()
            .zip(replaced_logits.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        out.push(PremiseCheck {
            id,
            dominated,
            below_pool,
            logit_gap,
        });
    }
    Ok(out)
}

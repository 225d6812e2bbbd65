//! Per-element scores over the current subset, in subset order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Uninformative;
use crate::error::{Error, Result};
use crate::model::{ElementId, PointSet};
use crate::objective::{marginal_gain, DifferentiableObjective, GradientPass, SetObjective, Subset};
use crate::tensor::Matrix;

/// Componentwise lower median of the rows: for `r` rows, the order
/// statistic at index `(r - 1) / 2`.
pub fn lower_median(rows: &Matrix<f64>) -> Result<Vec<f64>> {
    if rows.rows() == 0 {
        return Err(Error::EmptySet("median of zero rows".into()));
    }
    let mid = (rows.rows() - 1) / 2;
    Ok((0..rows.cols())
        .map(|j| {
            let mut col: Vec<f64> = (0..rows.rows()).map(|r| rows.get(r, j)).collect();
            col.sort_by(f64::total_cmp);
            col[mid]
        })
        .collect())
}

/// Componentwise minimum of the rows.
pub fn column_min(rows: &Matrix<f64>) -> Result<Vec<f64>> {
    if rows.rows() == 0 {
        return Err(Error::EmptySet("minimum of zero rows".into()));
    }
    Ok((0..rows.cols())
        .map(|j| (0..rows.rows()).map(|r| rows.get(r, j)).fold(f64::INFINITY, f64::min))
        .collect())
}

/// `−∇_eᵀ(x_e − t)` for each row.
pub fn first_order_scores(x: &Matrix<f64>, grad: &Matrix<f64>, t: &[f64]) -> Result<Vec<f64>> {
    if x.shape() != grad.shape() || t.len() != x.cols() {
        return Err(Error::Dimension {
            op: "first-order score",
            left: format!("embeddings {} / grad {}", x.shape_str(), grad.shape_str()),
            right: format!("reference of length {}", t.len()),
        });
    }
    Ok((0..x.rows())
        .map(|r| {
            -x.row(r)
                .iter()
                .zip(grad.row(r))
                .zip(t)
                .map(|((xv, g), tv)| g * (xv - tv))
                .sum::<f64>()
        })
        .collect())
}

/// `−‖x_e − c‖² ∇_eᵀ(x_e − c)` for each row.
pub fn saliency_scores(x: &Matrix<f64>, grad: &Matrix<f64>, center: &[f64]) -> Result<Vec<f64>> {
    let fo = first_order_scores(x, grad, center)?;
    Ok(fo
        .into_iter()
        .enumerate()
        .map(|(r, s)| {
            let sq: f64 = x.row(r).iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            sq * s
        })
        .collect())
}

/// Resolves `T′` for coordinate modes.
pub fn reference_embedding(
    emb: &Uninformative,
    ps: &PointSet,
    keep: &Subset,
) -> Result<Option<Vec<f64>>> {
    Ok(match emb {
        Uninformative::CoordinateMedian { frozen: false } => Some(lower_median(&keep.coords(ps))?),
        Uninformative::CoordinateMedian { frozen: true } => Some(lower_median(ps.coords())?),
        Uninformative::Custom(v) => Some(v.clone()),
        Uninformative::FeatureMin => None,
    })
}

/// First-order scores from an existing gradient pass.
pub(crate) fn sfo_from_pass(
    pass: &GradientPass<'_>,
    emb: &Uninformative,
    ps: &PointSet,
    keep: &Subset,
) -> Result<Vec<f64>> {
    match reference_embedding(emb, ps, keep)? {
        Some(t) => first_order_scores(&pass.inputs, &pass.input_grad, &t),
        None => {
            let phi_min = column_min(&pass.features)?;
            first_order_scores(&pass.features, &pass.feature_grad, &phi_min)
        }
    }
}

pub(crate) fn saliency_from_pass(pass: &GradientPass<'_>) -> Result<Vec<f64>> {
    let center = lower_median(&pass.inputs)?;
    saliency_scores(&pass.inputs, &pass.input_grad, &center)
}

fn check_pair(ps: &PointSet, keep: &Subset) -> Result<()> {
    if keep.universe() != ps.len() {
        return Err(Error::Dimension {
            op: "subset",
            left: format!("subset over {}", keep.universe()),
            right: format!("point set of {}", ps.len()),
        });
    }
    if keep.len() < 2 {
        return Err(Error::EmptySet("scores need at least two elements".into()));
    }
    Ok(())
}

/// Exact removal gain of one element.
pub fn score_exact(obj: &dyn SetObjective, ps: &PointSet, keep: &Subset, e: ElementId) -> Result<f64> {
    marginal_gain(obj, ps, keep, e)
}

/// First-order scores for every member of `keep` from one forward and one
/// backward pass.
pub fn score_sfo(
    obj: &dyn DifferentiableObjective,
    ps: &PointSet,
    keep: &Subset,
    emb: &Uninformative,
) -> Result<Vec<f64>> {
    check_pair(ps, keep)?;
    let pass = obj.gradient_pass(ps, keep)?;
    sfo_from_pass(&pass, emb, ps, keep)
}

/// Saliency scores toward the coordinate median, one forward and one backward.
pub fn score_saliency(obj: &dyn DifferentiableObjective, ps: &PointSet, keep: &Subset) -> Result<Vec<f64>> {
    check_pair(ps, keep)?;
    let pass = obj.gradient_pass(ps, keep)?;
    saliency_from_pass(&pass)
}

/// Uniform scores in `[0, 1)`, a pure function of `(seed, iteration)`.
pub fn score_random(keep: &Subset, seed: u64, iteration: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    (0..keep.len()).map(|_| rng.gen::<f64>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_median_picks_a_data_value() {
        let m = Matrix::from_rows(&[[4.0, 0.0], [1.0, 9.0], [3.0, 2.0], [2.0, 5.0]]).unwrap();
        // sorted columns: [1,2,3,4] and [0,2,5,9]; index (4-1)/2 = 1
        assert_eq!(lower_median(&m).unwrap(), vec![2.0, 2.0]);
        let odd = Matrix::from_rows(&[[5.0], [-1.0], [2.0]]).unwrap();
        assert_eq!(lower_median(&odd).unwrap(), vec![2.0]);
        assert_eq!(column_min(&m).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn saliency_without_norm_is_first_order() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [0.5, -1.0], [2.0, 0.0]]).unwrap();
        let g = Matrix::from_rows(&[[0.3, -0.1], [1.0, 1.0], [-2.0, 0.5]]).unwrap();
        let c = lower_median(&x).unwrap();
        let fo = first_order_scores(&x, &g, &c).unwrap();
        let sal = saliency_scores(&x, &g, &c).unwrap();
        for r in 0..3 {
            let sq: f64 = x.row(r).iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            if sq > 0.0 {
                assert!((sal[r] / sq - fo[r]).abs() < 1e-15);
            } else {
                assert_eq!(sal[r], 0.0);
            }
        }
    }

    #[test]
    fn random_scores_depend_on_seed_and_iteration_only() {
        let keep = Subset::full(10);
        assert_eq!(score_random(&keep, 3, 1), score_random(&keep, 3, 1));
        assert_ne!(score_random(&keep, 3, 1), score_random(&keep, 3, 2));
        assert_ne!(score_random(&keep, 3, 1), score_random(&keep, 4, 1));
        assert!(score_random(&keep, 0, 0).iter().all(|s| (0.0..1.0).contains(s)));
    }
}

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Stable identifier of a set element.
pub type ElementId = u32;

/// An ordered set of element embeddings with stable ids and a class label.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    ids: Vec<ElementId>,
    coords: Matrix<f64>,
    label: usize,
    name: String,
}

impl PointSet {
    pub fn new(
        ids: Vec<ElementId>,
        coords: Matrix<f64>,
        label: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        if coords.rows() == 0 {
            return Err(Error::EmptySet("point set needs at least one element".into()));
        }
        if ids.len() != coords.rows() {
            return Err(Error::Dimension {
                op: "PointSet::new",
                left: format!("{} ids", ids.len()),
                right: format!("{} rows", coords.rows()),
            });
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::Data(format!("duplicate element id {id}")));
            }
        }
        if !coords.is_finite() {
            return Err(Error::NonFinite("point set coordinates".into()));
        }
        Ok(PointSet {
            ids,
            coords,
            label,
            name: name.into(),
        })
    }

    /// Ids are assigned `0..n` in row order.
    pub fn from_coords(coords: Matrix<f64>, label: usize, name: impl Into<String>) -> Result<Self> {
        let ids = (0..coords.rows() as ElementId).collect();
        Self::new(ids, coords, label, name)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.coords.cols()
    }

    pub fn ids(&self) -> &[ElementId] {
        &self.ids
    }

    pub fn coords(&self) -> &Matrix<f64> {
        &self.coords
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = label;
        self
    }

    pub fn position_of(&self, id: ElementId) -> Option<usize> {
        self.ids.iter().position(|&i| i == id)
    }

    /// The elements at the given row positions, ids preserved.
    pub fn subset(&self, positions: &[usize]) -> Result<PointSet> {
        if positions.is_empty() {
            return Err(Error::EmptySet("subset of zero elements".into()));
        }
        if let Some(&p) = positions.iter().find(|&&p| p >= self.len()) {
            return Err(Error::Index {
                what: "elements",
                index: p,
                len: self.len(),
            });
        }
        Ok(PointSet {
            ids: positions.iter().map(|&p| self.ids[p]).collect(),
            coords: self.coords.select_rows(positions),
            label: self.label,
            name: self.name.clone(),
        })
    }

    /// Copy with row `pos` replaced by `row`.
    pub fn with_row(&self, pos: usize, row: &[f64]) -> Result<PointSet> {
        if row.len() != self.dim() {
            return Err(Error::Dimension {
                op: "with_row",
                left: format!("{} columns", self.dim()),
                right: format!("row of {}", row.len()),
            });
        }
        let mut out = self.clone();
        out.coords.row_mut(pos).copy_from_slice(row);
        Ok(out)
    }

    /// Copy with rows reordered by `perm` (row `i` of the result is row
    /// `perm[i]` of `self`).
    pub fn permuted(&self, perm: &[usize]) -> Result<PointSet> {
        let mut check = perm.to_vec();
        check.sort_unstable();
        if check != (0..self.len()).collect::<Vec<_>>() {
            return Err(Error::Parameter("not a permutation of the rows".into()));
        }
        self.subset(perm)
    }

    pub fn centroid(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.dim())
            .map(|c| (0..self.len()).map(|r| self.coords.get(r, c)).sum::<f64>() / n)
            .collect()
    }

    /// Centroid at the origin and every point inside the unit ball.
    pub fn is_normalized(&self, tol: f64) -> bool {
        let c = self.centroid();
        let max_norm = (0..self.len())
            .map(|r| self.coords.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        c.iter().all(|v| v.abs() <= tol) && max_norm <= 1.0 + tol
    }
}

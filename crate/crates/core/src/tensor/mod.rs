//! Dense row-major matrices and the handful of primitives the set classifier
//! is built from, plus a reverse-mode tape over those primitives.
//!
//! Every kernel computes each output row from the matching input row only,
//! with a fixed accumulation order. A row's value therefore does not depend
//! on which other rows share the matrix, which is what lets a forward pass on
//! a subset reuse pointwise features computed on the superset bit-for-bit.

mod tape;

pub use tape::{Gradients, NodeId, Tape};

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};

/// Floating point type the numeric kernels run in.
pub trait Scalar:
    Float + FromPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Name used in configs and on the command line.
    const NAME: &'static str;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float to f64")
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

#[derive(Clone, PartialEq)]
pub struct Matrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Debug for Matrix<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Matrix[{}x{}]", self.rows, self.cols)?;
        f.debug_list()
            .entries(self.data.chunks(self.cols.max(1)))
            .finish()
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                op: "from_vec",
                left: format!("{rows}x{cols}"),
                right: format!("{} values", data.len()),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Dimension {
                    op: "from_rows",
                    left: format!("row 0 of width {cols}"),
                    right: format!("row {i} of width {}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(values: Vec<T>) -> Self {
        Matrix {
            rows: 1,
            cols: values.len(),
            data: values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copies the listed rows, in the given order, into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix<T> {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
        }
    }

    /// `self += alpha * other`, elementwise.
    pub fn add_scaled(&mut self, alpha: T, other: &Matrix<T>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                op: "add_scaled",
                left: self.shape_str(),
                right: other.shape_str(),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + alpha * b;
        }
        Ok(())
    }
}

/// Per-feature argmax rows of a feature-wise max pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolWitness(pub Vec<usize>);

impl PoolWitness {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Rows that win at least one feature, ascending.
    pub fn rows(&self) -> Vec<usize> {
        let mut r = self.0.clone();
        r.sort_unstable();
        r.dedup();
        r
    }
}

pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// Dot product with four interleaved accumulators combined in a fixed order.
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] = acc[0] + x[0] * y[0];
        acc[1] = acc[1] + x[1] * y[1];
        acc[2] = acc[2] + x[2] * y[2];
        acc[3] = acc[3] + x[3] * y[3];
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail = tail + x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `x · W + b` with `b` a 1×b row broadcast over rows.
pub fn affine<T: Scalar>(x: &Matrix<T>, w: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if x.cols != w.rows || b.rows != 1 || b.cols != w.cols {
        return Err(Error::Dimension {
            op: "affine",
            left: x.shape_str(),
            right: format!("W {} / b {}", w.shape_str(), b.shape_str()),
        });
    }
    let mut out = Matrix::zeros(x.rows, w.cols);
    for i in 0..x.rows {
        let orow = &mut out.data[i * w.cols..(i + 1) * w.cols];
        orow.copy_from_slice(&b.data);
        for (k, &xik) in x.row(i).iter().enumerate() {
            axpy(xik, w.row(k), orow);
        }
    }
    Ok(out)
}

pub fn relu<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Column-wise max over rows. Ties go to the lowest row index.
pub fn feature_max<T: Scalar>(f: &Matrix<T>) -> Result<(Matrix<T>, PoolWitness)> {
    if f.rows == 0 {
        return Err(Error::EmptySet("feature_max over zero rows".into()));
    }
    let mut pooled = f.row(0).to_vec();
    let mut witness = vec![0usize; f.cols];
    for i in 1..f.rows {
        for (j, &v) in f.row(i).iter().enumerate() {
            if v > pooled[j] {
                pooled[j] = v;
                witness[j] = i;
            }
        }
    }
    Ok((Matrix::row_vector(pooled), PoolWitness(witness)))
}

/// Stable log-softmax of a row vector.
pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&z| (z - m).exp()).sum::<T>().ln() + m;
    logits.iter().map(|&z| z - lse).collect()
}

/// Cross-entropy `-log softmax(logits)[y]` for a 1×C logit row.
pub fn softmax_xent<T: Scalar>(logits: &Matrix<T>, y: usize) -> Result<T> {
    check_logits(logits, y)?;
    Ok(-log_softmax(logits.row(0))[y])
}

pub(crate) fn check_logits<T: Scalar>(logits: &Matrix<T>, y: usize) -> Result<()> {
    if logits.rows != 1 || logits.cols < 2 {
        return Err(Error::Dimension {
            op: "softmax_xent",
            left: logits.shape_str(),
            right: "1xC with C >= 2".into(),
        });
    }
    if y >= logits.cols {
        return Err(Error::Index {
            what: "classes",
            index: y,
            len: logits.cols,
        });
    }
    Ok(())
}

/// Argmax of a slice with lowest-index tie-break.
pub fn argmax<T: Scalar>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_matmul(x: &Matrix, w: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), w.cols());
        for i in 0..x.rows() {
            for j in 0..w.cols() {
                let mut s = 0.0;
                for k in 0..x.cols() {
                    s += x.get(i, k) * w.get(k, j);
                }
                out.set(i, j, s + b.get(0, j));
            }
        }
        out
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn affine_identity_and_hand_expansion() {
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let w = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let b = Matrix::row_vector(vec![0.0, 0.0]);
        assert_eq!(affine(&x, &w, &b).unwrap().data(), &[1.0, 2.0]);

        let x = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let w = Matrix::from_rows(&[[2.0], [3.0]]).unwrap();
        let b = Matrix::row_vector(vec![1.0]);
        assert_eq!(affine(&x, &w, &b).unwrap().data(), &[6.0]);
    }

    #[test]
    fn affine_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = random(&mut rng, 3, 4);
            let w = random(&mut rng, 4, 2);
            let b = random(&mut rng, 1, 2);
            let got = affine(&x, &w, &b).unwrap();
            let want = naive_matmul(&x, &w, &b);
            for (g, e) in got.data().iter().zip(want.data()) {
                assert!((g - e).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn affine_shape_error_names_shapes() {
        let x = Matrix::<f64>::zeros(2, 3);
        let w = Matrix::zeros(2, 2);
        let b = Matrix::zeros(1, 2);
        let msg = affine(&x, &w, &b).unwrap_err().to_string();
        assert!(msg.contains("2x3") && msg.contains("W 2x2"), "{msg}");
    }

    #[test]
    fn affine_rows_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, 9, 5);
        let w = random(&mut rng, 5, 7);
        let b = random(&mut rng, 1, 7);
        let full = affine(&x, &w, &b).unwrap();
        let idx = [8, 2, 5];
        let part = affine(&x.select_rows(&idx), &w, &b).unwrap();
        for (r, &i) in idx.iter().enumerate() {
            assert_eq!(part.row(r), full.row(i));
        }
    }

    #[test]
    fn feature_max_examples() {
        let f = Matrix::from_rows(&[[1.0, 5.0], [3.0, 2.0]]).unwrap();
        let (p, w) = feature_max(&f).unwrap();
        assert_eq!(p.data(), &[3.0, 5.0]);
        assert_eq!(w.as_slice(), &[1, 0]);

        let f = Matrix::from_rows(&[[2.0, -1.0, 4.0]; 3]).unwrap();
        let (p, w) = feature_max(&f).unwrap();
        assert_eq!(p.data(), &[2.0, -1.0, 4.0]);
        assert_eq!(w.as_slice(), &[0, 0, 0]);

        assert!(matches!(
            feature_max(&Matrix::<f64>::zeros(0, 3)),
            Err(Error::EmptySet(_))
        ));
    }

    #[test]
    fn xent_examples() {
        let l = Matrix::row_vector(vec![0.0, 0.0]);
        assert!((softmax_xent(&l, 0).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let l = Matrix::row_vector(vec![1000.0, 0.0]);
        let v = softmax_xent(&l, 0).unwrap();
        assert!(v.is_finite() && v.abs() < 1e-12);
        assert!(matches!(softmax_xent(&l, 2), Err(Error::Index { .. })));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.1, 0.9, 0.3]), Some(1));
        assert_eq!(argmax(&[0.5, 0.5]), Some(0));
        assert_eq!(argmax::<f64>(&[]), None);
    }

    #[test]
    fn dot_matches_sequential_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for len in 0..13 {
            let a: Vec<f64> = (0..len).map(|_| rng.gen()).collect();
            let b: Vec<f64> = (0..len).map(|_| rng.gen()).collect();
            let want: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert!((dot(&a, &b) - want).abs() < 1e-12);
        }
    }
}

use super::{affine, axpy, check_logits, dot, feature_max, log_softmax, relu, Matrix, PoolWitness, Scalar};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }

    /// The node recorded immediately after `id`.
    pub(crate) fn after(id: NodeId) -> NodeId {
        NodeId(id.0 + 1)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { x: NodeId, w: NodeId, b: NodeId },
    Relu { x: NodeId },
    FeatureMax { x: NodeId, witness: PoolWitness },
    SoftmaxXent { logits: NodeId, label: usize },
    Sum { x: NodeId },
}

#[derive(Debug, Clone)]
struct Node<T: Scalar> {
    op: Op,
    value: Matrix<T>,
    requires_grad: bool,
}

/// Append-only record of one evaluation. Inputs always precede consumers, so
/// the node order is a topological order and backward is a reverse sweep.
#[derive(Debug, Clone, Default)]
pub struct Tape<T: Scalar = f64> {
    nodes: Vec<Node<T>>,
}

/// Adjoints from one backward sweep, indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients<T: Scalar = f64> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the output with respect to `id`, if `id` was on a
    /// differentiable path.
    pub fn get(&self, id: NodeId) -> Option<&Matrix<T>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Matrix<T>> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Matrix<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].requires_grad)
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Matrix<T>) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// An input that no gradient is requested for.
    pub fn constant(&mut self, value: Matrix<T>) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let v = affine(self.value(x), self.value(w), self.value(b))?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(Op::Affine { x, w, b }, v, rg))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = relu(self.value(x));
        let rg = self.rg(&[x]);
        self.push(Op::Relu { x }, v, rg)
    }

    pub fn feature_max(&mut self, x: NodeId) -> Result<NodeId> {
        let (v, witness) = feature_max(self.value(x))?;
        let rg = self.rg(&[x]);
        Ok(self.push(Op::FeatureMax { x, witness }, v, rg))
    }

    /// Witness of a node produced by [`Tape::feature_max`].
    pub fn witness(&self, id: NodeId) -> Option<&PoolWitness> {
        match &self.nodes[id.0].op {
            Op::FeatureMax { witness, .. } => Some(witness),
            _ => None,
        }
    }

    pub fn softmax_xent(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        let l = self.value(logits);
        check_logits(l, label)?;
        let loss = -log_softmax(l.row(0))[label];
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Op::SoftmaxXent { logits, label },
            Matrix::row_vector(vec![loss]),
            rg,
        ))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = Matrix::row_vector(vec![self.value(x).sum()]);
        let rg = self.rg(&[x]);
        self.push(Op::Sum { x }, v, rg)
    }

    fn recompute(&self, op: &Op) -> Result<Option<Matrix<T>>> {
        Ok(match op {
            Op::Leaf => None,
            Op::Affine { x, w, b } => Some(affine(self.value(*x), self.value(*w), self.value(*b))?),
            Op::Relu { x } => Some(relu(self.value(*x))),
            Op::FeatureMax { x, .. } => Some(feature_max(self.value(*x))?.0),
            Op::SoftmaxXent { logits, label } => Some(Matrix::row_vector(vec![
                -log_softmax(self.value(*logits).row(0))[*label],
            ])),
            Op::Sum { x } => Some(Matrix::row_vector(vec![self.value(*x).sum()])),
        })
    }

    /// Recomputes every non-leaf node from its recorded inputs and reports
    /// whether all recorded values are reproduced bit-for-bit.
    pub fn replay_matches(&self) -> Result<bool> {
        for node in &self.nodes {
            if let Some(v) = self.recompute(&node.op)? {
                let same = v.shape() == node.value.shape()
                    && v
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .all(|(a, b)| a.to_bits_eq(*b));
                if !same {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Reverse accumulation from a scalar node. Every differentiable leaf
    /// gets a gradient of its own shape (zeros if unreachable).
    pub fn backward(&self, output: NodeId) -> Result<Gradients<T>> {
        let out = self
            .nodes
            .get(output.0)
            .ok_or_else(|| Error::Contract(format!("node {} not on tape", output.0)))?;
        if out.value.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, got {}",
                out.value.shape_str()
            )));
        }
        let mut grads: Vec<Option<Matrix<T>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Matrix::filled(1, 1, T::one()));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(idx);
            let Some(g) = upper[0].as_ref() else { continue };
            let grads = lower;
            match &node.op {
                Op::Leaf => {}
                Op::Affine { x, w, b } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    if self.nodes[x.0].requires_grad {
                        let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                        for i in 0..g.rows() {
                            let gi = g.row(i);
                            let dxi = dx.row_mut(i);
                            for (k, d) in dxi.iter_mut().enumerate() {
                                *d = dot(gi, wv.row(k));
                            }
                        }
                        accumulate(grads, *x, dx);
                    }
                    if self.nodes[w.0].requires_grad {
                        let mut dw = Matrix::zeros(wv.rows(), wv.cols());
                        for i in 0..g.rows() {
                            let gi = g.row(i);
                            for (k, &xik) in xv.row(i).iter().enumerate() {
                                if xik != T::zero() {
                                    axpy(xik, gi, dw.row_mut(k));
                                }
                            }
                        }
                        accumulate(grads, *w, dw);
                    }
                    if self.nodes[b.0].requires_grad {
                        let mut db = Matrix::zeros(1, g.cols());
                        for i in 0..g.rows() {
                            axpy(T::one(), g.row(i), db.row_mut(0));
                        }
                        accumulate(grads, *b, db);
                    }
                }
                Op::Relu { x } => {
                    let mut dx = g.clone();
                    for (d, &o) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        if !(o > T::zero()) {
                            *d = T::zero();
                        }
                    }
                    accumulate(grads, *x, dx);
                }
                Op::FeatureMax { x, witness } => {
                    let (r, c) = self.value(*x).shape();
                    let mut dx = Matrix::zeros(r, c);
                    for (j, &row) in witness.as_slice().iter().enumerate() {
                        dx.set(row, j, g.get(0, j));
                    }
                    accumulate(grads, *x, dx);
                }
                Op::SoftmaxXent { logits, label } => {
                    let l = self.value(*logits).row(0);
                    let gs = g.get(0, 0);
                    let dl: Vec<T> = log_softmax(l)
                        .into_iter()
                        .enumerate()
                        .map(|(i, lp)| {
                            let onehot = if i == *label { T::one() } else { T::zero() };
                            gs * (lp.exp() - onehot)
                        })
                        .collect();
                    accumulate(grads, *logits, Matrix::row_vector(dl));
                }
                Op::Sum { x } => {
                    let (r, c) = self.value(*x).shape();
                    accumulate(grads, *x, Matrix::filled(r, c, g.get(0, 0)));
                }
            }
        }

        // Fill unreachable differentiable leaves.
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad && grads[i].is_none() {
                let (r, c) = node.value.shape();
                grads[i] = Some(Matrix::zeros(r, c));
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Matrix<T>>], id: NodeId, g: Matrix<T>) {
    match &mut grads[id.0] {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a = *a + *b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

trait BitsEq {
    fn to_bits_eq(self, other: Self) -> bool;
}

impl<T: Scalar> BitsEq for T {
    fn to_bits_eq(self, other: Self) -> bool {
        self.integer_decode() == other.integer_decode() || (self.is_nan() && other.is_nan())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// affine -> relu -> affine -> feature_max -> sum, as a plain function of x.
    fn composite(x: &Matrix, p: &[Matrix; 4]) -> (Tape, NodeId, NodeId) {
        let mut t = Tape::new();
        let xi = t.leaf(x.clone());
        let w1 = t.constant(p[0].clone());
        let b1 = t.constant(p[1].clone());
        let w2 = t.constant(p[2].clone());
        let b2 = t.constant(p[3].clone());
        let h = t.affine(xi, w1, b1).unwrap();
        let h = t.relu(h);
        let h = t.affine(h, w2, b2).unwrap();
        let m = t.feature_max(h).unwrap();
        let s = t.sum(m);
        (t, xi, s)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn affine_relu_sum_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let x = random(&mut rng, 4, 3);
            let w = random(&mut rng, 3, 5);
            let b = random(&mut rng, 1, 5);
            let f = |x: &Matrix| relu(&affine(x, &w, &b).unwrap()).sum();
            let mut t = Tape::new();
            let xi = t.leaf(x.clone());
            let wi = t.constant(w.clone());
            let bi = t.constant(b.clone());
            let h = t.affine(xi, wi, bi).unwrap();
            let h = t.relu(h);
            let s = t.sum(h);
            let g = t.backward(s).unwrap();
            let gx = g.get(xi).unwrap();
            for k in 0..x.data().len() {
                let step = 1e-6 * (1.0 + x.data()[k].abs());
                let mut xp = x.clone();
                xp.data_mut()[k] += step;
                let mut xm = x.clone();
                xm.data_mut()[k] -= step;
                let fd = (f(&xp) - f(&xm)) / (2.0 * step);
                assert!(rel_err(gx.data()[k], fd) <= 1e-6, "{} vs {}", gx.data()[k], fd);
            }
        }
    }

    #[test]
    fn identity_chain_has_unit_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_rows(&[[1.0, -2.0], [3.0, 0.5]]).unwrap());
        let s = t.sum(x);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn max_routes_only_to_witness_rows_and_conserves_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, 7, 4);
        let up = random(&mut rng, 4, 1);
        let mut t = Tape::new();
        let xi = t.leaf(x.clone());
        let m = t.feature_max(xi).unwrap();
        // weighted sum of pooled values through a 4x1 affine
        let wi = t.constant(up.clone());
        let bi = t.constant(Matrix::zeros(1, 1));
        let o = t.affine(m, wi, bi).unwrap();
        let g = t.backward(o).unwrap();
        let gx = g.get(xi).unwrap();
        let w = t.witness(m).unwrap().clone();
        for i in 0..7 {
            for j in 0..4 {
                if w.as_slice()[j] != i {
                    assert_eq!(gx.get(i, j), 0.0);
                }
            }
        }
        for j in 0..4 {
            let routed: f64 = (0..7).map(|i| gx.get(i, j)).sum();
            assert_eq!(routed, up.get(j, 0));
        }
    }

    #[test]
    fn xent_gradient_is_softmax_minus_onehot() {
        let mut t = Tape::new();
        let l = t.leaf(Matrix::row_vector(vec![0.0, 0.0]));
        let loss = t.softmax_xent(l, 0).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(l).unwrap().data(), &[-0.5, 0.5]);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Matrix::zeros(2, 2));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn replay_reproduces_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = [
            random(&mut rng, 3, 6),
            random(&mut rng, 1, 6),
            random(&mut rng, 6, 4),
            random(&mut rng, 1, 4),
        ];
        let (t, _, _) = composite(&random(&mut rng, 5, 3), &p);
        assert!(t.replay_matches().unwrap());
    }

    #[test]
    fn unreachable_leaf_gets_zero_gradient() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::zeros(2, 3));
        let b = t.leaf(Matrix::filled(1, 2, 1.0));
        let s = t.sum(b);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(a).unwrap().shape(), (2, 3));
        assert!(g.get(a).unwrap().data().iter().all(|&v| v == 0.0));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(100))]
        #[test]
        fn composite_gradients_match_finite_differences(seed in 0u64..u64::MAX) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..6);
            let p = [
                random(&mut rng, 3, 6),
                random(&mut rng, 1, 6),
                random(&mut rng, 6, 4),
                random(&mut rng, 1, 4),
            ];
            let x = random(&mut rng, n, 3);
            let (t, xi, s) = composite(&x, &p);
            let g = t.backward(s).unwrap();
            let gx = g.get(xi).unwrap().clone();
            let f = |x: &Matrix| {
                let (t, _, s) = composite(x, &p);
                t.value(s).get(0, 0)
            };
            for k in 0..x.data().len() {
                let step = 1e-6 * (1.0 + x.data()[k].abs());
                let mut xp = x.clone();
                xp.data_mut()[k] += step;
                let mut xm = x.clone();
                xm.data_mut()[k] -= step;
                let fd = (f(&xp) - f(&xm)) / (2.0 * step);
                // piecewise-linear: skip probes that straddle a kink
                let kink = (f(&xp) - 2.0 * f(&x) + f(&xm)).abs() > 1e-9;
                if !kink {
                    proptest::prop_assert!(rel_err(gx.data()[k], fd) <= 1e-5);
                }
            }
        }
    }
}

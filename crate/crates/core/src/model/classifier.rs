//! Max-pooled set classifier `g2(max_e g1(T(e)))`.
//!
//! `g1` is a pointwise MLP applied to every element independently; its rows
//! are pooled feature-wise and `g2` maps the pooled vector to logits. Nothing
//! mixes elements before the pool.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PointSet;
use crate::counter::EvalCounter;
use crate::error::{Error, Result};
use crate::tensor::{self, argmax, Matrix, NodeId, PoolWitness, Scalar, Tape};

/// Layer widths. The last entry of `point_widths` is the pooled width `h`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub point_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    pub classes: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            input_dim: 3,
            point_widths: vec![64, 64, 128],
            head_widths: vec![64],
            classes: 5,
        }
    }
}

impl Architecture {
    pub fn feature_width(&self) -> usize {
        *self.point_widths.last().unwrap_or(&self.input_dim)
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.point_widths.is_empty() || self.classes < 2 {
            return Err(Error::Parameter(format!(
                "architecture needs d >= 1, at least one pointwise layer and >= 2 classes: {self:?}"
            )));
        }
        if self.point_widths.iter().chain(&self.head_widths).any(|&w| w == 0) {
            return Err(Error::Parameter("zero-width layer".into()));
        }
        Ok(())
    }
}

/// One affine layer, `x · weight + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T: Scalar> {
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
}

impl<T: Scalar> Dense<T> {
    fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| T::lit(rng.gen_range(-limit..limit)))
            .collect();
        Dense {
            weight: Matrix::from_vec(fan_in, fan_out, data).expect("sized"),
            bias: Matrix::zeros(1, fan_out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetClassifier<T: Scalar = f64> {
    arch: Architecture,
    point_mlp: Vec<Dense<T>>,
    head: Vec<Dense<T>>,
}

/// Everything a forward pass produces.
#[derive(Debug, Clone)]
pub struct ForwardRecord<T: Scalar = f64> {
    /// `g1` rows, one per element.
    pub features: Matrix<T>,
    pub pooled: Matrix<T>,
    pub witness: PoolWitness,
    pub logits: Matrix<T>,
    pub loss: Option<T>,
}

/// Loss and its gradient with respect to the input coordinates.
#[derive(Debug, Clone)]
pub struct InputGradient<T: Scalar = f64> {
    pub loss: T,
    pub grad: Matrix<T>,
}

/// Loss and its gradient with respect to the pointwise features.
#[derive(Debug, Clone)]
pub struct FeatureGradient<T: Scalar = f64> {
    pub loss: T,
    pub features: Matrix<T>,
    pub grad: Matrix<T>,
}

/// Result of [`SetClassifier::gradient_pass`].
#[derive(Debug, Clone)]
pub struct GradientPass<T: Scalar = f64> {
    pub loss: T,
    pub features: Matrix<T>,
    pub pooled: Matrix<T>,
    pub witness: PoolWitness,
    pub input_grad: Matrix<T>,
    pub feature_grad: Matrix<T>,
}

/// Node handles of a traced forward pass.
pub(crate) struct Traced {
    pub params: Vec<NodeId>,
    pub input: NodeId,
    pub features: NodeId,
    pub logits: NodeId,
}

fn relu_unless_last<T: Scalar>(i: usize, len: usize, m: Matrix<T>) -> Matrix<T> {
    if i + 1 < len {
        tensor::relu(&m)
    } else {
        m
    }
}

impl<T: Scalar> SetClassifier<T> {
    /// Glorot-uniform weights and zero biases from `seed`.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut point_mlp = Vec::new();
        let mut fan_in = arch.input_dim;
        for &w in &arch.point_widths {
            point_mlp.push(Dense::glorot(fan_in, w, &mut rng));
            fan_in = w;
        }
        let mut head = Vec::new();
        for &w in arch.head_widths.iter().chain(std::iter::once(&arch.classes)) {
            head.push(Dense::glorot(fan_in, w, &mut rng));
            fan_in = w;
        }
        Ok(SetClassifier {
            arch,
            point_mlp,
            head,
        })
    }

    /// Assembles a classifier from explicit layers, checking that widths chain.
    pub fn from_layers(point_mlp: Vec<Dense<T>>, head: Vec<Dense<T>>) -> Result<Self> {
        let first = point_mlp
            .first()
            .ok_or_else(|| Error::Parameter("no pointwise layers".into()))?;
        let mut width = first.weight.rows();
        let input_dim = width;
        for layer in point_mlp.iter().chain(&head) {
            if layer.weight.rows() != width || layer.bias.shape() != (1, layer.weight.cols()) {
                return Err(Error::Dimension {
                    op: "from_layers",
                    left: format!("width {width}"),
                    right: format!("W {} / b {}", layer.weight.shape_str(), layer.bias.shape_str()),
                });
            }
            width = layer.weight.cols();
        }
        let arch = Architecture {
            input_dim,
            point_widths: point_mlp.iter().map(|l| l.weight.cols()).collect(),
            head_widths: head
                .iter()
                .take(head.len().saturating_sub(1))
                .map(|l| l.weight.cols())
                .collect(),
            classes: head.last().map_or(0, |l| l.weight.cols()),
        };
        if head.is_empty() {
            return Err(Error::Parameter("no head layers".into()));
        }
        arch.validate()?;
        Ok(SetClassifier {
            arch,
            point_mlp,
            head,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn point_layers(&self) -> &[Dense<T>] {
        &self.point_mlp
    }

    pub fn head_layers(&self) -> &[Dense<T>] {
        &self.head
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn feature_width(&self) -> usize {
        self.arch.feature_width()
    }

    pub fn classes(&self) -> usize {
        self.arch.classes
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense<T>> {
        self.point_mlp.iter().chain(&self.head)
    }

    pub(crate) fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense<T>> {
        self.point_mlp.iter_mut().chain(self.head.iter_mut())
    }

    pub fn cast<U: Scalar>(&self) -> SetClassifier<U> {
        let c = |l: &Dense<T>| Dense {
            weight: l.weight.cast(),
            bias: l.bias.cast(),
        };
        SetClassifier {
            arch: self.arch.clone(),
            point_mlp: self.point_mlp.iter().map(c).collect(),
            head: self.head.iter().map(c).collect(),
        }
    }

    fn check_input(&self, coords: &Matrix<T>) -> Result<()> {
        if coords.cols() != self.arch.input_dim {
            return Err(Error::Dimension {
                op: "classifier input",
                left: format!("model width {}", self.arch.input_dim),
                right: format!("coordinates {}", coords.shape_str()),
            });
        }
        if coords.rows() == 0 {
            return Err(Error::EmptySet("classifier input has no elements".into()));
        }
        Ok(())
    }

    pub(crate) fn coords_of(&self, ps: &PointSet) -> Matrix<T> {
        ps.coords().cast()
    }

    /// `g1` on each row.
    pub fn point_features(&self, coords: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(coords)?;
        let mut h = coords.clone();
        let len = self.point_mlp.len();
        for (i, l) in self.point_mlp.iter().enumerate() {
            h = relu_unless_last(i, len, tensor::affine(&h, &l.weight, &l.bias)?);
        }
        Ok(h)
    }

    /// `g2` on a pooled 1×h row.
    pub fn head_logits(&self, pooled: &Matrix<T>) -> Result<Matrix<T>> {
        let mut z = pooled.clone();
        let len = self.head.len();
        for (i, l) in self.head.iter().enumerate() {
            z = relu_unless_last(i, len, tensor::affine(&z, &l.weight, &l.bias)?);
        }
        Ok(z)
    }

    /// Forward pass on raw coordinates. Counts one forward.
    pub fn forward_coords(
        &self,
        coords: &Matrix<T>,
        label: Option<usize>,
        counter: &EvalCounter,
    ) -> Result<ForwardRecord<T>> {
        let features = self.point_features(coords)?;
        let (pooled, witness) = tensor::feature_max(&features)?;
        let logits = self.head_logits(&pooled)?;
        let loss = label.map(|y| tensor::softmax_xent(&logits, y)).transpose()?;
        counter.add_forward();
        Ok(ForwardRecord {
            features,
            pooled,
            witness,
            logits,
            loss,
        })
    }

    /// Forward pass on a point set, with the loss against its own label.
    pub fn forward(&self, ps: &PointSet, counter: &EvalCounter) -> Result<ForwardRecord<T>> {
        self.forward_coords(&self.coords_of(ps), Some(ps.label()), counter)
    }

    /// Class with the largest logit, lowest index on ties.
    pub fn predict(&self, ps: &PointSet, counter: &EvalCounter) -> Result<usize> {
        let rec = self.forward_coords(&self.coords_of(ps), None, counter)?;
        Ok(argmax(rec.logits.row(0)).expect("at least two classes"))
    }

    /// Records the forward pass on `tape`. Parameters become leaves when
    /// `param_grads` is set and constants otherwise; the input likewise
    /// follows `input_grad`.
    pub(crate) fn trace(
        &self,
        tape: &mut Tape<T>,
        coords: Matrix<T>,
        param_grads: bool,
        input_grad: bool,
    ) -> Result<Traced> {
        self.check_input(&coords)?;
        let mut params = Vec::new();
        let mut add = |tape: &mut Tape<T>, m: &Matrix<T>| {
            let id = if param_grads {
                tape.leaf(m.clone())
            } else {
                tape.constant(m.clone())
            };
            params.push(id);
            id
        };
        let input = if input_grad {
            tape.leaf(coords)
        } else {
            tape.constant(coords)
        };
        let mut h = input;
        let len = self.point_mlp.len();
        for (i, l) in self.point_mlp.iter().enumerate() {
            let w = add(tape, &l.weight);
            let b = add(tape, &l.bias);
            h = tape.affine(h, w, b)?;
            if i + 1 < len {
                h = tape.relu(h);
            }
        }
        let features = h;
        let mut z = tape.feature_max(features)?;
        let len = self.head.len();
        for (i, l) in self.head.iter().enumerate() {
            let w = add(tape, &l.weight);
            let b = add(tape, &l.bias);
            z = tape.affine(z, w, b)?;
            if i + 1 < len {
                z = tape.relu(z);
            }
        }
        Ok(Traced {
            params,
            input,
            features,
            logits: z,
        })
    }

    /// One forward and one backward pass, keeping everything the selection
    /// scores need: pointwise features, pool, loss and both gradients.
    pub fn gradient_pass(
        &self,
        coords: &Matrix<T>,
        y: usize,
        counter: &EvalCounter,
    ) -> Result<GradientPass<T>> {
        let mut tape = Tape::new();
        // The input is a leaf so the whole pointwise stack carries gradients.
        let tr = self.trace(&mut tape, coords.clone(), false, true)?;
        let pooled_id = NodeId::after(tr.features);
        let loss = tape.softmax_xent(tr.logits, y)?;
        counter.add_forward();
        let mut grads = tape.backward(loss)?;
        counter.add_backward();
        Ok(GradientPass {
            loss: tape.value(loss).get(0, 0),
            features: tape.value(tr.features).clone(),
            pooled: tape.value(pooled_id).clone(),
            witness: tape.witness(pooled_id).expect("pool follows features").clone(),
            input_grad: grads.take(tr.input).expect("input is a leaf"),
            feature_grad: grads.take(tr.features).expect("features are differentiable"),
        })
    }

    /// `∂ loss(y, f(coords)) / ∂ coords` from one forward and one backward pass.
    pub fn input_gradient_coords(
        &self,
        coords: &Matrix<T>,
        y: usize,
        counter: &EvalCounter,
    ) -> Result<InputGradient<T>> {
        let p = self.gradient_pass(coords, y, counter)?;
        Ok(InputGradient {
            loss: p.loss,
            grad: p.input_grad,
        })
    }

    pub fn input_gradient(
        &self,
        ps: &PointSet,
        y: usize,
        counter: &EvalCounter,
    ) -> Result<InputGradient<T>> {
        self.input_gradient_coords(&self.coords_of(ps), y, counter)
    }

    /// Gradient of the loss at the `g1` output rows, one forward and one
    /// backward pass.
    pub fn feature_gradient_coords(
        &self,
        coords: &Matrix<T>,
        y: usize,
        counter: &EvalCounter,
    ) -> Result<FeatureGradient<T>> {
        let p = self.gradient_pass(coords, y, counter)?;
        Ok(FeatureGradient {
            loss: p.loss,
            features: p.features,
            grad: p.feature_grad,
        })
    }

    pub fn feature_gradient(
        &self,
        ps: &PointSet,
        y: usize,
        counter: &EvalCounter,
    ) -> Result<FeatureGradient<T>> {
        self.feature_gradient_coords(&self.coords_of(ps), y, counter)
    }

    /// Loss and parameter gradients for one labelled sample, in
    /// [`SetClassifier::layers`] order as (weight, bias) pairs. Not counted:
    /// training is not an objective evaluation.
    pub(crate) fn parameter_gradients(
        &self,
        coords: Matrix<T>,
        y: usize,
    ) -> Result<(T, Vec<Matrix<T>>, usize)> {
        let mut tape = Tape::new();
        let tr = self.trace(&mut tape, coords, true, false)?;
        let pred = argmax(tape.value(tr.logits).row(0)).expect("classes");
        let loss = tape.softmax_xent(tr.logits, y)?;
        let mut grads = tape.backward(loss)?;
        let g = tr
            .params
            .iter()
            .map(|&p| grads.take(p).expect("parameter leaf"))
            .collect();
        Ok((tape.value(loss).get(0, 0), g, pred))
    }
}

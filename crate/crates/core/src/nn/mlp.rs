//! Dense feed-forward network with layer normalization.
//!
//! Hidden layers compute `act(gain * norm(Wx + b) + offset)` where `norm`
//! standardizes the pre-activation across features (mean 0, variance 1).
//! The output layer is a plain affine map.
//!
//! Forward/backward operate on batches (`Array2`, one row per sample);
//! single-vector wrappers delegate to a batch of one.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;

use crate::{Error, Result};

const LN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Relu),
            t => Err(Error::Checkpoint(format!("unknown activation tag {t}"))),
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative given the pre-activation value.
    fn deriv(self, pre: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Parameters of a feed-forward network.
///
/// Weight matrices are stored `(in, out)` so a batch `X` of shape
/// `(B, in)` maps forward as `X.dot(W) + b`.
#[derive(Debug, Clone)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    activation: Activation,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    /// Layer-norm gain, one vector per hidden layer.
    pub ln_gain: Vec<Array1<f64>>,
    /// Layer-norm offset, one vector per hidden layer.
    pub ln_offset: Vec<Array1<f64>>,
}

/// Gradients with the same shapes as [`Mlp`] parameters.
#[derive(Debug, Clone)]
pub struct Grads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub ln_gain: Vec<Array1<f64>>,
    pub ln_offset: Vec<Array1<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Grads {
            weights: net.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            ln_gain: net.ln_gain.iter().map(|g| Array1::zeros(g.len())).collect(),
            ln_offset: net.ln_offset.iter().map(|o| Array1::zeros(o.len())).collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (i, w) in self.weights.iter().enumerate() {
            out.extend(w.iter());
            out.extend(self.biases[i].iter());
            if i < self.ln_gain.len() {
                out.extend(self.ln_gain[i].iter());
                out.extend(self.ln_offset[i].iter());
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            w.mapv_inplace(|v| v * s);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|v| v * s);
        }
        for g in &mut self.ln_gain {
            g.mapv_inplace(|v| v * s);
        }
        for o in &mut self.ln_offset {
            o.mapv_inplace(|v| v * s);
        }
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
        for (a, b) in self.ln_gain.iter_mut().zip(&other.ln_gain) {
            *a += b;
        }
        for (a, b) in self.ln_offset.iter_mut().zip(&other.ln_offset) {
            *a += b;
        }
    }
}

/// Per-layer values cached by [`Mlp::forward_cached`] for the backward pass.
pub struct ForwardCache {
    /// Input to each affine layer, shape `(B, in_i)`.
    inputs: Vec<Array2<f64>>,
    /// Normalized pre-activation of each hidden layer (before gain/offset).
    z_hat: Vec<Array2<f64>>,
    /// Per-sample 1/sqrt(var + eps) of each hidden layer.
    inv_std: Vec<Array1<f64>>,
    /// Post-layer-norm pre-activation (`gain * z_hat + offset`).
    pre_act: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

impl Mlp {
    /// Builds a network with uniform fan-in initialization,
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`; gains start at 1, offsets at 0.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!(
                "layer_sizes must have >= 2 positive entries, got {layer_sizes:?}"
            )));
        }
        let n = layer_sizes.len() - 1;
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut ln_gain = Vec::with_capacity(n - 1);
        let mut ln_offset = Vec::with_capacity(n - 1);
        for i in 0..n {
            let (fan_in, fan_out) = (layer_sizes[i], layer_sizes[i + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..bound));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
            if i < n - 1 {
                ln_gain.push(Array1::ones(fan_out));
                ln_offset.push(Array1::zeros(fan_out));
            }
        }
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            weights,
            biases,
            ln_gain,
            ln_offset,
        })
    }

    /// All-zero parameters (useful for constant-zero value functions in tests).
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut net = Mlp::new(layer_sizes, activation, &mut rng)?;
        for w in &mut net.weights {
            w.fill(0.0);
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for (i, w) in self.weights.iter().enumerate() {
            n += w.len() + self.biases[i].len();
            if i < self.ln_gain.len() {
                n += self.ln_gain[i].len() + self.ln_offset[i].len();
            }
        }
        n
    }

    /// Flattens all parameters in a fixed order (per layer: W, b, gain, offset).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (i, w) in self.weights.iter().enumerate() {
            out.extend(w.iter());
            out.extend(self.biases[i].iter());
            if i < self.ln_gain.len() {
                out.extend(self.ln_gain[i].iter());
                out.extend(self.ln_offset[i].iter());
            }
        }
        out
    }

    /// Writes back parameters flattened by [`Mlp::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let mut it = flat.iter().copied();
        let n_hidden = self.ln_gain.len();
        for i in 0..self.weights.len() {
            for v in self.weights[i].iter_mut() {
                *v = it.next().unwrap();
            }
            for v in self.biases[i].iter_mut() {
                *v = it.next().unwrap();
            }
            if i < n_hidden {
                for v in self.ln_gain[i].iter_mut() {
                    *v = it.next().unwrap();
                }
                for v in self.ln_offset[i].iter_mut() {
                    *v = it.next().unwrap();
                }
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    fn check_input(&self, dim: usize) -> Result<()> {
        if dim != self.layer_sizes[0] {
            return Err(Error::DimMismatch {
                expected: self.layer_sizes[0],
                got: dim,
                context: "network input",
            });
        }
        Ok(())
    }

    /// Batched forward pass; rows are samples.
    pub fn forward_batch(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(input)?.output)
    }

    /// Single-vector forward pass.
    pub fn forward(&self, input: ArrayView1<f64>) -> Result<Array1<f64>> {
        let x = input
            .to_owned()
            .into_shape_with_order((1, input.len()))
            .unwrap();
        let y = self.forward_batch(&x)?;
        Ok(y.row(0).to_owned())
    }

    /// Forward pass that keeps the intermediates needed by [`Mlp::backward`].
    pub fn forward_cached(&self, input: &Array2<f64>) -> Result<ForwardCache> {
        self.check_input(input.ncols())?;
        let n = self.weights.len();
        let mut inputs = Vec::with_capacity(n);
        let mut z_hat = Vec::with_capacity(n - 1);
        let mut inv_std = Vec::with_capacity(n - 1);
        let mut pre_act = Vec::with_capacity(n - 1);
        let mut x = input.clone();
        for i in 0..n {
            let mut z = x.dot(&self.weights[i]) + &self.biases[i];
            inputs.push(x);
            if i < n - 1 {
                // layer norm across features, then gain/offset, then activation
                let h = z.ncols() as f64;
                let mut istd = Array1::zeros(z.nrows());
                for (r, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
                    let mean = row.sum() / h;
                    row.mapv_inplace(|v| v - mean);
                    let var = row.iter().map(|v| v * v).sum::<f64>() / h;
                    let is = 1.0 / (var + LN_EPS).sqrt();
                    row.mapv_inplace(|v| v * is);
                    istd[r] = is;
                }
                inv_std.push(istd);
                z_hat.push(z.clone());
                let mut p = z;
                for mut row in p.axis_iter_mut(Axis(0)) {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = *v * self.ln_gain[i][j] + self.ln_offset[i][j];
                    }
                }
                pre_act.push(p.clone());
                p.mapv_inplace(|v| self.activation.apply(v));
                x = p;
            } else {
                return Ok(ForwardCache {
                    inputs,
                    z_hat,
                    inv_std,
                    pre_act,
                    output: z,
                });
            }
        }
        unreachable!()
    }

    /// Backward pass for the scalar `<output, output_grad>` objective.
    ///
    /// Returns parameter gradients and the gradient with respect to the input
    /// batch (needed for the action path of `Q(s, a)`).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: &Array2<f64>,
    ) -> (Grads, Array2<f64>) {
        let n = self.weights.len();
        let mut grads = Grads::zeros_like(self);
        let mut d = output_grad.clone();
        for i in (0..n).rev() {
            if i < n - 1 {
                // through activation
                let mut dp = d;
                dp.zip_mut_with(&cache.pre_act[i], |g, &p| *g *= self.activation.deriv(p));
                // gain/offset grads, then layer-norm backward
                let zh = &cache.z_hat[i];
                grads.ln_gain[i] = (&dp * zh).sum_axis(Axis(0));
                grads.ln_offset[i] = dp.sum_axis(Axis(0));
                let mut dz = &dp * &self.ln_gain[i];
                let h = dz.ncols() as f64;
                for (r, mut row) in dz.axis_iter_mut(Axis(0)).enumerate() {
                    let zrow = zh.row(r);
                    let mean_d = row.sum() / h;
                    let mean_dz = row
                        .iter()
                        .zip(zrow.iter())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        / h;
                    let is = cache.inv_std[i][r];
                    for (v, z) in row.iter_mut().zip(zrow.iter()) {
                        *v = is * (*v - mean_d - z * mean_dz);
                    }
                }
                d = dz;
            }
            grads.weights[i] = cache.inputs[i].t().dot(&d);
            grads.biases[i] = d.sum_axis(Axis(0));
            d = d.dot(&self.weights[i].t());
        }
        (grads, d)
    }

    /// Convenience single-vector backward.
    pub fn backward_single(
        &self,
        input: ArrayView1<f64>,
        output_grad: ArrayView1<f64>,
    ) -> Result<(Grads, Array1<f64>)> {
        let x = input
            .to_owned()
            .into_shape_with_order((1, input.len()))
            .unwrap();
        let cache = self.forward_cached(&x)?;
        if output_grad.len() != self.output_dim() {
            return Err(Error::DimMismatch {
                expected: self.output_dim(),
                got: output_grad.len(),
                context: "output gradient",
            });
        }
        let g = output_grad
            .to_owned()
            .into_shape_with_order((1, output_grad.len()))
            .unwrap();
        let (grads, dx) = self.backward(&cache, &g);
        Ok((grads, dx.row(0).to_owned()))
    }
}

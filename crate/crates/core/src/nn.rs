//! Minimal feed-forward network with manual backpropagation and an RMSProp
//! optimizer with minibatch accumulation. Generic over the scalar type; the
//! concrete aliases live at the crate root.
//!
//! Inputs may be given densely or as a list of hot indices (the observation
//! encodings are one-hot blocks); both paths compute the same values, which
//! is asserted by tests.

use rand::distributions::Uniform;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Rectifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<F> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<F>,
    pub bias: Vec<F>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet<F> {
    pub layers: Vec<Layer<F>>,
}

/// Network input, either dense or as the hot indices of a multi-hot vector.
#[derive(Debug, Clone, Copy)]
pub enum NetInput<'a, F> {
    Dense(&'a [F]),
    Hot { indices: &'a [usize], len: usize },
}

impl<'a, F: Scalar> NetInput<'a, F> {
    fn len(&self) -> usize {
        match self {
            NetInput::Dense(v) => v.len(),
            NetInput::Hot { len, .. } => *len,
        }
    }
}

/// Per-layer post-activation values retained for backpropagation.
pub struct ForwardCache<F> {
    input: CachedInput<F>,
    outputs: Vec<Vec<F>>,
}

enum CachedInput<F> {
    Dense(Vec<F>),
    Hot(Vec<usize>),
}

impl<F: Scalar> ForwardCache<F> {
    pub fn output(&self) -> &[F] {
        self.outputs.last().expect("net has at least one layer")
    }
}

impl<F: Scalar> DenseNet<F> {
    /// Initializes with weights i.i.d. uniform in `[-scale, scale]` and zero
    /// biases. Hidden layers use the rectifier, the last layer is linear.
    pub fn init<R: Rng>(dims: &[usize], rng: &mut R, scale: F) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "need at least input and output dims, got {dims:?}"
            )));
        }
        if let Some(&bad) = dims.iter().find(|&&d| d == 0) {
            return Err(Error::Config(format!("non-positive layer dim {bad}")));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, pair) in dims.windows(2).enumerate() {
            let (in_dim, out_dim) = (pair[0], pair[1]);
            let weights = if scale == F::zero() {
                vec![F::zero(); in_dim * out_dim]
            } else {
                let dist = Uniform::new_inclusive(-scale, scale);
                (0..in_dim * out_dim).map(|_| rng.sample(&dist)).collect()
            };
            layers.push(Layer {
                in_dim,
                out_dim,
                weights,
                bias: vec![F::zero(); out_dim],
                activation: if i + 1 == dims.len() - 1 {
                    Activation::Identity
                } else {
                    Activation::Rectifier
                },
            });
        }
        Ok(DenseNet { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, input: &[F]) -> Result<Vec<F>> {
        Ok(self.forward_input(NetInput::Dense(input))?.outputs.pop().unwrap())
    }

    pub fn forward_hot(&self, indices: &[usize]) -> Vec<F> {
        self.forward_input(NetInput::Hot {
            indices,
            len: self.input_dim(),
        })
        .expect("hot input length matches by construction")
        .outputs
        .pop()
        .unwrap()
    }

    /// Runs the forward pass keeping the per-layer activations.
    pub fn forward_cached(&self, input: NetInput<'_, F>) -> Result<ForwardCache<F>> {
        self.forward_input(input)
    }

    fn forward_input(&self, input: NetInput<'_, F>) -> Result<ForwardCache<F>> {
        if input.len() != self.input_dim() {
            return Err(Error::Usage(format!(
                "input length {} != input dim {}",
                input.len(),
                self.input_dim()
            )));
        }
        if let NetInput::Hot { indices, .. } = input {
            if let Some(&bad) = indices.iter().find(|&&i| i >= self.input_dim()) {
                return Err(Error::Usage(format!("hot index {bad} out of range")));
            }
        }
        let mut outputs: Vec<Vec<F>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = layer.bias.clone();
            match (i, input) {
                (0, NetInput::Hot { indices, .. }) => {
                    for &hot in indices {
                        for (o, row) in out
                            .iter_mut()
                            .zip(layer.weights.chunks_exact(layer.in_dim))
                        {
                            *o += row[hot];
                        }
                    }
                }
                _ => {
                    let prev: &[F] = if i == 0 {
                        match input {
                            NetInput::Dense(v) => v,
                            NetInput::Hot { .. } => unreachable!(),
                        }
                    } else {
                        &outputs[i - 1]
                    };
                    for (o, row) in out
                        .iter_mut()
                        .zip(layer.weights.chunks_exact(layer.in_dim))
                    {
                        let mut acc = F::zero();
                        for (w, x) in row.iter().zip(prev) {
                            acc += *w * *x;
                        }
                        *o += acc;
                    }
                }
            }
            if layer.activation == Activation::Rectifier {
                for o in &mut out {
                    if *o < F::zero() {
                        *o = F::zero();
                    }
                }
            }
            outputs.push(out);
        }
        Ok(ForwardCache {
            input: match input {
                NetInput::Dense(v) => CachedInput::Dense(v.to_vec()),
                NetInput::Hot { indices, .. } => CachedInput::Hot(indices.to_vec()),
            },
            outputs,
        })
    }

    /// Gradients of `output . output_grad` with respect to every parameter.
    pub fn backward(
        &self,
        cache: &ForwardCache<F>,
        output_grad: &[F],
    ) -> Result<GradientSet<F>> {
        let mut grads = GradientSet::zeros_like(self);
        self.backward_accumulate(cache, output_grad, &mut grads)?;
        Ok(grads)
    }

    /// Like [`backward`](Self::backward) but adds into an existing gradient
    /// buffer; the hot training loop accumulates straight into the
    /// optimizer's minibatch buffer this way.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache<F>,
        output_grad: &[F],
        grads: &mut GradientSet<F>,
    ) -> Result<()> {
        if output_grad.len() != self.output_dim() {
            return Err(Error::Usage(format!(
                "output_grad length {} != output dim {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        grads.check_shape(self)?;
        let mut delta = output_grad.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            // Rectifier subgradient: 0 at (and below) 0.
            if layer.activation == Activation::Rectifier {
                for (d, &o) in delta.iter_mut().zip(&cache.outputs[i]) {
                    if o <= F::zero() {
                        *d = F::zero();
                    }
                }
            }
            let (wgrad, bgrad) = &mut grads.layers[i];
            for (b, &d) in bgrad.iter_mut().zip(&delta) {
                *b += d;
            }
            if i == 0 {
                match &cache.input {
                    CachedInput::Hot(indices) => {
                        for (row, &d) in
                            wgrad.chunks_exact_mut(layer.in_dim).zip(&delta)
                        {
                            for &hot in indices {
                                row[hot] += d;
                            }
                        }
                    }
                    CachedInput::Dense(x) => {
                        for (row, &d) in
                            wgrad.chunks_exact_mut(layer.in_dim).zip(&delta)
                        {
                            for (g, &xi) in row.iter_mut().zip(x) {
                                *g += d * xi;
                            }
                        }
                    }
                }
            } else {
                let prev = &cache.outputs[i - 1];
                for (row, &d) in wgrad.chunks_exact_mut(layer.in_dim).zip(&delta) {
                    for (g, &xi) in row.iter_mut().zip(prev) {
                        *g += d * xi;
                    }
                }
                // propagate: delta_prev = W^T delta
                let mut prev_delta = vec![F::zero(); layer.in_dim];
                for (row, &d) in layer.weights.chunks_exact(layer.in_dim).zip(&delta)
                {
                    for (pd, &w) in prev_delta.iter_mut().zip(row) {
                        *pd += w * d;
                    }
                }
                delta = prev_delta;
            }
        }
        Ok(())
    }
}

/// Per-parameter gradients, shape-congruent with a [`DenseNet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSet<F> {
    /// One `(weight_grads, bias_grads)` pair per layer.
    pub layers: Vec<(Vec<F>, Vec<F>)>,
}

impl<F: Scalar> GradientSet<F> {
    pub fn zeros_like(net: &DenseNet<F>) -> Self {
        GradientSet {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![F::zero(); l.weights.len()], vec![F::zero(); l.bias.len()]))
                .collect(),
        }
    }

    fn check_shape(&self, net: &DenseNet<F>) -> Result<()> {
        let ok = self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|((w, b), l)| {
                w.len() == l.weights.len() && b.len() == l.bias.len()
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Usage("gradient shapes do not match network".into()))
        }
    }

    pub fn add(&mut self, other: &GradientSet<F>) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            for (a, &o) in w.iter_mut().zip(ow) {
                *a += o;
            }
            for (a, &o) in b.iter_mut().zip(ob) {
                *a += o;
            }
        }
    }

    pub fn zero(&mut self) {
        for (w, b) in &mut self.layers {
            w.fill(F::zero());
            b.fill(F::zero());
        }
    }

    pub fn max_abs(&self) -> F {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .fold(F::zero(), |m, &g| m.max(g.abs()))
    }
}

/// RMSProp with minibatch accumulation: gradients are accumulated per
/// contribution and the mean gradient is applied once every `batch_size`
/// contributions, with `v <- rho v + (1-rho) g^2` and
/// `theta <- theta - alpha g / sqrt(v + delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsProp<F> {
    pub alpha: F,
    pub rho: F,
    pub delta: F,
    pub batch_size: usize,
    mean_sq: GradientSet<F>,
    accum: GradientSet<F>,
    count: usize,
}

pub const RMSPROP_RHO: f64 = 0.9;
pub const RMSPROP_DELTA: f64 = 1e-8;
pub const RMSPROP_BATCH: usize = 10;

impl<F: Scalar> RmsProp<F> {
    pub fn new(net: &DenseNet<F>, alpha: F, rho: F, delta: F, batch_size: usize) -> Self {
        RmsProp {
            alpha,
            rho,
            delta,
            batch_size,
            mean_sq: GradientSet::zeros_like(net),
            accum: GradientSet::zeros_like(net),
            count: 0,
        }
    }

    pub fn with_defaults(net: &DenseNet<F>, alpha: F) -> Self {
        Self::new(
            net,
            alpha,
            F::from_f64(RMSPROP_RHO),
            F::from_f64(RMSPROP_DELTA),
            RMSPROP_BATCH,
        )
    }

    /// Accumulated-but-unapplied contribution count.
    pub fn pending(&self) -> usize {
        self.count
    }

    /// Minibatch gradient buffer for in-place accumulation.
    pub fn accum_mut(&mut self) -> &mut GradientSet<F> {
        &mut self.accum
    }

    /// Adds one gradient contribution; applies the update when the
    /// minibatch is full. Returns whether parameters changed.
    pub fn step(&mut self, net: &mut DenseNet<F>, grads: &GradientSet<F>) -> Result<bool> {
        grads.check_shape(net)?;
        self.accum.add(grads);
        self.contribute(net)
    }

    /// Marks the gradients already accumulated via
    /// [`accum_mut`](Self::accum_mut) as one contribution.
    pub fn contribute(&mut self, net: &mut DenseNet<F>) -> Result<bool> {
        self.accum.check_shape(net)?;
        self.count += 1;
        if self.count < self.batch_size {
            return Ok(false);
        }
        let inv = F::one() / F::from_f64(self.batch_size as f64);
        for ((layer, (wg, bg)), (wv, bv)) in net
            .layers
            .iter_mut()
            .zip(self.accum.layers.iter_mut())
            .zip(self.mean_sq.layers.iter_mut())
        {
            apply_update(
                &mut layer.weights,
                wg,
                wv,
                inv,
                self.alpha,
                self.rho,
                self.delta,
            );
            apply_update(&mut layer.bias, bg, bv, inv, self.alpha, self.rho, self.delta);
        }
        self.accum.zero();
        self.count = 0;
        Ok(true)
    }
}

fn apply_update<F: Scalar>(
    params: &mut [F],
    grads: &[F],
    mean_sq: &mut [F],
    inv_batch: F,
    alpha: F,
    rho: F,
    delta: F,
) {
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(mean_sq) {
        let g = g * inv_batch;
        *v = rho * *v + (F::one() - rho) * g * g;
        *p -= alpha * g / (*v + delta).sqrt();
    }
}

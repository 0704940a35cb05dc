//! Fully-connected Q-network with ReLU hidden layers and a linear head,
//! hand-written backpropagation for the squared TD error, and Adam.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use thiserror::Error;

use crate::env::{NUM_ACTIONS, OBS_DIM};

/// 26 inputs, three hidden layers of 256, one output per action.
pub const Q_NETWORK_DIMS: [usize; 5] = [OBS_DIM, 256, 256, 256, NUM_ACTIONS];

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("layer shapes differ: {0:?} vs {1:?}")]
    Shape(Vec<usize>, Vec<usize>),
    #[error("action index {0} out of range")]
    Action(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("a network needs at least an input and an output width, got {0:?}")]
    BadDims(Vec<usize>),
}

/// Weights (rows = outputs) and bias of one dense layer. Also used as the
/// gradient and Adam-moment carrier for that layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weights: Array2::zeros((outputs, inputs)), bias: Array1::zeros(outputs) }
    }

    fn zeros_like(&self) -> Self {
        Self { weights: Array2::zeros(self.weights.raw_dim()), bias: Array1::zeros(self.bias.raw_dim()) }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

fn dims_of(layers: &[Dense]) -> Vec<usize> {
    let mut dims = Vec::with_capacity(layers.len() + 1);
    if let Some(first) = layers.first() {
        dims.push(first.weights.ncols());
    }
    dims.extend(layers.iter().map(|l| l.weights.nrows()));
    dims
}

/// Parameter-shaped buffers: gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self { layers: net.layers.iter().map(Dense::zeros_like).collect() }
    }

    pub fn dims(&self) -> Vec<usize> {
        dims_of(&self.layers)
    }

    pub fn global_norm(&self) -> f64 {
        self.layers.iter().map(|l| l.weights.iter().chain(&l.bias).map(|g| g * g).sum::<f64>()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights *= factor;
            l.bias *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|g| g.is_finite())
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::values)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Dense::values_mut)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// All-zero network with the given layer widths.
    pub fn new(dims: &[usize]) -> Result<Self, NetError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(NetError::BadDims(dims.to_vec()));
        }
        Ok(Self { layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect() })
    }

    /// The 26→256→256→256→5 network, He-initialized.
    pub fn q_network<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut net = Self::new(&Q_NETWORK_DIMS).expect("static dims are valid");
        net.init_weights(rng);
        net
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NetError> {
        let dims = dims_of(&layers);
        for (l, w) in layers.iter().zip(dims.windows(2)) {
            if l.weights.ncols() != w[0] || l.bias.len() != w[1] {
                return Err(NetError::BadDims(dims));
            }
        }
        Self::new(&dims)?;
        let layers = layers
            .into_iter()
            .map(|l| Dense { weights: l.weights.as_standard_layout().into_owned(), bias: l.bias })
            .collect();
        Ok(Self { layers })
    }

    pub fn dims(&self) -> Vec<usize> {
        dims_of(&self.layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.nrows()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::values)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Dense::values_mut)
    }

    /// He-uniform weights in ±√(6/fan_in), zero biases.
    pub fn init_weights<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for layer in &mut self.layers {
            let bound = (6.0 / layer.weights.ncols() as f64).sqrt();
            layer.weights.iter_mut().for_each(|w| *w = rng.gen_range(-bound..bound));
            layer.bias.fill(0.0);
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NetError> {
        self.check_input(input.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous row");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Rows of `inputs` are independent samples.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>, NetError> {
        self.check_input(inputs.ncols())?;
        let last = self.layers.len() - 1;
        let mut h = inputs.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.weights.t()) + &layer.bias;
            if i < last {
                h.mapv_inplace(relu);
            }
        }
        Ok(h)
    }

    /// Squared TD error on one chosen action and its exact gradient.
    pub fn backward(&self, obs: &[f64], action: usize, td_target: f64) -> Result<(f64, Gradients), NetError> {
        self.check_input(obs.len())?;
        let x = ArrayView2::from_shape((1, obs.len()), obs).expect("contiguous row");
        self.backward_batch(x, &[action], &[td_target])
    }

    /// Mean over rows of `(target_i − Q(x_i)[a_i])²` and the mean gradient.
    pub fn backward_batch(
        &self,
        inputs: ArrayView2<f64>,
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, Gradients), NetError> {
        self.check_input(inputs.ncols())?;
        let n = inputs.nrows();
        if actions.len() != n {
            return Err(NetError::Dimension { expected: n, found: actions.len() });
        }
        if targets.len() != n {
            return Err(NetError::Dimension { expected: n, found: targets.len() });
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= self.output_dim()) {
            return Err(NetError::Action(a));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(NetError::NonFinite("td_target"));
        }

        let last = self.layers.len() - 1;
        // activations[l] is the input to layer l; the final entry is Q.
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(inputs.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&layer.weights.t()) + &layer.bias;
            if i < last {
                z.mapv_inplace(relu);
            }
            activations.push(z);
        }
        let q = activations.pop().expect("output layer");

        let scale = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut delta = Array2::<f64>::zeros(q.raw_dim());
        for (i, (&a, &t)) in actions.iter().zip(targets).enumerate() {
            let residual = t - q[[i, a]];
            loss += residual * residual;
            delta[[i, a]] = -2.0 * residual * scale;
        }
        loss *= scale;

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = &activations[l];
            // Written into a row-major buffer: `dot` may pick column-major output for thin operands.
            let mut weights = Array2::zeros(self.layers[l].weights.raw_dim());
            general_mat_mul(1.0, &delta.t(), input, 0.0, &mut weights);
            let bias = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut upstream = delta.dot(&self.layers[l].weights);
                // ReLU derivative from the stored post-activation.
                Zip::from(&mut upstream).and(input).for_each(|d, &h| {
                    if h <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = upstream;
            }
            grads.push(Dense { weights, bias });
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }

    /// Overwrites `self` with `src`'s parameters.
    pub fn copy_from(&mut self, src: &Mlp) -> Result<(), NetError> {
        if self.dims() != src.dims() {
            return Err(NetError::Shape(self.dims(), src.dims()));
        }
        for (dst, s) in self.layers.iter_mut().zip(&src.layers) {
            dst.weights.assign(&s.weights);
            dst.bias.assign(&s.bias);
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    fn check_input(&self, len: usize) -> Result<(), NetError> {
        if len != self.input_dim() {
            return Err(NetError::Dimension { expected: self.input_dim(), found: len });
        }
        Ok(())
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameter arrays are standard layout")
}

fn slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameter arrays are standard layout")
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Moments of parameters whose gradient stays zero (dead ReLU units) decay
/// geometrically into subnormals, where `0.9 * m` rounds back to the same
/// value forever and every later update runs on the slow subnormal path.
#[inline]
fn flush(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

impl AdamState {
    pub const DEFAULT_LR: f64 = 1e-3;

    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected Adam update of `net` in place.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<(), NetError> {
        if grads.dims() != net.dims() {
            return Err(NetError::Shape(net.dims(), grads.dims()));
        }
        if self.m.dims() != net.dims() {
            return Err(NetError::Shape(net.dims(), self.m.dims()));
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powf(self.t as f64);
        let c2 = 1.0 - b2.powf(self.t as f64);
        let (lr, eps) = (self.lr, self.eps);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = flush(b1 * *m + (1.0 - b1) * g);
                *v = flush(b2 * *v + (1.0 - b2) * g * g);
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        };
        let layers = net.layers.iter_mut().zip(&grads.layers).zip(self.m.layers.iter_mut().zip(&mut self.v.layers));
        for ((p, g), (m, v)) in layers {
            update(slice_mut(&mut p.weights), slice(&g.weights), slice_mut(&mut m.weights), slice_mut(&mut v.weights));
            update(
                p.bias.as_slice_mut().expect("owned"),
                g.bias.as_slice().expect("owned"),
                m.bias.as_slice_mut().expect("owned"),
                v.bias.as_slice_mut().expect("owned"),
            );
        }
        Ok(())
    }
}

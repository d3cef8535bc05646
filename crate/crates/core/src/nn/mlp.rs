use serde::{Deserialize, Serialize};

use super::{Matrix, NnError};
use crate::rng::{fill_standard_normal, seeded};

/// Negative-side slope of the hidden activation.
pub const LEAKY_SLOPE: f64 = 0.2;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Linear,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Linear => z,
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative given the pre-activation `z` and the activation output `a`.
    /// The leaky-relu subgradient at 0 is the negative-side slope.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Linear => 1.0,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

/// Logistic function kept strictly inside (0, 1) for every finite input.
pub fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Adam first/second moments mirroring the parameter shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m_weights: Vec<Matrix>,
    pub v_weights: Vec<Matrix>,
    pub m_biases: Vec<Matrix>,
    pub v_biases: Vec<Matrix>,
    pub step: u64,
}

/// Parameter gradients with the same layout as the model, plus the gradient
/// with respect to the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Matrix>,
    pub input: Option<Matrix>,
}

impl GradientBundle {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: model
                .biases
                .iter()
                .map(|b| Matrix::zeros(1, b.cols()))
                .collect(),
            input: None,
        }
    }

    /// `self += other * s` over parameter gradients; input gradients are summed
    /// when both sides carry one with the same shape.
    pub fn add_scaled(&mut self, other: &GradientBundle, s: f64) -> Result<(), NnError> {
        if self.weights.len() != other.weights.len() {
            return Err(NnError::Shape("gradient bundles of different depth".into()));
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.add_scaled(b, s)?;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.add_scaled(b, s)?;
        }
        match (&mut self.input, &other.input) {
            (Some(a), Some(b)) => a.add_scaled(b, s)?,
            (None, Some(b)) => {
                let mut b = b.clone();
                b.scale(s);
                self.input = Some(b);
            }
            _ => {}
        }
        Ok(())
    }

    /// Parameter gradients flattened in `[w0, b0, w1, b1, ...]` order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b.data());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .all(Matrix::is_finite)
            && self.input.as_ref().is_none_or(Matrix::is_finite)
    }
}

/// Intermediate values of one forward pass, consumed by [`MlpModel::backward_trace`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[l]` is the input of layer `l`; the last entry is the output.
    activations: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        self.activations
            .last()
            .expect("trace holds at least the input")
    }

    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }
}

/// Fully connected feedforward network with leaky-relu hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Matrix>,
    activations: Vec<Activation>,
    adam: AdamState,
    rng_seed: u64,
}

impl MlpModel {
    /// Randomly initialized network. Hidden weights use a leaky-relu-aware
    /// He scale, the output layer `1/sqrt(fan_in)`; biases start at zero.
    pub fn new(layer_dims: &[usize], output: Activation, seed: u64) -> Result<Self, NnError> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(NnError::Config(format!(
                "layer dims {layer_dims:?} need at least two positive entries"
            )));
        }
        let mut rng = seeded(seed, 0);
        let n_layers = layer_dims.len() - 1;
        let hidden_gain = (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt();
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
            let gain = if l + 1 == n_layers { 1.0 } else { hidden_gain };
            let std = gain / (fan_in as f64).sqrt();
            let mut w = vec![0.0; fan_in * fan_out];
            fill_standard_normal(&mut rng, &mut w);
            w.iter_mut().for_each(|v| *v *= std);
            weights.push(Matrix::from_vec(fan_in, fan_out, w)?);
            biases.push(Matrix::zeros(1, fan_out));
        }
        let mut activations = vec![Activation::LeakyRelu; n_layers - 1];
        activations.push(output);
        Ok(Self::assemble(
            layer_dims.to_vec(),
            weights,
            biases,
            activations,
            seed,
        ))
    }

    /// Network from explicit parameters with fresh optimizer state.
    pub fn from_parameters(
        weights: Vec<Matrix>,
        biases: Vec<Matrix>,
        output: Activation,
    ) -> Result<Self, NnError> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(NnError::Shape("need one bias per weight matrix".into()));
        }
        let mut layer_dims = vec![weights[0].rows()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rows() != *layer_dims.last().unwrap() || b.shape() != (1, w.cols()) {
                return Err(NnError::Shape(format!("layer {l} is inconsistent")));
            }
            layer_dims.push(w.cols());
        }
        let mut activations = vec![Activation::LeakyRelu; weights.len() - 1];
        activations.push(output);
        Ok(Self::assemble(layer_dims, weights, biases, activations, 0))
    }

    fn assemble(
        layer_dims: Vec<usize>,
        weights: Vec<Matrix>,
        biases: Vec<Matrix>,
        activations: Vec<Activation>,
        rng_seed: u64,
    ) -> Self {
        let zeros_w: Vec<Matrix> = weights
            .iter()
            .map(|w| Matrix::zeros(w.rows(), w.cols()))
            .collect();
        let zeros_b: Vec<Matrix> = biases.iter().map(|b| Matrix::zeros(1, b.cols())).collect();
        Self {
            layer_dims,
            weights,
            biases,
            activations,
            adam: AdamState {
                m_weights: zeros_w.clone(),
                v_weights: zeros_w,
                m_biases: zeros_b.clone(),
                v_biases: zeros_b,
                step: 0,
            },
            rng_seed,
        }
    }

    /// Reassembles a model from checkpointed parts, validating every shape.
    pub(crate) fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Matrix>,
        biases: Vec<Matrix>,
        activations: Vec<Activation>,
        adam: AdamState,
        rng_seed: u64,
    ) -> Result<Self, NnError> {
        let n = layer_dims.len().saturating_sub(1);
        if n == 0
            || weights.len() != n
            || biases.len() != n
            || activations.len() != n
            || adam.m_weights.len() != n
            || adam.v_weights.len() != n
            || adam.m_biases.len() != n
            || adam.v_biases.len() != n
        {
            return Err(NnError::Shape("checkpoint layer counts disagree".into()));
        }
        for l in 0..n {
            let ws = (layer_dims[l], layer_dims[l + 1]);
            let bs = (1, layer_dims[l + 1]);
            if weights[l].shape() != ws
                || adam.m_weights[l].shape() != ws
                || adam.v_weights[l].shape() != ws
                || biases[l].shape() != bs
                || adam.m_biases[l].shape() != bs
                || adam.v_biases[l].shape() != bs
            {
                return Err(NnError::Shape(format!(
                    "checkpoint layer {l} has wrong shape"
                )));
            }
        }
        Ok(Self {
            layer_dims,
            weights,
            biases,
            activations,
            adam,
            rng_seed,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Matrix] {
        &self.biases
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn adam_state(&self) -> &AdamState {
        &self.adam
    }

    pub fn step(&self) -> u64 {
        self.adam.step
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn output_activation(&self) -> Activation {
        *self.activations.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.weights
            .iter()
            .chain(&self.biases)
            .map(|m| m.data().len())
            .sum()
    }

    /// Mutable parameter `idx` in `[w0, b0, w1, b1, ...]` flat order.
    pub fn param_mut(&mut self, idx: usize) -> &mut f64 {
        let mut idx = idx;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let wl = w.data().len();
            if idx < wl {
                return &mut w.data_mut()[idx];
            }
            idx -= wl;
            let bl = b.data().len();
            if idx < bl {
                return &mut b.data_mut()[idx];
            }
            idx -= bl;
        }
        panic!("parameter index out of range");
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix, NnError> {
        self.check_input(input)?;
        let mut x = input.clone();
        for l in 0..self.weights.len() {
            let mut z = x.matmul(&self.weights[l])?;
            z.add_row_broadcast(&self.biases[l])?;
            let act = self.activations[l];
            z.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            x = z;
        }
        Ok(x)
    }

    /// Forward pass that keeps what backpropagation needs.
    pub fn forward_trace(&self, input: &Matrix) -> Result<Trace, NnError> {
        self.check_input(input)?;
        let n = self.weights.len();
        let mut activations = Vec::with_capacity(n + 1);
        let mut pre_activations = Vec::with_capacity(n);
        activations.push(input.clone());
        for l in 0..n {
            let mut z = activations[l].matmul(&self.weights[l])?;
            z.add_row_broadcast(&self.biases[l])?;
            let act = self.activations[l];
            let a = z.map(|v| act.apply(v));
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(Trace {
            activations,
            pre_activations,
        })
    }

    /// Gradients of `Σ output_grad ⊙ output` with respect to every parameter
    /// and to the input.
    pub fn backward(
        &self,
        input: &Matrix,
        output_grad: &Matrix,
    ) -> Result<GradientBundle, NnError> {
        let trace = self.forward_trace(input)?;
        self.backward_trace(&trace, output_grad)
    }

    pub fn backward_trace(
        &self,
        trace: &Trace,
        output_grad: &Matrix,
    ) -> Result<GradientBundle, NnError> {
        let n = self.weights.len();
        if output_grad.shape() != trace.output().shape() || trace.pre_activations.len() != n {
            return Err(NnError::Shape(format!(
                "output gradient {:?} does not match forward output {:?}",
                output_grad.shape(),
                trace.output().shape()
            )));
        }
        let mut weights = vec![Matrix::zeros(0, 0); n];
        let mut biases = vec![Matrix::zeros(0, 0); n];
        let mut delta = output_grad.clone();
        let mut input_grad = None;
        for l in (0..n).rev() {
            let act = self.activations[l];
            let pre = &trace.pre_activations[l];
            let post = &trace.activations[l + 1];
            for ((d, &z), &a) in delta.data_mut().iter_mut().zip(pre.data()).zip(post.data()) {
                *d *= act.derivative(z, a);
            }
            weights[l] = trace.activations[l].t_matmul(&delta)?;
            biases[l] = delta.sum_rows();
            let upstream = delta.matmul_t(&self.weights[l])?;
            if l == 0 {
                input_grad = Some(upstream);
            } else {
                delta = upstream;
            }
        }
        Ok(GradientBundle {
            weights,
            biases,
            input: input_grad,
        })
    }

    /// One Adam update with bias-corrected moments. Fails without touching
    /// the model if any gradient entry is non-finite.
    pub fn adam_step(&mut self, grads: &GradientBundle, lr: f64) -> Result<(), NnError> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(NnError::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if grads.weights.len() != self.weights.len()
            || grads
                .weights
                .iter()
                .zip(&self.weights)
                .chain(grads.biases.iter().zip(&self.biases))
                .any(|(g, p)| g.shape() != p.shape())
        {
            return Err(NnError::Shape(
                "gradient bundle does not mirror the model".into(),
            ));
        }
        if !grads
            .weights
            .iter()
            .chain(&grads.biases)
            .all(Matrix::is_finite)
        {
            return Err(NnError::NonFinite("gradient".into()));
        }
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        let update = |p: &mut Matrix, m: &mut Matrix, v: &mut Matrix, g: &Matrix| {
            for (((p, m), v), &g) in p
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        };
        for l in 0..self.weights.len() {
            update(
                &mut self.weights[l],
                &mut self.adam.m_weights[l],
                &mut self.adam.v_weights[l],
                &grads.weights[l],
            );
            update(
                &mut self.biases[l],
                &mut self.adam.m_biases[l],
                &mut self.adam.v_biases[l],
                &grads.biases[l],
            );
        }
        Ok(())
    }

    fn check_input(&self, input: &Matrix) -> Result<(), NnError> {
        if input.cols() != self.input_dim() {
            return Err(NnError::Shape(format!(
                "input has {} columns, model expects {}",
                input.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }
}

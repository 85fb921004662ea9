//! Dense-network substrate: MLPs with deterministic init, forward pass,
//! reverse-mode gradients, and Adam.
//!
//! All math is f64. Weights are row-major `(out_dim, in_dim)`. Hidden layers
//! use the spec's activation; the output layer is always linear so networks
//! span all of R^k.

use serde::{Deserialize, Serialize};

use crate::error::{DrndError, Result};
use crate::rng::Rng64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed in terms of the post-activation value `a`.
    fn deriv_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// Architecture + seed. Identical (spec, seed) pairs produce identical
/// parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    /// Multiplier on the weight init bound (biases are unaffected).
    #[serde(default = "default_gain")]
    pub init_gain: OrderedGain,
}

fn default_gain() -> OrderedGain {
    OrderedGain(1.0)
}

/// f64 wrapper carrying Eq/Hash via bit pattern so specs stay comparable.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OrderedGain(pub f64);

impl PartialEq for OrderedGain {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for OrderedGain {}

impl MlpSpec {
    pub fn new(layer_dims: Vec<usize>, activation: Activation, seed: u64) -> Self {
        Self::with_gain(layer_dims, activation, seed, 1.0)
    }

    pub fn with_gain(
        layer_dims: Vec<usize>,
        activation: Activation,
        seed: u64,
        init_gain: f64,
    ) -> Self {
        MlpSpec {
            layer_dims,
            activation,
            seed,
            init_gain: OrderedGain(init_gain),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(DrndError::Config(format!(
                "layer_dims needs at least input and output dims, got {:?}",
                self.layer_dims
            )));
        }
        if self.layer_dims.iter().any(|&d| d == 0) {
            return Err(DrndError::Config(format!(
                "layer_dims must all be >= 1, got {:?}",
                self.layer_dims
            )));
        }
        if !(self.init_gain.0.is_finite() && self.init_gain.0 > 0.0) {
            return Err(DrndError::Config(format!(
                "init_gain must be a positive real, got {}",
                self.init_gain.0
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }
}

/// One dense layer: row-major weights `(out, in)` plus bias.
/// Also reused as the gradient container (same shapes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Layer {
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

/// Gradients shaped like [`MlpParams`].
pub type MlpGrads = MlpParams;

impl MlpParams {
    pub fn zeros_like(&self) -> MlpParams {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_dim, l.out_dim))
                .collect(),
            activation: self.activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Scale every entry in place (used to average accumulated gradients).
    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for w in &mut layer.w {
                *w *= factor;
            }
            for b in &mut layer.b {
                *b *= factor;
            }
        }
    }

    /// Accumulate `other` into self, entry-wise.
    pub fn add_assign(&mut self, other: &MlpParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.w.iter_mut().zip(&b.w) {
                *x += *y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += *y;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }

    /// Order-sensitive hash of the parameter bit patterns. Used to assert
    /// that frozen networks are never mutated.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for layer in &self.layers {
            mix(layer.in_dim as u64);
            mix(layer.out_dim as u64);
            for &w in &layer.w {
                mix(w.to_bits());
            }
            for &b in &layer.b {
                mix(b.to_bits());
            }
        }
        h
    }
}

/// Initialize parameters: weights and biases uniform in +-1/sqrt(fan_in)
/// per layer (the usual dense-layer default), driven only by `spec.seed`
/// (one derived stream per layer).
pub fn mlp_init(spec: &MlpSpec) -> Result<MlpParams> {
    spec.validate()?;
    let mut layers = Vec::with_capacity(spec.layer_dims.len() - 1);
    for (i, pair) in spec.layer_dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let mut rng = Rng64::derive(spec.seed, i as u64);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w_bound = spec.init_gain.0 * bound;
        let mut layer = Layer::zeros(fan_in, fan_out);
        for w in &mut layer.w {
            *w = rng.uniform_range(-w_bound, w_bound);
        }
        for b in &mut layer.b {
            *b = rng.uniform_range(-bound, bound);
        }
        layers.push(layer);
    }
    Ok(MlpParams {
        layers,
        activation: spec.activation,
    })
}

fn check_input(params: &MlpParams, input: &[f64]) -> Result<()> {
    if input.len() != params.input_dim() {
        return Err(DrndError::Shape(format!(
            "input length {} does not match network input dim {}",
            input.len(),
            params.input_dim()
        )));
    }
    Ok(())
}

/// Forward pass. Pure function of (params, input).
pub fn mlp_forward(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    check_input(params, input)?;
    let n_layers = params.layers.len();
    let mut act = input.to_vec();
    for (i, layer) in params.layers.iter().enumerate() {
        let last = i + 1 == n_layers;
        let mut next = vec![0.0; layer.out_dim];
        for (o, out) in next.iter_mut().enumerate() {
            let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
            let mut z = layer.b[o];
            for (w, a) in row.iter().zip(&act) {
                z += w * a;
            }
            *out = if last { z } else { params.activation.apply(z) };
        }
        act = next;
    }
    Ok(act)
}

/// Per-layer post-activation values kept for the backward pass.
pub struct ForwardCache {
    /// activations[0] = input, activations[i] = output of layer i-1.
    pub activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

pub fn mlp_forward_cached(params: &MlpParams, input: &[f64]) -> Result<ForwardCache> {
    check_input(params, input)?;
    let n_layers = params.layers.len();
    let mut activations = Vec::with_capacity(n_layers + 1);
    activations.push(input.to_vec());
    for (i, layer) in params.layers.iter().enumerate() {
        let last = i + 1 == n_layers;
        let act = activations.last().unwrap();
        let mut next = vec![0.0; layer.out_dim];
        for (o, out) in next.iter_mut().enumerate() {
            let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
            let mut z = layer.b[o];
            for (w, a) in row.iter().zip(act) {
                z += w * a;
            }
            *out = if last { z } else { params.activation.apply(z) };
        }
        activations.push(next);
    }
    Ok(ForwardCache { activations })
}

/// Reverse-mode gradients for a single input. Returns parameter gradients
/// and the gradient with respect to the input vector.
pub fn mlp_backward(
    params: &MlpParams,
    input: &[f64],
    upstream_grad: &[f64],
) -> Result<(MlpGrads, Vec<f64>)> {
    let cache = mlp_forward_cached(params, input)?;
    mlp_backward_cached(params, &cache, upstream_grad)
}

/// Backward pass reusing a forward cache (hot path for batched training).
pub fn mlp_backward_cached(
    params: &MlpParams,
    cache: &ForwardCache,
    upstream_grad: &[f64],
) -> Result<(MlpGrads, Vec<f64>)> {
    if upstream_grad.len() != params.output_dim() {
        return Err(DrndError::Shape(format!(
            "upstream grad length {} does not match output dim {}",
            upstream_grad.len(),
            params.output_dim()
        )));
    }
    let n_layers = params.layers.len();
    let mut grads = params.zeros_like();
    let mut delta = upstream_grad.to_vec();
    for i in (0..n_layers).rev() {
        let layer = &params.layers[i];
        let last = i + 1 == n_layers;
        // delta currently holds dL/d(activation of layer i). Convert to
        // dL/d(pre-activation); the output layer is linear.
        if !last {
            let out_act = &cache.activations[i + 1];
            for (d, &a) in delta.iter_mut().zip(out_act) {
                *d *= params.activation.deriv_from_output(a);
            }
        }
        let in_act = &cache.activations[i];
        let g = &mut grads.layers[i];
        for (o, &d) in delta.iter().enumerate() {
            g.b[o] = d;
            let row = &mut g.w[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (gw, &a) in row.iter_mut().zip(in_act) {
                *gw = d * a;
            }
        }
        // Propagate to the previous activation.
        let mut prev = vec![0.0; layer.in_dim];
        for (o, &d) in delta.iter().enumerate() {
            let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (p, &w) in prev.iter_mut().zip(row) {
                *p += d * w;
            }
        }
        delta = prev;
    }
    Ok((grads, delta))
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub m: MlpParams,
    pub v: MlpParams,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &MlpParams, lr: f64) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update in place. Non-finite gradients are rejected with the
/// offending layer identified; zero gradients with zero moments leave the
/// parameters bitwise unchanged.
pub fn adam_step(state: &mut AdamState, params: &mut MlpParams, grads: &MlpGrads) -> Result<()> {
    if grads.layers.len() != params.layers.len() {
        return Err(DrndError::Shape(
            "gradient layer count does not match parameters".into(),
        ));
    }
    for (i, g) in grads.layers.iter().enumerate() {
        if g.w.iter().chain(&g.b).any(|v| !v.is_finite()) {
            return Err(DrndError::NonFinite(format!("gradient of layer {i}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.layers.len() {
        let (pw, pb) = {
            let l = &mut params.layers[i];
            (&mut l.w, &mut l.b)
        };
        let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for j in 0..p.len() {
                m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
                v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                // 0/(0 + eps) = 0, so zero moments leave p[j] bitwise intact.
                p[j] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
            }
        };
        update(
            pw,
            &mut state.m.layers[i].w,
            &mut state.v.layers[i].w,
            &grads.layers[i].w,
        );
        update(
            pb,
            &mut state.m.layers[i].b,
            &mut state.v.layers[i].b,
            &grads.layers[i].b,
        );
    }
    Ok(())
}

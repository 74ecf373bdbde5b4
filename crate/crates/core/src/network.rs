//! The coefficient network: a ReLU feedforward map from contextual features
//! to one dense coefficient per explanatory feature, plus an optional
//! unpenalized intercept output.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::{check_finite, soft_threshold};

/// Multiplier on `p * m` that sets the trainable parameter budget.
pub const PARAMS_PER_FEATURE_PAIR: usize = 32;
pub const DEFAULT_HIDDEN_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    /// Applies the inverse link to a linear predictor.
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            Task::Regression => eta,
            Task::Classification => sigmoid(eta),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Number of explanatory features (coefficients produced per row).
    pub p: usize,
    /// Number of contextual features (network inputs).
    pub m: usize,
    /// Zero hidden layers gives constant coefficients (an ordinary lasso).
    pub hidden_layers: usize,
    /// Neurons per hidden layer; sized from the parameter budget when `None`.
    pub width: Option<usize>,
    pub include_intercept: bool,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(p: usize, m: usize) -> Self {
        Self {
            p,
            m,
            hidden_layers: DEFAULT_HIDDEN_LAYERS,
            width: None,
            include_intercept: true,
            seed: 0,
        }
    }

    /// Constant-coefficient configuration.
    pub fn constant(p: usize, m: usize) -> Self {
        Self {
            hidden_layers: 0,
            ..Self::new(p, m)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn outputs(&self) -> usize {
        self.p + usize::from(self.include_intercept)
    }

    /// Hidden width. With `h` hidden layers and `q` outputs the parameter
    /// count is `(h-1) d^2 + (m + q + h) d + q`; `d` is the rounded positive
    /// root of that count equal to `32 p m`.
    pub fn resolved_width(&self) -> Result<usize> {
        if self.hidden_layers == 0 {
            return Ok(0);
        }
        if let Some(w) = self.width {
            if w == 0 {
                return Err(Error::invalid("hidden width must be at least 1"));
            }
            return Ok(w);
        }
        let h = self.hidden_layers as f64;
        let q = self.outputs() as f64;
        let budget = (PARAMS_PER_FEATURE_PAIR * self.p * self.m) as f64;
        let a = h - 1.0;
        let b = self.m as f64 + q + h;
        let c = q - budget;
        let root = if a == 0.0 {
            -c / b
        } else {
            (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
        };
        let d = root.round();
        if !(d >= 1.0) {
            return Err(Error::invalid(format!(
                "parameter budget 32*p*m = {budget} is too small for {} hidden layers (p = {}, m = {})",
                self.hidden_layers, self.p, self.m
            )));
        }
        Ok(d as usize)
    }

    fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::invalid("at least one explanatory feature is required"));
        }
        Ok(())
    }
}

/// One affine map `x -> W x + b` with `W` stored as `(out, in)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub config: NetworkConfig,
    pub layers: Vec<Dense>,
}

/// Gradients laid out exactly like [`NetworkModel::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(model: &NetworkModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Dense::zeros(l.out_dim(), l.in_dim()))
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }
}

fn flatten_layers(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weight.iter().copied());
        out.extend(l.bias.iter().copied());
    }
    out
}

/// Activations recorded by [`forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    /// Input to each layer; the first entry is the network input.
    inputs: Vec<Array2<f64>>,
    /// Raw network output, `n x (p + intercept)`.
    pub output: Array2<f64>,
}

impl ForwardTape {
    pub fn rows(&self) -> usize {
        self.output.nrows()
    }
}

/// Dense coefficients and the intercept produced by one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutput {
    pub coefficients: Array2<f64>,
    pub intercept: Option<Array1<f64>>,
}

impl NetworkModel {
    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn p(&self) -> usize {
        self.config.p
    }

    pub fn m(&self) -> usize {
        self.config.m
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            l.weight
                .iter_mut()
                .chain(l.bias.iter_mut())
                .for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    /// Checks layer shapes chain from `m` (or nothing, in constant mode) to
    /// the configured outputs and that every parameter is finite.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let expected = self.config.hidden_layers + 1;
        if self.layers.len() != expected {
            return Err(Error::shape(format!(
                "expected {expected} layers, found {}",
                self.layers.len()
            )));
        }
        let mut in_dim = if self.config.hidden_layers == 0 {
            0
        } else {
            self.config.m
        };
        for (k, l) in self.layers.iter().enumerate() {
            if l.in_dim() != in_dim || l.bias.len() != l.out_dim() {
                return Err(Error::shape(format!("layer {k} has inconsistent shape")));
            }
            in_dim = l.out_dim();
            check_finite(l.weight.view(), "layer weights")?;
            if let Some(j) = l.bias.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "layer bias",
                    row: k,
                    col: j,
                });
            }
        }
        if in_dim != self.config.outputs() {
            return Err(Error::shape("last layer does not match the configured outputs"));
        }
        Ok(())
    }

    /// Adds `scale * grads` to the parameters.
    pub fn axpy(&mut self, scale: f64, grads: &Gradients) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            l.weight.scaled_add(scale, &g.weight);
            l.bias.scaled_add(scale, &g.bias);
        }
    }

    /// Splits a raw output matrix into coefficients and intercept.
    pub fn split_output(&self, raw: &Array2<f64>) -> NetworkOutput {
        let p = self.config.p;
        NetworkOutput {
            coefficients: raw.slice(s![.., ..p]).to_owned(),
            intercept: self.config.include_intercept.then(|| raw.column(p).to_owned()),
        }
    }
}

/// Builds a network with deterministic Glorot-uniform weights and zero biases.
pub fn init_network(config: NetworkConfig) -> Result<NetworkModel> {
    config.validate()?;
    let width = config.resolved_width()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let outputs = config.outputs();

    let mut dims = Vec::with_capacity(config.hidden_layers + 2);
    if config.hidden_layers == 0 {
        dims.push(0);
    } else {
        dims.push(config.m);
        dims.extend(std::iter::repeat_n(width, config.hidden_layers));
    }
    dims.push(outputs);

    let layers = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-limit..=limit));
            Dense {
                weight,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(NetworkModel { config, layers })
}

fn check_context(model: &NetworkModel, z: ArrayView2<'_, f64>) -> Result<()> {
    if z.ncols() != model.config.m {
        return Err(Error::shape(format!(
            "network expects {} contextual columns, got {}",
            model.config.m,
            z.ncols()
        )));
    }
    check_finite(z, "contextual features")
}

/// Evaluates the network on each row of `z`.
pub fn forward(model: &NetworkModel, z: ArrayView2<'_, f64>) -> Result<(NetworkOutput, ForwardTape)> {
    check_context(model, z)?;
    let tape = forward_tape(model, z);
    Ok((model.split_output(&tape.output), tape))
}

pub(crate) fn forward_tape(model: &NetworkModel, z: ArrayView2<'_, f64>) -> ForwardTape {
    let n = z.nrows();
    let first = if model.config.hidden_layers == 0 {
        Array2::zeros((n, 0))
    } else {
        z.to_owned()
    };
    let mut inputs = Vec::with_capacity(model.layers.len());
    inputs.push(first);
    let last = model.layers.len() - 1;
    let mut output = Array2::zeros((0, 0));
    for (k, layer) in model.layers.iter().enumerate() {
        let a = inputs.last().unwrap();
        let mut pre = a.dot(&layer.weight.t());
        pre += &layer.bias;
        if k == last {
            output = pre;
        } else {
            pre.mapv_inplace(|v| v.max(0.0));
            inputs.push(pre);
        }
    }
    ForwardTape { inputs, output }
}

/// Reverse-mode pass. `grad_output` is the loss sensitivity with respect to
/// the raw output (coefficient columns then the intercept column).
pub fn backward(model: &NetworkModel, tape: &ForwardTape, grad_output: ArrayView2<'_, f64>) -> Result<Gradients> {
    if grad_output.dim() != tape.output.dim() {
        return Err(Error::shape(format!(
            "output gradient is {:?}, forward output was {:?}",
            grad_output.dim(),
            tape.output.dim()
        )));
    }
    if tape.inputs.len() != model.layers.len() {
        return Err(Error::shape("tape was recorded on a different architecture"));
    }
    let mut grads = Vec::with_capacity(model.layers.len());
    let mut delta = grad_output.to_owned();
    for (k, layer) in model.layers.iter().enumerate().rev() {
        let a = &tape.inputs[k];
        let weight = delta.t().dot(a);
        let bias = delta.sum_axis(Axis(0));
        if k > 0 {
            let mut back = delta.dot(&layer.weight);
            // ReLU: the recorded input is the post-activation, so zero means inactive.
            Zip::from(&mut back).and(a).for_each(|g, &act| {
                if act <= 0.0 {
                    *g = 0.0;
                }
            });
            delta = back;
        }
        grads.push(Dense { weight, bias });
    }
    grads.reverse();
    Ok(Gradients { layers: grads })
}

/// Predicts with plain inference thresholding: `x' T(eta(z); theta_hat) + intercept`,
/// passed through the inverse link for classification.
pub fn predict(
    model: &NetworkModel,
    theta_hat: f64,
    x: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    task: Task,
) -> Result<Array1<f64>> {
    if x.nrows() != z.nrows() || x.ncols() != model.config.p {
        return Err(Error::shape(format!(
            "expected x with {} columns and {} rows, got {:?}",
            model.config.p,
            z.nrows(),
            x.dim()
        )));
    }
    check_finite(x, "explanatory features")?;
    let (out, _) = forward(model, z)?;
    let beta = soft_threshold(out.coefficients.view(), theta_hat)?;
    let eta = linear_predictor(x, beta.view(), out.intercept.as_ref().map(|a| a.view()));
    Ok(eta.mapv(|v| task.mean(v)))
}

/// Row-wise `x_i' beta_i + b_i`.
pub fn linear_predictor(
    x: ArrayView2<'_, f64>,
    beta: ArrayView2<'_, f64>,
    intercept: Option<ArrayView1<'_, f64>>,
) -> Array1<f64> {
    let mut eta: Array1<f64> = (&x * &beta).sum_axis(Axis(1));
    if let Some(b) = intercept {
        eta += &b;
    }
    eta
}

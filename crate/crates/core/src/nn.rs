//! Dense network core.
//!
//! Everything here works on row-major `f64` matrices where each row is one
//! unit. A layer computes `act(x · W + b)` with `W` stored `in_dim × out_dim`.
//! Gradients are hand-derived per layer and chained in reverse, which is all
//! the differentiation the MLP stacks in this crate need.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IdrlError, Result};

pub type Matrix = Array2<f64>;
pub type Vector = Array1<f64>;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before any log.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Matrix) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Sigmoid => z.mapv_inplace(sigmoid),
            Activation::Identity => {}
        }
    }

    /// Multiplies `grad` by the activation derivative, expressed through the
    /// layer output.
    fn backprop(self, output: &Matrix, grad: &mut Matrix) {
        match self {
            Activation::Relu => grad.zip_mut_with(output, |g, &o| {
                if o <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Sigmoid => grad.zip_mut_with(output, |g, &o| *g *= o * (1.0 - o)),
            Activation::Identity => {}
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Row-major copy of `m`, or `m` itself when it already is.
pub fn standard_layout(m: Matrix) -> Matrix {
    if m.is_standard_layout() {
        m
    } else {
        m.as_standard_layout().into_owned()
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vector,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weight: Matrix, bias: Vector, activation: Activation) -> Result<Self> {
        if weight.ncols() != bias.len() {
            return Err(IdrlError::Config(format!(
                "weight has {} columns but bias has {} entries",
                weight.ncols(),
                bias.len()
            )));
        }
        Ok(Self {
            weight: weight.as_standard_layout().into_owned(),
            bias,
            activation,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weight: Matrix::zeros((in_dim, out_dim)),
            bias: Vector::zeros(out_dim),
            activation,
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = Matrix::from_shape_simple_fn((in_dim, out_dim), || {
            rng.gen_range(-limit..=limit)
        });
        Self {
            weight,
            bias: Vector::zeros(out_dim),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Weight then bias, as flat mutable slices.
    pub fn param_slices_mut(&mut self) -> [&mut [f64]; 2] {
        [
            self.weight
                .as_slice_mut()
                .expect("layer weights are kept in standard layout"),
            self.bias
                .as_slice_mut()
                .expect("bias vectors are contiguous"),
        ]
    }
}

/// Stacks layers, rejecting widths that do not chain.
pub fn check_chain(layers: &[DenseLayer], input_dim: usize) -> Result<()> {
    let mut dim = input_dim;
    for (k, layer) in layers.iter().enumerate() {
        if layer.in_dim() != dim {
            return Err(IdrlError::Config(format!(
                "layer {k} expects {} inputs, got {dim}",
                layer.in_dim()
            )));
        }
        if layer.bias.len() != layer.out_dim() {
            return Err(IdrlError::Config(format!(
                "layer {k} bias length {} != out_dim {}",
                layer.bias.len(),
                layer.out_dim()
            )));
        }
        dim = layer.out_dim();
    }
    Ok(())
}

/// Saved activations from a forward pass: `activations[0]` is the input,
/// `activations[k + 1]` the output of layer `k`.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub activations: Vec<Matrix>,
}

impl MlpTrace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("trace holds at least the input")
    }

    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }

    pub fn into_output(mut self) -> Matrix {
        self.activations.pop().expect("trace holds at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vector,
}

impl LayerGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weight: Matrix::zeros(layer.weight.raw_dim()),
            bias: Vector::zeros(layer.bias.len()),
        }
    }

    pub fn add_assign(&mut self, other: &LayerGrad) {
        self.weight += &other.weight;
        self.bias += &other.bias;
    }

    pub fn slices(&self) -> [&[f64]; 2] {
        [
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("contiguous"),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrad>,
    /// Gradient with respect to the network input. Empty (0 × 0) when it was
    /// not requested.
    pub input: Matrix,
}

pub fn forward_trace(layers: &[DenseLayer], input: &Matrix) -> Result<MlpTrace> {
    check_chain(layers, input.ncols())?;
    let mut activations = Vec::with_capacity(layers.len() + 1);
    activations.push(input.to_owned());
    for layer in layers {
        let prev = activations.last().expect("nonempty");
        let mut z = prev.dot(&layer.weight);
        z += &layer.bias;
        layer.activation.apply(&mut z);
        activations.push(z);
    }
    Ok(MlpTrace { activations })
}

pub fn forward_mlp(layers: &[DenseLayer], input: &Matrix) -> Result<Matrix> {
    check_chain(layers, input.ncols())?;
    let mut current = input.to_owned();
    for layer in layers {
        let mut z = current.dot(&layer.weight);
        z += &layer.bias;
        layer.activation.apply(&mut z);
        current = z;
    }
    Ok(current)
}

/// Reverse pass over a recorded trace.
pub fn backward_trace(
    layers: &[DenseLayer],
    trace: &MlpTrace,
    upstream: &Matrix,
    want_input_grad: bool,
) -> Result<MlpGrads> {
    if trace.activations.len() != layers.len() + 1 {
        return Err(IdrlError::Config(
            "trace does not belong to this network".into(),
        ));
    }
    if upstream.dim() != trace.output().dim() {
        return Err(IdrlError::Config(format!(
            "upstream gradient shape {:?} != output shape {:?}",
            upstream.dim(),
            trace.output().dim()
        )));
    }
    let mut grads = Vec::with_capacity(layers.len());
    let mut delta = upstream.to_owned();
    let mut input_grad = Matrix::zeros((0, 0));
    for (k, layer) in layers.iter().enumerate().rev() {
        layer
            .activation
            .backprop(&trace.activations[k + 1], &mut delta);
        let layer_in = &trace.activations[k];
        let weight = standard_layout(layer_in.t().dot(&delta));
        let bias = delta.sum_axis(Axis(0));
        grads.push(LayerGrad { weight, bias });
        if k > 0 {
            delta = delta.dot(&layer.weight.t());
        } else if want_input_grad {
            input_grad = delta.dot(&layer.weight.t());
        }
    }
    if layers.is_empty() && want_input_grad {
        input_grad = delta;
    }
    grads.reverse();
    Ok(MlpGrads {
        layers: grads,
        input: input_grad,
    })
}

/// Gradients of `sum(upstream ⊙ forward_mlp(layers, input))` with respect to
/// every weight, bias and the input.
pub fn backward_mlp(layers: &[DenseLayer], input: &Matrix, upstream: &Matrix) -> Result<MlpGrads> {
    let trace = forward_trace(layers, input)?;
    backward_trace(layers, &trace, upstream, true)
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<(f64, Vector)> {
    if pred.is_empty() {
        return Err(IdrlError::InvalidArgument("mse_loss on empty input".into()));
    }
    if pred.len() != target.len() {
        return Err(IdrlError::InvalidArgument(format!(
            "mse_loss length mismatch: {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let diff = &pred - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = diff.mapv(|d| 2.0 * d / n);
    Ok((loss, grad))
}

/// One half of a binary cross-entropy: the mean of `log p` (positive) or
/// `log(1 - p)` (negative) over clamped probabilities, with its gradient in `p`.
/// Entries that hit the clamp get zero gradient.
pub fn bce_terms(p: ArrayView1<f64>, positive: bool) -> (f64, Vector) {
    let n = p.len().max(1) as f64;
    let mut total = 0.0;
    let grad = p.mapv(|raw| {
        let c = clamp_prob(raw);
        let inside = c == raw;
        if positive {
            total += c.ln();
            if inside {
                1.0 / (n * c)
            } else {
                0.0
            }
        } else {
            total += (1.0 - c).ln();
            if inside {
                -1.0 / (n * (1.0 - c))
            } else {
                0.0
            }
        }
    });
    (total / n, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state. Moment buffers are shaped lazily on the
/// first step and must match on every later step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(IdrlError::Config(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(IdrlError::Config(format!(
                    "parameter {k} has {} entries, gradient {}",
                    p.len(),
                    g.len()
                )));
            }
        }
        if self.step == 0 && self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second_moment = self.first_moment.clone();
        } else if self.first_moment.len() != params.len()
            || self
                .first_moment
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.len() != p.len())
        {
            return Err(IdrlError::Config(
                "parameter shapes changed between optimizer steps".into(),
            ));
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_layer(seed: u64) -> Vec<DenseLayer> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut l1 = DenseLayer::glorot(4, 5, Activation::Relu, &mut rng);
        let mut l2 = DenseLayer::glorot(5, 2, Activation::Sigmoid, &mut rng);
        l1.bias.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        l2.bias.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        vec![l1, l2]
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = DenseLayer::new(Matrix::eye(3), Vector::zeros(3), Activation::Identity).unwrap();
        let x = random_matrix(4, 3, 1);
        assert_eq!(forward_mlp(&[layer], &x).unwrap(), x);
    }

    #[test]
    fn zero_sigmoid_layer_gives_half() {
        let layer = DenseLayer::zeros(3, 2, Activation::Sigmoid);
        let out = forward_mlp(&[layer], &random_matrix(5, 3, 2)).unwrap();
        assert!(out.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn two_layer_forward_matches_scalar_evaluation() {
        let x = array![
            [0.5, -1.0, 2.0, 0.0],
            [1.5, 0.25, -0.75, 1.0],
            [-2.0, 0.5, 0.5, -0.5]
        ];
        let w1 = array![[0.1, -0.2], [0.3, 0.4], [-0.5, 0.6], [0.7, -0.8]];
        let b1 = array![0.05, -0.1];
        let w2 = array![[1.0, -0.5, 0.25], [0.5, 2.0, -1.0]];
        let b2 = array![0.0, 0.1, -0.2];
        let layers = vec![
            DenseLayer::new(w1.clone(), b1.clone(), Activation::Relu).unwrap(),
            DenseLayer::new(w2.clone(), b2.clone(), Activation::Identity).unwrap(),
        ];
        let out = forward_mlp(&layers, &x).unwrap();
        for i in 0..3 {
            let mut hidden = [0.0; 2];
            for j in 0..2 {
                let mut acc = b1[j];
                for k in 0..4 {
                    acc += x[[i, k]] * w1[[k, j]];
                }
                hidden[j] = if acc > 0.0 { acc } else { 0.0 };
            }
            for j in 0..3 {
                let mut acc = b2[j];
                for (k, h) in hidden.iter().enumerate() {
                    acc += h * w2[[k, j]];
                }
                assert!((out[[i, j]] - acc).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let layer = DenseLayer::zeros(3, 2, Activation::Relu);
        let err = forward_mlp(&[layer], &Matrix::zeros((2, 4))).unwrap_err();
        assert!(matches!(err, IdrlError::Config(_)));
    }

    #[test]
    fn identity_layer_weight_gradient_is_input_transpose_times_ones() {
        let x = random_matrix(6, 3, 3);
        let layer = DenseLayer::glorot(3, 2, Activation::Identity, &mut ChaCha8Rng::seed_from_u64(4));
        let ones = Matrix::ones((6, 2));
        let grads = backward_mlp(&[layer], &x, &ones).unwrap();
        assert_eq!(grads.layers[0].weight, x.t().dot(&ones));
        assert_eq!(grads.layers[0].bias, Vector::from_elem(2, 6.0));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let layers = two_layer(5);
        let x = random_matrix(7, 4, 6);
        let grads = backward_mlp(&layers, &x, &Matrix::zeros((7, 2))).unwrap();
        for g in &grads.layers {
            assert!(g.weight.iter().chain(g.bias.iter()).all(|&v| v == 0.0));
        }
        assert!(grads.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_wrong_upstream_shape() {
        let layers = two_layer(5);
        let x = random_matrix(7, 4, 6);
        assert!(backward_mlp(&layers, &x, &Matrix::zeros((7, 3))).is_err());
    }

    // Scalar objective sum(C ⊙ f(x)) with a fixed random C, checked against
    // central differences on every weight, bias and input entry.
    #[test]
    fn gradients_match_central_differences() {
        let layers = two_layer(11);
        let x = random_matrix(6, 4, 12);
        let c = random_matrix(6, 2, 13);
        let objective = |layers: &[DenseLayer], x: &Matrix| -> f64 {
            (forward_mlp(layers, x).unwrap() * &c).sum()
        };
        let grads = backward_mlp(&layers, &x, &c).unwrap();
        let h = 1e-5;
        let check = |analytic: f64, numeric: f64| {
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(
                (analytic - numeric).abs() / denom <= 1e-4,
                "analytic {analytic} vs numeric {numeric}"
            );
        };
        for k in 0..layers.len() {
            for idx in 0..layers[k].weight.len() {
                let (r, col) = (idx / layers[k].out_dim(), idx % layers[k].out_dim());
                let mut plus = layers.clone();
                plus[k].weight[[r, col]] += h;
                let mut minus = layers.clone();
                minus[k].weight[[r, col]] -= h;
                let numeric = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
                check(grads.layers[k].weight[[r, col]], numeric);
            }
            for j in 0..layers[k].bias.len() {
                let mut plus = layers.clone();
                plus[k].bias[j] += h;
                let mut minus = layers.clone();
                minus[k].bias[j] -= h;
                let numeric = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
                check(grads.layers[k].bias[j], numeric);
            }
        }
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                let mut plus = x.clone();
                plus[[i, j]] += h;
                let mut minus = x.clone();
                minus[[i, j]] -= h;
                let numeric = (objective(&layers, &plus) - objective(&layers, &minus)) / (2.0 * h);
                check(grads.input[[i, j]], numeric);
            }
        }
    }

    #[test]
    fn mse_examples() {
        let (l, _) = mse_loss(array![1.0, 2.0].view(), array![1.0, 2.0].view()).unwrap();
        assert_eq!(l, 0.0);
        let (l, g) = mse_loss(array![1.0, 3.0].view(), array![1.0, 1.0].view()).unwrap();
        assert_eq!(l, 2.0);
        assert_eq!(g, array![0.0, 2.0]);
        assert!(matches!(
            mse_loss(Vector::zeros(0).view(), Vector::zeros(0).view()),
            Err(IdrlError::InvalidArgument(_))
        ));
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let pred = array![0.3, -1.2, 2.5, 0.0];
        let target = array![1.0, -1.0, 2.0, 0.5];
        let (_, grad) = mse_loss(pred.view(), target.view()).unwrap();
        let h = 1e-5;
        for i in 0..pred.len() {
            let mut plus = pred.clone();
            plus[i] += h;
            let mut minus = pred.clone();
            minus[i] -= h;
            let numeric = (mse_loss(plus.view(), target.view()).unwrap().0
                - mse_loss(minus.view(), target.view()).unwrap().0)
                / (2.0 * h);
            assert!((numeric - grad[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn bce_terms_examples() {
        let half = Vector::from_elem(4, 0.5);
        let (pos, _) = bce_terms(half.view(), true);
        let (neg, _) = bce_terms(half.view(), false);
        assert!((pos - 0.5f64.ln()).abs() < 1e-15);
        assert!((neg - 0.5f64.ln()).abs() < 1e-15);
        assert!((pos + 0.6931).abs() < 1e-4);

        let p = array![0.1, 0.7, 0.95, 0.0, 1.0];
        let expected_pos = (0.1f64.ln() + 0.7f64.ln() + 0.95f64.ln() + PROB_CLAMP.ln() + (1.0 - PROB_CLAMP).ln()) / 5.0;
        let expected_neg = (0.9f64.ln() + 0.3f64.ln() + 0.05f64.ln() + (1.0 - PROB_CLAMP).ln() + (1.0 - (1.0 - PROB_CLAMP)).ln()) / 5.0;
        let (pos, gpos) = bce_terms(p.view(), true);
        let (neg, gneg) = bce_terms(p.view(), false);
        assert!((pos - expected_pos).abs() < 1e-12);
        assert!((neg - expected_neg).abs() < 1e-12);
        assert_eq!(gpos[3], 0.0);
        assert_eq!(gneg[4], 0.0);
        assert!((gpos[1] - 1.0 / (5.0 * 0.7)).abs() < 1e-12);
        assert!((gneg[1] + 1.0 / (5.0 * 0.3)).abs() < 1e-12);
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut params = vec![1.0, -2.0, 3.5];
        let before = params.clone();
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..3 {
            adam.step(&mut [params.as_mut_slice()], &[&[0.0, 0.0, 0.0]]).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(adam.steps_taken(), 3);
    }

    #[test]
    fn adam_first_step_matches_hand_computation() {
        let cfg = AdamConfig::default();
        let grad = [0.5, -3.0, 1e-3];
        let mut params = vec![0.0, 1.0, 2.0];
        let mut adam = Adam::new(cfg);
        adam.step(&mut [params.as_mut_slice()], &[&grad]).unwrap();
        for (i, &g) in grad.iter().enumerate() {
            // m_hat = g, v_hat = g^2 after bias correction
            let m_hat = ((1.0 - cfg.beta1) * g) / (1.0 - cfg.beta1);
            let v_hat = ((1.0 - cfg.beta2) * g * g) / (1.0 - cfg.beta2);
            let expected = [0.0, 1.0, 2.0][i] - cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            assert!((params[i] - expected).abs() < 1e-15);
        }
        // the first step moves by almost exactly lr in the direction of -sign(g)
        assert!((params[0] + 1e-3).abs() < 1e-10);
        assert!((params[1] - (1.0 + 1e-3)).abs() < 1e-10);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut p = vec![0.3, -0.7];
            let mut adam = Adam::new(AdamConfig::default());
            adam.step(&mut [p.as_mut_slice()], &[&[0.2, 0.1]]).unwrap();
            adam.step(&mut [p.as_mut_slice()], &[&[0.2, 0.1]]).unwrap();
            p
        };
        let a = run();
        let b = run();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }

    #[test]
    fn adam_rejects_shape_change() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = vec![0.0; 2];
        adam.step(&mut [p.as_mut_slice()], &[&[1.0, 1.0]]).unwrap();
        let mut q = vec![0.0; 3];
        assert!(adam.step(&mut [q.as_mut_slice()], &[&[1.0, 1.0, 1.0]]).is_err());
    }

    #[test]
    fn sigmoid_output_stays_in_unit_interval() {
        let layers = two_layer(21);
        let x = random_matrix(10, 4, 22) * 50.0;
        let out = forward_mlp(&layers, &x).unwrap();
        assert!(out.iter().all(|&v| v.is_finite() && (0.0..=1.0).contains(&v)));
    }
}

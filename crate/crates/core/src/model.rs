//! The representation learner.
//!
//! Components, all operating on standardized covariates:
//!
//! - `g`: MLP from covariates to representations `R` (`n × rep_dim`).
//! - summary `s = sigmoid((mean_treated(R) + mean_control(R)) / 2)`.
//! - `phi`: MLP whose last hidden layer is the domain feature `H`, topped by a
//!   sigmoid unit predicting treatment. Trained only by its own cross-entropy;
//!   `H` enters the main objective as a constant.
//! - `d_s(r, s) = sigmoid(r^T W_s s)` and `d_h(r, h) = sigmoid(r^T W_h h)`.
//! - two outcome heads `psi_0`, `psi_1` on top of `R`.
//!
//! Negative samples are covariate rows with every column permuted
//! independently. With
//!
//! ```text
//! MI_s = 1/2 [mean_i log d_s(r_i, s) + mean_j log(1 - d_s(r~_j, s))]
//! MI_h = 1/2 [mean_i log d_h(r_i, h_i) + mean_j log(1 - d_h(r_j, h~_j))]
//! ```
//!
//! one optimizer step descends `L_Y - alpha MI_s + beta MI_h` for `g`, the heads
//! and `W_s`, while `W_h` descends `-beta MI_h`: the `d_h` discriminator tightens
//! its estimate and `g` receives the reversed gradient.

use ndarray::{Array1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, OutcomeScaler, Scaler};
use crate::error::{IdrlError, Result};
use crate::nn::{
    backward_trace, bce_terms, clamp_prob, standard_layout, forward_mlp, forward_trace, sigmoid, Activation, Adam,
    AdamConfig, DenseLayer, LayerGrad, Matrix, Vector, PROB_CLAMP,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

// Independent random streams per component, so switching one term off never
// changes how the others are initialized or sampled.
const STREAM_REP: u64 = 1;
const STREAM_HEADS: u64 = 2;
const STREAM_PHI: u64 = 3;
const STREAM_DISCRIMINATORS: u64 = 4;
const STREAM_NEGATIVES: u64 = 5;
const STREAM_BATCHES: u64 = 6;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdrlConfig {
    /// Hidden widths of `g` (ReLU); a final linear layer maps to `rep_dim`.
    pub rep_layers: Vec<usize>,
    pub rep_dim: usize,
    /// Hidden widths of each outcome head (ReLU), followed by a linear output.
    pub head_layers: Vec<usize>,
    /// Hidden widths of `phi` (ReLU); the last one is the dimension of `H`.
    pub phi_layers: Vec<usize>,
    /// Weight of the infomax term.
    pub alpha: f64,
    /// Weight of the domain-independence term.
    pub beta: f64,
    pub epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    /// L2 penalty on the weights of `g` and the heads.
    pub weight_decay: f64,
    pub seed: u64,
    pub disable_mi_s: bool,
    pub disable_mi_h: bool,
    /// Pretrain `phi` for `phi_pretrain_epochs` and then hold it fixed.
    pub freeze_phi: bool,
    pub phi_pretrain_epochs: usize,
    /// Validation cadence for best-parameter selection.
    pub eval_every: usize,
}

impl Default for IdrlConfig {
    fn default() -> Self {
        Self {
            rep_layers: vec![64, 64],
            rep_dim: 32,
            head_layers: vec![32, 32],
            phi_layers: vec![32],
            alpha: 1.0,
            beta: 1.0,
            epochs: 500,
            batch_size: None,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            seed: 0,
            disable_mi_s: false,
            disable_mi_h: false,
            freeze_phi: false,
            phi_pretrain_epochs: 0,
            eval_every: 1,
        }
    }
}

impl IdrlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(IdrlError::Config("alpha and beta must be >= 0".into()));
        }
        if self.rep_dim == 0 {
            return Err(IdrlError::Config("rep_dim must be at least 1".into()));
        }
        if self.phi_layers.is_empty() {
            return Err(IdrlError::Config(
                "phi needs at least one hidden layer to define H".into(),
            ));
        }
        let widths = self
            .rep_layers
            .iter()
            .chain(&self.head_layers)
            .chain(&self.phi_layers);
        if widths.into_iter().any(|&w| w == 0) {
            return Err(IdrlError::Config("layer widths must be positive".into()));
        }
        if self.batch_size == Some(0) || self.batch_size == Some(1) {
            return Err(IdrlError::Config("batch_size must be at least 2".into()));
        }
        if self.eval_every == 0 {
            return Err(IdrlError::Config("eval_every must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(IdrlError::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn uses_mi_s(&self) -> bool {
        !self.disable_mi_s && self.alpha > 0.0
    }

    pub fn uses_mi_h(&self) -> bool {
        !self.disable_mi_h && self.beta > 0.0
    }

    /// Report label: which terms are active.
    pub fn method_label(&self) -> &'static str {
        match (self.disable_mi_s, self.disable_mi_h) {
            (false, false) => "idrl",
            (true, false) => "idrl_no_mi_s",
            (false, true) => "idrl_no_mi_h",
            (true, true) => "tarnet_equiv",
        }
    }
}

fn mlp<R: rand::Rng>(
    input: usize,
    hidden: &[usize],
    hidden_act: Activation,
    output: Option<(usize, Activation)>,
    rng: &mut R,
) -> Vec<DenseLayer> {
    let mut layers = Vec::new();
    let mut dim = input;
    for &w in hidden {
        layers.push(DenseLayer::glorot(dim, w, hidden_act, rng));
        dim = w;
    }
    if let Some((out, act)) = output {
        layers.push(DenseLayer::glorot(dim, out, act, rng));
    }
    layers
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdrlParams {
    pub g: Vec<DenseLayer>,
    pub head0: Vec<DenseLayer>,
    pub head1: Vec<DenseLayer>,
    /// Hidden stack of `phi`; its output is `H`.
    pub phi: Vec<DenseLayer>,
    /// Sigmoid unit on top of `H`.
    pub phi_out: DenseLayer,
    pub w_s: Matrix,
    pub w_h: Matrix,
}

impl IdrlParams {
    pub fn init(config: &IdrlConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(IdrlError::Config("no covariates".into()));
        }
        let rep = config.rep_dim;
        let mut rng = stream(config.seed, STREAM_REP);
        let g = mlp(
            input_dim,
            &config.rep_layers,
            Activation::Relu,
            Some((rep, Activation::Identity)),
            &mut rng,
        );
        let mut rng = stream(config.seed, STREAM_HEADS);
        let head0 = mlp(rep, &config.head_layers, Activation::Relu, Some((1, Activation::Identity)), &mut rng);
        let head1 = mlp(rep, &config.head_layers, Activation::Relu, Some((1, Activation::Identity)), &mut rng);
        let mut rng = stream(config.seed, STREAM_PHI);
        let phi = mlp(input_dim, &config.phi_layers, Activation::Relu, None, &mut rng);
        let h_dim = *config.phi_layers.last().expect("validated");
        let phi_out = DenseLayer::glorot(h_dim, 1, Activation::Sigmoid, &mut rng);
        let mut rng = stream(config.seed, STREAM_DISCRIMINATORS);
        let w_s = DenseLayer::glorot(rep, rep, Activation::Identity, &mut rng).weight;
        let w_h = DenseLayer::glorot(rep, h_dim, Activation::Identity, &mut rng).weight;
        Ok(Self {
            g,
            head0,
            head1,
            phi,
            phi_out,
            w_s,
            w_h,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.g.first().map(|l| l.in_dim()).unwrap_or(0)
    }

    pub fn rep_dim(&self) -> usize {
        self.w_s.nrows()
    }

    pub fn h_dim(&self) -> usize {
        self.w_h.ncols()
    }

    /// Representations `R = g(X)`.
    pub fn represent(&self, x: &Matrix) -> Result<Matrix> {
        forward_mlp(&self.g, x)
    }

    /// Domain features `H` (last hidden layer of `phi`).
    pub fn predict_domain(&self, x: &Matrix) -> Result<Matrix> {
        forward_mlp(&self.phi, x)
    }

    /// Treatment probability from the sigmoid unit on top of `H`.
    pub fn treatment_probability(&self, x: &Matrix) -> Result<Vector> {
        let h = self.predict_domain(x)?;
        Ok(forward_mlp(std::slice::from_ref(&self.phi_out), &h)?.column(0).to_owned())
    }

    /// `sigmoid(r^T W_s s)`, clamped.
    pub fn score_ds(&self, r: &Vector, s: &Vector) -> Result<f64> {
        bilinear_score(&self.w_s, r, s)
    }

    /// `sigmoid(r^T W_h h)`, clamped.
    pub fn score_dh(&self, r: &Vector, h: &Vector) -> Result<f64> {
        bilinear_score(&self.w_h, r, h)
    }

    pub fn loss_mi_s(&self, r: &Matrix, r_neg: &Matrix, s: &Vector) -> Result<f64> {
        if r.nrows() != r_neg.nrows() {
            return Err(IdrlError::InvalidArgument(
                "positive and negative representations differ in length".into(),
            ));
        }
        check_cols(r, self.rep_dim(), "R")?;
        check_cols(r_neg, self.rep_dim(), "negative R")?;
        if s.len() != self.rep_dim() {
            return Err(IdrlError::InvalidArgument("summary has wrong length".into()));
        }
        let ws = self.w_s.dot(s);
        let pos = r.dot(&ws).mapv(sigmoid);
        let neg = r_neg.dot(&ws).mapv(sigmoid);
        Ok(0.5 * (bce_terms(pos.view(), true).0 + bce_terms(neg.view(), false).0))
    }

    pub fn loss_mi_h(&self, r: &Matrix, h: &Matrix, h_neg: &Matrix) -> Result<f64> {
        if r.nrows() != h.nrows() || r.nrows() != h_neg.nrows() {
            return Err(IdrlError::InvalidArgument("row counts differ".into()));
        }
        check_cols(r, self.rep_dim(), "R")?;
        check_cols(h, self.h_dim(), "H")?;
        check_cols(h_neg, self.h_dim(), "negative H")?;
        let rw = r.dot(&self.w_h);
        let pos = (&rw * h).sum_axis(Axis(1)).mapv(sigmoid);
        let neg = (&rw * h_neg).sum_axis(Axis(1)).mapv(sigmoid);
        Ok(0.5 * (bce_terms(pos.view(), true).0 + bce_terms(neg.view(), false).0))
    }

    /// `(y0_hat, y1_hat, y_f_hat)` in the training scale of the heads.
    pub fn predict_outcomes(&self, r: &Matrix, t: &[u8]) -> Result<(Vector, Vector, Vector)> {
        if t.len() != r.nrows() {
            return Err(IdrlError::InvalidArgument("t does not match R".into()));
        }
        let y0 = forward_mlp(&self.head0, r)?.column(0).to_owned();
        let y1 = forward_mlp(&self.head1, r)?.column(0).to_owned();
        let yf = Array1::from_shape_fn(t.len(), |i| if t[i] == 1 { y1[i] } else { y0[i] });
        Ok((y0, y1, yf))
    }

    /// Parameters updated by the main objective, flattened in the order
    /// `g`, `psi_0`, `psi_1` (weight then bias per layer), `W_s`, `W_h`.
    pub fn trainable_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in self.g.iter_mut().chain(&mut self.head0).chain(&mut self.head1) {
            out.extend(layer.param_slices_mut());
        }
        out.push(self.w_s.as_slice_mut().expect("standard layout"));
        out.push(self.w_h.as_slice_mut().expect("standard layout"));
        out
    }

    fn phi_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in self.phi.iter_mut().chain(std::iter::once(&mut self.phi_out)) {
            out.extend(layer.param_slices_mut());
        }
        out
    }
}

fn check_cols(m: &Matrix, cols: usize, what: &str) -> Result<()> {
    if m.ncols() != cols {
        return Err(IdrlError::InvalidArgument(format!(
            "{what} has {} columns, expected {cols}",
            m.ncols()
        )));
    }
    Ok(())
}

fn bilinear_score(w: &Matrix, left: &Vector, right: &Vector) -> Result<f64> {
    if left.len() != w.nrows() || right.len() != w.ncols() {
        return Err(IdrlError::InvalidArgument(format!(
            "bilinear score expects {} × {} operands, got {} and {}",
            w.nrows(),
            w.ncols(),
            left.len(),
            right.len()
        )));
    }
    Ok(clamp_prob(sigmoid(left.dot(&w.dot(right)))))
}

/// `sigmoid` of the average of the treated-group and control-group mean rows.
pub fn summarize(r: &Matrix, t: &[u8]) -> Result<Vector> {
    if t.len() != r.nrows() {
        return Err(IdrlError::InvalidArgument("t does not match R".into()));
    }
    let n_t = t.iter().filter(|&&v| v == 1).count();
    let n_c = t.len() - n_t;
    if n_t == 0 || n_c == 0 {
        return Err(IdrlError::InvalidArgument(
            "summary needs both treated and control units".into(),
        ));
    }
    let mut sum_t = Vector::zeros(r.ncols());
    let mut sum_c = Vector::zeros(r.ncols());
    for (row, &ti) in r.rows().into_iter().zip(t) {
        if ti == 1 {
            sum_t += &row;
        } else {
            sum_c += &row;
        }
    }
    Ok((sum_t / (2.0 * n_t as f64) + sum_c / (2.0 * n_c as f64)).mapv(sigmoid))
}

/// Permutes each column of `x` independently.
pub fn negative_shuffle<R: rand::Rng>(x: &Matrix, rng: &mut R) -> Matrix {
    let n = x.nrows();
    let mut out = Matrix::zeros(x.raw_dim());
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..x.ncols() {
        perm.shuffle(rng);
        for (i, &p) in perm.iter().enumerate() {
            out[[i, j]] = x[[p, j]];
        }
    }
    out
}

pub fn negative_shuffle_seeded(x: &Matrix, seed: u64) -> Matrix {
    negative_shuffle(x, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Weights of the objective terms; a disabled term has weight zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub beta: f64,
    pub weight_decay: f64,
}

impl ObjectiveWeights {
    pub fn from_config(c: &IdrlConfig) -> Self {
        Self {
            alpha: if c.uses_mi_s() { c.alpha } else { 0.0 },
            beta: if c.uses_mi_h() { c.beta } else { 0.0 },
            weight_decay: c.weight_decay,
        }
    }
}

/// One batch of standardized inputs. `h` and `h_neg` come from `phi` and are
/// treated as constants.
pub struct ObjectiveInputs<'a> {
    pub x: &'a Matrix,
    pub x_neg: &'a Matrix,
    pub h: &'a Matrix,
    pub h_neg: &'a Matrix,
    pub t: &'a [u8],
    pub y: &'a Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub factual: f64,
    pub mi_s: f64,
    pub mi_h: f64,
    pub weight_penalty: f64,
    /// `factual - alpha mi_s + beta mi_h + weight_penalty`.
    pub total: f64,
}

/// Gradients of one objective evaluation. Everything descends `total`,
/// except `w_h`, which holds the gradient of `-beta mi_h`.
#[derive(Debug, Clone)]
pub struct ObjectiveGrads {
    pub g: Vec<LayerGrad>,
    pub head0: Vec<LayerGrad>,
    pub head1: Vec<LayerGrad>,
    pub w_s: Matrix,
    pub w_h: Matrix,
}

impl ObjectiveGrads {
    /// Same order as [`IdrlParams::trainable_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in self.g.iter().chain(&self.head0).chain(&self.head1) {
            out.extend(g.slices());
        }
        out.push(self.w_s.as_slice().expect("standard layout"));
        out.push(self.w_h.as_slice().expect("standard layout"));
        out
    }
}

fn arm_rows(t: &[u8], arm: u8) -> Vec<usize> {
    (0..t.len()).filter(|&i| t[i] == arm).collect()
}

fn weight_penalty(params: &IdrlParams, decay: f64) -> f64 {
    if decay == 0.0 {
        return 0.0;
    }
    let sq: f64 = params
        .g
        .iter()
        .chain(&params.head0)
        .chain(&params.head1)
        .map(|l| l.weight.iter().map(|w| w * w).sum::<f64>())
        .sum();
    0.5 * decay * sq
}

/// Evaluates the objective and its gradients on one batch.
pub fn objective(
    params: &IdrlParams,
    inputs: &ObjectiveInputs,
    weights: ObjectiveWeights,
) -> Result<(LossBreakdown, ObjectiveGrads)> {
    let ObjectiveInputs {
        x,
        x_neg,
        h,
        h_neg,
        t,
        y,
    } = *inputs;
    let n = x.nrows();
    if x_neg.dim() != x.dim() || t.len() != n || y.len() != n {
        return Err(IdrlError::InvalidArgument("batch shapes disagree".into()));
    }
    let use_s = weights.alpha > 0.0;
    let use_h = weights.beta > 0.0;

    let rep_trace = forward_trace(&params.g, x)?;
    let r = rep_trace.output();
    let mut d_r = Matrix::zeros(r.raw_dim());

    // Factual loss through the arm-specific heads.
    let rows = [arm_rows(t, 0), arm_rows(t, 1)];
    let mut factual = 0.0;
    let mut head_grads: [Vec<LayerGrad>; 2] = [Vec::new(), Vec::new()];
    for arm in 0..2 {
        let head = if arm == 0 { &params.head0 } else { &params.head1 };
        if rows[arm].is_empty() {
            head_grads[arm] = head.iter().map(LayerGrad::zeros_like).collect();
            continue;
        }
        let r_arm = r.select(Axis(0), &rows[arm]);
        let trace = forward_trace(head, &r_arm)?;
        let pred = trace.output().column(0);
        let mut upstream = Matrix::zeros((rows[arm].len(), 1));
        for (k, &i) in rows[arm].iter().enumerate() {
            let diff = pred[k] - y[i];
            factual += diff * diff;
            upstream[[k, 0]] = 2.0 * diff / n as f64;
        }
        let grads = backward_trace(head, &trace, &upstream, true)?;
        for (k, &i) in rows[arm].iter().enumerate() {
            d_r.row_mut(i).scaled_add(1.0, &grads.input.row(k));
        }
        head_grads[arm] = grads.layers;
    }
    factual /= n as f64;

    let mut mi_s = 0.0;
    let mut mi_h = 0.0;
    let mut grad_ws = Matrix::zeros(params.w_s.raw_dim());
    let mut grad_wh = Matrix::zeros(params.w_h.raw_dim());
    let mut neg_trace = None;
    let mut d_r_neg = None;

    if use_s {
        let s = summarize(r, t)?;
        let trace = forward_trace(&params.g, x_neg)?;
        let r_neg = trace.output();
        let ws = params.w_s.dot(&s);
        let pos = r.dot(&ws).mapv(sigmoid);
        let neg = r_neg.dot(&ws).mapv(sigmoid);
        let (lp, gp) = bce_terms(pos.view(), true);
        let (ln, gn) = bce_terms(neg.view(), false);
        mi_s = 0.5 * (lp + ln);
        // d(-alpha mi_s)/d(logit)
        let da = Array1::from_shape_fn(n, |i| -weights.alpha * 0.5 * gp[i] * pos[i] * (1.0 - pos[i]));
        let da_neg =
            Array1::from_shape_fn(n, |i| -weights.alpha * 0.5 * gn[i] * neg[i] * (1.0 - neg[i]));
        let outer = |a: &Vector, b: &Vector| {
            let a2 = a.view().insert_axis(Axis(1));
            let b2 = b.view().insert_axis(Axis(0));
            a2.dot(&b2)
        };
        d_r += &outer(&da, &ws);
        let dr_neg = outer(&da_neg, &ws);
        let u = r.t().dot(&da) + r_neg.t().dot(&da_neg);
        grad_ws = standard_layout(outer(&u, &s));
        let ds = params.w_s.t().dot(&u);
        let dm = &ds * &s.mapv(|v| v * (1.0 - v));
        let n_t = rows[1].len() as f64;
        let n_c = rows[0].len() as f64;
        for i in 0..n {
            let scale = if t[i] == 1 { 0.5 / n_t } else { 0.5 / n_c };
            d_r.row_mut(i).scaled_add(scale, &dm);
        }
        d_r_neg = Some(dr_neg);
        neg_trace = Some(trace);
    }

    if use_h {
        check_cols(h, params.h_dim(), "H")?;
        check_cols(h_neg, params.h_dim(), "negative H")?;
        let rw = r.dot(&params.w_h);
        let pos = (&rw * h).sum_axis(Axis(1)).mapv(sigmoid);
        let neg = (&rw * h_neg).sum_axis(Axis(1)).mapv(sigmoid);
        let (lp, gp) = bce_terms(pos.view(), true);
        let (ln, gn) = bce_terms(neg.view(), false);
        mi_h = 0.5 * (lp + ln);
        // d(+beta mi_h)/d(logit): what g descends.
        let c = Array1::from_shape_fn(n, |i| weights.beta * 0.5 * gp[i] * pos[i] * (1.0 - pos[i]));
        let c_neg =
            Array1::from_shape_fn(n, |i| weights.beta * 0.5 * gn[i] * neg[i] * (1.0 - neg[i]));
        let ch = h * &c.view().insert_axis(Axis(1)) + h_neg * &c_neg.view().insert_axis(Axis(1));
        d_r += &ch.dot(&params.w_h.t());
        // The discriminator ascends mi_h, i.e. descends -beta mi_h.
        grad_wh = standard_layout(-r.t().dot(&ch));
    }

    let mut rep_grads = backward_trace(&params.g, &rep_trace, &d_r, false)?.layers;
    if let (Some(trace), Some(dr_neg)) = (neg_trace.as_ref(), d_r_neg.as_ref()) {
        let neg_grads = backward_trace(&params.g, trace, dr_neg, false)?.layers;
        for (a, b) in rep_grads.iter_mut().zip(&neg_grads) {
            a.add_assign(b);
        }
    }

    let [mut head0_grads, mut head1_grads] = head_grads;
    let penalty = weight_penalty(params, weights.weight_decay);
    if weights.weight_decay > 0.0 {
        let decay = weights.weight_decay;
        for (grads, layers) in [
            (&mut rep_grads, &params.g),
            (&mut head0_grads, &params.head0),
            (&mut head1_grads, &params.head1),
        ] {
            for (gr, layer) in grads.iter_mut().zip(layers) {
                gr.weight.scaled_add(decay, &layer.weight);
            }
        }
    }

    let total = factual - weights.alpha * mi_s + weights.beta * mi_h + penalty;
    if !total.is_finite() {
        return Err(IdrlError::Diverged {
            epoch: 0,
            message: format!("non-finite objective (factual {factual}, mi_s {mi_s}, mi_h {mi_h})"),
        });
    }
    Ok((
        LossBreakdown {
            factual,
            mi_s,
            mi_h,
            weight_penalty: penalty,
            total,
        },
        ObjectiveGrads {
            g: rep_grads,
            head0: head0_grads,
            head1: head1_grads,
            w_s: grad_ws,
            w_h: grad_wh,
        },
    ))
}

/// One cross-entropy step for `phi` on `(x, t)`; returns the loss before the step.
fn phi_step(params: &mut IdrlParams, adam: &mut Adam, x: &Matrix, t: &[u8]) -> Result<f64> {
    let n = x.nrows() as f64;
    let trace = forward_trace(&params.phi, x)?;
    let h = trace.output();
    let logits = h.dot(&params.phi_out.weight).column(0).to_owned() + params.phi_out.bias[0];
    let mut loss = 0.0;
    let mut dz = Vector::zeros(x.nrows());
    for i in 0..x.nrows() {
        let p = sigmoid(logits[i]);
        let pc = clamp_prob(p);
        let ti = t[i] as f64;
        loss -= ti * pc.ln() + (1.0 - ti) * (1.0 - pc).ln();
        dz[i] = (p - ti) / n;
    }
    loss /= n;
    let dz2 = dz.view().insert_axis(Axis(1));
    let grad_out_w = standard_layout(h.t().dot(&dz2));
    let grad_out_b = Vector::from_elem(1, dz.sum());
    let d_h = dz2.dot(&params.phi_out.weight.t());
    let hidden = backward_trace(&params.phi, &trace, &d_h, false)?;
    let mut grads: Vec<&[f64]> = Vec::new();
    for g in &hidden.layers {
        grads.extend(g.slices());
    }
    grads.push(grad_out_w.as_slice().expect("standard layout"));
    grads.push(grad_out_b.as_slice().expect("contiguous"));
    adam.step(&mut params.phi_slices_mut(), &grads)?;
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub factual: f64,
    pub mi_s: f64,
    pub mi_h: f64,
    pub phi_loss: f64,
    pub valid_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub method: String,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_rmse: f64,
}

/// A fitted model together with the scalers it was trained under. Accepts
/// raw covariates and returns outcomes on the original scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub config: IdrlConfig,
    pub x_scaler: Scaler,
    pub y_scaler: OutcomeScaler,
    pub params: IdrlParams,
    pub best_epoch: usize,
}

impl TrainedModel {
    /// `(y0_hat, y1_hat)` on the original outcome scale.
    pub fn predict(&self, x: &Matrix) -> Result<(Vector, Vector)> {
        let xs = self.x_scaler.transform(x);
        let r = self.params.represent(&xs)?;
        let dummy = vec![0u8; r.nrows()];
        let (y0, y1, _) = self.params.predict_outcomes(&r, &dummy)?;
        Ok((self.y_scaler.inverse(&y0), self.y_scaler.inverse(&y1)))
    }

    /// Per-unit effects `y1_hat - y0_hat` and their mean.
    pub fn estimate_effects(&self, ds: &Dataset) -> Result<(Vector, f64)> {
        let (y0, y1) = self.predict(&ds.x)?;
        Ok(effects_from_predictions(&y0, &y1))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(s)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(IdrlError::Config(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }
}

pub fn effects_from_predictions(y0: &Vector, y1: &Vector) -> (Vector, f64) {
    let ite = y1 - y0;
    let ate = if ite.is_empty() {
        0.0
    } else {
        ite.sum() / ite.len() as f64
    };
    (ite, ate)
}

fn valid_rmse(params: &IdrlParams, x: &Matrix, t: &[u8], y: &Vector, y_scaler: &OutcomeScaler) -> Result<f64> {
    let r = params.represent(x)?;
    let (_, _, yf) = params.predict_outcomes(&r, t)?;
    let yf = y_scaler.inverse(&yf);
    let n = y.len().max(1) as f64;
    Ok(((&yf - y).mapv(|v| v * v).sum() / n).sqrt())
}

/// Trains on `train`, selecting the parameters with the lowest factual RMSE
/// on `valid`. Covariates and outcomes are standardized on `train`.
pub fn fit(config: &IdrlConfig, train: &Dataset, valid: &Dataset) -> Result<(TrainedModel, TrainingLog)> {
    config.validate()?;
    train.validate()?;
    train.require_both_arms()?;
    if valid.d() != train.d() {
        return Err(IdrlError::InvalidArgument(
            "train and validation covariates differ in width".into(),
        ));
    }
    let x_scaler = Scaler::fit(&train.x)?;
    let y_scaler = OutcomeScaler::fit(&train.y_f);
    let x = x_scaler.transform(&train.x);
    let y = y_scaler.transform(&train.y_f);
    let x_valid = x_scaler.transform(&valid.x);

    let mut params = IdrlParams::init(config, train.d())?;
    let weights = ObjectiveWeights::from_config(config);
    let adam_cfg = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_cfg);
    let mut phi_adam = Adam::new(adam_cfg);
    let mut neg_rng = stream(config.seed, STREAM_NEGATIVES);
    let mut batch_rng = stream(config.seed, STREAM_BATCHES);

    let train_phi = weights.beta > 0.0;
    if train_phi && config.freeze_phi {
        for _ in 0..config.phi_pretrain_epochs {
            phi_step(&mut params, &mut phi_adam, &x, &train.t)?;
        }
    }

    let n = train.n();
    let batches: Vec<Vec<usize>> = match config.batch_size {
        None => vec![(0..n).collect()],
        Some(b) if b >= n => vec![(0..n).collect()],
        Some(_) => Vec::new(),
    };
    let full_batch = !batches.is_empty();

    let mut log = Vec::with_capacity(config.epochs);
    let mut best = (f64::INFINITY, 0usize, params.clone());
    if valid.n() > 0 {
        let rmse = valid_rmse(&params, &x_valid, &valid.t, &valid.y_f, &y_scaler)?;
        if rmse.is_finite() {
            best = (rmse, 0, params.clone());
        }
    }
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=config.epochs {
        let epoch_batches: Vec<Vec<usize>> = if full_batch {
            batches.clone()
        } else {
            let b = config.batch_size.expect("minibatch mode");
            order.shuffle(&mut batch_rng);
            order
                .chunks(b)
                .filter(|c| c.len() >= 2)
                .map(|c| c.to_vec())
                .collect()
        };
        let mut acc = (0.0, 0.0, 0.0, 0.0);
        let mut used = 0usize;
        for idx in &epoch_batches {
            let (xb, tb, yb);
            let (xr, tr, yr): (&Matrix, &[u8], &Vector) = if full_batch {
                (&x, &train.t, &y)
            } else {
                xb = x.select(Axis(0), idx);
                tb = idx.iter().map(|&i| train.t[i]).collect::<Vec<u8>>();
                yb = idx.iter().map(|&i| y[i]).collect::<Vector>();
                (&xb, &tb, &yb)
            };
            let has_both = tr.iter().any(|&v| v == 1) && tr.iter().any(|&v| v == 0);
            let batch_weights = if has_both {
                weights
            } else {
                ObjectiveWeights { alpha: 0.0, ..weights }
            };
            let needs_neg = batch_weights.alpha > 0.0 || batch_weights.beta > 0.0;
            let x_neg = if needs_neg {
                negative_shuffle(xr, &mut neg_rng)
            } else {
                Matrix::zeros(xr.raw_dim())
            };
            let (h, h_neg) = if batch_weights.beta > 0.0 {
                (params.predict_domain(xr)?, params.predict_domain(&x_neg)?)
            } else {
                (Matrix::zeros((0, 0)), Matrix::zeros((0, 0)))
            };
            let phi_loss = if train_phi && !config.freeze_phi {
                phi_step(&mut params, &mut phi_adam, xr, tr)?
            } else {
                0.0
            };
            let inputs = ObjectiveInputs {
                x: xr,
                x_neg: &x_neg,
                h: &h,
                h_neg: &h_neg,
                t: tr,
                y: yr,
            };
            let (loss, grads) = objective(&params, &inputs, batch_weights).map_err(|e| match e {
                IdrlError::Diverged { message, .. } => IdrlError::Diverged { epoch, message },
                other => other,
            })?;
            adam.step(&mut params.trainable_slices_mut(), &grads.slices())?;
            acc.0 += loss.factual;
            acc.1 += loss.mi_s;
            acc.2 += loss.mi_h;
            acc.3 += phi_loss;
            used += 1;
        }
        let k = used.max(1) as f64;
        let mut record = EpochRecord {
            epoch,
            factual: acc.0 / k,
            mi_s: acc.1 / k,
            mi_h: acc.2 / k,
            phi_loss: acc.3 / k,
            valid_rmse: None,
        };
        if valid.n() > 0 && (epoch % config.eval_every == 0 || epoch == config.epochs) {
            let rmse = valid_rmse(&params, &x_valid, &valid.t, &valid.y_f, &y_scaler)?;
            if !rmse.is_finite() {
                return Err(IdrlError::Diverged {
                    epoch,
                    message: "validation RMSE is not finite".into(),
                });
            }
            record.valid_rmse = Some(rmse);
            if rmse < best.0 {
                best = (rmse, epoch, params.clone());
            }
        }
        log.push(record);
    }
    if valid.n() == 0 {
        best = (f64::NAN, config.epochs, params);
    }
    let (best_rmse, best_epoch, best_params) = best;
    Ok((
        TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            config: config.clone(),
            x_scaler,
            y_scaler,
            params: best_params,
            best_epoch,
        },
        TrainingLog {
            method: config.method_label().to_string(),
            epochs: log,
            best_epoch,
            best_valid_rmse: best_rmse,
        },
    ))
}

/// Smallest and largest value any discriminator can output.
pub const DISCRIMINATOR_RANGE: (f64, f64) = (PROB_CLAMP, 1.0 - PROB_CLAMP);

//! Feed-forward representation network with monotone output heads and exact
//! reverse-mode gradients.
//!
//! The representation `z(x) = (1, tanh(W_d … tanh(W_1 x)))` is shared by all
//! heads. Each head `k` forms an inner product `η_k = ⟨β_k, z⟩`, clamped to
//! `[-ETA_CLAMP, ETA_CLAMP]`, and maps the vector `η` to ordered positive
//! outputs:
//!
//! - multi-quantile additive: `Q_1 = e^{η_1}`, `Q_{j+1} = Q_j + e^{η_{j+1}}`
//! - multi-quantile multiplicative: `Q_K = e^{η_K}`, `Q_j = σ(η_j) Q_{j+1}`
//! - composite: `e⁻ = e^{η_1}`, `v = e⁻ + e^{η_2}`, `e⁺ = v + e^{η_3}`
//! - mean: `μ = e^{η_1}` (used for the variance pre-fits)
//!
//! Parameters live in one flat vector, layers first and head weights last,
//! so that optimizers and serialization see a single contiguous buffer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::{composite_gradient_raw, composite_score_raw, check_tau, pinball_raw, CompositeTriplet, PhiIndex, ScoreSpec};

/// Inner products are clamped to this range before exponentiation.
pub const ETA_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    MultiQuantileAdditive,
    MultiQuantileMultiplicative,
    CompositeAdditive,
    Mean,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::MultiQuantileAdditive => "multi_quantile_additive",
            HeadKind::MultiQuantileMultiplicative => "multi_quantile_multiplicative",
            HeadKind::CompositeAdditive => "composite_additive",
            HeadKind::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Number of features `r₀`, not counting the leading constant column.
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub head: HeadKind,
    /// Quantile levels for the quantile heads, `[τ]` for the composite head, empty for the mean head.
    pub levels: Vec<f64>,
    pub link: Link,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, head: HeadKind, levels: Vec<f64>, seed: u64) -> Result<Self> {
        let cfg = NetworkConfig {
            input_dim,
            hidden_dims,
            activation: Activation::Tanh,
            head,
            levels,
            link: Link::Log,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn default_hidden() -> Vec<usize> {
        vec![20, 15, 10]
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::config("hidden_dims must be a nonempty list of positive sizes"));
        }
        for &tau in &self.levels {
            check_tau(tau)?;
        }
        if self.levels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("levels must be strictly increasing"));
        }
        match self.head {
            HeadKind::MultiQuantileAdditive | HeadKind::MultiQuantileMultiplicative if self.levels.is_empty() => {
                Err(Error::config("quantile heads need at least one level"))
            }
            HeadKind::CompositeAdditive if self.levels.len() != 1 => {
                Err(Error::config("composite head needs exactly one level tau"))
            }
            HeadKind::Mean if !self.levels.is_empty() => Err(Error::config("mean head takes no levels")),
            _ => Ok(()),
        }
    }

    /// Number of heads `K` (= number of outputs).
    pub fn n_heads(&self) -> usize {
        match self.head {
            HeadKind::MultiQuantileAdditive | HeadKind::MultiQuantileMultiplicative => self.levels.len(),
            HeadKind::CompositeAdditive => 3,
            HeadKind::Mean => 1,
        }
    }

    /// Width `r_d + 1` of the representation including the constant.
    pub fn representation_dim(&self) -> usize {
        self.hidden_dims[self.hidden_dims.len() - 1] + 1
    }

    /// `(rows, cols)` of every weight block: layers, then the stacked head weights.
    pub fn block_shapes(&self) -> Vec<[usize; 2]> {
        let mut shapes = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &r in &self.hidden_dims {
            shapes.push([r, prev + 1]);
            prev = r;
        }
        shapes.push([self.n_heads(), prev + 1]);
        shapes
    }

    /// `Σ r_m (r_{m−1} + 1) + K (r_d + 1)`.
    pub fn param_count(&self) -> usize {
        self.block_shapes().iter().map(|[r, c]| r * c).sum()
    }
}

/// Flat parameter vector with its block shape header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub shapes: Vec<[usize; 2]>,
    pub values: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        NetworkParams {
            shapes: cfg.block_shapes(),
            values: vec![0.0; cfg.param_count()],
        }
    }

    /// Symmetric uniform initialization `U(−a, a)`, `a = √(6/(fan_in + fan_out))`; biases start at 0.
    pub fn init(cfg: &NetworkConfig, seed: u64) -> Self {
        let mut params = NetworkParams::zeros(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offset = 0;
        for &[rows, cols] in &params.shapes {
            let fan_in = (cols - 1) as f64;
            let fan_out = rows as f64;
            let a = (6.0 / (fan_in + fan_out)).sqrt();
            for r in 0..rows {
                for c in 1..cols {
                    params.values[offset + r * cols + c] = rng.random_range(-a..a);
                }
            }
            offset += rows * cols;
        }
        params
    }

    pub fn check(&self, cfg: &NetworkConfig) -> Result<()> {
        if self.shapes != cfg.block_shapes() || self.values.len() != cfg.param_count() {
            return Err(Error::domain(format!(
                "parameter shapes {:?} do not match network configuration {:?}",
                self.shapes,
                cfg.block_shapes()
            )));
        }
        Ok(())
    }

    /// Offset of the stacked head block.
    pub fn head_offset(&self) -> usize {
        let n_layers = self.shapes.len() - 1;
        self.shapes[..n_layers].iter().map(|[r, c]| r * c).sum()
    }

    /// Index of the bias of head `k` in the flat vector.
    pub fn head_bias_index(&self, k: usize) -> usize {
        let cols = self.shapes[self.shapes.len() - 1][1];
        self.head_offset() + k * cols
    }

    pub fn head_weights(&self, k: usize) -> &[f64] {
        let cols = self.shapes[self.shapes.len() - 1][1];
        let start = self.head_offset() + k * cols;
        &self.values[start..start + cols]
    }
}

/// Loss attached to a head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// `Σ_j η_j L_{τ_j}(y; Q_j)`.
    Pinball { levels: Vec<f64>, weights: Vec<f64> },
    /// Composite triplet score.
    Composite { spec: ScoreSpec },
    /// Bregman divergence of `(c/2) φ_b` for a mean head.
    Bregman { phi: PhiIndex },
}

impl Objective {
    pub fn check_compatible(&self, cfg: &NetworkConfig) -> Result<()> {
        match (self, cfg.head) {
            (Objective::Pinball { levels, weights }, HeadKind::MultiQuantileAdditive | HeadKind::MultiQuantileMultiplicative) => {
                if levels != &cfg.levels {
                    return Err(Error::config("pinball levels differ from the network levels"));
                }
                if weights.len() != levels.len() || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                    return Err(Error::config("pinball weights must be positive, one per level"));
                }
                Ok(())
            }
            (Objective::Composite { spec }, HeadKind::CompositeAdditive) => {
                spec.validate()?;
                if cfg.levels != [spec.tau] {
                    return Err(Error::config("score level differs from the composite head level"));
                }
                Ok(())
            }
            (Objective::Bregman { .. }, HeadKind::Mean) => Ok(()),
            (obj, head) => Err(Error::config(format!(
                "objective {} cannot train a {} head",
                obj.name(),
                head.name()
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Objective::Pinball { .. } => "pinball",
            Objective::Composite { .. } => "composite",
            Objective::Bregman { .. } => "bregman",
        }
    }

    /// Loss of one observation given the head outputs.
    pub fn loss(&self, y: f64, out: &[f64]) -> f64 {
        match self {
            Objective::Pinball { levels, weights } => levels
                .iter()
                .zip(weights)
                .zip(out)
                .map(|((&tau, &w), &q)| w * pinball_raw(y, q, tau))
                .sum(),
            Objective::Composite { spec } => composite_score_raw(y, out[0], out[1], out[2], spec),
            Objective::Bregman { phi } => phi.bregman(y, out[0]),
        }
    }

    /// Writes `∂loss/∂out` into `grad`.
    pub fn loss_gradient(&self, y: f64, out: &[f64], grad: &mut [f64]) {
        match self {
            Objective::Pinball { levels, weights } => {
                for (j, ((&tau, &w), &q)) in levels.iter().zip(weights).zip(out).enumerate() {
                    let below = if y <= q { 1.0 } else { 0.0 };
                    grad[j] = w * (below - tau);
                }
            }
            Objective::Composite { spec } => {
                let (a, b, c) = composite_gradient_raw(y, out[0], out[1], out[2], spec);
                grad[0] = a;
                grad[1] = b;
                grad[2] = c;
            }
            Objective::Bregman { phi } => {
                grad[0] = phi.second(out[0]) * (out[0] - y);
            }
        }
    }
}

#[inline]
fn clamp_eta(eta: f64) -> (f64, f64) {
    if eta > ETA_CLAMP {
        (ETA_CLAMP, 0.0)
    } else if eta < -ETA_CLAMP {
        (-ETA_CLAMP, 0.0)
    } else {
        (eta, 1.0)
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Maps raw inner products to head outputs. `out.len() == etas.len()`.
pub(crate) fn head_forward(kind: HeadKind, etas: &[f64], out: &mut [f64]) {
    match kind {
        HeadKind::MultiQuantileAdditive | HeadKind::CompositeAdditive | HeadKind::Mean => {
            let mut acc: f64 = 0.0;
            for (o, &eta) in out.iter_mut().zip(etas) {
                let next = acc + clamp_eta(eta).0.exp();
                // an increment below one ulp would tie two outputs
                acc = if next > acc { next } else { acc.next_up() };
                *o = acc;
            }
        }
        HeadKind::MultiQuantileMultiplicative => {
            let k = etas.len();
            out[k - 1] = clamp_eta(etas[k - 1]).0.exp();
            for j in (0..k - 1).rev() {
                out[j] = sigmoid(clamp_eta(etas[j]).0) * out[j + 1];
            }
        }
    }
}

/// Back-propagates `g_out = ∂L/∂out` through the head; writes `∂L/∂η` into `g_eta`.
/// `g_out` is used as scratch.
fn head_backward(kind: HeadKind, etas: &[f64], out: &[f64], g_out: &mut [f64], g_eta: &mut [f64]) {
    let k = etas.len();
    match kind {
        HeadKind::MultiQuantileAdditive | HeadKind::CompositeAdditive | HeadKind::Mean => {
            // out_j = Σ_{i ≤ j} e^{η_i}
            let mut tail = 0.0;
            for i in (0..k).rev() {
                tail += g_out[i];
                let (e, d) = clamp_eta(etas[i]);
                g_eta[i] = tail * e.exp() * d;
            }
        }
        HeadKind::MultiQuantileMultiplicative => {
            for j in 0..k - 1 {
                let (e, d) = clamp_eta(etas[j]);
                let s = sigmoid(e);
                g_eta[j] = g_out[j] * s * (1.0 - s) * out[j + 1] * d;
                g_out[j + 1] += g_out[j] * s;
            }
            let (e, d) = clamp_eta(etas[k - 1]);
            g_eta[k - 1] = g_out[k - 1] * e.exp() * d;
        }
    }
}

fn check_betas(betas: &[&[f64]], z: &[f64]) -> Result<()> {
    if betas.is_empty() {
        return Err(Error::domain("at least one head is required"));
    }
    if let Some(bad) = betas.iter().find(|b| b.len() != z.len()) {
        return Err(Error::domain(format!(
            "head vector of length {} does not match representation of length {}",
            bad.len(),
            z.len()
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn eval_head(kind: HeadKind, z: &[f64], betas: &[&[f64]]) -> Result<Vec<f64>> {
    check_betas(betas, z)?;
    let etas: Vec<f64> = betas.iter().map(|b| dot(b, z)).collect();
    let mut out = vec![0.0; etas.len()];
    head_forward(kind, &etas, &mut out);
    Ok(out)
}

/// Additive multiple-quantile head.
pub fn head_multi_quantile_additive(z: &[f64], betas: &[&[f64]], levels: &[f64]) -> Result<Vec<f64>> {
    if betas.len() != levels.len() {
        return Err(Error::domain(format!("{} heads for {} levels", betas.len(), levels.len())));
    }
    eval_head(HeadKind::MultiQuantileAdditive, z, betas)
}

/// Multiplicative multiple-quantile head.
pub fn head_multi_quantile_multiplicative(z: &[f64], betas: &[&[f64]], levels: &[f64]) -> Result<Vec<f64>> {
    if betas.len() != levels.len() {
        return Err(Error::domain(format!("{} heads for {} levels", betas.len(), levels.len())));
    }
    eval_head(HeadKind::MultiQuantileMultiplicative, z, betas)
}

/// Composite head producing `(e⁻, v, e⁺)`.
pub fn head_composite(z: &[f64], beta1: &[f64], beta2: &[f64], beta3: &[f64]) -> Result<CompositeTriplet> {
    let out = eval_head(HeadKind::CompositeAdditive, z, &[beta1, beta2, beta3])?;
    Ok(CompositeTriplet {
        e_minus: out[0],
        v: out[1],
        e_plus: out[2],
    })
}

/// Representation `z^{(d:1)}(x)` with its leading constant.
pub fn forward_representation(x: &[f64], params: &NetworkParams, cfg: &NetworkConfig) -> Result<Vec<f64>> {
    params.check(cfg)?;
    check_input(x, cfg)?;
    let mut ws = Workspace::new(cfg);
    ws.forward_layers(x, &params.values, cfg);
    Ok(ws.acts[ws.acts.len() - 1].clone())
}

fn check_input(x: &[f64], cfg: &NetworkConfig) -> Result<()> {
    if x.len() != cfg.input_dim + 1 {
        return Err(Error::domain(format!(
            "feature vector has length {}, expected {} (constant + {} features)",
            x.len(),
            cfg.input_dim + 1,
            cfg.input_dim
        )));
    }
    if x[0] != 1.0 {
        return Err(Error::domain("feature vector must start with the constant 1"));
    }
    Ok(())
}

/// Per-thread scratch buffers for forward and backward passes.
pub(crate) struct Workspace {
    /// `acts[0]` is unused (the input is borrowed); `acts[m] = (1, tanh(pre_m))`.
    acts: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
    etas: Vec<f64>,
    out: Vec<f64>,
    g_out: Vec<f64>,
    g_eta: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(cfg: &NetworkConfig) -> Self {
        let mut acts = vec![Vec::new()];
        let mut grads = vec![Vec::new()];
        for &r in &cfg.hidden_dims {
            let mut a = vec![0.0; r + 1];
            a[0] = 1.0;
            acts.push(a);
            grads.push(vec![0.0; r + 1]);
        }
        let k = cfg.n_heads();
        Workspace {
            acts,
            grads,
            etas: vec![0.0; k],
            out: vec![0.0; k],
            g_out: vec![0.0; k],
            g_eta: vec![0.0; k],
        }
    }

    fn forward_layers(&mut self, x: &[f64], w: &[f64], cfg: &NetworkConfig) {
        let mut offset = 0;
        for (m, &rows) in cfg.hidden_dims.iter().enumerate() {
            let (before, after) = self.acts.split_at_mut(m + 1);
            let input: &[f64] = if m == 0 { x } else { &before[m] };
            let cols = input.len();
            let target = &mut after[0];
            for r in 0..rows {
                let row = &w[offset + r * cols..offset + (r + 1) * cols];
                target[r + 1] = dot(row, input).tanh();
            }
            offset += rows * cols;
        }
    }

    /// Full forward pass; returns the head outputs.
    pub(crate) fn forward(&mut self, x: &[f64], w: &[f64], cfg: &NetworkConfig) -> &[f64] {
        self.forward_layers(x, w, cfg);
        let z = &self.acts[self.acts.len() - 1];
        let cols = z.len();
        let head_offset = w.len() - self.etas.len() * cols;
        for (k, eta) in self.etas.iter_mut().enumerate() {
            *eta = dot(&w[head_offset + k * cols..head_offset + (k + 1) * cols], z);
        }
        head_forward(cfg.head, &self.etas, &mut self.out);
        &self.out
    }

    /// Forward + backward for one observation; adds `scale · ∂loss/∂θ` into `grad` and returns the loss.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn accumulate(
        &mut self,
        x: &[f64],
        y: f64,
        w: &[f64],
        cfg: &NetworkConfig,
        objective: &Objective,
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        self.forward(x, w, cfg);
        let loss = objective.loss(y, &self.out);
        objective.loss_gradient(y, &self.out, &mut self.g_out);
        head_backward(cfg.head, &self.etas, &self.out, &mut self.g_out, &mut self.g_eta);

        let d = cfg.hidden_dims.len();
        let cols = self.acts[d].len();
        let head_offset = w.len() - self.etas.len() * cols;
        // head weights and gradient w.r.t. the representation
        let g_z = &mut self.grads[d];
        g_z.iter_mut().for_each(|g| *g = 0.0);
        for k in 0..self.etas.len() {
            let ge = self.g_eta[k] * scale;
            if ge == 0.0 {
                continue;
            }
            let base = head_offset + k * cols;
            for c in 0..cols {
                grad[base + c] += ge * self.acts[d][c];
                g_z[c] += ge * w[base + c];
            }
        }
        // hidden layers, last to first
        let mut offsets = Vec::with_capacity(d);
        let mut off = 0;
        for m in 0..d {
            offsets.push(off);
            let in_cols = if m == 0 { x.len() } else { self.acts[m].len() };
            off += cfg.hidden_dims[m] * in_cols;
        }
        for m in (0..d).rev() {
            let rows = cfg.hidden_dims[m];
            let (lower, upper) = self.grads.split_at_mut(m + 1);
            let g_act = &mut upper[0];
            // tanh' = 1 − a², stored in place over the activation gradient
            for r in 0..rows {
                let a = self.acts[m + 1][r + 1];
                g_act[r + 1] *= 1.0 - a * a;
            }
            let input: &[f64] = if m == 0 { x } else { &self.acts[m] };
            let in_cols = input.len();
            let base = offsets[m];
            if m > 0 {
                lower[m].iter_mut().for_each(|g| *g = 0.0);
            }
            for r in 0..rows {
                let gp = g_act[r + 1];
                if gp == 0.0 {
                    continue;
                }
                let row = base + r * in_cols;
                for c in 0..in_cols {
                    grad[row + c] += gp * input[c];
                }
                if m > 0 {
                    let g_in = &mut lower[m];
                    for c in 1..in_cols {
                        g_in[c] += gp * w[row + c];
                    }
                }
            }
        }
        loss
    }
}

/// Mean objective over a batch of `(x, y)` pairs.
pub fn batch_loss(batch: &[(&[f64], f64)], params: &NetworkParams, cfg: &NetworkConfig, objective: &Objective) -> Result<f64> {
    prepare(batch, params, cfg, objective)?;
    let mut ws = Workspace::new(cfg);
    let total: f64 = batch
        .iter()
        .map(|&(x, y)| {
            let out = ws.forward(x, &params.values, cfg);
            objective.loss(y, out)
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// Gradient of the mean batch objective with respect to all parameters.
pub fn gradient(batch: &[(&[f64], f64)], params: &NetworkParams, cfg: &NetworkConfig, objective: &Objective) -> Result<Vec<f64>> {
    prepare(batch, params, cfg, objective)?;
    let mut ws = Workspace::new(cfg);
    let mut grad = vec![0.0; params.values.len()];
    let scale = 1.0 / batch.len() as f64;
    for &(x, y) in batch {
        ws.accumulate(x, y, &params.values, cfg, objective, scale, &mut grad);
    }
    Ok(grad)
}

fn prepare(batch: &[(&[f64], f64)], params: &NetworkParams, cfg: &NetworkConfig, objective: &Objective) -> Result<()> {
    cfg.validate()?;
    params.check(cfg)?;
    objective.check_compatible(cfg)?;
    if batch.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    for &(x, y) in batch {
        check_input(x, cfg)?;
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::domain(format!("responses must be positive, got {y}")));
        }
    }
    Ok(())
}

/// Head outputs for one feature vector.
pub fn predict(x: &[f64], params: &NetworkParams, cfg: &NetworkConfig) -> Result<Vec<f64>> {
    params.check(cfg)?;
    check_input(x, cfg)?;
    let mut ws = Workspace::new(cfg);
    Ok(ws.forward(x, &params.values, cfg).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(head: HeadKind, levels: Vec<f64>) -> NetworkConfig {
        NetworkConfig::new(3, vec![5, 4], head, levels, 0).unwrap()
    }

    #[test]
    fn parameter_count_formula() {
        // (10; 20, 15, 10) with three heads
        let c = NetworkConfig::new(10, vec![20, 15, 10], HeadKind::MultiQuantileAdditive, vec![0.1, 0.5, 0.9], 0).unwrap();
        assert_eq!(c.param_count(), 20 * 11 + 15 * 21 + 10 * 16 + 3 * 11);
        let single = NetworkConfig::new(10, vec![20, 15, 10], HeadKind::Mean, vec![], 0).unwrap();
        assert_eq!(single.param_count(), 20 * 11 + 15 * 21 + 10 * 16 + 11);
        let comp = NetworkConfig::new(4, vec![7], HeadKind::CompositeAdditive, vec![0.9], 0).unwrap();
        assert_eq!(comp.param_count(), 7 * 5 + 3 * 8);
        assert_eq!(NetworkParams::init(&comp, 1).values.len(), comp.param_count());
    }

    #[test]
    fn config_validation() {
        assert!(NetworkConfig::new(3, vec![], HeadKind::Mean, vec![], 0).is_err());
        assert!(NetworkConfig::new(3, vec![4], HeadKind::MultiQuantileAdditive, vec![0.5, 0.5], 0).is_err());
        assert!(NetworkConfig::new(3, vec![4], HeadKind::MultiQuantileAdditive, vec![0.5, 0.1], 0).is_err());
        assert!(NetworkConfig::new(3, vec![4], HeadKind::CompositeAdditive, vec![0.1, 0.5], 0).is_err());
        assert!(NetworkConfig::new(3, vec![4], HeadKind::MultiQuantileAdditive, vec![1.0], 0).is_err());
    }

    #[test]
    fn zero_weights_give_unit_representation() {
        let c = cfg(HeadKind::Mean, vec![]);
        let p = NetworkParams::zeros(&c);
        let z = forward_representation(&[1.0, 0.3, 0.9, 0.1], &p, &c).unwrap();
        assert_eq!(z, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn representation_rejects_bad_input() {
        let c = cfg(HeadKind::Mean, vec![]);
        let p = NetworkParams::zeros(&c);
        assert!(forward_representation(&[1.0, 0.3], &p, &c).is_err());
        assert!(forward_representation(&[0.0, 0.3, 0.9, 0.1], &p, &c).is_err());
        let other = cfg(HeadKind::CompositeAdditive, vec![0.5]);
        assert!(forward_representation(&[1.0, 0.3, 0.9, 0.1], &p, &other).is_err());
    }

    #[test]
    fn representation_is_deterministic() {
        let c = cfg(HeadKind::Mean, vec![]);
        let p = NetworkParams::init(&c, 42);
        let x = [1.0, 0.25, 0.5, 0.75];
        let a = forward_representation(&x, &p, &c).unwrap();
        let b = forward_representation(&x.clone(), &p, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(p, NetworkParams::init(&c, 42));
    }

    #[test]
    fn additive_head_examples() {
        let z = [1.0, 0.0];
        let zero = [0.0, 0.0];
        assert_eq!(
            head_multi_quantile_additive(&z, &[&zero, &zero, &zero], &[0.1, 0.5, 0.9]).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        let b1 = [5f64.ln(), 0.0];
        let b2 = [2f64.ln(), 0.0];
        let out = head_multi_quantile_additive(&z, &[&b1, &b2], &[0.1, 0.9]).unwrap();
        assert!((out[0] - 5.0).abs() < 1e-12 && (out[1] - 7.0).abs() < 1e-12);
        assert!(head_multi_quantile_additive(&z, &[&b1], &[0.1, 0.9]).is_err());
        assert!(head_multi_quantile_additive(&z, &[&[1.0]], &[0.1]).is_err());
    }

    #[test]
    fn multiplicative_head_examples() {
        let z = [1.0, 0.0];
        let zero = [0.0, 0.0];
        assert_eq!(head_multi_quantile_multiplicative(&z, &[&zero, &zero], &[0.1, 0.9]).unwrap(), vec![0.5, 1.0]);
        let big = [1e6, 0.0];
        let top = [4f64.ln(), 0.0];
        let out = head_multi_quantile_multiplicative(&z, &[&big, &top], &[0.1, 0.9]).unwrap();
        assert!(out[0] < out[1] && (out[0] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn composite_head_examples() {
        let z = [1.0, 0.0];
        let zero = [0.0, 0.0];
        let t = head_composite(&z, &zero, &zero, &zero).unwrap();
        assert_eq!((t.e_minus, t.v, t.e_plus), (1.0, 2.0, 3.0));
        let t = head_composite(&z, &[3f64.ln(), 0.0], &[2.5f64.ln(), 0.0], &[2.5f64.ln(), 0.0]).unwrap();
        assert!((t.e_minus - 3.0).abs() < 1e-12 && (t.v - 5.5).abs() < 1e-12 && (t.e_plus - 8.0).abs() < 1e-12);
        assert!(head_composite(&z, &zero, &zero, &[0.0]).is_err());
    }

    #[test]
    fn objective_head_mismatch_is_config_error() {
        let c = cfg(HeadKind::CompositeAdditive, vec![0.5]);
        let p = NetworkParams::zeros(&c);
        let obj = Objective::Pinball { levels: vec![0.5], weights: vec![1.0] };
        let x = [1.0, 0.1, 0.2, 0.3];
        let err = gradient(&[(&x, 1.0)], &p, &c, &obj).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn weight_perturbation_matches_finite_difference() {
        let c = cfg(HeadKind::Mean, vec![]);
        let p = NetworkParams::init(&c, 3);
        let x = [1.0, 0.2, 0.7, 0.4];
        let obj = Objective::Bregman { phi: PhiIndex::new(2.0, 2.0).unwrap() };
        let g = gradient(&[(&x, 2.0)], &p, &c, &obj).unwrap();
        let h = 1e-6;
        for i in [0, 5, 17, p.values.len() - 1] {
            let mut up = p.clone();
            up.values[i] += h;
            let mut dn = p.clone();
            dn.values[i] -= h;
            let fd = (batch_loss(&[(&x, 2.0)], &up, &c, &obj).unwrap() - batch_loss(&[(&x, 2.0)], &dn, &c, &obj).unwrap()) / (2.0 * h);
            assert!((g[i] - fd).abs() <= 1e-4 * g[i].abs().max(1e-3), "param {i}: {} vs {fd}", g[i]);
        }
    }
}

//! Fully connected regressor `x -> y` with batch normalization and identity
//! skips, trained by minibatch SGD on mean squared error.
//!
//! Hidden layer: `relu(γ ⊙ bn(x Wᵀ + b) + β)`. Hidden layers are grouped in
//! pairs; a pair whose input width equals the hidden width adds its input to
//! its output.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_HIDDEN: usize = 8;
pub const DEFAULT_HIDDEN_WIDTH: usize = 256;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Ablation switches; the default enables both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub batch_norm: bool,
    pub skip: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            batch_norm: true,
            skip: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    /// `out × in`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl HiddenLayer {
    fn init(fan_in: usize, width: usize, rng: &mut ChaCha8Rng) -> Self {
        let k = (1.0 / fan_in as f64).sqrt();
        Self {
            w: Array2::from_shape_simple_fn((width, fan_in), || rng.random_range(-k..k)),
            b: Array1::from_shape_simple_fn(width, || rng.random_range(-k..k)),
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }

    fn fan_in(&self) -> usize {
        self.w.ncols()
    }

    fn width(&self) -> usize {
        self.w.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    arch: Architecture,
    layers: Vec<HiddenLayer>,
    head_w: Array1<f64>,
    head_b: f64,
    /// Bumped on every parameter change; caches remember the value they saw.
    generation: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

struct LayerCache {
    input: Array2<f64>,
    /// Normalized pre-activation (equal to the pre-activation without batch norm).
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    /// Post-affine, pre-ReLU.
    act: Array2<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

/// Activations of a train-mode forward pass.
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    last_hidden: Array2<f64>,
    pred: Array1<f64>,
    generation: u64,
}

impl ForwardCache {
    pub fn predictions(&self) -> &Array1<f64> {
        &self.pred
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
    pub head_w: Array1<f64>,
    pub head_b: f64,
    pub loss: f64,
}

impl Gradients {
    /// Same ordering as [`MlpModel::params_flat`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend(g.w.iter());
            out.extend(g.b.iter());
            out.extend(g.gamma.iter());
            out.extend(g.beta.iter());
        }
        out.extend(self.head_w.iter());
        out.push(self.head_b);
        out
    }
}

impl MlpModel {
    pub fn init(input_dim: usize, hidden_width: usize, seed: u64) -> Result<Self> {
        Self::init_with(input_dim, hidden_width, seed, Architecture::default())
    }

    pub fn init_with(
        input_dim: usize,
        hidden_width: usize,
        seed: u64,
        arch: Architecture,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_width == 0 {
            return Err(Error::InvalidInput("network dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(N_HIDDEN);
        for l in 0..N_HIDDEN {
            let fan_in = if l == 0 { input_dim } else { hidden_width };
            layers.push(HiddenLayer::init(fan_in, hidden_width, &mut rng));
        }
        let k = (1.0 / hidden_width as f64).sqrt();
        let head_w = Array1::from_shape_simple_fn(hidden_width, || rng.random_range(-k..k));
        let head_b = rng.random_range(-k..k);
        Ok(Self {
            arch,
            layers,
            head_w,
            head_b,
            generation: 0,
        })
    }

    /// Reassembles a model from its parts, checking shapes.
    pub fn from_parts(
        arch: Architecture,
        layers: Vec<HiddenLayer>,
        head_w: Array1<f64>,
        head_b: f64,
    ) -> Result<Self> {
        if layers.len() != N_HIDDEN {
            return Err(Error::DimensionMismatch {
                expected: N_HIDDEN,
                got: layers.len(),
            });
        }
        let width = layers[0].width();
        for (l, layer) in layers.iter().enumerate() {
            let fan_in = if l == 0 { layer.fan_in() } else { width };
            let ok = layer.w.dim() == (width, fan_in)
                && [&layer.b, &layer.gamma, &layer.beta, &layer.running_mean, &layer.running_var]
                    .iter()
                    .all(|v| v.len() == width);
            if !ok {
                return Err(Error::InvalidInput(format!("layer {l} has inconsistent shapes")));
            }
            if layer.running_var.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidInput(format!("layer {l} running variance invalid")));
            }
        }
        if head_w.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                got: head_w.len(),
            });
        }
        Ok(Self {
            arch,
            layers,
            head_w,
            head_b,
            generation: 0,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn hidden_width(&self) -> usize {
        self.layers[0].width()
    }

    pub fn layers(&self) -> &[HiddenLayer] {
        &self.layers
    }

    pub fn head(&self) -> (&Array1<f64>, f64) {
        (&self.head_w, self.head_b)
    }

    pub fn n_params(&self) -> usize {
        let hidden: usize = self
            .layers
            .iter()
            .map(|l| l.w.len() + 3 * l.width())
            .sum();
        hidden + self.head_w.len() + 1
    }

    fn skips_block(&self, block: usize) -> bool {
        self.arch.skip && self.layers[2 * block].fan_in() == self.hidden_width()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn run(&self, x: ArrayView2<f64>, mode: Mode) -> (Array1<f64>, Option<ForwardCache>) {
        let train = mode == Mode::Train;
        let mut caches = Vec::with_capacity(if train { N_HIDDEN } else { 0 });
        let mut h = x.to_owned();
        let mut block_input = h.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            if l % 2 == 0 {
                block_input = h.clone();
            }
            let z = h.dot(&layer.w.t()) + &layer.b;
            let (xhat, inv_std, mean, var) = if !self.arch.batch_norm {
                let n = layer.width();
                (z, Array1::ones(n), Array1::zeros(n), Array1::ones(n))
            } else if train {
                let mean = z.mean_axis(Axis(0)).expect("nonempty batch");
                let centered = &z - &mean;
                let var = centered.map(|v| v * v).mean_axis(Axis(0)).expect("nonempty batch");
                let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                (centered * &inv_std, inv_std, mean, var)
            } else {
                let inv_std = layer.running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                let xhat = (z - &layer.running_mean) * &inv_std;
                (xhat, inv_std, layer.running_mean.clone(), layer.running_var.clone())
            };
            let act = if self.arch.batch_norm {
                &xhat * &layer.gamma + &layer.beta
            } else {
                xhat.clone()
            };
            let mut out = act.mapv(|v| v.max(0.0));
            if l % 2 == 1 && self.skips_block(l / 2) {
                out += &block_input;
            }
            if train {
                caches.push(LayerCache {
                    input: h,
                    xhat,
                    inv_std,
                    act,
                    batch_mean: mean,
                    batch_var: var,
                });
            }
            h = out;
        }
        let mut pred = h.dot(&self.head_w) + self.head_b;
        if mode == Mode::Eval {
            pred.mapv_inplace(|v| v.clamp(0.0, 1.0));
        }
        let cache = train.then(|| ForwardCache {
            layers: caches,
            last_hidden: h,
            pred: pred.clone(),
            generation: self.generation,
        });
        (pred, cache)
    }

    /// Train-mode pass: batch statistics, running statistics updated.
    pub fn forward_train(&mut self, x: ArrayView2<f64>) -> Result<(Array1<f64>, ForwardCache)> {
        self.check_input(&x)?;
        if x.nrows() < 2 {
            return Err(Error::InvalidInput("train mode needs a batch of at least 2".into()));
        }
        let (pred, cache) = self.run(x, Mode::Train);
        let cache = cache.expect("train mode caches");
        if self.arch.batch_norm {
            let n = x.nrows() as f64;
            let unbias = n / (n - 1.0);
            for (layer, c) in self.layers.iter_mut().zip(&cache.layers) {
                layer.running_mean =
                    &layer.running_mean * (1.0 - BN_MOMENTUM) + &c.batch_mean * BN_MOMENTUM;
                layer.running_var = &layer.running_var * (1.0 - BN_MOMENTUM)
                    + &c.batch_var * (BN_MOMENTUM * unbias);
            }
        }
        Ok((pred, cache))
    }

    /// Inference pass on running statistics; outputs clamped to `[0, 1]`.
    pub fn forward_eval(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_input(&x)?;
        Ok(self.run(x, Mode::Eval).0)
    }

    pub fn forward(&mut self, x: ArrayView2<f64>, mode: Mode) -> Result<Array1<f64>> {
        match mode {
            Mode::Train => Ok(self.forward_train(x)?.0),
            Mode::Eval => self.forward_eval(x),
        }
    }

    /// Train-mode MSE without touching running statistics.
    pub fn train_loss(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<f64> {
        self.check_input(&x)?;
        check_targets(x.nrows(), &y)?;
        let (pred, _) = self.run(x, Mode::Train);
        Ok(mse(&pred, &y))
    }

    pub fn backward(&self, cache: &ForwardCache, y: ArrayView1<f64>) -> Result<Gradients> {
        if cache.generation != self.generation || cache.layers.len() != N_HIDDEN {
            return Err(Error::StaleCache);
        }
        let n = cache.pred.len();
        check_targets(n, &y)?;
        let resid = &cache.pred - &y;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n as f64;
        let dpred = resid * (2.0 / n as f64);

        let head_w = cache.last_hidden.t().dot(&dpred);
        let head_b = dpred.sum();
        let mut g: Array2<f64> = outer(&dpred, &self.head_w);

        let mut grads: Vec<Option<LayerGrad>> = vec![None; N_HIDDEN];
        let mut skip_grad: Option<Array2<f64>> = None;
        for l in (0..N_HIDDEN).rev() {
            if l % 2 == 1 && self.skips_block(l / 2) {
                skip_grad = Some(g.clone());
            }
            let (lg, dx) = self.layer_backward(l, &cache.layers[l], g);
            grads[l] = Some(lg);
            g = dx;
            if l % 2 == 0 {
                if let Some(s) = skip_grad.take() {
                    g += &s;
                }
            }
        }
        Ok(Gradients {
            layers: grads.into_iter().map(|g| g.expect("every layer visited")).collect(),
            head_w,
            head_b,
            loss,
        })
    }

    fn layer_backward(&self, l: usize, c: &LayerCache, dout: Array2<f64>) -> (LayerGrad, Array2<f64>) {
        let layer = &self.layers[l];
        let mut dact = dout;
        dact.zip_mut_with(&c.act, |d, a| {
            if *a <= 0.0 {
                *d = 0.0;
            }
        });
        let width = layer.width();
        let (dz, dgamma, dbeta) = if self.arch.batch_norm {
            let dgamma = (&dact * &c.xhat).sum_axis(Axis(0));
            let dbeta = dact.sum_axis(Axis(0));
            let dxhat = dact * &layer.gamma;
            let m = c.xhat.nrows() as f64;
            let sum_dxhat = dxhat.sum_axis(Axis(0));
            let sum_dxhat_xhat = (&dxhat * &c.xhat).sum_axis(Axis(0));
            let mut dz = dxhat * m - &sum_dxhat - &(&c.xhat * &sum_dxhat_xhat);
            dz *= &(&c.inv_std / m);
            (dz, dgamma, dbeta)
        } else {
            (dact, Array1::zeros(width), Array1::zeros(width))
        };
        let dw = dz.t().dot(&c.input);
        let db = dz.sum_axis(Axis(0));
        let dx = dz.dot(&layer.w);
        (
            LayerGrad {
                w: dw,
                b: db,
                gamma: dgamma,
                beta: dbeta,
            },
            dx,
        )
    }

    /// Plain SGD step.
    pub fn apply_gradients(&mut self, g: &Gradients, lr: f64) {
        for (layer, lg) in self.layers.iter_mut().zip(&g.layers) {
            layer.w.scaled_add(-lr, &lg.w);
            layer.b.scaled_add(-lr, &lg.b);
            if self.arch.batch_norm {
                layer.gamma.scaled_add(-lr, &lg.gamma);
                layer.beta.scaled_add(-lr, &lg.beta);
            }
        }
        self.head_w.scaled_add(-lr, &g.head_w);
        self.head_b -= lr * g.head_b;
        self.generation += 1;
    }

    /// Trainable parameters: per layer `w` (row-major), `b`, `γ`, `β`; then the head.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
            out.extend(l.gamma.iter());
            out.extend(l.beta.iter());
        }
        out.extend(self.head_w.iter());
        out.push(self.head_b);
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for v in l
                .w
                .iter_mut()
                .chain(l.b.iter_mut())
                .chain(l.gamma.iter_mut())
                .chain(l.beta.iter_mut())
            {
                *v = it.next().expect("length checked");
            }
        }
        for v in self.head_w.iter_mut() {
            *v = it.next().expect("length checked");
        }
        self.head_b = it.next().expect("length checked");
        self.generation += 1;
        Ok(())
    }

    /// Sets every running statistic to the batch statistic of `x`, so eval
    /// mode on `x` reproduces train mode.
    pub fn calibrate_running_stats(&mut self, x: ArrayView2<f64>) -> Result<()> {
        self.check_input(&x)?;
        if x.nrows() < 2 {
            return Err(Error::InvalidInput("calibration needs a batch of at least 2".into()));
        }
        let (_, cache) = self.run(x, Mode::Train);
        for (layer, c) in self.layers.iter_mut().zip(cache.expect("train mode caches").layers) {
            layer.running_mean = c.batch_mean;
            layer.running_var = c.batch_var;
        }
        Ok(())
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let col = a.view().insert_axis(Axis(1));
    let row = b.view().insert_axis(Axis(0));
    col.dot(&row)
}

fn check_targets(n: usize, y: &ArrayView1<f64>) -> Result<()> {
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    Ok(())
}

fn mse(pred: &Array1<f64>, y: &ArrayView1<f64>) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64
}

pub fn predict_batch(model: &MlpModel, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    model.forward_eval(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            epochs: 150,
            batch_size: 150,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidInput("batch size must be at least 2".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Sample-weighted mean minibatch loss per epoch.
    pub loss_trace: Vec<f64>,
    pub steps: usize,
}

/// Epoch-shuffled minibatch SGD. A trailing batch of one sample is dropped.
pub fn train(
    model: &mut MlpModel,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    model.check_input(&x)?;
    check_targets(x.nrows(), &y)?;
    if x.nrows() < 2 {
        return Err(Error::InvalidInput("training needs at least 2 samples".into()));
    }
    if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidInput("labels must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let xb = x.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let (_, cache) = model.forward_train(xb.view())?;
            let grads = model.backward(&cache, yb.view())?;
            if !grads.loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            model.apply_gradients(&grads, cfg.lr);
            total += grads.loss * chunk.len() as f64;
            count += chunk.len();
            steps += 1;
        }
        let epoch_loss = total / count as f64;
        log::debug!("epoch {epoch}: loss {epoch_loss:.6e}");
        loss_trace.push(epoch_loss);
    }
    Ok(TrainReport { loss_trace, steps })
}

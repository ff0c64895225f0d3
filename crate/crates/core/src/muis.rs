//! Per-image unsupervised segmentation network.
//!
//! M convolution modules (3×3, stride 1, edge-replicated padding → batch
//! normalization over every pixel of the image → ReLU) produce a feature
//! vector `x_n` per pixel; a linear classifier maps it to logits
//! `y_n = W_c x_n + b_c` and the label is `c_n = argmax y_n`. The network is
//! trained on the image it segments: every iteration the predicted labels
//! are flattened to their per-superpixel majority and used as cross-entropy
//! targets for one SGD-with-momentum step. Labels that lose every superpixel
//! disappear, so the segmentation coarsens as training proceeds.
//!
//! Gradients are derived by hand for exactly this architecture; convolution
//! runs as im2col followed by a matrix product.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::RgbImage;
use crate::slic::SuperpixelMap;

#[derive(Debug, Error, PartialEq)]
pub enum MuisError {
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(&'static str),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuisConfig {
    /// Number of convolution modules (M).
    pub m_layers: usize,
    /// Feature width p; also the initial class count q.
    pub channels: usize,
    pub lr: f64,
    pub momentum: f64,
    pub max_iters: usize,
    /// Training stops once the refined map has at most this many labels.
    pub q_min: usize,
    #[serde(skip)]
    pub seed: u64,
    pub bn_eps: f64,
}

impl Default for MuisConfig {
    fn default() -> Self {
        Self {
            m_layers: 3,
            channels: 100,
            lr: 0.1,
            momentum: 0.9,
            max_iters: 100,
            q_min: 6,
            seed: 0,
            bn_eps: 1e-5,
        }
    }
}

impl MuisConfig {
    pub fn validate(&self) -> Result<(), MuisError> {
        let bad = |m: &str| Err(MuisError::InvalidConfig(m.to_string()));
        if self.m_layers < 1 {
            return bad("m_layers must be >= 1");
        }
        if self.channels < 2 {
            return bad("channels must be >= 2");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.max_iters < 1 {
            return bad("max_iters must be >= 1");
        }
        if self.q_min < 2 {
            return bad("q_min must be >= 2");
        }
        if !(self.bn_eps > 0.0 && self.bn_eps.is_finite()) {
            return bad("bn_eps must be > 0");
        }
        Ok(())
    }
}

/// One conv → batch-norm → ReLU block.
///
/// `weight` is laid out as `(9 · in, out)`: row `(ky · 3 + kx) · in + c`
/// holds the taps of input channel `c` at kernel offset `(kx, ky)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvModule {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl ConvModule {
    pub fn in_channels(&self) -> usize {
        self.weight.nrows() / 9
    }

    pub fn out_channels(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuisNetwork {
    pub layers: Vec<ConvModule>,
    /// `(q, p)`
    pub classifier_w: Array2<f64>,
    pub classifier_b: Array1<f64>,
    pub bn_eps: f64,
}

/// Per-pixel outputs of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelResponses {
    /// `x_n`, shape `(N, p)`
    pub features: Array2<f64>,
    /// `y_n`, shape `(N, q)`
    pub logits: Array2<f64>,
    /// `c_n`
    pub labels: Vec<u32>,
}

struct LayerCache {
    cols: Array2<f64>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    pre_relu: Array2<f64>,
}

/// Intermediate values kept for the backward pass.
pub struct ForwardCache {
    width: usize,
    height: usize,
    layers: Vec<LayerCache>,
    features: Array2<f64>,
    logits: Array2<f64>,
}

impl ForwardCache {
    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    /// Batch-normalized activations of `layer` before scale and shift.
    pub fn normalized(&self, layer: usize) -> &Array2<f64> {
        &self.layers[layer].xhat
    }

    pub fn labels(&self) -> Vec<u32> {
        argmax_rows(&self.logits)
    }
}

/// Row-wise argmax; ties go to the lowest index.
pub fn argmax_rows(m: &Array2<f64>) -> Vec<u32> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best as u32
        })
        .collect()
}

/// RGB scaled to [0, 1], one row per pixel.
pub fn image_input(img: &RgbImage) -> Array2<f64> {
    let data: Vec<f64> = img.data().iter().map(|&v| f64::from(v) / 255.0).collect();
    Array2::from_shape_vec((img.pixel_count(), 3), data).expect("3 channels per pixel")
}

fn im2col(x: &Array2<f64>, width: usize, height: usize) -> Array2<f64> {
    let c = x.ncols();
    let mut cols = Array2::<f64>::zeros((width * height, 9 * c));
    let src = x.as_slice().expect("standard layout");
    let dst = cols.as_slice_mut().expect("standard layout");
    let row_len = 9 * c;
    for y in 0..height {
        for xx in 0..width {
            let base = (y * width + xx) * row_len;
            for ky in 0..3 {
                let sy = (y + ky).saturating_sub(1).min(height - 1);
                for kx in 0..3 {
                    let sx = (xx + kx).saturating_sub(1).min(width - 1);
                    let s = (sy * width + sx) * c;
                    let d = base + (ky * 3 + kx) * c;
                    dst[d..d + c].copy_from_slice(&src[s..s + c]);
                }
            }
        }
    }
    cols
}

fn col2im(dcols: &Array2<f64>, width: usize, height: usize, c: usize) -> Array2<f64> {
    let mut dx = Array2::<f64>::zeros((width * height, c));
    let src = dcols.as_slice().expect("standard layout");
    let dst = dx.as_slice_mut().expect("standard layout");
    let row_len = 9 * c;
    for y in 0..height {
        for xx in 0..width {
            let base = (y * width + xx) * row_len;
            for ky in 0..3 {
                let sy = (y + ky).saturating_sub(1).min(height - 1);
                for kx in 0..3 {
                    let sx = (xx + kx).saturating_sub(1).min(width - 1);
                    let d = (sy * width + sx) * c;
                    let s = base + (ky * 3 + kx) * c;
                    for k in 0..c {
                        dst[d + k] += src[s + k];
                    }
                }
            }
        }
    }
    dx
}

fn all_finite(m: &Array2<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Draws the initial parameters: He-normal weights, zero biases, unit
/// batch-norm scale and zero shift.
pub fn init_network(cfg: &MuisConfig) -> Result<MuisNetwork, MuisError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let p = cfg.channels;
    let mut draw = |rows: usize, cols: usize, fan_in: usize| {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        Array2::from_shape_fn((rows, cols), |_| normal.sample(&mut rng))
    };
    let mut layers = Vec::with_capacity(cfg.m_layers);
    for l in 0..cfg.m_layers {
        let cin = if l == 0 { 3 } else { p };
        layers.push(ConvModule {
            weight: draw(9 * cin, p, 9 * cin),
            bias: Array1::zeros(p),
            gamma: Array1::ones(p),
            beta: Array1::zeros(p),
        });
    }
    let classifier_w = draw(p, p, p);
    Ok(MuisNetwork {
        layers,
        classifier_w,
        classifier_b: Array1::zeros(p),
        bn_eps: cfg.bn_eps,
    })
}

impl MuisNetwork {
    pub fn classes(&self) -> usize {
        self.classifier_w.nrows()
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| ConvModule {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                    gamma: Array1::zeros(l.gamma.len()),
                    beta: Array1::zeros(l.beta.len()),
                })
                .collect(),
            classifier_w: Array2::zeros(self.classifier_w.raw_dim()),
            classifier_b: Array1::zeros(self.classifier_b.len()),
            bn_eps: self.bn_eps,
        }
    }

    /// Every parameter tensor, flattened, in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(4 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("contiguous"));
            out.push(l.gamma.as_slice().expect("contiguous"));
            out.push(l.beta.as_slice().expect("contiguous"));
        }
        out.push(self.classifier_w.as_slice().expect("standard layout"));
        out.push(self.classifier_b.as_slice().expect("contiguous"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(4 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("contiguous"));
            out.push(l.gamma.as_slice_mut().expect("contiguous"));
            out.push(l.beta.as_slice_mut().expect("contiguous"));
        }
        out.push(self.classifier_w.as_slice_mut().expect("standard layout"));
        out.push(self.classifier_b.as_slice_mut().expect("contiguous"));
        out
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.layers.len() {
            for n in ["weight", "bias", "gamma", "beta"] {
                out.push(format!("conv{}.{n}", i + 1));
            }
        }
        out.push("classifier.weight".into());
        out.push("classifier.bias".into());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Forward pass over a `(width · height, 3)` input, keeping what the
    /// backward pass needs.
    pub fn forward_cached(
        &self,
        input: &Array2<f64>,
        width: usize,
        height: usize,
    ) -> Result<ForwardCache, MuisError> {
        let n = width * height;
        if input.nrows() != n || input.ncols() != 3 || n == 0 {
            return Err(MuisError::DimensionMismatch(format!(
                "input {:?} for a {width}x{height} image",
                input.dim()
            )));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut act = input.to_owned();
        for module in &self.layers {
            if act.ncols() != module.in_channels() {
                return Err(MuisError::DimensionMismatch(format!(
                    "layer expects {} channels, got {}",
                    module.in_channels(),
                    act.ncols()
                )));
            }
            let cols = im2col(&act, width, height);
            let mut z = cols.dot(&module.weight);
            z += &module.bias;

            let mean = z.mean_axis(Axis(0)).expect("non-empty");
            z -= &mean;
            let var = z.map_axis(Axis(0), |c| c.iter().map(|v| v * v).sum::<f64>() / n as f64);
            let inv_std = var.mapv(|v| 1.0 / (v + self.bn_eps).sqrt());
            let xhat = z * &inv_std;
            let pre_relu = &xhat * &module.gamma + &module.beta;
            act = pre_relu.mapv(|v| v.max(0.0));
            if !all_finite(&act) {
                return Err(MuisError::NonFiniteActivation("convolution module"));
            }
            layers.push(LayerCache {
                cols,
                xhat,
                inv_std,
                pre_relu,
            });
        }
        let mut logits = act.dot(&self.classifier_w.t());
        logits += &self.classifier_b;
        if !all_finite(&logits) {
            return Err(MuisError::NonFiniteActivation("classifier"));
        }
        Ok(ForwardCache {
            width,
            height,
            layers,
            features: act,
            logits,
        })
    }

    pub fn forward(&self, img: &RgbImage) -> Result<PixelResponses, MuisError> {
        let cache = self.forward_cached(
            &image_input(img),
            img.width() as usize,
            img.height() as usize,
        )?;
        let labels = cache.labels();
        Ok(PixelResponses {
            features: cache.features,
            logits: cache.logits,
            labels,
        })
    }

    /// Mean softmax cross-entropy of the cached logits against `targets`,
    /// and its gradient with respect to every parameter.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        targets: &[u32],
    ) -> Result<(f64, MuisNetwork), MuisError> {
        let n = cache.width * cache.height;
        if targets.len() != n {
            return Err(MuisError::DimensionMismatch(format!(
                "{} targets for {n} pixels",
                targets.len()
            )));
        }
        let q = self.classes();
        if let Some(&t) = targets.iter().find(|&&t| t as usize >= q) {
            return Err(MuisError::DimensionMismatch(format!("target {t} >= {q} classes")));
        }
        let (loss, dlogits) = softmax_cross_entropy(&cache.logits, targets, true);
        let dlogits = dlogits.expect("gradient requested");

        let mut grads = self.zeros_like();
        grads.classifier_b = dlogits.sum_axis(Axis(0));
        grads.classifier_w = dlogits.t().dot(&cache.features);
        let mut dact = dlogits.dot(&self.classifier_w);

        for (l, (module, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            // ReLU
            let mut dy = dact;
            dy.zip_mut_with(&lc.pre_relu, |d, &y| {
                if y <= 0.0 {
                    *d = 0.0;
                }
            });
            let g = &mut grads.layers[l];
            g.beta = dy.sum_axis(Axis(0));
            g.gamma = (&dy * &lc.xhat).sum_axis(Axis(0));
            // batch norm
            let dxhat = dy * &module.gamma;
            let sum_dxhat = dxhat.sum_axis(Axis(0));
            let sum_dxhat_xhat = (&dxhat * &lc.xhat).sum_axis(Axis(0));
            let nf = n as f64;
            let mut dz = dxhat * nf;
            dz -= &sum_dxhat;
            dz -= &(&lc.xhat * &sum_dxhat_xhat);
            dz *= &(&lc.inv_std / nf);
            // convolution
            g.bias = dz.sum_axis(Axis(0));
            g.weight = lc.cols.t().dot(&dz);
            if l > 0 {
                let dcols = dz.dot(&module.weight.t());
                dact = col2im(&dcols, cache.width, cache.height, module.in_channels());
            } else {
                dact = Array2::zeros((0, 0));
            }
        }
        if !grads.is_finite() {
            return Err(MuisError::NonFiniteGradient);
        }
        Ok((loss, grads))
    }

    /// Loss and gradient for an image in one call.
    pub fn loss_and_gradient(
        &self,
        img: &RgbImage,
        targets: &[u32],
    ) -> Result<(f64, MuisNetwork), MuisError> {
        let cache = self.forward_cached(
            &image_input(img),
            img.width() as usize,
            img.height() as usize,
        )?;
        self.backward(&cache, targets)
    }

    /// Loss only.
    pub fn loss(&self, img: &RgbImage, targets: &[u32]) -> Result<f64, MuisError> {
        let cache = self.forward_cached(
            &image_input(img),
            img.width() as usize,
            img.height() as usize,
        )?;
        Ok(softmax_cross_entropy(&cache.logits, targets, false).0)
    }
}

/// Mean cross-entropy of row-wise softmax against integer targets,
/// optionally with `∂loss/∂logits`.
pub fn softmax_cross_entropy(
    logits: &Array2<f64>,
    targets: &[u32],
    with_grad: bool,
) -> (f64, Option<Array2<f64>>) {
    let n = logits.nrows() as f64;
    let mut loss = 0.0;
    let mut grad = with_grad.then(|| Array2::<f64>::zeros(logits.raw_dim()));
    for (i, row) in logits.rows().into_iter().enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let t = targets[i] as usize;
        loss += (sum.ln() + max) - row[t];
        if let Some(g) = grad.as_mut() {
            let mut grow = g.row_mut(i);
            for (k, v) in row.iter().enumerate() {
                grow[k] = (v - max).exp() / sum / n;
            }
            grow[t] -= 1.0 / n;
        }
    }
    (loss / n, grad)
}

/// SGD with momentum: `v ← μ·v + g`, `θ ← θ − lr·v`.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: MuisNetwork,
    velocity: MuisNetwork,
    lr: f64,
    momentum: f64,
}

impl Trainer {
    pub fn new(net: MuisNetwork, cfg: &MuisConfig) -> Self {
        let velocity = net.zeros_like();
        Self {
            net,
            velocity,
            lr: cfg.lr,
            momentum: cfg.momentum,
        }
    }

    /// One update from an already computed forward pass; returns the loss
    /// before the update.
    pub fn step_cached(&mut self, cache: &ForwardCache, targets: &[u32]) -> Result<f64, MuisError> {
        let (loss, grads) = self.net.backward(cache, targets)?;
        let (lr, mu) = (self.lr, self.momentum);
        let params = self.net.tensors_mut();
        let vel = self.velocity.tensors_mut();
        let gs = grads.tensors();
        for ((p, v), g) in params.into_iter().zip(vel).zip(gs) {
            for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                *v = mu * *v + g;
                *p -= lr * *v;
            }
        }
        if !self.net.is_finite() {
            return Err(MuisError::NonFiniteGradient);
        }
        Ok(loss)
    }
}

/// Forward, backward and update on `img`; returns the pre-update loss.
pub fn train_step(trainer: &mut Trainer, img: &RgbImage, targets: &[u32]) -> Result<f64, MuisError> {
    let cache = trainer.net.forward_cached(
        &image_input(img),
        img.width() as usize,
        img.height() as usize,
    )?;
    trainer.step_cached(&cache, targets)
}

/// Replaces every label by the majority label of its superpixel (ties to
/// the smaller id).
pub fn refine_labels(labels: &[u32], sp: &SuperpixelMap) -> Result<Vec<u32>, MuisError> {
    if labels.len() != sp.labels.len() {
        return Err(MuisError::DimensionMismatch(format!(
            "{} labels vs {} superpixel assignments",
            labels.len(),
            sp.labels.len()
        )));
    }
    let count = sp.labels.iter().map(|&s| s as usize + 1).max().unwrap_or(0);
    let mut pairs: Vec<(u32, u32)> = sp.labels.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_unstable();
    let mut majority = vec![0u32; count];
    let mut i = 0;
    while i < pairs.len() {
        let s = pairs[i].0;
        let (mut best_label, mut best_count) = (0u32, 0usize);
        while i < pairs.len() && pairs[i].0 == s {
            let l = pairs[i].1;
            let mut j = i;
            while j < pairs.len() && pairs[j] == (s, l) {
                j += 1;
            }
            // labels arrive ascending, so strict > keeps the smaller id on ties
            if j - i > best_count {
                best_count = j - i;
                best_label = l;
            }
            i = j;
        }
        majority[s as usize] = best_label;
    }
    Ok(sp.labels.iter().map(|&s| majority[s as usize]).collect())
}

fn distinct(labels: &[u32]) -> usize {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Final per-pixel class map with dense ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u32>,
    pub count: usize,
}

impl LabelMap {
    /// Densifies `labels` in order of first appearance.
    pub fn from_labels(width: u32, height: u32, labels: &[u32]) -> Self {
        let (labels, count) = crate::mask::densify(labels);
        Self {
            width,
            height,
            labels,
            count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOutcome {
    pub labels: LabelMap,
    pub iterations_run: usize,
    pub final_loss: f64,
    /// Distinct refined labels observed at each iteration.
    pub label_counts: Vec<usize>,
}

/// Trains a fresh network on `img` until the refined map has at most
/// `q_min` labels or `max_iters` forward passes have run.
pub fn segment(img: &RgbImage, sp: &SuperpixelMap, cfg: &MuisConfig) -> Result<SegmentOutcome, MuisError> {
    if sp.width != img.width() || sp.height != img.height() {
        return Err(MuisError::DimensionMismatch(format!(
            "superpixels {}x{} vs image {}x{}",
            sp.width,
            sp.height,
            img.width(),
            img.height()
        )));
    }
    let mut trainer = Trainer::new(init_network(cfg)?, cfg);
    let input = image_input(img);
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut label_counts = Vec::new();
    for iteration in 1..=cfg.max_iters {
        let cache = trainer.net.forward_cached(&input, w, h)?;
        let refined = refine_labels(&cache.labels(), sp)?;
        let count = distinct(&refined);
        label_counts.push(count);
        if count <= cfg.q_min || iteration == cfg.max_iters {
            let (final_loss, _) = softmax_cross_entropy(cache.logits(), &refined, false);
            return Ok(SegmentOutcome {
                labels: LabelMap::from_labels(img.width(), img.height(), &refined),
                iterations_run: iteration,
                final_loss,
                label_counts,
            });
        }
        trainer.step_cached(&cache, &refined)?;
    }
    unreachable!("max_iters >= 1 is validated")
}

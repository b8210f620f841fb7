//! Pooling encoder/decoder, a three-layer convolutional noise predictor with
//! hand-written backpropagation, Adam, toy training and implicit-sampling
//! inference, plus the binary checkpoint format.
//!
//! The network sees `[x_t, f_l, t/T]` stacked along channels and runs
//! conv3x3 -> ReLU -> conv3x3 -> ReLU -> conv3x3 with zero padding.
//! Training minimises `lambda_d * MSE(eps, eps_hat) + lambda_g * MAE(D(x0_hat), D(x0))`
//! where `x0_hat = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)`.

use std::io::{Read, Write};
use std::path::Path;

use crate::diffusion::{ddim_step, forward_marginal_exact, loss_d, loss_g, predict_x0, DiffusionSchedule, Latent};
use crate::error::{invalid, shape, LasqError, Result};
use crate::imageio::Image;
use crate::numerics::{avg_pool2, bilinear_resize, bilinear_resize_adjoint, pairwise_sum, Grid2D, Rng};

/// Latent channels; the encoder passes R, G and B straight through.
pub const LATENT_CHANNELS: usize = 3;
pub const HIDDEN_CHANNELS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Number of 2x downsampling stages.
    pub k: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { k: 1 }
    }
}

impl EncoderConfig {
    pub fn check_image(&self, rows: usize, cols: usize) -> Result<()> {
        match 1usize.checked_shl(self.k as u32) {
            Some(f) if rows.is_multiple_of(f) && cols.is_multiple_of(f) => Ok(()),
            _ => Err(invalid(format!("{rows}x{cols} image is not divisible by 2^{}", self.k))),
        }
    }
}

/// `k` rounds of 2x2 average pooling per channel.
pub fn encode(img: &Image, cfg: &EncoderConfig) -> Result<Latent> {
    cfg.check_image(img.rows(), img.cols())?;
    let planes = (0..LATENT_CHANNELS)
        .map(|ch| (0..cfg.k).try_fold(img.channel(ch), |g, _| avg_pool2(&g)))
        .collect::<Result<Vec<_>>>()?;
    Latent::from_planes(&planes)
}

fn upsample_planes(lat: &Latent, k: usize) -> Result<Vec<Grid2D>> {
    lat.planes()
        .into_iter()
        .map(|p| (0..k).try_fold(p, |g, _| bilinear_resize(&g, g.rows() * 2, g.cols() * 2)))
        .collect()
}

/// `k` rounds of 2x bilinear upsampling, clamped to `[0, 1]`.
pub fn decode(lat: &Latent, cfg: &EncoderConfig) -> Result<Image> {
    if lat.channels() != LATENT_CHANNELS {
        return Err(shape(format!("decoder expects {LATENT_CHANNELS} channels, got {}", lat.channels())));
    }
    let planes = upsample_planes(lat, cfg.k)?;
    let clamped: Vec<Grid2D> = planes.iter().map(|p| p.map(|v| v.clamp(0.0, 1.0))).collect();
    Image::from_channels([&clamped[0], &clamped[1], &clamped[2]])
}

/// Pulls an image-space gradient back through the (unclamped) upsampling.
fn upsample_adjoint(grads: Vec<Grid2D>, k: usize, rows: usize, cols: usize) -> Result<Latent> {
    let planes: Vec<Grid2D> = grads
        .into_iter()
        .map(|g| {
            (0..k).rev().fold(g, |g, level| {
                let f = 1usize << level;
                bilinear_resize_adjoint(&g, rows * f, cols * f)
            })
        })
        .collect();
    Latent::from_planes(&planes)
}

/// One 3x3 convolution with `c_out` filters over `c_in` input planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub c_in: usize,
    pub c_out: usize,
    /// `[c_out][c_in][3][3]`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        Self { c_in, c_out, weight: vec![0.0; c_out * c_in * 9], bias: vec![0.0; c_out] }
    }

    /// Uniform weights in `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn glorot(c_in: usize, c_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / ((c_in * 9 + c_out * 9) as f64)).sqrt();
        let weight = (0..c_out * c_in * 9).map(|_| (2.0 * rng.uniform() - 1.0) * limit).collect();
        Self { c_in, c_out, weight, bias: vec![0.0; c_out] }
    }

    fn forward(&self, x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let n = rows * cols;
        let mut out = vec![0.0; self.c_out * n];
        for o in 0..self.c_out {
            let dst = &mut out[o * n..(o + 1) * n];
            dst.fill(self.bias[o]);
            for i in 0..self.c_in {
                let src = &x[i * n..(i + 1) * n];
                let w = &self.weight[(o * self.c_in + i) * 9..][..9];
                for (tap, &wv) in w.iter().enumerate() {
                    for_each_tap(tap, rows, cols, |d, s| dst[d] += wv * src[s]);
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    fn backward(&self, x: &[f64], gz: &[f64], rows: usize, cols: usize, grad: &mut ConvLayer) -> Vec<f64> {
        let n = rows * cols;
        let mut gx = vec![0.0; self.c_in * n];
        for o in 0..self.c_out {
            let g = &gz[o * n..(o + 1) * n];
            grad.bias[o] += pairwise_sum(g);
            for i in 0..self.c_in {
                let src = &x[i * n..(i + 1) * n];
                let gxi = &mut gx[i * n..(i + 1) * n];
                let base = (o * self.c_in + i) * 9;
                for tap in 0..9 {
                    let wv = self.weight[base + tap];
                    let mut acc = 0.0;
                    for_each_tap(tap, rows, cols, |d, s| {
                        acc += g[d] * src[s];
                        gxi[s] += g[d] * wv;
                    });
                    grad.weight[base + tap] += acc;
                }
            }
        }
        gx
    }
}

/// Visits `(dst, src)` flat index pairs for kernel tap `tap` (`dy * 3 + dx`)
/// under zero padding.
#[inline]
fn for_each_tap(tap: usize, rows: usize, cols: usize, mut f: impl FnMut(usize, usize)) {
    let (dy, dx) = (tap / 3, tap % 3);
    let r_lo = usize::from(dy == 0);
    let r_hi = if dy == 2 { rows.saturating_sub(1) } else { rows };
    let c_lo = usize::from(dx == 0);
    let c_hi = if dx == 2 { cols.saturating_sub(1) } else { cols };
    for r in r_lo..r_hi {
        let sr = r + dy - 1;
        for c in c_lo..c_hi {
            f(r * cols + c, sr * cols + c + dx - 1);
        }
    }
}

/// Weights of the three-layer noise predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    pub layers: [ConvLayer; 3],
}

/// A named-by-position float tensor, as stored in checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

fn layer_shapes(channels: usize) -> [(usize, usize); 3] {
    [(2 * channels + 1, HIDDEN_CHANNELS), (HIDDEN_CHANNELS, HIDDEN_CHANNELS), (HIDDEN_CHANNELS, channels)]
}

impl DenoiserParams {
    pub fn zeros(channels: usize) -> Self {
        Self { layers: layer_shapes(channels).map(|(i, o)| ConvLayer::zeros(i, o)) }
    }

    pub fn init(channels: usize, rng: &mut Rng) -> Self {
        Self { layers: layer_shapes(channels).map(|(i, o)| ConvLayer::glorot(i, o, rng)) }
    }

    /// Latent channel count the network predicts.
    pub fn channels(&self) -> usize {
        self.layers[2].c_out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Weight and bias buffers in declaration order.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()]).collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()]).collect()
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    Tensor { shape: vec![l.c_out, l.c_in, 3, 3], data: l.weight.clone() },
                    Tensor { shape: vec![l.c_out], data: l.bias.clone() },
                ]
            })
            .collect()
    }

    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() != 6 {
            return Err(LasqError::Checkpoint(format!("expected 6 tensors, found {}", tensors.len())));
        }
        let channels = tensors[5].shape.first().copied().unwrap_or(0);
        if channels == 0 {
            return Err(LasqError::Checkpoint("output bias is empty".into()));
        }
        let mut it = tensors.into_iter();
        let mut layers = Vec::with_capacity(3);
        for (idx, (c_in, c_out)) in layer_shapes(channels).into_iter().enumerate() {
            let (w, b) = (it.next().unwrap(), it.next().unwrap());
            if w.shape != [c_out, c_in, 3, 3] || b.shape != [c_out] {
                return Err(LasqError::Checkpoint(format!(
                    "layer {} has shapes {:?}/{:?}, expected [{c_out}, {c_in}, 3, 3]/[{c_out}]",
                    idx + 1,
                    w.shape,
                    b.shape
                )));
            }
            if w.data.iter().chain(&b.data).any(|v| !v.is_finite()) {
                return Err(LasqError::Checkpoint(format!("layer {} holds non-finite values", idx + 1)));
            }
            layers.push(ConvLayer { c_in, c_out, weight: w.data, bias: b.data });
        }
        let layers: [ConvLayer; 3] = layers.try_into().expect("three layers");
        Ok(Self { layers })
    }
}

struct ForwardCache {
    input: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
}

fn network_input(x_t: &Latent, t_embed: f64, f_l: &Latent, params: &DenoiserParams) -> Result<Vec<f64>> {
    if !x_t.same_shape(f_l) {
        return Err(shape("x_t and f_l differ in shape"));
    }
    if x_t.channels() != params.channels() {
        return Err(shape(format!("network predicts {} channels, latent has {}", params.channels(), x_t.channels())));
    }
    let n = x_t.rows() * x_t.cols();
    let mut input = Vec::with_capacity((2 * x_t.channels() + 1) * n);
    input.extend_from_slice(x_t.data());
    input.extend_from_slice(f_l.data());
    input.extend(std::iter::repeat_n(t_embed, n));
    Ok(input)
}

fn forward_cached(x_t: &Latent, t_embed: f64, f_l: &Latent, params: &DenoiserParams) -> Result<(Latent, ForwardCache)> {
    let (rows, cols) = (x_t.rows(), x_t.cols());
    let input = network_input(x_t, t_embed, f_l, params)?;
    let relu = |v: Vec<f64>| v.into_iter().map(|z| z.max(0.0)).collect::<Vec<_>>();
    let a1 = relu(params.layers[0].forward(&input, rows, cols));
    let a2 = relu(params.layers[1].forward(&a1, rows, cols));
    let out = params.layers[2].forward(&a2, rows, cols);
    let eps = Latent::new(x_t.channels(), rows, cols, out)?;
    Ok((eps, ForwardCache { input, a1, a2 }))
}

/// Noise prediction `eps_hat` with the same shape as `x_t`.
pub fn denoiser_forward(x_t: &Latent, t_embed: f64, f_l: &Latent, params: &DenoiserParams) -> Result<Latent> {
    forward_cached(x_t, t_embed, f_l, params).map(|(e, _)| e)
}

/// Gradient of the scalar loss with respect to every parameter given
/// `d loss / d eps_hat`.
fn backward(cache: &ForwardCache, g_out: &[f64], rows: usize, cols: usize, params: &DenoiserParams) -> DenoiserParams {
    let mut grad = DenoiserParams::zeros(params.channels());
    let relu_mask =
        |g: Vec<f64>, a: &[f64]| g.into_iter().zip(a).map(|(g, &a)| if a > 0.0 { g } else { 0.0 }).collect::<Vec<_>>();
    let g2 = params.layers[2].backward(&cache.a2, g_out, rows, cols, &mut grad.layers[2]);
    let g2 = relu_mask(g2, &cache.a2);
    let g1 = params.layers[1].backward(&cache.a1, &g2, rows, cols, &mut grad.layers[1]);
    let g1 = relu_mask(g1, &cache.a1);
    params.layers[0].backward(&cache.input, &g1, rows, cols, &mut grad.layers[0]);
    grad
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_d: f64,
    pub lambda_g: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_d: 0.9, lambda_g: 0.005 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub total: f64,
    pub l_d: f64,
    pub l_g: f64,
}

/// One noisy training observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub x_t: Latent,
    pub f_l: Latent,
    pub t: usize,
    pub eps: Latent,
    /// Decoded coarsest guide the reconstruction is compared against.
    pub target: Image,
}

/// Loss of one sample and its gradient with respect to every parameter.
pub fn loss_and_grad(
    params: &DenoiserParams,
    sample: &TrainSample,
    sched: &DiffusionSchedule,
    weights: &LossWeights,
    enc: &EncoderConfig,
) -> Result<(LossTerms, DenoiserParams)> {
    let t_embed = sample.t as f64 / sched.t_steps() as f64;
    let (eps_hat, cache) = forward_cached(&sample.x_t, t_embed, &sample.f_l, params)?;
    let l_d = loss_d(&sample.eps, &eps_hat)?;
    let n = eps_hat.len() as f64;

    let x0_hat = predict_x0(&sample.x_t, &eps_hat, sample.t, sched)?;
    let up = upsample_planes(&x0_hat, enc.k)?;
    let clamped: Vec<Grid2D> = up.iter().map(|p| p.map(|v| v.clamp(0.0, 1.0))).collect();
    let decoded = Image::from_channels([&clamped[0], &clamped[1], &clamped[2]])?;
    let l_g = loss_g(&decoded, &sample.target)?;
    let total = weights.lambda_d * l_d + weights.lambda_g * l_g;
    if !total.is_finite() {
        return Err(LasqError::NonFinite(format!("training loss at t={} (L_d={l_d}, L_g={l_g})", sample.t)));
    }

    // d L_g / d upsampled value: sign of the residual, zero where clamped
    let n_img = decoded.data().len() as f64;
    let target_planes: Vec<Grid2D> = (0..LATENT_CHANNELS).map(|ch| sample.target.channel(ch)).collect();
    let g_img: Vec<Grid2D> = up
        .iter()
        .zip(&clamped)
        .zip(&target_planes)
        .map(|((u, c), tgt)| {
            Grid2D::from_fn(u.rows(), u.cols(), |r, col| {
                let v = u.get(r, col);
                if v <= 0.0 || v >= 1.0 {
                    0.0
                } else {
                    let diff = c.get(r, col) - tgt.get(r, col);
                    diff.signum() * f64::from(u8::from(diff != 0.0)) / n_img
                }
            })
        })
        .collect();
    let g_x0 = upsample_adjoint(g_img, enc.k, x0_hat.rows(), x0_hat.cols())?;
    let ab = sched.alpha_bar(sample.t);
    let dx0_deps = -(1.0 - ab).sqrt() / ab.sqrt();

    let g_out: Vec<f64> = eps_hat
        .data()
        .iter()
        .zip(sample.eps.data())
        .zip(g_x0.data())
        .map(|((&e_hat, &e), &gx)| weights.lambda_d * 2.0 * (e_hat - e) / n + weights.lambda_g * gx * dx0_deps)
        .collect();
    let grad = backward(&cache, &g_out, eps_hat.rows(), eps_hat.cols(), params);
    Ok((LossTerms { total, l_d, l_g }, grad))
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &DenoiserParams, lr: f64) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(invalid(format!("learning rate must be non-negative, got {lr}")));
        }
        let zeros: Vec<Vec<f64>> = params.slices().iter().map(|s| vec![0.0; s.len()]).collect();
        Ok(Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros.clone(), v: zeros })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut DenoiserParams, grad: &DenoiserParams) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.slices_mut().into_iter().zip(grad.slices()).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// One training image: clean latent `x0 = F_H^(1)`, guides `F_H^(1..=N)`
/// and the encoded low-light condition `F_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyExample {
    pub guides: Vec<Latent>,
    pub f_l: Latent,
    target: Image,
}

impl ToyExample {
    pub fn new(guides: Vec<Latent>, f_l: Latent, enc: &EncoderConfig) -> Result<Self> {
        let first = guides.first().ok_or_else(|| invalid("example needs at least one guide"))?;
        if guides.iter().any(|g| !g.same_shape(first)) || !f_l.same_shape(first) {
            return Err(shape("guides and condition differ in shape"));
        }
        let target = decode(first, enc)?;
        Ok(Self { guides, f_l, target })
    }

    pub fn x0(&self) -> &Latent {
        &self.guides[0]
    }

    /// Draws `t ~ U{1..T}` and `x_t` from the exact guided marginal.
    pub fn sample(&self, sched: &DiffusionSchedule, rng: &mut Rng) -> Result<TrainSample> {
        let t = 1 + rng.below(sched.t_steps() as u64) as usize;
        let x0 = self.x0();
        let eps = Latent::standard_normal(x0.channels(), x0.rows(), x0.cols(), rng);
        let m = forward_marginal_exact(x0, &self.guides, t, sched)?;
        let sd = m.var.sqrt();
        let x_t = m.mean.zip_map(&eps, |mu, e| mu + sd * e)?;
        Ok(TrainSample { x_t, f_l: self.f_l.clone(), t, eps, target: self.target.clone() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub encoder: EncoderConfig,
}

fn batch_grad(
    params: &DenoiserParams,
    samples: &[TrainSample],
    sched: &DiffusionSchedule,
    cfg: &TrainConfig,
) -> Result<(LossTerms, DenoiserParams)> {
    if samples.is_empty() {
        return Err(invalid("empty training batch"));
    }
    let results = samples
        .iter()
        .map(|s| loss_and_grad(params, s, sched, &cfg.weights, &cfg.encoder))
        .collect::<Result<Vec<_>>>()?;
    let inv = 1.0 / samples.len() as f64;
    let avg = |f: fn(&LossTerms) -> f64| pairwise_sum(&results.iter().map(|(l, _)| f(l)).collect::<Vec<_>>()) * inv;
    let terms = LossTerms { total: avg(|l| l.total), l_d: avg(|l| l.l_d), l_g: avg(|l| l.l_g) };
    let mut grad = DenoiserParams::zeros(params.channels());
    let mut column = vec![0.0; results.len()];
    for (slot, dst) in grad.slices_mut().into_iter().enumerate() {
        for (i, d) in dst.iter_mut().enumerate() {
            for (c, (_, g)) in column.iter_mut().zip(&results) {
                *c = g.slices()[slot][i];
            }
            *d = pairwise_sum(&column) * inv;
        }
    }
    Ok((terms, grad))
}

/// Full-batch step: one fresh noisy sample per example, averaged gradient,
/// one Adam update. Returns the batch losses before the update.
pub fn train_step(
    examples: &[ToyExample],
    params: &mut DenoiserParams,
    sched: &DiffusionSchedule,
    opt: &mut Adam,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<LossTerms> {
    let samples = examples.iter().map(|e| e.sample(sched, rng)).collect::<Result<Vec<_>>>()?;
    let (terms, grad) = batch_grad(params, &samples, sched, cfg)?;
    opt.update(params, &grad);
    Ok(terms)
}

/// Mean noise-prediction loss over a fixed set of samples.
pub fn evaluate_loss_d(params: &DenoiserParams, samples: &[TrainSample], sched: &DiffusionSchedule) -> Result<f64> {
    let losses = samples
        .iter()
        .map(|s| {
            let eps_hat = denoiser_forward(&s.x_t, s.t as f64 / sched.t_steps() as f64, &s.f_l, params)?;
            loss_d(&s.eps, &eps_hat)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&losses) / losses.len() as f64)
}

/// Anything that predicts noise for the implicit sampler.
pub trait NoisePredictor {
    fn predict(&self, x_t: &Latent, t: usize, sched: &DiffusionSchedule, f_l: &Latent) -> Result<Latent>;
}

impl NoisePredictor for DenoiserParams {
    fn predict(&self, x_t: &Latent, t: usize, sched: &DiffusionSchedule, f_l: &Latent) -> Result<Latent> {
        denoiser_forward(x_t, t as f64 / sched.t_steps() as f64, f_l, self)
    }
}

/// Strided time steps `T = t_S > ... > t_1 >= 1` for `steps` implicit updates.
pub fn strided_steps(t_steps: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > t_steps {
        return Err(invalid(format!("sampling steps must be in 1..={t_steps}, got {steps}")));
    }
    Ok((1..=steps).rev().map(|i| i * t_steps / steps).collect())
}

/// Runs the implicit sampler from a standard-normal latent and returns the
/// final clean-latent estimate.
pub fn infer_latent(
    f_l: &Latent,
    model: &impl NoisePredictor,
    sched: &DiffusionSchedule,
    steps: usize,
    rng: &mut Rng,
) -> Result<Latent> {
    let ts = strided_steps(sched.t_steps(), steps)?;
    let mut x = Latent::standard_normal(f_l.channels(), f_l.rows(), f_l.cols(), rng);
    for (i, &t) in ts.iter().enumerate() {
        let t_prev = ts.get(i + 1).copied().unwrap_or(0);
        let eps = model.predict(&x, t, sched, f_l)?;
        x = ddim_step(&x, &eps, t, t_prev, sched, None)?;
    }
    Ok(x)
}

pub fn infer(
    f_l: &Latent,
    model: &impl NoisePredictor,
    sched: &DiffusionSchedule,
    steps: usize,
    enc: &EncoderConfig,
    rng: &mut Rng,
) -> Result<Image> {
    decode(&infer_latent(f_l, model, sched, steps, rng)?, enc)
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LASQ";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(params: &DenoiserParams, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for t in params.tensors() {
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(LasqError::Checkpoint(format!("truncated while reading {what}")));
        }
        let (head, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(head)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.take(4, what).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

/// Parses a checkpoint: magic, version, then `(rank, dims, f64 data)` tensors
/// until the end of the buffer.
pub fn read_checkpoint(bytes: &[u8]) -> Result<DenoiserParams> {
    let bad = |m: String| LasqError::Checkpoint(m);
    let mut cur = Cursor(bytes);
    if cur.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic bytes".into()));
    }
    let version = cur.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut tensors = Vec::new();
    while !cur.0.is_empty() {
        let rank = cur.u32("rank")? as usize;
        if rank == 0 || rank > 8 {
            return Err(bad(format!("tensor {} has rank {rank}", tensors.len())));
        }
        let shape: Vec<usize> = (0..rank).map(|_| cur.u32("shape").map(|d| d as usize)).collect::<Result<_>>()?;
        let bytes =
            shape.iter().try_fold(8usize, |a, &d| a.checked_mul(d)).ok_or_else(|| bad("tensor too large".into()))?;
        let raw = cur.take(bytes, "tensor data")?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        tensors.push(Tensor { shape, data });
    }
    DenoiserParams::from_tensors(tensors)
}

pub fn save_checkpoint(params: &DenoiserParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| LasqError::Io { path: path.to_path_buf(), source };
    let mut buf = Vec::new();
    write_checkpoint(params, &mut buf).map_err(io)?;
    std::fs::write(path, buf).map_err(io)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DenoiserParams> {
    let path = path.as_ref();
    let mut f = std::fs::File::open(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            LasqError::FileNotFound(path.to_path_buf())
        } else {
            LasqError::Io { path: path.to_path_buf(), source }
        }
    })?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|source| LasqError::Io { path: path.to_path_buf(), source })?;
    read_checkpoint(&bytes)
}

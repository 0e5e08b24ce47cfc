//! Trainable attribute estimator.
//!
//! A small convolutional network maps a normalized word image to a vector of
//! sigmoid attribute activations: conv/relu/maxpool blocks, one hidden fully
//! connected layer with dropout, and a sigmoid output head. Forward and
//! backward passes are written out explicitly; the math is generic over the
//! float type so gradient checks can run in f64 while production models stay
//! f32.

mod adam;
mod io;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use io::{load_model, save_model};
pub use train::{train, LrSegment, TrainSchedule};

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::WordImage;
use crate::phoc::{PhocConfig, PhocVector};

/// Clamp applied inside every log computation.
pub const LOG_CLAMP: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("bad architecture: {0}")]
    BadArchitecture(String),
    #[error("image is {got_h}x{got_w} but the model expects {want_h}x{want_w}")]
    GeometryMismatch {
        got_h: usize,
        got_w: usize,
        want_h: usize,
        want_w: usize,
    },
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("parameter shape mismatch: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported model format version {0}")]
    VersionMismatch(u8),
    #[error("model file checksum mismatch")]
    ChecksumMismatch,
    #[error("model file malformed: {0}")]
    MalformedModel(String),
}

/// Estimator output: one sigmoid activation per attribute, entries strictly
/// in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeVector {
    values: Vec<f32>,
}

impl AttributeVector {
    pub fn new(values: Vec<f32>) -> Self {
        debug_assert!(values.iter().all(|&v| v > 0.0 && v < 1.0));
        Self { values }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Layer stack: `conv_channels.len()` conv(3x3, same)/relu/maxpool(2x2)
/// blocks, a hidden fully connected layer with relu and dropout, and a
/// sigmoid output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub input_h: usize,
    pub input_w: usize,
    pub conv_channels: Vec<usize>,
    pub fc_hidden: usize,
    pub output_dim: usize,
    pub dropout_p: f64,
}

impl ArchDescriptor {
    /// The reference stack: two conv blocks (8, 16 channels), 256 hidden
    /// units, dropout 0.5, for 32x96 inputs.
    pub fn reference(output_dim: usize) -> Self {
        Self {
            input_h: 32,
            input_w: 96,
            conv_channels: vec![8, 16],
            fc_hidden: 256,
            output_dim,
            dropout_p: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |m: String| Err(EstimatorError::BadArchitecture(m));
        if self.input_h == 0 || self.input_w == 0 {
            return bad("zero input geometry".into());
        }
        let div = 1usize << self.conv_channels.len();
        if self.input_h % div != 0 || self.input_w % div != 0 {
            return bad(format!(
                "input {}x{} not divisible by pooling factor {div}",
                self.input_h, self.input_w
            ));
        }
        if self.conv_channels.iter().any(|&c| c == 0) || self.fc_hidden == 0 {
            return bad("zero-width layer".into());
        }
        if self.output_dim == 0 {
            return bad("zero output dimension".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout probability {} not in [0,1)", self.dropout_p));
        }
        Ok(())
    }

    /// Spatial size after all pool layers.
    fn pooled(&self) -> (usize, usize) {
        let div = 1usize << self.conv_channels.len();
        (self.input_h / div, self.input_w / div)
    }

    /// Flattened feature length feeding the hidden layer.
    pub fn flat_len(&self) -> usize {
        let (h, w) = self.pooled();
        h * w * self.conv_channels.last().copied().unwrap_or(1)
    }

    /// Total parameter count in declaration order: per conv block weights
    /// then biases, hidden layer, output layer.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        let mut in_ch = 1;
        for &out_ch in &self.conv_channels {
            n += out_ch * in_ch * 9 + out_ch;
            in_ch = out_ch;
        }
        n += self.fc_hidden * self.flat_len() + self.fc_hidden;
        n += self.output_dim * self.fc_hidden + self.output_dim;
        n
    }
}

/// Inference/training mode for [`Model::forward`].
pub enum ForwardMode<'a, R: Rng> {
    /// Deterministic, dropout-free.
    Eval,
    /// Inverted dropout on hidden fully connected layers.
    Train(&'a mut R),
    /// Dropout at test time for uncertainty estimation; same masking rule as
    /// training, never the output layer.
    McDropout(&'a mut R),
}

/// Attribute estimator with parameters stored flat in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<F: Float> {
    desc: ArchDescriptor,
    phoc: PhocConfig,
    params: Vec<F>,
}

/// The production model type.
pub type EstimatorModel = Model<f32>;

fn f<F: Float>(x: f64) -> F {
    F::from(x).expect("f64 converts to model float")
}

impl<F: Float> Model<F> {
    /// Initializes parameters with fan-in-scaled uniform draws.
    pub fn init(
        desc: ArchDescriptor,
        phoc: PhocConfig,
        seed: u64,
    ) -> Result<Self, EstimatorError> {
        desc.validate()?;
        if desc.output_dim != phoc.dim() {
            return Err(EstimatorError::BadArchitecture(format!(
                "output dim {} does not match embedding dim {}",
                desc.output_dim,
                phoc.dim()
            )));
        }
        let mut rng = crate::rng::substream(seed, "init");
        let mut params = Vec::with_capacity(desc.param_count());
        let fill = |n: usize, fan_in: usize, params: &mut Vec<F>, rng: &mut rand_chacha::ChaCha12Rng| {
            let bound = (1.0 / fan_in as f64).sqrt();
            for _ in 0..n {
                params.push(f(rng.gen_range(-bound..bound)));
            }
        };
        let mut in_ch = 1usize;
        for &out_ch in &desc.conv_channels {
            fill(out_ch * in_ch * 9, in_ch * 9, &mut params, &mut rng);
            params.extend(std::iter::repeat(F::zero()).take(out_ch));
            in_ch = out_ch;
        }
        let flat = desc.flat_len();
        fill(desc.fc_hidden * flat, flat, &mut params, &mut rng);
        params.extend(std::iter::repeat(F::zero()).take(desc.fc_hidden));
        fill(desc.output_dim * desc.fc_hidden, desc.fc_hidden, &mut params, &mut rng);
        params.extend(std::iter::repeat(F::zero()).take(desc.output_dim));
        debug_assert_eq!(params.len(), desc.param_count());
        Ok(Self { desc, phoc, params })
    }

    pub fn from_parts(
        desc: ArchDescriptor,
        phoc: PhocConfig,
        params: Vec<F>,
    ) -> Result<Self, EstimatorError> {
        desc.validate()?;
        if params.len() != desc.param_count() {
            return Err(EstimatorError::ShapeMismatch(
                params.len(),
                desc.param_count(),
            ));
        }
        Ok(Self { desc, phoc, params })
    }

    pub fn descriptor(&self) -> &ArchDescriptor {
        &self.desc
    }

    pub fn phoc_config(&self) -> &PhocConfig {
        &self.phoc
    }

    pub fn phoc_config_hash(&self) -> u64 {
        self.phoc.hash()
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    pub fn output_dim(&self) -> usize {
        self.desc.output_dim
    }

    fn check_geometry(&self, image: &WordImage) -> Result<(), EstimatorError> {
        if image.height() != self.desc.input_h || image.width() != self.desc.input_w {
            return Err(EstimatorError::GeometryMismatch {
                got_h: image.height(),
                got_w: image.width(),
                want_h: self.desc.input_h,
                want_w: self.desc.input_w,
            });
        }
        Ok(())
    }

    /// Runs the network. Eval mode is deterministic; train and mc-dropout
    /// modes apply inverted dropout to the hidden fully connected layer.
    pub fn forward<R: Rng>(
        &self,
        image: &WordImage,
        mode: ForwardMode<'_, R>,
    ) -> Result<AttributeVector, EstimatorError> {
        self.check_geometry(image)?;
        let mask = match mode {
            ForwardMode::Eval => None,
            ForwardMode::Train(rng) | ForwardMode::McDropout(rng) => {
                self.sample_dropout_mask(rng)
            }
        };
        let trace = self.forward_trace(image, mask.as_deref());
        Ok(AttributeVector::new(
            trace.output.iter().map(|&v| clamp_open_unit(v.to_f32().unwrap())).collect(),
        ))
    }

    /// Deterministic eval-mode shorthand.
    pub fn infer(&self, image: &WordImage) -> Result<AttributeVector, EstimatorError> {
        self.forward::<rand_chacha::ChaCha12Rng>(image, ForwardMode::Eval)
    }

    /// Inverted-dropout mask for the hidden layer: 0 for dropped units,
    /// `1/(1-p)` for kept ones.
    fn sample_dropout_mask<R: Rng>(&self, rng: &mut R) -> Option<Vec<F>> {
        let p = self.desc.dropout_p;
        if p == 0.0 {
            return None;
        }
        let keep_scale = f::<F>(1.0 / (1.0 - p));
        Some(
            (0..self.desc.fc_hidden)
                .map(|_| {
                    if rng.gen_range(0.0..1.0) < p {
                        F::zero()
                    } else {
                        keep_scale
                    }
                })
                .collect(),
        )
    }

    /// Mean binary cross entropy of a forward pass against a target
    /// embedding, with the gradient w.r.t. every parameter. The dropout mask
    /// (if any) is shared between the forward and backward computation.
    pub fn loss_and_grad<R: Rng>(
        &self,
        image: &WordImage,
        target: &PhocVector,
        dropout_rng: Option<&mut R>,
    ) -> Result<(F, Vec<F>), EstimatorError> {
        self.check_geometry(image)?;
        if target.len() != self.desc.output_dim {
            return Err(EstimatorError::LengthMismatch(
                target.len(),
                self.desc.output_dim,
            ));
        }
        let mask = dropout_rng.and_then(|rng| self.sample_dropout_mask(rng));
        let trace = self.forward_trace(image, mask.as_deref());
        Ok(self.backward_trace(&trace, target, mask.as_deref()))
    }

    /// Mean BCE without gradients.
    pub fn loss(&self, pred: &AttributeVector, target: &PhocVector) -> Result<f64, EstimatorError> {
        bce_loss(pred, target)
    }

    // ---- internals ----------------------------------------------------

    fn forward_trace(&self, image: &WordImage, mask: Option<&[F]>) -> Trace<F> {
        let desc = &self.desc;
        let mut offset = 0usize;
        let mut in_ch = 1usize;
        let (mut h, mut w) = (desc.input_h, desc.input_w);
        let mut act: Vec<F> = image.pixels().iter().map(|&v| f(v as f64)).collect();

        let mut conv_inputs = Vec::new();
        let mut conv_pre = Vec::new();
        let mut pool_argmax = Vec::new();

        for &out_ch in &desc.conv_channels {
            let w_len = out_ch * in_ch * 9;
            let weights = &self.params[offset..offset + w_len];
            let biases = &self.params[offset + w_len..offset + w_len + out_ch];
            offset += w_len + out_ch;

            // conv 3x3, zero padding, then relu (pre-activation kept)
            let mut pre = vec![F::zero(); out_ch * h * w];
            conv3x3(&act, in_ch, h, w, weights, biases, out_ch, &mut pre);
            let post: Vec<F> = pre.iter().map(|&v| v.max(F::zero())).collect();

            // maxpool 2x2 with argmax bookkeeping
            let (ph, pw) = (h / 2, w / 2);
            let mut pooled = vec![F::zero(); out_ch * ph * pw];
            let mut argmax = vec![0usize; out_ch * ph * pw];
            for c in 0..out_ch {
                for py in 0..ph {
                    for px in 0..pw {
                        let mut best = F::neg_infinity();
                        let mut best_idx = 0;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let idx = c * h * w + (2 * py + dy) * w + (2 * px + dx);
                                if post[idx] > best {
                                    best = post[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        let p_idx = c * ph * pw + py * pw + px;
                        pooled[p_idx] = best;
                        argmax[p_idx] = best_idx;
                    }
                }
            }

            conv_inputs.push(act);
            conv_pre.push(pre);
            pool_argmax.push(argmax);
            act = pooled;
            in_ch = out_ch;
            h = ph;
            w = pw;
        }

        let flat = act;
        let flat_len = desc.flat_len();
        debug_assert_eq!(flat.len(), flat_len);

        // hidden fully connected + relu + dropout
        let w1 = &self.params[offset..offset + desc.fc_hidden * flat_len];
        let b1 = &self.params[offset + desc.fc_hidden * flat_len
            ..offset + desc.fc_hidden * flat_len + desc.fc_hidden];
        offset += desc.fc_hidden * flat_len + desc.fc_hidden;
        let mut z1 = vec![F::zero(); desc.fc_hidden];
        for k in 0..desc.fc_hidden {
            let row = &w1[k * flat_len..(k + 1) * flat_len];
            let mut acc = b1[k];
            for (wv, xv) in row.iter().zip(&flat) {
                acc = acc + *wv * *xv;
            }
            z1[k] = acc;
        }
        let mut h1: Vec<F> = z1.iter().map(|&v| v.max(F::zero())).collect();
        if let Some(mask) = mask {
            for (hv, &m) in h1.iter_mut().zip(mask) {
                *hv = *hv * m;
            }
        }

        // output layer + sigmoid
        let w2 = &self.params[offset..offset + desc.output_dim * desc.fc_hidden];
        let b2 = &self.params[offset + desc.output_dim * desc.fc_hidden..];
        let mut output = vec![F::zero(); desc.output_dim];
        for j in 0..desc.output_dim {
            let row = &w2[j * desc.fc_hidden..(j + 1) * desc.fc_hidden];
            let mut acc = b2[j];
            for (wv, xv) in row.iter().zip(&h1) {
                acc = acc + *wv * *xv;
            }
            output[j] = sigmoid(acc);
        }

        Trace {
            conv_inputs,
            conv_pre,
            pool_argmax,
            flat,
            z1,
            h1,
            output,
        }
    }

    fn backward_trace(&self, trace: &Trace<F>, target: &PhocVector, mask: Option<&[F]>) -> (F, Vec<F>) {
        let desc = &self.desc;
        let d = desc.output_dim;
        let flat_len = desc.flat_len();
        let eps = f::<F>(LOG_CLAMP);
        let one = F::one();
        let inv_d = one / f::<F>(d as f64);

        // loss and output-layer delta; the clamp zeroes the gradient in the
        // saturated regions, matching the finite-difference behavior
        let mut loss = F::zero();
        let mut dz2 = vec![F::zero(); d];
        for j in 0..d {
            let p = trace.output[j];
            let t = f::<F>(target.bits()[j] as f64);
            let pc = p.max(eps).min(one - eps);
            loss = loss - (t * pc.ln() + (one - t) * (one - pc).ln());
            dz2[j] = if p > eps && p < one - eps {
                (p - t) * inv_d
            } else {
                F::zero()
            };
        }
        loss = loss * inv_d;

        let mut grad = vec![F::zero(); self.params.len()];

        // offsets of each block
        let mut conv_offsets = Vec::new();
        let mut offset = 0usize;
        let mut in_ch = 1usize;
        for &out_ch in &desc.conv_channels {
            conv_offsets.push((offset, in_ch, out_ch));
            offset += out_ch * in_ch * 9 + out_ch;
            in_ch = out_ch;
        }
        let fc1_off = offset;
        let fc2_off = fc1_off + desc.fc_hidden * flat_len + desc.fc_hidden;

        // output layer
        let w2 = &self.params[fc2_off..fc2_off + d * desc.fc_hidden];
        let mut dh1 = vec![F::zero(); desc.fc_hidden];
        for j in 0..d {
            let g = dz2[j];
            if g == F::zero() {
                continue;
            }
            let row = fc2_off + j * desc.fc_hidden;
            for k in 0..desc.fc_hidden {
                grad[row + k] = grad[row + k] + g * trace.h1[k];
                dh1[k] = dh1[k] + g * w2[j * desc.fc_hidden + k];
            }
            grad[fc2_off + d * desc.fc_hidden + j] = g;
        }

        // dropout and relu of the hidden layer
        if let Some(mask) = mask {
            for (dv, &m) in dh1.iter_mut().zip(mask) {
                *dv = *dv * m;
            }
        }
        let dz1: Vec<F> = dh1
            .iter()
            .zip(&trace.z1)
            .map(|(&g, &z)| if z > F::zero() { g } else { F::zero() })
            .collect();

        // hidden layer
        let w1 = &self.params[fc1_off..fc1_off + desc.fc_hidden * flat_len];
        let mut dflat = vec![F::zero(); flat_len];
        for k in 0..desc.fc_hidden {
            let g = dz1[k];
            if g == F::zero() {
                continue;
            }
            let row = fc1_off + k * flat_len;
            for fi in 0..flat_len {
                grad[row + fi] = grad[row + fi] + g * trace.flat[fi];
                dflat[fi] = dflat[fi] + g * w1[k * flat_len + fi];
            }
            grad[fc1_off + desc.fc_hidden * flat_len + k] = g;
        }

        // conv blocks, back to front
        let mut dpooled = dflat;
        for (layer, &(off, in_ch, out_ch)) in conv_offsets.iter().enumerate().rev() {
            let div = 1usize << (layer + 1);
            let (ph, pw) = (desc.input_h / div, desc.input_w / div);
            let (h, w) = (ph * 2, pw * 2);

            // unpool through argmax, gated by relu
            let pre = &trace.conv_pre[layer];
            let mut dpre = vec![F::zero(); out_ch * h * w];
            for (p_idx, &src) in trace.pool_argmax[layer].iter().enumerate() {
                if pre[src] > F::zero() {
                    dpre[src] = dpre[src] + dpooled[p_idx];
                }
            }

            let input = &trace.conv_inputs[layer];
            let weights = &self.params[off..off + out_ch * in_ch * 9];
            let mut dinput = vec![F::zero(); in_ch * h * w];
            for o in 0..out_ch {
                let mut db = F::zero();
                for y in 0..h {
                    for x in 0..w {
                        let g = dpre[o * h * w + y * w + x];
                        if g == F::zero() {
                            continue;
                        }
                        db = db + g;
                        for i in 0..in_ch {
                            let wbase = (o * in_ch + i) * 9;
                            for ky in 0..3usize {
                                let sy = y as i64 + ky as i64 - 1;
                                if sy < 0 || sy >= h as i64 {
                                    continue;
                                }
                                for kx in 0..3usize {
                                    let sx = x as i64 + kx as i64 - 1;
                                    if sx < 0 || sx >= w as i64 {
                                        continue;
                                    }
                                    let s_idx = i * h * w + sy as usize * w + sx as usize;
                                    grad[off + wbase + ky * 3 + kx] =
                                        grad[off + wbase + ky * 3 + kx] + g * input[s_idx];
                                    dinput[s_idx] =
                                        dinput[s_idx] + g * weights[wbase + ky * 3 + kx];
                                }
                            }
                        }
                    }
                }
                grad[off + out_ch * in_ch * 9 + o] = db;
            }
            dpooled = dinput;
        }

        (loss, grad)
    }
}

struct Trace<F> {
    conv_inputs: Vec<Vec<F>>,
    conv_pre: Vec<Vec<F>>,
    pool_argmax: Vec<Vec<usize>>,
    flat: Vec<F>,
    z1: Vec<F>,
    h1: Vec<F>,
    output: Vec<F>,
}

fn conv3x3<F: Float>(
    input: &[F],
    in_ch: usize,
    h: usize,
    w: usize,
    weights: &[F],
    biases: &[F],
    out_ch: usize,
    out: &mut [F],
) {
    for o in 0..out_ch {
        for y in 0..h {
            for x in 0..w {
                let mut acc = biases[o];
                for i in 0..in_ch {
                    let wbase = (o * in_ch + i) * 9;
                    for ky in 0..3usize {
                        let sy = y as i64 + ky as i64 - 1;
                        if sy < 0 || sy >= h as i64 {
                            continue;
                        }
                        let row = i * h * w + sy as usize * w;
                        for kx in 0..3usize {
                            let sx = x as i64 + kx as i64 - 1;
                            if sx < 0 || sx >= w as i64 {
                                continue;
                            }
                            acc = acc + weights[wbase + ky * 3 + kx] * input[row + sx as usize];
                        }
                    }
                }
                out[o * h * w + y * w + x] = acc;
            }
        }
    }
}

fn sigmoid<F: Float>(z: F) -> F {
    F::one() / (F::one() + (-z).exp())
}

/// Keeps f32 sigmoid outputs inside the open unit interval even when the
/// pre-activation saturates.
fn clamp_open_unit(v: f32) -> f32 {
    const LO: f32 = 1e-30;
    v.clamp(LO, 1.0 - f32::EPSILON)
}

/// Mean binary cross entropy between sigmoid activations and a binary
/// target, logs clamped at [`LOG_CLAMP`].
pub fn bce_loss(pred: &AttributeVector, target: &PhocVector) -> Result<f64, EstimatorError> {
    if pred.len() != target.len() {
        return Err(EstimatorError::LengthMismatch(pred.len(), target.len()));
    }
    let mut total = 0.0f64;
    for (&p, &t) in pred.values().iter().zip(target.bits()) {
        let p = (p as f64).clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
        let t = t as f64;
        total -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    Ok(total / pred.len() as f64)
}

#[cfg(test)]
mod tests;

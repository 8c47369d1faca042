//! Mask-prediction network: a small encoder-decoder trained without labels
//! by the selection consistency loss.
//!
//! The net consumes the edge-difference image of a pair and emits a soft
//! A-weight per pixel. Three 2x2 max pools shrink the grid, three nearest
//! upsamples restore it, and skip connections concatenate encoder features
//! at each matching resolution. All convolutions are 3x3 with replicate
//! padding; every layer applies a rectifier except the single-channel head,
//! which goes through the logistic instead. Forward, backward, and the
//! moment-based update are written out longhand so the whole training path
//! stays dependency-free and bitwise deterministic.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SeamError};
use crate::loss::{prepare_loss_space, LossBreakdown, LossEvaluator, LossSpace, LossWeights};
use crate::mask::{region_partition, MaskPair, RegionPartition, SoftMaskPair, ValidMasks};
use crate::optim::binarize_mask;
use crate::raster::ImageF;
use crate::util::logistic;

const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;
/// Pool and upsample stages; the grid shrinks by 2^STAGES.
const STAGES: usize = 3;
const CONV_COUNT: usize = 8;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Iteration span over which one decay factor applies.
const DECAY_SPAN: f64 = 1000.0;
const WEIGHT_MAGIC: &[u8; 4] = b"SKNW";
const WEIGHT_VERSION: u32 = 1;

/// Architecture knobs. The layer graph itself is fixed: three encoder
/// stages, a bottleneck, three decoder stages with skips, and a 1-channel
/// logistic head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Square working resolution; must be a positive multiple of 8.
    pub input_size: usize,
    /// Encoder channel widths, finest to coarsest; the decoder mirrors them.
    pub widths: [usize; 3],
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            input_size: 256,
            widths: [8, 16, 32],
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvShape {
    in_c: usize,
    out_c: usize,
}

impl ConvShape {
    fn weight_len(&self) -> usize {
        self.in_c * self.out_c * TAPS
    }

    fn total_len(&self) -> usize {
        self.weight_len() + self.out_c
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let div = 1 << STAGES;
        if self.input_size == 0 || !self.input_size.is_multiple_of(div) {
            return Err(SeamError::InvalidParam(format!(
                "input size must be a positive multiple of {div}, got {}",
                self.input_size
            )));
        }
        if self.widths.contains(&0) {
            return Err(SeamError::InvalidParam(
                "channel widths must be positive".into(),
            ));
        }
        Ok(())
    }

    fn conv_shapes(&self) -> [ConvShape; CONV_COUNT] {
        let [c1, c2, c3] = self.widths;
        [
            ConvShape { in_c: 1, out_c: c1 },
            ConvShape { in_c: c1, out_c: c2 },
            ConvShape { in_c: c2, out_c: c3 },
            ConvShape { in_c: c3, out_c: c3 },
            ConvShape { in_c: 2 * c3, out_c: c2 },
            ConvShape { in_c: 2 * c2, out_c: c1 },
            ConvShape { in_c: 2 * c1, out_c: c1 },
            ConvShape { in_c: c1, out_c: 1 },
        ]
    }

    fn param_offsets(&self) -> ([usize; CONV_COUNT], usize) {
        let mut offsets = [0usize; CONV_COUNT];
        let mut total = 0;
        for (i, s) in self.conv_shapes().iter().enumerate() {
            offsets[i] = total;
            total += s.total_len();
        }
        (offsets, total)
    }

    pub fn param_count(&self) -> usize {
        self.param_offsets().1
    }
}

/// Planar float tensor, laid out channel by channel.
#[derive(Debug, Clone)]
struct Tensor {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Tensor {
    fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    fn from_image(img: &ImageF) -> Result<Self> {
        if img.channels() != 1 {
            return Err(SeamError::DimensionMismatch(format!(
                "network input must have 1 channel, got {}",
                img.channels()
            )));
        }
        Ok(Self {
            c: 1,
            h: img.height(),
            w: img.width(),
            data: img.data().to_vec(),
        })
    }
}

/// Replicate-pad every channel by one pixel on each side.
fn pad1(t: &Tensor) -> Tensor {
    let (h, w) = (t.h, t.w);
    let (ph, pw) = (h + 2, w + 2);
    let mut out = Tensor::zeros(t.c, ph, pw);
    for c in 0..t.c {
        let src = &t.data[c * h * w..(c + 1) * h * w];
        let dst = &mut out.data[c * ph * pw..(c + 1) * ph * pw];
        for py in 0..ph {
            let sy = py.saturating_sub(1).min(h - 1);
            let row = &src[sy * w..sy * w + w];
            let drow = &mut dst[py * pw..py * pw + pw];
            drow[0] = row[0];
            drow[1..=w].copy_from_slice(row);
            drow[w + 1] = row[w - 1];
        }
    }
    out
}

/// 3x3 convolution with replicate padding; optional rectifier.
#[allow(clippy::needless_range_loop)]
fn conv3x3(input: &Tensor, weights: &[f64], bias: &[f64], out_c: usize, relu: bool) -> Tensor {
    let padded = pad1(input);
    let (h, w) = (input.h, input.w);
    let pw = w + 2;
    let mut out = Tensor::zeros(out_c, h, w);
    for o in 0..out_c {
        let ob = o * h * w;
        for ic in 0..input.c {
            let kbase = (o * input.c + ic) * TAPS;
            let pbase = ic * (h + 2) * pw;
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let wk = weights[kbase + ky * KERNEL + kx];
                    for y in 0..h {
                        let src = &padded.data[pbase + (y + ky) * pw + kx..][..w];
                        let dst = &mut out.data[ob + y * w..][..w];
                        for i in 0..w {
                            dst[i] += wk * src[i];
                        }
                    }
                }
            }
        }
        let b = bias[o];
        for v in &mut out.data[ob..ob + h * w] {
            *v += b;
            if relu && *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    out
}

/// Gradients of a 3x3 convolution: input gradient (through the padding
/// adjoint) and layer-local parameter gradient (weights then biases).
fn conv3x3_backward(
    input: &Tensor,
    weights: &[f64],
    out_c: usize,
    g_out: &Tensor,
) -> (Tensor, Vec<f64>) {
    let padded = pad1(input);
    let (h, w) = (input.h, input.w);
    let pw = w + 2;
    let in_c = input.c;
    let mut g_params = vec![0.0; out_c * in_c * TAPS + out_c];
    let bias_off = out_c * in_c * TAPS;
    let mut g_pad = Tensor::zeros(in_c, h + 2, w + 2);
    for o in 0..out_c {
        let ob = o * h * w;
        let mut bias_acc = 0.0;
        for &g in &g_out.data[ob..ob + h * w] {
            bias_acc += g;
        }
        g_params[bias_off + o] = bias_acc;
        for ic in 0..in_c {
            let kbase = (o * in_c + ic) * TAPS;
            let pbase = ic * (h + 2) * pw;
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let wk = weights[kbase + ky * KERNEL + kx];
                    let mut acc = 0.0;
                    for y in 0..h {
                        let src = &padded.data[pbase + (y + ky) * pw + kx..][..w];
                        let gp = &mut g_pad.data[pbase + (y + ky) * pw + kx..][..w];
                        let g = &g_out.data[ob + y * w..][..w];
                        for i in 0..w {
                            acc += g[i] * src[i];
                            gp[i] += wk * g[i];
                        }
                    }
                    g_params[kbase + ky * KERNEL + kx] += acc;
                }
            }
        }
    }
    // Fold the padded gradient back onto the source pixels.
    let mut g_in = Tensor::zeros(in_c, h, w);
    for ic in 0..in_c {
        let gsrc = &g_pad.data[ic * (h + 2) * pw..(ic + 1) * (h + 2) * pw];
        let gdst = &mut g_in.data[ic * h * w..(ic + 1) * h * w];
        for py in 0..h + 2 {
            let sy = py.saturating_sub(1).min(h - 1);
            for px in 0..pw {
                let sx = px.saturating_sub(1).min(w - 1);
                gdst[sy * w + sx] += gsrc[py * pw + px];
            }
        }
    }
    (g_in, g_params)
}

/// 2x2 max pool, stride 2. Ties pick the first cell in scan order, so the
/// argmax record is deterministic.
fn maxpool2(input: &Tensor) -> (Tensor, Vec<u32>) {
    let (h, w) = (input.h / 2, input.w / 2);
    let mut out = Tensor::zeros(input.c, h, w);
    let mut arg = vec![0u32; input.c * h * w];
    for c in 0..input.c {
        let src_base = c * input.h * input.w;
        for y in 0..h {
            for x in 0..w {
                let mut best_idx = src_base + (2 * y) * input.w + 2 * x;
                let mut best = input.data[best_idx];
                for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let idx = src_base + (2 * y + dy) * input.w + 2 * x + dx;
                    if input.data[idx] > best {
                        best = input.data[idx];
                        best_idx = idx;
                    }
                }
                let o = c * h * w + y * w + x;
                out.data[o] = best;
                arg[o] = best_idx as u32;
            }
        }
    }
    (out, arg)
}

fn maxpool2_backward(g_out: &Tensor, arg: &[u32], c: usize, h: usize, w: usize) -> Tensor {
    let mut g_in = Tensor::zeros(c, h, w);
    for (i, &g) in g_out.data.iter().enumerate() {
        g_in.data[arg[i] as usize] += g;
    }
    g_in
}

/// Nearest-neighbor 2x upsample.
fn upsample2(input: &Tensor) -> Tensor {
    let (h, w) = (input.h * 2, input.w * 2);
    let mut out = Tensor::zeros(input.c, h, w);
    for c in 0..input.c {
        for y in 0..h {
            let src = &input.data[c * input.h * input.w + (y / 2) * input.w..][..input.w];
            let dst = &mut out.data[c * h * w + y * w..][..w];
            for x in 0..w {
                dst[x] = src[x / 2];
            }
        }
    }
    out
}

fn upsample2_backward(g_out: &Tensor) -> Tensor {
    let (h, w) = (g_out.h / 2, g_out.w / 2);
    let mut g_in = Tensor::zeros(g_out.c, h, w);
    for c in 0..g_out.c {
        for y in 0..g_out.h {
            let src = &g_out.data[c * g_out.h * g_out.w + y * g_out.w..][..g_out.w];
            let dst = &mut g_in.data[c * h * w + (y / 2) * w..][..w];
            for x in 0..g_out.w {
                dst[x / 2] += src[x];
            }
        }
    }
    g_in
}

/// Channel concatenation, `first` stacked before `second`.
fn concat(first: &Tensor, second: &Tensor) -> Tensor {
    debug_assert!(first.h == second.h && first.w == second.w);
    let mut data = Vec::with_capacity((first.c + second.c) * first.h * first.w);
    data.extend_from_slice(&first.data);
    data.extend_from_slice(&second.data);
    Tensor {
        c: first.c + second.c,
        h: first.h,
        w: first.w,
        data,
    }
}

fn split_grad(g: &Tensor, c_first: usize) -> (Tensor, Tensor) {
    let plane = g.h * g.w;
    let (a, b) = g.data.split_at(c_first * plane);
    (
        Tensor {
            c: c_first,
            h: g.h,
            w: g.w,
            data: a.to_vec(),
        },
        Tensor {
            c: g.c - c_first,
            h: g.h,
            w: g.w,
            data: b.to_vec(),
        },
    )
}

/// Multiply a gradient by the rectifier mask of the forward activation.
fn apply_relu_mask(g: &mut Tensor, activation: &Tensor) {
    for (gv, &av) in g.data.iter_mut().zip(&activation.data) {
        if av <= 0.0 {
            *gv = 0.0;
        }
    }
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardCache {
    x: Tensor,
    a0: Tensor,
    i1: Vec<u32>,
    p1: Tensor,
    a1: Tensor,
    i2: Vec<u32>,
    p2: Tensor,
    a2: Tensor,
    i3: Vec<u32>,
    p3: Tensor,
    a3: Tensor,
    cat1: Tensor,
    d1: Tensor,
    cat2: Tensor,
    d2: Tensor,
    cat3: Tensor,
    d3: Tensor,
    soft: Vec<f64>,
}

/// Network parameters: eight convolution layers stored flat, kernels first
/// and biases after, in graph order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetWeights {
    config: NetConfig,
    params: Vec<f64>,
}

impl NetWeights {
    /// Fan-in-scaled uniform init for the kernels, zero biases.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(config, &mut rng)
    }

    fn init_with_rng(config: NetConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let (_, total) = config.param_offsets();
        let mut params = vec![0.0; total];
        let mut cursor = 0;
        for shape in config.conv_shapes() {
            let limit = (6.0 / (shape.in_c * TAPS) as f64).sqrt();
            for p in &mut params[cursor..cursor + shape.weight_len()] {
                *p = (rng.gen::<f64>() * 2.0 - 1.0) * limit;
            }
            cursor += shape.total_len();
        }
        Ok(Self { config, params })
    }

    /// All-zero parameters; the head then emits 0.5 everywhere.
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let (_, total) = config.param_offsets();
        Ok(Self {
            config,
            params: vec![0.0; total],
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer(&self, i: usize) -> (&[f64], &[f64], ConvShape) {
        let shapes = self.config.conv_shapes();
        let (offsets, _) = self.config.param_offsets();
        let s = shapes[i];
        let w = &self.params[offsets[i]..offsets[i] + s.weight_len()];
        let b = &self.params[offsets[i] + s.weight_len()..offsets[i] + s.total_len()];
        (w, b, s)
    }

    /// Forward pass. The input must be a single-channel image at the
    /// configured square resolution.
    pub fn forward(&self, input: &ImageF) -> Result<(SoftMaskPair, ForwardCache)> {
        let n = self.config.input_size;
        if input.height() != n || input.width() != n {
            return Err(SeamError::DimensionMismatch(format!(
                "network input {}x{} but configured for {n}x{n}",
                input.height(),
                input.width()
            )));
        }
        let x = Tensor::from_image(input)?;
        let conv = |i: usize, t: &Tensor, relu: bool| {
            let (w, b, s) = self.layer(i);
            conv3x3(t, w, b, s.out_c, relu)
        };

        let a0 = conv(0, &x, true);
        let (p1, i1) = maxpool2(&a0);
        let a1 = conv(1, &p1, true);
        let (p2, i2) = maxpool2(&a1);
        let a2 = conv(2, &p2, true);
        let (p3, i3) = maxpool2(&a2);
        let a3 = conv(3, &p3, true);
        let cat1 = concat(&upsample2(&a3), &a2);
        let d1 = conv(4, &cat1, true);
        let cat2 = concat(&upsample2(&d1), &a1);
        let d2 = conv(5, &cat2, true);
        let cat3 = concat(&upsample2(&d2), &a0);
        let d3 = conv(6, &cat3, true);
        let logits = conv(7, &d3, false);
        let soft: Vec<f64> = logits.data.iter().map(|&z| logistic(z)).collect();

        let img = ImageF::from_vec(n, n, 1, soft.clone(), true)?;
        let pair = SoftMaskPair::new(img)?;
        let cache = ForwardCache {
            x,
            a0,
            i1,
            p1,
            a1,
            i2,
            p2,
            a2,
            i3,
            p3,
            a3,
            cat1,
            d1,
            cat2,
            d2,
            cat3,
            d3,
            soft,
        };
        Ok((pair, cache))
    }

    /// Backpropagates a gradient with respect to the soft A-mask down to all
    /// parameters. Returns the flat parameter gradient.
    pub fn backward(&self, cache: &ForwardCache, grad_soft: &ImageF) -> Result<Vec<f64>> {
        let n = self.config.input_size;
        if grad_soft.height() != n || grad_soft.width() != n || grad_soft.channels() != 1 {
            return Err(SeamError::DimensionMismatch(
                "soft-mask gradient does not match network output".into(),
            ));
        }
        let shapes = self.config.conv_shapes();
        let (offsets, total) = self.config.param_offsets();
        let mut flat = vec![0.0; total];
        let mut store = |i: usize, g: Vec<f64>| {
            flat[offsets[i]..offsets[i] + shapes[i].total_len()].copy_from_slice(&g);
        };
        let bwd = |i: usize, input: &Tensor, g: &Tensor| {
            let (w, _, s) = self.layer(i);
            conv3x3_backward(input, w, s.out_c, g)
        };

        // Through the logistic head.
        let mut g_logits = Tensor::zeros(1, n, n);
        for (i, g) in g_logits.data.iter_mut().enumerate() {
            let s = cache.soft[i];
            *g = grad_soft.data()[i] * s * (1.0 - s);
        }

        let (mut g_d3, gw7) = bwd(7, &cache.d3, &g_logits);
        store(7, gw7);
        apply_relu_mask(&mut g_d3, &cache.d3);
        let (g_cat3, gw6) = bwd(6, &cache.cat3, &g_d3);
        store(6, gw6);
        let (g_u3, g_a0_skip) = split_grad(&g_cat3, cache.d2.c);
        let mut g_d2 = upsample2_backward(&g_u3);
        apply_relu_mask(&mut g_d2, &cache.d2);
        let (g_cat2, gw5) = bwd(5, &cache.cat2, &g_d2);
        store(5, gw5);
        let (g_u2, g_a1_skip) = split_grad(&g_cat2, cache.d1.c);
        let mut g_d1 = upsample2_backward(&g_u2);
        apply_relu_mask(&mut g_d1, &cache.d1);
        let (g_cat1, gw4) = bwd(4, &cache.cat1, &g_d1);
        store(4, gw4);
        let (g_u1, g_a2_skip) = split_grad(&g_cat1, cache.a3.c);
        let mut g_a3 = upsample2_backward(&g_u1);
        apply_relu_mask(&mut g_a3, &cache.a3);
        let (g_p3, gw3) = bwd(3, &cache.p3, &g_a3);
        store(3, gw3);

        let mut g_a2 = maxpool2_backward(&g_p3, &cache.i3, cache.a2.c, cache.a2.h, cache.a2.w);
        for (g, s) in g_a2.data.iter_mut().zip(&g_a2_skip.data) {
            *g += s;
        }
        apply_relu_mask(&mut g_a2, &cache.a2);
        let (g_p2, gw2) = bwd(2, &cache.p2, &g_a2);
        store(2, gw2);

        let mut g_a1 = maxpool2_backward(&g_p2, &cache.i2, cache.a1.c, cache.a1.h, cache.a1.w);
        for (g, s) in g_a1.data.iter_mut().zip(&g_a1_skip.data) {
            *g += s;
        }
        apply_relu_mask(&mut g_a1, &cache.a1);
        let (g_p1, gw1) = bwd(1, &cache.p1, &g_a1);
        store(1, gw1);

        let mut g_a0 = maxpool2_backward(&g_p1, &cache.i1, cache.a0.c, cache.a0.h, cache.a0.w);
        for (g, s) in g_a0.data.iter_mut().zip(&g_a0_skip.data) {
            *g += s;
        }
        apply_relu_mask(&mut g_a0, &cache.a0);
        let (_, gw0) = bwd(0, &cache.x, &g_a0);
        store(0, gw0);

        Ok(flat)
    }

    /// Versioned little-endian container: magic, version, config, then the
    /// raw parameter block.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(32 + self.params.len() * 8);
        buf.extend_from_slice(WEIGHT_MAGIC);
        buf.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.config.input_size as u32).to_le_bytes());
        for w in self.config.widths {
            buf.extend_from_slice(&(w as u32).to_le_bytes());
        }
        buf.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        std::fs::write(path, buf).map_err(|source| SeamError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| SeamError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let fail = |reason: &str| SeamError::WeightFormat {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut cursor = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = cursor.checked_add(n).filter(|&e| e <= bytes.len());
            match end {
                Some(e) => {
                    let s = &bytes[cursor..e];
                    cursor = e;
                    Ok(s)
                }
                None => Err(fail("truncated file")),
            }
        };
        if take(4)? != WEIGHT_MAGIC {
            return Err(fail("bad magic"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != WEIGHT_VERSION {
            return Err(fail(&format!("unsupported version {version}")));
        }
        let read_u32 =
            |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
        let input_size = read_u32(take(4)?);
        let mut widths = [0usize; 3];
        for w in &mut widths {
            *w = read_u32(take(4)?);
        }
        let config = NetConfig { input_size, widths };
        config
            .validate()
            .map_err(|e| fail(&format!("invalid config: {e}")))?;
        let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        if count != config.param_count() {
            return Err(fail(&format!(
                "parameter count {count} does not match config ({} expected)",
                config.param_count()
            )));
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let v = f64::from_le_bytes(take(8)?.try_into().unwrap());
            if !v.is_finite() {
                return Err(fail("non-finite parameter"));
            }
            params.push(v);
        }
        if cursor != bytes.len() {
            return Err(fail("trailing bytes"));
        }
        Ok(Self { config, params })
    }
}

/// Training schedule. The batch is always a single pair; the learning rate
/// decays continuously by `decay` per thousand iterations.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            decay: 0.96,
            iterations: 20_000,
            batch_size: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(SeamError::InvalidParam(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(SeamError::InvalidParam(format!(
                "decay must lie in (0, 1], got {}",
                self.decay
            )));
        }
        if self.iterations == 0 {
            return Err(SeamError::InvalidParam("iterations must be positive".into()));
        }
        if self.batch_size != 1 {
            return Err(SeamError::InvalidParam(format!(
                "batch size is fixed at 1, got {}",
                self.batch_size
            )));
        }
        Ok(())
    }

    /// Learning rate at a 0-based iteration index.
    pub fn rate_at(&self, iteration: usize) -> f64 {
        self.learning_rate * self.decay.powf(iteration as f64 / DECAY_SPAN)
    }
}

/// First and second moment accumulators for the parameter update.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.t
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powf(self.t as f64);
        let bc2 = 1.0 - ADAM_BETA2.powf(self.t as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
        }
    }
}

/// Difference of the edge maps of the two grayscale sources; the network's
/// only input channel. Unnormalized.
pub fn make_input(img_a: &ImageF, img_b: &ImageF) -> Result<ImageF> {
    if img_a.height() != img_b.height() || img_a.width() != img_b.width() {
        return Err(SeamError::DimensionMismatch(format!(
            "edge-difference input: {}x{} vs {}x{}",
            img_a.height(),
            img_a.width(),
            img_b.height(),
            img_b.width()
        )));
    }
    let ea = img_a.to_gray()?.sobel_edges()?;
    let eb = img_b.to_gray()?.sobel_edges()?;
    let data: Vec<f64> = ea
        .data()
        .iter()
        .zip(eb.data())
        .map(|(&a, &b)| a - b)
        .collect();
    ImageF::from_vec(ea.height(), ea.width(), 1, data, false)
}

/// One unsupervised step: predict a soft mask, evaluate the selection loss,
/// backpropagate, and apply the decayed moment update. The images must sit
/// at the configured input size.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    weights: &mut NetWeights,
    img_a: &ImageF,
    img_b: &ImageF,
    valid: &ValidMasks,
    part: &RegionPartition,
    lossw: &LossWeights,
    space: LossSpace,
    tcfg: &TrainConfig,
    state: &mut AdamState,
) -> Result<LossBreakdown> {
    tcfg.validate()?;
    let (sa, sb) = prepare_loss_space(img_a, img_b, space)?;
    let eval = LossEvaluator::new(&sa, &sb, valid, part, *lossw)?;
    let x = make_input(img_a, img_b)?;
    let lr = tcfg.rate_at(state.step_count());
    step_prepared(weights, &x, &eval, state, lr)
}

fn step_prepared(
    weights: &mut NetWeights,
    x: &ImageF,
    eval: &LossEvaluator,
    state: &mut AdamState,
    lr: f64,
) -> Result<LossBreakdown> {
    let (soft, cache) = weights.forward(x)?;
    let (bd, grad_soft) = eval.evaluate_with_gradient(&soft)?;
    if !bd.total.is_finite() {
        return Err(SeamError::NonFinite(format!(
            "training loss left the finite range at step {}: non={} patch={}",
            state.step_count(),
            bd.loss_non,
            bd.loss_patch
        )));
    }
    let g = weights.backward(&cache, &grad_soft)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(SeamError::NonFinite(format!(
            "parameter gradient left the finite range at step {}",
            state.step_count()
        )));
    }
    state.update(&mut weights.params, &g, lr);
    Ok(bd)
}

/// One training example: a pair plus its validity masks, already at the
/// network input size.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub img_a: ImageF,
    pub img_b: ImageF,
    pub valid: ValidMasks,
}

/// Trains fresh weights over a shuffled corpus and returns them with the
/// per-iteration total-loss curve.
pub fn train(
    corpus: &[TrainPair],
    ncfg: NetConfig,
    tcfg: &TrainConfig,
    lossw: &LossWeights,
    space: LossSpace,
) -> Result<(NetWeights, Vec<f64>)> {
    ncfg.validate()?;
    tcfg.validate()?;
    lossw.validate()?;
    if corpus.is_empty() {
        return Err(SeamError::InvalidParam("training corpus is empty".into()));
    }
    let n = ncfg.input_size;
    for (i, p) in corpus.iter().enumerate() {
        if p.img_a.height() != n || p.img_a.width() != n {
            return Err(SeamError::DimensionMismatch(format!(
                "corpus pair {i} is {}x{}, expected {n}x{n}",
                p.img_a.height(),
                p.img_a.width()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut weights = NetWeights::init_with_rng(ncfg, &mut rng)?;

    let mut parts = Vec::with_capacity(corpus.len());
    let mut spaces = Vec::with_capacity(corpus.len());
    let mut inputs = Vec::with_capacity(corpus.len());
    for p in corpus {
        parts.push(region_partition(&p.valid)?);
        spaces.push(prepare_loss_space(&p.img_a, &p.img_b, space)?);
        inputs.push(make_input(&p.img_a, &p.img_b)?);
    }
    let evals: Vec<LossEvaluator> = corpus
        .iter()
        .zip(&spaces)
        .zip(&parts)
        .map(|((p, (sa, sb)), part)| LossEvaluator::new(sa, sb, &p.valid, part, *lossw))
        .collect::<Result<_>>()?;

    let mut state = AdamState::new(weights.params.len());
    let mut curve = Vec::with_capacity(tcfg.iterations);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for it in 0..tcfg.iterations {
        let k = it % corpus.len();
        if k == 0 {
            order.shuffle(&mut rng);
        }
        let idx = order[k];
        let lr = tcfg.rate_at(it);
        let bd = step_prepared(&mut weights, &inputs[idx], &evals[idx], &mut state, lr)?;
        curve.push(bd.total);
    }
    Ok((weights, curve))
}

/// Full inference path: edge-difference input, forward pass, optional
/// nearest upscale back to native resolution, then shared thresholding and
/// island cleanup.
pub fn predict(
    weights: &NetWeights,
    img_a: &ImageF,
    img_b: &ImageF,
    valid: &ValidMasks,
) -> Result<MaskPair> {
    if !img_a.same_shape(img_b) {
        return Err(SeamError::DimensionMismatch(
            "prediction inputs differ in shape".into(),
        ));
    }
    let part = region_partition(valid)?;
    let n = weights.config.input_size;
    let (native_h, native_w) = (img_a.height(), img_a.width());
    let soft_working = if native_h == n && native_w == n {
        let x = make_input(img_a, img_b)?;
        weights.forward(&x)?.0
    } else {
        let wa = img_a.resize_bilinear(n, n)?;
        let wb = img_b.resize_bilinear(n, n)?;
        let x = make_input(&wa, &wb)?;
        weights.forward(&x)?.0
    };
    let soft_native = if native_h == n && native_w == n {
        soft_working
    } else {
        SoftMaskPair::new(soft_working.soft_a().resize_nearest(native_h, native_w)?)?
    };
    let masks = binarize_mask(&soft_native, valid, &part, 0.5);
    masks.validate(valid)?;
    Ok(masks)
}

//! Direct optimization of a relaxed selection mask.
//!
//! Overlap pixels carry free logits; the logistic function maps them to soft
//! A-weights while the exclusive regions stay pinned to their own source.
//! Adam descends the selection loss, then the soft mask is thresholded and
//! cleaned into a hard partition.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SeamError};
use crate::loss::{prepare_loss_space, LossBreakdown, LossEvaluator, LossSpace, LossWeights};
use crate::mask::{region_partition, Mask, MaskPair, Region, RegionPartition, SoftMaskPair, ValidMasks};
use crate::raster::ImageF;
use crate::util::logistic;

/// Steps compared by the convergence check.
const STOP_WINDOW: usize = 50;
/// Minimum relative improvement over the window to keep iterating.
const STOP_REL_TOL: f64 = 1e-5;
/// Logit slope per pixel of signed distance for the bisector scheme.
const BISECTOR_SLOPE: f64 = 0.5;
/// Logit clamp; the logistic saturates to exactly 0 or 1 well before this.
const LOGIT_LIMIT: f64 = 30.0;

/// Starting shape for the overlap logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitScheme {
    /// All overlap logits zero, so both sources blend equally.
    Half,
    /// Smoothed step across the perpendicular bisector of the demarcation
    /// points, oriented so the half nearer the A-only region starts at A.
    Bisector,
}

impl std::str::FromStr for InitScheme {
    type Err = SeamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half" => Ok(InitScheme::Half),
            "bisector" => Ok(InitScheme::Bisector),
            other => Err(SeamError::InvalidParam(format!(
                "unknown init scheme '{other}', expected half|bisector"
            ))),
        }
    }
}

impl std::fmt::Display for InitScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitScheme::Half => "half",
            InitScheme::Bisector => "bisector",
        })
    }
}

/// Settings for the mask optimizer.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptimConfig {
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate after every step.
    pub decay: f64,
    pub max_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    /// Reserved for stochastic init schemes; current schemes ignore it.
    pub seed: u64,
    pub init_scheme: InitScheme,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            decay: 0.999,
            max_steps: 400,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            seed: 0,
            init_scheme: InitScheme::Bisector,
        }
    }
}

impl OptimConfig {
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
        if self.max_steps == 0 {
            return Err(SeamError::InvalidParam("max_steps must be at least 1".into()));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(SeamError::InvalidParam(format!(
                    "{name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if !(self.eps_adam.is_finite() && self.eps_adam > 0.0) {
            return Err(SeamError::InvalidParam(format!(
                "eps_adam must be positive, got {}",
                self.eps_adam
            )));
        }
        Ok(())
    }
}

/// One optimizer step: the loss before the update and elapsed wall clock.
#[derive(Debug, Clone, Copy)]
pub struct TraceStep {
    pub step: usize,
    pub breakdown: LossBreakdown,
    pub millis: f64,
}

/// Per-step loss history.
#[derive(Debug, Clone, Default)]
pub struct OptimTrace {
    pub steps: Vec<TraceStep>,
}

impl OptimTrace {
    pub fn initial_total(&self) -> Option<f64> {
        self.steps.first().map(|s| s.breakdown.total)
    }

    pub fn final_total(&self) -> Option<f64> {
        self.steps.last().map(|s| s.breakdown.total)
    }

    /// Columns: step, loss_non, loss_patch, total, ms.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io_err = |e: csv::Error| std::io::Error::other(e);
        w.write_record(["step", "loss_non", "loss_patch", "total", "ms"])
            .map_err(io_err)?;
        for s in &self.steps {
            w.write_record([
                s.step.to_string(),
                s.breakdown.loss_non.to_string(),
                s.breakdown.loss_patch.to_string(),
                s.breakdown.total.to_string(),
                s.millis.to_string(),
            ])
            .map_err(io_err)?;
        }
        w.flush()
    }
}

/// Logits for the overlap pixels in scan order.
fn init_logits(part: &RegionPartition, scheme: InitScheme) -> Vec<f64> {
    match scheme {
        InitScheme::Half => vec![0.0; part.n12],
        InitScheme::Bisector => {
            let (q1, q2) = (part.q1, part.q2);
            let mid_y = (q1.y as f64 + q2.y as f64) / 2.0;
            let mid_x = (q1.x as f64 + q2.x as f64) / 2.0;
            let vy = q2.y as f64 - q1.y as f64;
            let vx = q2.x as f64 - q1.x as f64;
            let len = vy.hypot(vx);
            // Normal to the demarcation segment; sign fixed below.
            let mut ny = vx / len;
            let mut nx = -vy / len;
            let signed =
                |y: usize, x: usize| (y as f64 + 0.5 - mid_y) * ny + (x as f64 + 0.5 - mid_x) * nx;

            // Orient the positive half toward the A-only region.
            let mut s11 = 0.0;
            let mut s22 = 0.0;
            for y in 0..part.height() {
                for x in 0..part.width() {
                    match part.region(y, x) {
                        Region::OnlyA => s11 += signed(y, x),
                        Region::OnlyB => s22 += signed(y, x),
                        _ => {}
                    }
                }
            }
            let mean11 = if part.n11 > 0 { s11 / part.n11 as f64 } else { 0.0 };
            let mean22 = if part.n22 > 0 { s22 / part.n22 as f64 } else { 0.0 };
            let flip = if part.n11 > 0 && part.n22 > 0 {
                mean11 < mean22
            } else if part.n11 > 0 {
                mean11 < 0.0
            } else {
                mean22 > 0.0
            };
            if flip {
                ny = -ny;
                nx = -nx;
            }

            part.overlap_pixels()
                .map(|(y, x)| {
                    ((y as f64 + 0.5 - mid_y) * ny + (x as f64 + 0.5 - mid_x) * nx)
                        .mul_add(BISECTOR_SLOPE, 0.0)
                        .clamp(-LOGIT_LIMIT, LOGIT_LIMIT)
                })
                .collect()
        }
    }
}

/// Soft mask with exclusive regions pinned to exactly 1 (A side) and 0
/// (B side and outside) and the overlap set from `logits` in scan order.
fn assemble_soft(part: &RegionPartition, logits: &[f64]) -> SoftMaskPair {
    debug_assert_eq!(logits.len(), part.n12);
    let mut soft = ImageF::zeros(part.height(), part.width(), 1);
    let mut k = 0;
    for y in 0..part.height() {
        for x in 0..part.width() {
            let v = match part.region(y, x) {
                Region::OnlyA => 1.0,
                Region::Overlap => {
                    let s = logistic(logits[k]);
                    k += 1;
                    s
                }
                _ => 0.0,
            };
            soft.set(y, x, 0, v);
        }
    }
    SoftMaskPair::new(soft).expect("logistic output stays inside [0, 1]")
}

/// Initial soft mask for a partition under the given scheme.
pub fn init_soft_mask(part: &RegionPartition, scheme: InitScheme) -> SoftMaskPair {
    assemble_soft(part, &init_logits(part, scheme))
}

/// Thresholds a soft mask into a hard partition and reassigns stray islands.
///
/// A pixel goes to A when `softA >= threshold` and it is A-valid; the A-only
/// region is always kept. Components of the raw A mask not touching the
/// A-only region flip to B, then components of the resulting B mask not
/// touching the B-only region flip back to A. When the exclusive regions are
/// themselves connected this leaves both masks 4-connected.
///
/// `threshold` must lie strictly between 0 and 1.
pub fn binarize_mask(
    soft: &SoftMaskPair,
    valid: &ValidMasks,
    part: &RegionPartition,
    threshold: f64,
) -> MaskPair {
    assert!(
        threshold > 0.0 && threshold < 1.0,
        "threshold must lie in (0, 1), got {threshold}"
    );
    let (h, w) = (part.height(), part.width());
    let content = valid.valid_a.or(&valid.valid_b);
    let r11 = part.region_mask(Region::OnlyA);
    let r22 = part.region_mask(Region::OnlyB);

    let raw_a = Mask::from_fn(h, w, |y, x| {
        (valid.valid_a.get(y, x) && soft.a(y, x) >= threshold) || r11.get(y, x)
    });
    let a1 = if part.n11 > 0 {
        raw_a.keep_components_touching(&r11)
    } else if raw_a.count() > 0 {
        raw_a.largest_component()
    } else {
        raw_a
    };
    let b1 = content.and_not(&a1);
    let b2 = if part.n22 > 0 {
        b1.keep_components_touching(&r22)
    } else if b1.count() > 0 {
        b1.largest_component()
    } else {
        b1
    };
    MaskPair {
        mask_a: content.and_not(&b2),
        mask_b: b2,
    }
}

fn converged(history: &[TraceStep]) -> bool {
    let n = history.len();
    if n <= STOP_WINDOW {
        return false;
    }
    let prev = history[n - 1 - STOP_WINDOW].breakdown.total;
    let cur = history[n - 1].breakdown.total;
    if prev == 0.0 {
        return true;
    }
    (prev - cur) / prev < STOP_REL_TOL
}

/// Runs Adam on the overlap logits and returns the hard masks plus the loss
/// history. Inputs are 3-channel images; the comparison space is prepared
/// internally. Stops early once the relative improvement over a 50-step
/// window falls below 1e-5. Fails if the loss leaves the finite range.
pub fn optimize_mask(
    img_a: &ImageF,
    img_b: &ImageF,
    valid: &ValidMasks,
    cfg: &OptimConfig,
    weights: &LossWeights,
    space: LossSpace,
) -> Result<(MaskPair, OptimTrace)> {
    cfg.validate()?;
    weights.validate()?;
    let part = region_partition(valid)?;
    let (space_a, space_b) = prepare_loss_space(img_a, img_b, space)?;
    let eval = LossEvaluator::new(&space_a, &space_b, valid, &part, *weights)?;

    let overlap: Vec<(usize, usize)> = part.overlap_pixels().collect();
    let mut logits = init_logits(&part, cfg.init_scheme);
    let mut m1 = vec![0.0f64; logits.len()];
    let mut m2 = vec![0.0f64; logits.len()];
    let mut trace = OptimTrace::default();
    let started = Instant::now();
    let mut lr = cfg.learning_rate;

    for step in 0..cfg.max_steps {
        let soft = assemble_soft(&part, &logits);
        let (bd, grad) = eval.evaluate_with_gradient(&soft)?;
        if !bd.total.is_finite() {
            return Err(SeamError::NonFinite(format!(
                "selection loss left the finite range at step {step}: \
                 non={} patch={}",
                bd.loss_non, bd.loss_patch
            )));
        }
        trace.steps.push(TraceStep {
            step,
            breakdown: bd,
            millis: started.elapsed().as_secs_f64() * 1e3,
        });
        if converged(&trace.steps) {
            break;
        }

        let t = (step + 1) as f64;
        let bias1 = 1.0 - cfg.beta1.powf(t);
        let bias2 = 1.0 - cfg.beta2.powf(t);
        for (k, &(y, x)) in overlap.iter().enumerate() {
            let s = logistic(logits[k]);
            let g = grad.get(y, x, 0) * s * (1.0 - s);
            m1[k] = cfg.beta1 * m1[k] + (1.0 - cfg.beta1) * g;
            m2[k] = cfg.beta2 * m2[k] + (1.0 - cfg.beta2) * g * g;
            let mh = m1[k] / bias1;
            let vh = m2[k] / bias2;
            logits[k] -= lr * mh / (vh.sqrt() + cfg.eps_adam);
        }
        lr *= cfg.decay;
    }

    let soft = assemble_soft(&part, &logits);
    let masks = binarize_mask(&soft, valid, &part, 0.5);
    masks.validate(valid)?;
    Ok((masks, trace))
}

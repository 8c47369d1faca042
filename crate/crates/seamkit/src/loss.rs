//! Selection consistency loss over a soft mask pair, with analytical
//! gradients.
//!
//! The total objective is `w1 * loss_non + w2 * loss_patch`:
//! `loss_non` pins the single-coverage regions to their source image and
//! `loss_patch` scores the overlap by how well each box-filtered composite
//! patch matches one of the two box-filtered sources. `loss_pixel` is the
//! unfiltered form of the patch term; it is reported for diagnostics but
//! carries no weight because a binary mask zeroes it trivially.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SeamError};
use crate::mask::{Region, RegionPartition, SoftMaskPair, ValidMasks};
use crate::raster::ImageF;
use crate::util::pairwise_sum;

/// Sobel magnitude on `[0,1]` inputs is bounded by 4·sqrt(2); dividing by it
/// maps edge images back into `[0,1]` so losses are comparable across
/// spaces.
pub const EDGE_RESCALE: f64 = 1.0 / (4.0 * std::f64::consts::SQRT_2);

/// Image space in which differences are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossSpace {
    Rgb,
    Gray,
    Edge,
}

impl std::str::FromStr for LossSpace {
    type Err = SeamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(LossSpace::Rgb),
            "gray" => Ok(LossSpace::Gray),
            "edge" => Ok(LossSpace::Edge),
            other => Err(SeamError::InvalidParam(format!(
                "unknown space '{other}' (expected rgb, gray, or edge)"
            ))),
        }
    }
}

impl std::fmt::Display for LossSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossSpace::Rgb => "rgb",
            LossSpace::Gray => "gray",
            LossSpace::Edge => "edge",
        })
    }
}

/// Loss term weights and the patch window size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub m: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w1: 200.0,
            w2: 100.0,
            m: 9,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.w1) || !positive(self.w2) {
            return Err(SeamError::InvalidParam(format!(
                "loss weights must be positive, got w1={} w2={}",
                self.w1, self.w2
            )));
        }
        if self.m < 3 || self.m.is_multiple_of(2) {
            return Err(SeamError::InvalidParam(format!(
                "patch window must be odd and >= 3, got {}",
                self.m
            )));
        }
        Ok(())
    }
}

/// Individual loss terms; `total = w1·loss_non + w2·loss_patch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loss_non: f64,
    pub loss_pixel: f64,
    pub loss_patch: f64,
    pub total: f64,
}

/// Converts a pair of RGB inputs into the configured difference space.
pub fn prepare_loss_space(
    img_a: &ImageF,
    img_b: &ImageF,
    space: LossSpace,
) -> Result<(ImageF, ImageF)> {
    if img_a.channels() != 3 || img_b.channels() != 3 {
        return Err(SeamError::InvalidParam(format!(
            "loss-space preparation expects RGB inputs, got {} and {} channels",
            img_a.channels(),
            img_b.channels()
        )));
    }
    match space {
        LossSpace::Rgb => Ok((img_a.clone(), img_b.clone())),
        LossSpace::Gray => Ok((img_a.to_gray()?, img_b.to_gray()?)),
        LossSpace::Edge => {
            let mut ea = img_a.to_gray()?.sobel_edges()?;
            let mut eb = img_b.to_gray()?.sobel_edges()?;
            for v in ea.data_mut() {
                *v *= EDGE_RESCALE;
            }
            for v in eb.data_mut() {
                *v *= EDGE_RESCALE;
            }
            ea.set_normalized(true);
            eb.set_normalized(true);
            Ok((ea, eb))
        }
    }
}

/// Soft composite `C = A·softA·validA + B·softB·validB`.
pub fn compose_soft(
    img_a: &ImageF,
    img_b: &ImageF,
    soft: &SoftMaskPair,
    valid: &ValidMasks,
) -> Result<ImageF> {
    if !img_a.same_shape(img_b) {
        return Err(SeamError::DimensionMismatch(
            "compose_soft image shapes".into(),
        ));
    }
    let (h, w, ch) = (img_a.height(), img_a.width(), img_a.channels());
    if soft.soft_a().height() != h
        || soft.soft_a().width() != w
        || valid.valid_a.height() != h
        || valid.valid_a.width() != w
    {
        return Err(SeamError::DimensionMismatch(
            "compose_soft mask shapes".into(),
        ));
    }
    let mut out = ImageF::zeros(h, w, ch);
    out.set_normalized(img_a.is_normalized() && img_b.is_normalized());
    for y in 0..h {
        for x in 0..w {
            let wa = if valid.valid_a.get(y, x) {
                soft.a(y, x)
            } else {
                0.0
            };
            let wb = if valid.valid_b.get(y, x) {
                soft.b(y, x)
            } else {
                0.0
            };
            for c in 0..ch {
                out.set(y, x, c, img_a.get(y, x, c) * wa + img_b.get(y, x, c) * wb);
            }
        }
    }
    Ok(out)
}

/// Mean channel-summed deviation of the composite from A over the A-only
/// region plus the same against B over the B-only region. An empty region
/// contributes zero (logged, since it usually means a degenerate pair).
pub fn loss_non(
    img_c: &ImageF,
    img_a: &ImageF,
    img_b: &ImageF,
    part: &RegionPartition,
) -> Result<f64> {
    check_shapes(img_c, img_a, img_b, part)?;
    let mut a_terms = Vec::with_capacity(part.n11);
    let mut b_terms = Vec::with_capacity(part.n22);
    for y in 0..part.height() {
        for x in 0..part.width() {
            match part.region(y, x) {
                Region::OnlyA => a_terms.push(img_c.abs_diff_at(img_a, y, x)),
                Region::OnlyB => b_terms.push(img_c.abs_diff_at(img_b, y, x)),
                _ => {}
            }
        }
    }
    if part.n11 == 0 {
        log::warn!("A-only region is empty; its loss term is 0");
    }
    if part.n22 == 0 {
        log::warn!("B-only region is empty; its loss term is 0");
    }
    let term_a = if part.n11 > 0 {
        pairwise_sum(&a_terms) / part.n11 as f64
    } else {
        0.0
    };
    let term_b = if part.n22 > 0 {
        pairwise_sum(&b_terms) / part.n22 as f64
    } else {
        0.0
    };
    Ok(term_a + term_b)
}

/// Mean over the overlap of the smaller channel-summed deviation from the
/// two sources.
pub fn loss_pixel(
    img_c: &ImageF,
    img_a: &ImageF,
    img_b: &ImageF,
    part: &RegionPartition,
) -> Result<f64> {
    check_shapes(img_c, img_a, img_b, part)?;
    let mut terms = Vec::with_capacity(part.n12);
    for (y, x) in part.overlap_pixels() {
        let da = img_c.abs_diff_at(img_a, y, x);
        let db = img_c.abs_diff_at(img_b, y, x);
        terms.push(da.min(db));
    }
    Ok(pairwise_sum(&terms) / part.n12 as f64)
}

/// The pixel term evaluated on m×m box-filtered copies of all three images.
/// Filtering spreads each mixed-source pixel over its window, so the term
/// penalizes a band around the seam instead of the seam line alone.
pub fn loss_patch(
    img_c: &ImageF,
    img_a: &ImageF,
    img_b: &ImageF,
    part: &RegionPartition,
    m: usize,
) -> Result<f64> {
    check_shapes(img_c, img_a, img_b, part)?;
    let cp = img_c.box_filter(m)?;
    let ap = img_a.box_filter(m)?;
    let bp = img_b.box_filter(m)?;
    loss_pixel(&cp, &ap, &bp, part)
}

/// Precomputed state for repeated loss evaluation against a fixed image
/// pair: the box-filtered sources are reused across optimizer steps.
pub struct LossEvaluator<'a> {
    img_a: &'a ImageF,
    img_b: &'a ImageF,
    valid: &'a ValidMasks,
    part: &'a RegionPartition,
    weights: LossWeights,
    a_patch: ImageF,
    b_patch: ImageF,
}

impl<'a> LossEvaluator<'a> {
    pub fn new(
        img_a: &'a ImageF,
        img_b: &'a ImageF,
        valid: &'a ValidMasks,
        part: &'a RegionPartition,
        weights: LossWeights,
    ) -> Result<Self> {
        weights.validate()?;
        check_shapes(img_a, img_a, img_b, part)?;
        if valid.valid_a.height() != part.height() || valid.valid_a.width() != part.width() {
            return Err(SeamError::DimensionMismatch("valid masks vs partition".into()));
        }
        let a_patch = img_a.box_filter(weights.m)?;
        let b_patch = img_b.box_filter(weights.m)?;
        Ok(Self {
            img_a,
            img_b,
            valid,
            part,
            weights,
            a_patch,
            b_patch,
        })
    }

    pub fn weights(&self) -> LossWeights {
        self.weights
    }

    /// Loss terms for one soft mask.
    pub fn evaluate(&self, soft: &SoftMaskPair) -> Result<LossBreakdown> {
        let img_c = compose_soft(self.img_a, self.img_b, soft, self.valid)?;
        let non = loss_non(&img_c, self.img_a, self.img_b, self.part)?;
        let pixel = loss_pixel(&img_c, self.img_a, self.img_b, self.part)?;
        let cp = img_c.box_filter(self.weights.m)?;
        let patch = loss_pixel(&cp, &self.a_patch, &self.b_patch, self.part)?;
        Ok(self.breakdown(non, pixel, patch))
    }

    /// Loss terms plus the exact gradient of `total` with respect to the
    /// stored A-side soft mask.
    ///
    /// Conventions at non-smooth points: the absolute value contributes 0 at
    /// the origin, and an exact tie between the two patch branches follows
    /// the A branch. Both only affect measure-zero configurations.
    pub fn evaluate_with_gradient(&self, soft: &SoftMaskPair) -> Result<(LossBreakdown, ImageF)> {
        let (h, w) = (self.part.height(), self.part.width());
        let ch = self.img_a.channels();
        let img_c = compose_soft(self.img_a, self.img_b, soft, self.valid)?;

        // d total / d C, accumulated channel-wise. The non-overlap term
        // contributes directly; the patch term arrives through the
        // box-filter adjoint below.
        let mut grad_c = ImageF::zeros(h, w, ch);
        grad_c.set_normalized(false);

        let mut a_terms = Vec::with_capacity(self.part.n11);
        let mut b_terms = Vec::with_capacity(self.part.n22);
        let inv_n11 = if self.part.n11 > 0 {
            self.weights.w1 / self.part.n11 as f64
        } else {
            0.0
        };
        let inv_n22 = if self.part.n22 > 0 {
            self.weights.w1 / self.part.n22 as f64
        } else {
            0.0
        };
        let mut pixel_terms = Vec::with_capacity(self.part.n12);
        for y in 0..h {
            for x in 0..w {
                match self.part.region(y, x) {
                    Region::OnlyA => {
                        a_terms.push(img_c.abs_diff_at(self.img_a, y, x));
                        for c in 0..ch {
                            let d = img_c.get(y, x, c) - self.img_a.get(y, x, c);
                            grad_c.set(y, x, c, inv_n11 * sign(d));
                        }
                    }
                    Region::OnlyB => {
                        b_terms.push(img_c.abs_diff_at(self.img_b, y, x));
                        for c in 0..ch {
                            let d = img_c.get(y, x, c) - self.img_b.get(y, x, c);
                            grad_c.set(y, x, c, inv_n22 * sign(d));
                        }
                    }
                    Region::Overlap => {
                        let da = img_c.abs_diff_at(self.img_a, y, x);
                        let db = img_c.abs_diff_at(self.img_b, y, x);
                        pixel_terms.push(da.min(db));
                    }
                    Region::Outside => {}
                }
            }
        }
        let non = if self.part.n11 > 0 {
            pairwise_sum(&a_terms) / self.part.n11 as f64
        } else {
            0.0
        } + if self.part.n22 > 0 {
            pairwise_sum(&b_terms) / self.part.n22 as f64
        } else {
            0.0
        };
        let pixel = pairwise_sum(&pixel_terms) / self.part.n12 as f64;

        let cp = img_c.box_filter(self.weights.m)?;
        let mut grad_cp = ImageF::zeros(h, w, ch);
        grad_cp.set_normalized(false);
        let mut patch_terms = Vec::with_capacity(self.part.n12);
        let scale = self.weights.w2 / self.part.n12 as f64;
        for (y, x) in self.part.overlap_pixels() {
            let da = cp.abs_diff_at(&self.a_patch, y, x);
            let db = cp.abs_diff_at(&self.b_patch, y, x);
            patch_terms.push(da.min(db));
            let against = if da <= db {
                &self.a_patch
            } else {
                &self.b_patch
            };
            for c in 0..ch {
                let d = cp.get(y, x, c) - against.get(y, x, c);
                grad_cp.set(y, x, c, scale * sign(d));
            }
        }
        let patch = pairwise_sum(&patch_terms) / self.part.n12 as f64;

        let patch_back = grad_cp.box_filter_adjoint(self.weights.m)?;

        // Chain through the composite: dC(p,c)/dsoftA(p) = A·validA − B·validB.
        let mut grad = ImageF::zeros(h, w, 1);
        grad.set_normalized(false);
        for y in 0..h {
            for x in 0..w {
                let va = self.valid.valid_a.get(y, x);
                let vb = self.valid.valid_b.get(y, x);
                if !va && !vb {
                    continue;
                }
                let mut g = 0.0;
                for c in 0..ch {
                    let dc = if va { self.img_a.get(y, x, c) } else { 0.0 }
                        - if vb { self.img_b.get(y, x, c) } else { 0.0 };
                    g += (grad_c.get(y, x, c) + patch_back.get(y, x, c)) * dc;
                }
                grad.set(y, x, 0, g);
            }
        }
        Ok((self.breakdown(non, pixel, patch), grad))
    }

    fn breakdown(&self, non: f64, pixel: f64, patch: f64) -> LossBreakdown {
        LossBreakdown {
            loss_non: non,
            loss_pixel: pixel,
            loss_patch: patch,
            total: self.weights.w1 * non + self.weights.w2 * patch,
        }
    }
}

/// One-shot breakdown for a soft mask; see [`LossEvaluator`] for the
/// reusable form.
pub fn total_loss(
    img_a: &ImageF,
    img_b: &ImageF,
    soft: &SoftMaskPair,
    valid: &ValidMasks,
    part: &RegionPartition,
    weights: LossWeights,
) -> Result<LossBreakdown> {
    LossEvaluator::new(img_a, img_b, valid, part, weights)?.evaluate(soft)
}

/// One-shot gradient of `total` with respect to the A-side soft mask.
pub fn loss_gradient(
    img_a: &ImageF,
    img_b: &ImageF,
    soft: &SoftMaskPair,
    valid: &ValidMasks,
    part: &RegionPartition,
    weights: LossWeights,
) -> Result<ImageF> {
    let (_, grad) =
        LossEvaluator::new(img_a, img_b, valid, part, weights)?.evaluate_with_gradient(soft)?;
    Ok(grad)
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_shapes(
    img_c: &ImageF,
    img_a: &ImageF,
    img_b: &ImageF,
    part: &RegionPartition,
) -> Result<()> {
    if !img_c.same_shape(img_a) || !img_a.same_shape(img_b) {
        return Err(SeamError::DimensionMismatch("loss image shapes".into()));
    }
    if img_a.height() != part.height() || img_a.width() != part.width() {
        return Err(SeamError::DimensionMismatch(
            "loss images vs partition".into(),
        ));
    }
    Ok(())
}

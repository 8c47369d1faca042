//! Seam extraction from hard masks and the seam-quality score.
//!
//! Quality is measured as the mean normalized-cross-correlation deficit over
//! patches centered on seam pixels: 0 means the two sources agree perfectly
//! along the seam, 1 means they anti-correlate everywhere.

use crate::error::{Result, SeamError};
use crate::mask::{CrackPoint, MaskPair, Region, RegionPartition};
use crate::raster::ImageF;
use crate::util::pairwise_sum;

/// What to report when a patch has no variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ZeroVariancePolicy {
    /// Both patches constant: 1 when the means agree, otherwise -1.
    /// Exactly one constant: 0.
    #[default]
    MeanAgreement,
}

/// Patch size and degenerate-patch handling for the quality score.
#[derive(Debug, Clone, Copy)]
pub struct QualityConfig {
    pub n: usize,
    pub zero_variance: ZeroVariancePolicy,
}

impl QualityConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            zero_variance: ZeroVariancePolicy::default(),
        }
    }

    fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.n < 2 {
            return Err(SeamError::InvalidParam(format!(
                "patch size must be at least 2, got {}",
                self.n
            )));
        }
        if self.n > height.min(width) {
            return Err(SeamError::InvalidParam(format!(
                "patch size {} exceeds image extent {}x{}",
                self.n, height, width
            )));
        }
        Ok(())
    }
}

/// Ordered seam pixels; consecutive entries are 8-adjacent and distinct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seam {
    pixels: Vec<(usize, usize)>,
}

impl Seam {
    pub fn new(pixels: Vec<(usize, usize)>) -> Result<Self> {
        if pixels.is_empty() {
            return Err(SeamError::NoSeam("seam has no pixels".into()));
        }
        for (i, w) in pixels.windows(2).enumerate() {
            let (ay, ax) = w[0];
            let (by, bx) = w[1];
            let step = ay.abs_diff(by).max(ax.abs_diff(bx));
            if step != 1 {
                return Err(SeamError::Internal(format!(
                    "seam pixels {i} and {} are not 8-adjacent distinct: \
                     ({ay},{ax}) vs ({by},{bx})",
                    i + 1
                )));
            }
        }
        Ok(Self { pixels })
    }

    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// One crack edge of the common mask boundary and the pixels on both sides.
struct BoundaryEdge {
    u: usize,
    v: usize,
    a_pix: (usize, usize),
    b_pix: (usize, usize),
}

/// Traces the common boundary of the two masks and returns the overlap
/// pixels alongside it, ordered from the end nearest the first demarcation
/// point to the end nearest the second.
///
/// Crack edges separating an A pixel from a B pixel form the boundary; each
/// edge contributes its A-side pixel, or its B-side pixel when only that one
/// lies in the overlap. Consecutive duplicates collapse. The boundary must
/// form a single open curve; anything else reports an internal error.
pub fn extract_seam(masks: &MaskPair, part: &RegionPartition) -> Result<Seam> {
    let (h, w) = (part.height(), part.width());
    if masks.mask_a.height() != h || masks.mask_a.width() != w {
        return Err(SeamError::DimensionMismatch("masks vs partition".into()));
    }
    let vw = w + 1;
    let vid = |y: usize, x: usize| y * vw + x;

    // Edges between opposite labels, keeping only those that touch r12.
    let mut edges: Vec<BoundaryEdge> = Vec::new();
    let mut push = |p: (usize, usize), q: (usize, usize), u: usize, v: usize| {
        let pa = masks.mask_a.get(p.0, p.1);
        let qa = masks.mask_a.get(q.0, q.1);
        let pb = masks.mask_b.get(p.0, p.1);
        let qb = masks.mask_b.get(q.0, q.1);
        let crossing = (pa && qb) || (pb && qa);
        let touches_overlap = part.region(p.0, p.1) == Region::Overlap
            || part.region(q.0, q.1) == Region::Overlap;
        if crossing && touches_overlap {
            let (a_pix, b_pix) = if pa { (p, q) } else { (q, p) };
            edges.push(BoundaryEdge { u, v, a_pix, b_pix });
        }
    };
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                // Vertical crack between horizontal neighbors.
                push((y, x), (y, x + 1), vid(y, x + 1), vid(y + 1, x + 1));
            }
            if y + 1 < h {
                // Horizontal crack between vertical neighbors.
                push((y, x), (y + 1, x), vid(y + 1, x), vid(y + 1, x + 1));
            }
        }
    }
    if edges.is_empty() {
        return Err(SeamError::NoSeam("masks share no boundary in the overlap".into()));
    }

    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); (h + 1) * vw];
    for (i, e) in edges.iter().enumerate() {
        adj[e.u].push(i);
        adj[e.v].push(i);
    }
    let odd: Vec<usize> = (0..adj.len()).filter(|&v| adj[v].len() % 2 == 1).collect();
    if odd.len() != 2 {
        return Err(SeamError::Internal(format!(
            "common boundary is not a single open curve: {} odd-degree crack vertices",
            odd.len()
        )));
    }
    let as_point = |v: usize| CrackPoint { y: v / vw, x: v % vw };
    let start = {
        let (a, b) = (odd[0], odd[1]);
        let (da, db) = (
            as_point(a).distance(&part.q1),
            as_point(b).distance(&part.q1),
        );
        if da < db || (da == db && a <= b) {
            a
        } else {
            b
        }
    };

    // Euler path over the boundary edges; tolerates pinch vertices.
    let mut ptr = vec![0usize; adj.len()];
    let mut used = vec![false; edges.len()];
    let mut stack: Vec<(usize, Option<usize>)> = vec![(start, None)];
    let mut order: Vec<usize> = Vec::new();
    while let Some(&(v, _)) = stack.last() {
        let mut next = None;
        while ptr[v] < adj[v].len() {
            let e = adj[v][ptr[v]];
            ptr[v] += 1;
            if !used[e] {
                next = Some(e);
                break;
            }
        }
        match next {
            Some(e) => {
                used[e] = true;
                let to = if edges[e].u == v { edges[e].v } else { edges[e].u };
                stack.push((to, Some(e)));
            }
            None => {
                if let Some(e) = stack.pop().unwrap().1 {
                    order.push(e);
                }
            }
        }
    }
    if order.len() != edges.len() {
        return Err(SeamError::Internal(format!(
            "common boundary is disconnected: walked {} of {} crack edges",
            order.len(),
            edges.len()
        )));
    }
    order.reverse();

    let mut pixels: Vec<(usize, usize)> = Vec::with_capacity(order.len());
    for &e in &order {
        let edge = &edges[e];
        let p = if part.region(edge.a_pix.0, edge.a_pix.1) == Region::Overlap {
            edge.a_pix
        } else if part.region(edge.b_pix.0, edge.b_pix.1) == Region::Overlap {
            edge.b_pix
        } else {
            continue;
        };
        if pixels.last() != Some(&p) {
            pixels.push(p);
        }
    }
    Seam::new(pixels)
}

/// Normalized cross-correlation of two equally shaped patches, in [-1, 1].
/// Uses population standard deviations; degenerate patches follow `policy`.
pub fn zncc(a: &[f64], b: &[f64], policy: ZeroVariancePolicy) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(SeamError::DimensionMismatch(format!(
            "patch sizes {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let mean_a = pairwise_sum(a) / n;
    let mean_b = pairwise_sum(b) / n;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    let mut sab = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    let ZeroVariancePolicy::MeanAgreement = policy;
    if saa == 0.0 && sbb == 0.0 {
        return Ok(if mean_a == mean_b { 1.0 } else { -1.0 });
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    // Exact ±1 when the centered patches are exactly (anti-)equal; the
    // general expression can land an ulp off.
    if saa == sbb && sab == saa {
        return Ok(1.0);
    }
    if saa == sbb && sab == -saa {
        return Ok(-1.0);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Clipped patch values around (y, x) from a single-channel image.
fn gather_patch(img: &ImageF, y: usize, x: usize, n: usize) -> Vec<f64> {
    let center = n.div_ceil(2) - 1;
    let y0 = y.saturating_sub(center);
    let x0 = x.saturating_sub(center);
    let y1 = (y + n - center).min(img.height());
    let x1 = (x + n - center).min(img.width());
    let mut out = Vec::with_capacity((y1 - y0) * (x1 - x0));
    for py in y0..y1 {
        for px in x0..x1 {
            out.push(img.get(py, px, 0));
        }
    }
    out
}

/// Mean correlation deficit along the seam. 0 when every patch pair fully
/// agrees, 1 when every pair anti-correlates. Inputs are grayscale; border
/// patches use the in-bounds window intersection.
pub fn seam_quality(
    img_a: &ImageF,
    img_b: &ImageF,
    seam: &Seam,
    qc: &QualityConfig,
) -> Result<f64> {
    if !img_a.same_shape(img_b) || img_a.channels() != 1 {
        return Err(SeamError::DimensionMismatch(
            "seam quality expects two grayscale images of equal shape".into(),
        ));
    }
    qc.validate(img_a.height(), img_a.width())?;
    if seam.is_empty() {
        return Err(SeamError::NoSeam("cannot score an empty seam".into()));
    }
    let mut deficits = Vec::with_capacity(seam.len());
    for &(y, x) in seam.pixels() {
        if y >= img_a.height() || x >= img_a.width() {
            return Err(SeamError::DimensionMismatch(format!(
                "seam pixel ({y},{x}) outside {}x{}",
                img_a.height(),
                img_a.width()
            )));
        }
        let pa = gather_patch(img_a, y, x, qc.n);
        let pb = gather_patch(img_b, y, x, qc.n);
        let z = zncc(&pa, &pb, qc.zero_variance)?;
        deficits.push(1.0 - (z + 1.0) / 2.0);
    }
    Ok(pairwise_sum(&deficits) / seam.len() as f64)
}

/// Smallest patch size covered by [`quality_sweep`].
pub const SWEEP_MIN_N: usize = 2;
/// Largest patch size covered by [`quality_sweep`].
pub const SWEEP_MAX_N: usize = 15;

/// Quality at every patch size from [`SWEEP_MIN_N`] to [`SWEEP_MAX_N`],
/// ascending.
pub fn quality_sweep(
    img_a: &ImageF,
    img_b: &ImageF,
    seam: &Seam,
) -> Result<Vec<(usize, f64)>> {
    (SWEEP_MIN_N..=SWEEP_MAX_N)
        .map(|n| seam_quality(img_a, img_b, seam, &QualityConfig::new(n)).map(|q| (n, q)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{region_partition, Mask, MaskPair, ValidMasks};

    fn strips(h: usize, w: usize, a_end: usize, b_start: usize) -> ValidMasks {
        ValidMasks {
            valid_a: Mask::from_fn(h, w, |_, x| x < a_end),
            valid_b: Mask::from_fn(h, w, |_, x| x >= b_start),
        }
    }

    fn split_masks(valid: &ValidMasks, cut: usize) -> MaskPair {
        let (h, w) = (valid.valid_a.height(), valid.valid_a.width());
        MaskPair {
            mask_a: Mask::from_fn(h, w, |y, x| valid.valid_a.get(y, x) && x < cut),
            mask_b: Mask::from_fn(h, w, |y, x| {
                (valid.valid_a.get(y, x) || valid.valid_b.get(y, x)) && x >= cut
            }),
        }
    }

    #[test]
    fn vertical_split_emits_left_column_top_to_bottom() {
        let valid = strips(6, 9, 6, 3);
        let part = region_partition(&valid).unwrap();
        let masks = split_masks(&valid, 5);
        masks.validate(&valid).unwrap();
        let seam = extract_seam(&masks, &part).unwrap();
        let expect: Vec<(usize, usize)> = (0..6).map(|y| (y, 4)).collect();
        assert_eq!(seam.pixels(), expect.as_slice());
    }

    #[test]
    fn transposed_masks_give_the_transposed_seam() {
        let valid = strips(6, 9, 6, 3);
        let part = region_partition(&valid).unwrap();
        let masks = split_masks(&valid, 5);
        let seam = extract_seam(&masks, &part).unwrap();

        let valid_t = ValidMasks {
            valid_a: Mask::from_fn(9, 6, |y, _| y < 6),
            valid_b: Mask::from_fn(9, 6, |y, _| y >= 3),
        };
        let part_t = region_partition(&valid_t).unwrap();
        let masks_t = MaskPair {
            mask_a: Mask::from_fn(9, 6, |y, x| masks.mask_a.get(x, y)),
            mask_b: Mask::from_fn(9, 6, |y, x| masks.mask_b.get(x, y)),
        };
        masks_t.validate(&valid_t).unwrap();
        let seam_t = extract_seam(&masks_t, &part_t).unwrap();

        let mut flipped: Vec<(usize, usize)> =
            seam.pixels().iter().map(|&(y, x)| (x, y)).collect();
        if flipped.first() != seam_t.pixels().first() {
            flipped.reverse();
        }
        assert_eq!(seam_t.pixels(), flipped.as_slice());
    }

    #[test]
    fn straight_split_has_one_pixel_per_row() {
        let valid = strips(8, 12, 8, 4);
        let part = region_partition(&valid).unwrap();
        let seam = extract_seam(&split_masks(&valid, 6), &part).unwrap();
        assert_eq!(seam.len(), 8);
    }

    #[test]
    fn seam_rejects_gaps_and_empties() {
        assert!(Seam::new(vec![]).is_err());
        assert!(Seam::new(vec![(0, 0), (0, 2)]).is_err());
        assert!(Seam::new(vec![(0, 0), (0, 0)]).is_err());
        assert!(Seam::new(vec![(0, 0), (1, 1), (2, 1)]).is_ok());
    }

    #[test]
    fn zncc_hand_cases() {
        let a = [0.0, 1.0, 0.0, 1.0];
        assert_eq!(zncc(&a, &a, ZeroVariancePolicy::MeanAgreement).unwrap(), 1.0);
        // Mean-preserving negation.
        let neg: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
        assert_eq!(zncc(&a, &neg, ZeroVariancePolicy::MeanAgreement).unwrap(), -1.0);
        // Orthogonal centered patterns.
        let b = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(zncc(&a, &b, ZeroVariancePolicy::MeanAgreement).unwrap(), 0.0);
    }

    #[test]
    fn zncc_zero_variance_policy() {
        let p = ZeroVariancePolicy::MeanAgreement;
        assert_eq!(zncc(&[0.3; 4], &[0.3; 4], p).unwrap(), 1.0);
        assert_eq!(zncc(&[0.3; 4], &[0.7; 4], p).unwrap(), -1.0);
        assert_eq!(zncc(&[0.3; 4], &[0.0, 1.0, 0.0, 1.0], p).unwrap(), 0.0);
        assert_eq!(zncc(&[0.0, 1.0, 0.0, 1.0], &[0.5; 4], p).unwrap(), 0.0);
        assert!(zncc(&[0.0; 4], &[0.0; 5], p).is_err());
        assert!(zncc(&[], &[], p).is_err());
    }

    #[test]
    fn zncc_shift_and_scale_invariance() {
        let a: Vec<f64> = (0..25).map(|i| ((i * 7 % 11) as f64) / 11.0).collect();
        let b: Vec<f64> = (0..25).map(|i| ((i * 5 % 13) as f64) / 13.0).collect();
        let p = ZeroVariancePolicy::MeanAgreement;
        let base = zncc(&a, &b, p).unwrap();
        let shifted: Vec<f64> = b.iter().map(|v| v + 0.17).collect();
        let scaled: Vec<f64> = b.iter().map(|v| v * 2.5).collect();
        assert!((zncc(&a, &shifted, p).unwrap() - base).abs() < 1e-9);
        assert!((zncc(&a, &scaled, p).unwrap() - base).abs() < 1e-9);
    }

    fn textured(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> ImageF {
        ImageF::from_fn(h, w, 1, true, |y, x, _| f(y, x))
    }

    #[test]
    fn identical_images_score_exactly_zero() {
        let img = textured(20, 20, |y, x| ((y * 31 + x * 17) % 23) as f64 / 23.0);
        let seam = Seam::new((2..18).map(|y| (y, 9)).collect()).unwrap();
        for n in 2..=15 {
            let q = seam_quality(&img, &img, &seam, &QualityConfig::new(n)).unwrap();
            assert_eq!(q, 0.0, "patch size {n}");
        }
    }

    #[test]
    fn anti_correlated_images_score_one() {
        let img = textured(16, 16, |y, x| ((y * 13 + x * 29) % 19) as f64 / 19.0);
        let inv = textured(16, 16, |y, x| 1.0 - ((y * 13 + x * 29) % 19) as f64 / 19.0);
        let seam = Seam::new((3..13).map(|y| (y, 8)).collect()).unwrap();
        let q = seam_quality(&img, &inv, &seam, &QualityConfig::new(5)).unwrap();
        assert_eq!(q, 1.0);
    }

    #[test]
    fn single_orthogonal_pixel_scores_half() {
        // 2x2 windows centered so the patch at (1,1) covers rows/cols 0..2.
        let a = textured(3, 3, |_, x| if x == 1 { 1.0 } else { 0.0 });
        let b = textured(3, 3, |y, _| if y == 1 { 1.0 } else { 0.0 });
        let seam = Seam::new(vec![(0, 0)]).unwrap();
        // Patch at (0,0) with n=2: a = [0,1,0,1], b = [0,0,1,1].
        let q = seam_quality(&a, &b, &seam, &QualityConfig::new(2)).unwrap();
        assert_eq!(q, 0.5);
    }

    #[test]
    fn sweep_covers_two_through_fifteen() {
        let img = textured(24, 24, |y, x| ((y * 3 + x * 7) % 11) as f64 / 11.0);
        let seam = Seam::new((4..20).map(|y| (y, 12)).collect()).unwrap();
        let sweep = quality_sweep(&img, &img, &seam).unwrap();
        assert_eq!(sweep.len(), 14);
        for (i, &(n, q)) in sweep.iter().enumerate() {
            assert_eq!(n, i + 2);
            assert_eq!(q, 0.0);
        }
    }

    #[test]
    fn quality_stays_in_unit_interval() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let a = ImageF::from_fn(18, 18, 1, true, |_, _, _| rng.gen::<f64>());
            let b = ImageF::from_fn(18, 18, 1, true, |_, _, _| rng.gen::<f64>());
            let seam = Seam::new((1..17).map(|y| (y, 8)).collect()).unwrap();
            for n in [2, 7, 15] {
                let q = seam_quality(&a, &b, &seam, &QualityConfig::new(n)).unwrap();
                assert!((0.0..=1.0).contains(&q), "q={q} at n={n}");
            }
        }
    }

    #[test]
    fn rejects_bad_configs_and_shapes() {
        let img = textured(10, 10, |y, x| (y + x) as f64 / 20.0);
        let seam = Seam::new(vec![(5, 5)]).unwrap();
        assert!(seam_quality(&img, &img, &seam, &QualityConfig::new(1)).is_err());
        assert!(seam_quality(&img, &img, &seam, &QualityConfig::new(11)).is_err());
        let rgb = ImageF::zeros(10, 10, 3);
        assert!(seam_quality(&rgb, &rgb, &seam, &QualityConfig::new(3)).is_err());
        let off = Seam::new(vec![(20, 20)]).unwrap();
        assert!(seam_quality(&img, &img, &off, &QualityConfig::new(3)).is_err());
    }

    #[test]
    fn optimizer_masks_produce_a_traceable_seam() {
        let spec = crate::synth::SyntheticPairSpec {
            seed: 3,
            size: 32,
            noise: 0.02,
            ..crate::synth::SyntheticPairSpec::default()
        };
        let pair = crate::synth::gen_synthetic_pair(&spec).unwrap();
        let part = region_partition(&pair.valid).unwrap();
        let cfg = crate::optim::OptimConfig {
            max_steps: 30,
            ..crate::optim::OptimConfig::default()
        };
        let (masks, _) = crate::optim::optimize_mask(
            &pair.img_a,
            &pair.img_b,
            &pair.valid,
            &cfg,
            &crate::loss::LossWeights::default(),
            crate::loss::LossSpace::Gray,
        )
        .unwrap();
        let seam = extract_seam(&masks, &part).unwrap();
        assert!(!seam.is_empty());
        for &(y, x) in seam.pixels() {
            assert_eq!(part.region(y, x), Region::Overlap);
        }
        let ga = pair.img_a.to_gray().unwrap();
        let gb = pair.img_b.to_gray().unwrap();
        let q = seam_quality(&ga, &gb, &seam, &QualityConfig::new(15)).unwrap();
        assert!((0.0..=1.0).contains(&q));
    }
}

//! Dynamic-programming seam finder: the fast, low-freedom baseline. The
//! path is monotone along one axis with at most one sideways step per scan
//! line, which is exactly the limitation the other methods are measured
//! against.

use crate::error::{Result, SeamError};
use crate::loss::{prepare_loss_space, LossSpace};
use crate::mask::{Mask, MaskPair, Region, RegionPartition};
use crate::raster::ImageF;

/// Large finite stand-in for overlap holes inside a scan line's span; keeps
/// such cells traversable (the monotone path may have no alternative) while
/// never preferred over real overlap pixels.
const HOLE_COST: f64 = 1e12;

/// Per-pixel seam cost: finite and nonnegative on the overlap region,
/// infinite elsewhere.
#[derive(Debug, Clone)]
pub struct CostMap {
    height: usize,
    width: usize,
    costs: Vec<f64>,
}

impl CostMap {
    /// Builds a cost map by evaluating `f` on overlap pixels.
    pub fn from_fn(part: &RegionPartition, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let (h, w) = (part.height(), part.width());
        let mut costs = vec![f64::INFINITY; h * w];
        for (y, x) in part.overlap_pixels() {
            let v = f(y, x);
            if !v.is_finite() || v < 0.0 {
                return Err(SeamError::InvalidParam(format!(
                    "cost at ({y},{x}) must be finite and nonnegative, got {v}"
                )));
            }
            costs[y * w + x] = v;
        }
        Ok(Self {
            height: h,
            width: w,
            costs,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.costs[y * self.width + x]
    }
}

/// Channel-summed absolute color difference over the overlap, measured in
/// the given space.
pub fn cost_map(
    img_a: &ImageF,
    img_b: &ImageF,
    part: &RegionPartition,
    space: LossSpace,
) -> Result<CostMap> {
    let (a, b) = prepare_loss_space(img_a, img_b, space)?;
    if a.height() != part.height() || a.width() != part.width() {
        return Err(SeamError::DimensionMismatch(
            "cost map images vs partition".into(),
        ));
    }
    CostMap::from_fn(part, |y, x| a.abs_diff_at(&b, y, x))
}

/// A seam found by the monotone path search.
#[derive(Debug, Clone)]
pub struct DpSeam {
    pub masks: MaskPair,
    /// Path cells in image coordinates, ordered along the scan axis.
    pub path: Vec<(usize, usize)>,
    /// Sum of cost-map values along the path.
    pub cost: f64,
}

/// Finds the cheapest monotone path across the overlap and labels the two
/// sides.
///
/// The scan axis is the one with the larger displacement between the two
/// demarcation points, so the path runs roughly parallel to the seam the
/// geometry suggests. Each scan line contributes exactly one path cell,
/// restricted to the overlap's span on that line, and consecutive cells
/// differ by at most one cross-axis step. Endpoints are free within the
/// first and last line: the demarcation points fix the axis, not the cells.
///
/// Ties prefer the straight continuation, then the negative step, so the
/// result is deterministic. Pixels whose cross-axis coordinate is strictly
/// below the path take label A.
pub fn dp_seam(cm: &CostMap, part: &RegionPartition) -> Result<DpSeam> {
    if cm.height() != part.height() || cm.width() != part.width() {
        return Err(SeamError::DimensionMismatch(
            "cost map vs partition".into(),
        ));
    }
    let dy = part.q1.y.abs_diff(part.q2.y);
    let dx = part.q1.x.abs_diff(part.q2.x);
    let row_scan = dy >= dx;

    let (scan_len, cross_len) = if row_scan {
        (part.height(), part.width())
    } else {
        (part.width(), part.height())
    };

    // Feasible cross-axis interval per scan line, from the overlap span.
    let mut intervals: Vec<Option<(usize, usize)>> = vec![None; scan_len];
    let (mut glo, mut ghi) = (usize::MAX, 0usize);
    for (y, x) in part.overlap_pixels() {
        let (r, c) = if row_scan { (y, x) } else { (x, y) };
        let e = intervals[r].get_or_insert((c, c));
        e.0 = e.0.min(c);
        e.1 = e.1.max(c);
        glo = glo.min(c);
        ghi = ghi.max(c);
    }
    let row_lo = intervals.iter().position(Option::is_some).expect("n12 >= 1");
    let row_hi = intervals.iter().rposition(Option::is_some).unwrap();
    // Interior lines with no overlap pixels still need a crossing; give them
    // the global span at hole cost.
    for e in intervals[row_lo..=row_hi].iter_mut() {
        e.get_or_insert((glo, ghi));
    }

    let cost_at = |r: usize, c: usize| -> f64 {
        let (y, x) = if row_scan { (r, c) } else { (c, r) };
        let v = cm.get(y, x);
        if v.is_finite() {
            v
        } else {
            HOLE_COST
        }
    };

    // Forward pass. `prev[r][c]` records the cross position in line r−1 the
    // optimum came from; candidate order Δ0, Δ−1, Δ+1 with strict improvement
    // encodes the tie-break.
    let mut dp = vec![f64::INFINITY; scan_len * cross_len];
    let mut prev = vec![u32::MAX; scan_len * cross_len];
    let (slo, shi) = intervals[row_lo].unwrap();
    for c in slo..=shi {
        dp[row_lo * cross_len + c] = cost_at(row_lo, c);
    }
    for r in (row_lo + 1)..=row_hi {
        let (lo, hi) = intervals[r].unwrap();
        let (plo, phi) = intervals[r - 1].unwrap();
        let mut reached = false;
        for c in lo..=hi {
            let mut best = f64::INFINITY;
            let mut from = u32::MAX;
            for cand in [c as isize, c as isize - 1, c as isize + 1] {
                if cand < plo as isize || cand > phi as isize {
                    continue;
                }
                let v = dp[(r - 1) * cross_len + cand as usize];
                if v < best {
                    best = v;
                    from = cand as u32;
                }
            }
            if best.is_finite() {
                dp[r * cross_len + c] = best + cost_at(r, c);
                prev[r * cross_len + c] = from;
                reached = true;
            }
        }
        if !reached {
            // Disjoint spans between consecutive lines: clamp the best cell
            // of the previous line into this line's span and continue.
            let (mut bv, mut bc) = (f64::INFINITY, plo);
            for c in plo..=phi {
                let v = dp[(r - 1) * cross_len + c];
                if v < bv {
                    bv = v;
                    bc = c;
                }
            }
            let entry = bc.clamp(lo, hi);
            dp[r * cross_len + entry] = bv + cost_at(r, entry);
            prev[r * cross_len + entry] = bc as u32;
        }
    }

    // Cheapest endpoint in the last line, lowest cross position on ties.
    let (elo, ehi) = intervals[row_hi].unwrap();
    let (mut total, mut end_c) = (f64::INFINITY, elo);
    for c in elo..=ehi {
        let v = dp[row_hi * cross_len + c];
        if v < total {
            total = v;
            end_c = c;
        }
    }
    if !total.is_finite() {
        return Err(SeamError::NoSeam("monotone path search failed".into()));
    }

    let mut pos = vec![0usize; scan_len];
    let mut c = end_c;
    for r in (row_lo..=row_hi).rev() {
        pos[r] = c;
        if r > row_lo {
            c = prev[r * cross_len + c] as usize;
        }
    }
    for r in 0..row_lo {
        pos[r] = pos[row_lo];
    }
    for r in (row_hi + 1)..scan_len {
        pos[r] = pos[row_hi];
    }

    let path: Vec<(usize, usize)> = (row_lo..=row_hi)
        .map(|r| if row_scan { (r, pos[r]) } else { (pos[r], r) })
        .collect();

    let (h, w) = (part.height(), part.width());
    let mut mask_a = Mask::new(h, w);
    let mut mask_b = Mask::new(h, w);
    for y in 0..h {
        for x in 0..w {
            match part.region(y, x) {
                Region::OnlyA => mask_a.put(y, x, true),
                Region::OnlyB => mask_b.put(y, x, true),
                Region::Overlap => {
                    let (r, c) = if row_scan { (y, x) } else { (x, y) };
                    if c < pos[r] {
                        mask_a.put(y, x, true);
                    } else {
                        mask_b.put(y, x, true);
                    }
                }
                Region::Outside => {}
            }
        }
    }

    Ok(DpSeam {
        masks: MaskPair { mask_a, mask_b },
        path,
        cost: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{region_partition, CrackPoint, ValidMasks};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vertical_strips(h: usize, w: usize, a_end: usize, b_start: usize) -> RegionPartition {
        let valid = ValidMasks {
            valid_a: Mask::from_fn(h, w, |_, x| x < a_end),
            valid_b: Mask::from_fn(h, w, |_, x| x >= b_start),
        };
        region_partition(&valid).unwrap()
    }

    fn horizontal_strips(h: usize, w: usize, a_end: usize, b_start: usize) -> RegionPartition {
        let valid = ValidMasks {
            valid_a: Mask::from_fn(h, w, |y, _| y < a_end),
            valid_b: Mask::from_fn(h, w, |y, _| y >= b_start),
        };
        region_partition(&valid).unwrap()
    }

    /// Exhaustive minimum over monotone paths on a rectangular overlap:
    /// one cell per row between the overlap's row extremes, |Δcol| ≤ 1,
    /// free endpoints. Row-scan only; used on vertically split strips.
    fn brute_force_min(cm: &CostMap, part: &RegionPartition) -> f64 {
        let (rlo, rhi) = part.overlap_rows();
        let (clo, chi) = part.overlap_cols();
        #[allow(clippy::too_many_arguments)]
        fn recurse(
            cm: &CostMap,
            r: usize,
            c: usize,
            rhi: usize,
            clo: usize,
            chi: usize,
            acc: f64,
            best: &mut f64,
        ) {
            let acc = acc + cm.get(r, c);
            if r == rhi {
                *best = best.min(acc);
                return;
            }
            for nc in c.saturating_sub(1)..=(c + 1).min(chi) {
                if nc >= clo {
                    recurse(cm, r + 1, nc, rhi, clo, chi, acc, best);
                }
            }
        }
        let mut best = f64::INFINITY;
        for c in clo..=chi {
            recurse(cm, rlo, c, rhi, clo, chi, 0.0, &mut best);
        }
        best
    }

    #[test]
    fn cost_map_values() {
        let part = vertical_strips(4, 9, 6, 3);
        let img = ImageF::from_fn(4, 9, 3, true, |y, x, c| ((y + x + c) % 5) as f64 / 5.0);
        let cm = cost_map(&img, &img, &part, LossSpace::Rgb).unwrap();
        for (y, x) in part.overlap_pixels() {
            assert_eq!(cm.get(y, x), 0.0);
        }
        assert!(cm.get(0, 0).is_infinite());

        let a = ImageF::from_fn(4, 9, 3, true, |_, _, _| 0.3);
        let b = ImageF::from_fn(4, 9, 3, true, |_, _, c| 0.3 + (c as f64 + 1.0) * 0.1);
        let cm = cost_map(&a, &b, &part, LossSpace::Rgb).unwrap();
        assert!((cm.get(2, 4) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn zero_cost_map_gives_zero_path() {
        let part = vertical_strips(6, 9, 6, 3);
        let cm = CostMap::from_fn(&part, |_, _| 0.0).unwrap();
        let seam = dp_seam(&cm, &part).unwrap();
        assert_eq!(seam.cost, 0.0);
        assert_eq!(seam.path.len(), 6);
        for pair in seam.path.windows(2) {
            assert_eq!(pair[1].0, pair[0].0 + 1);
            assert!(pair[1].1.abs_diff(pair[0].1) <= 1);
        }
    }

    #[test]
    fn path_follows_zero_column() {
        // Overlap columns 3..6 on a 4-row strip; only column 4 is free.
        let part = vertical_strips(4, 9, 6, 3);
        let cm = CostMap::from_fn(&part, |_, x| if x == 4 { 0.0 } else { 50.0 }).unwrap();
        let seam = dp_seam(&cm, &part).unwrap();
        assert_eq!(seam.cost, 0.0);
        assert!(seam.path.iter().all(|&(_, x)| x == 4));
        assert_eq!(seam.cost, brute_force_min(&cm, &part));
    }

    #[test]
    fn matches_brute_force_on_random_maps() {
        let part = vertical_strips(6, 9, 7, 2);
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cm = CostMap::from_fn(&part, |_, _| rng.gen_range(0.0..1.0)).unwrap();
            let seam = dp_seam(&cm, &part).unwrap();
            let oracle = brute_force_min(&cm, &part);
            assert!(
                (seam.cost - oracle).abs() < 1e-9,
                "seed {seed}: dp {} vs oracle {oracle}",
                seam.cost
            );
        }
    }

    #[test]
    fn masks_partition_content() {
        let part = vertical_strips(8, 12, 8, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cm = CostMap::from_fn(&part, |_, _| rng.gen_range(0.0..1.0)).unwrap();
        let seam = dp_seam(&cm, &part).unwrap();
        for y in 0..8 {
            for x in 0..12 {
                let a = seam.masks.mask_a.get(y, x);
                let b = seam.masks.mask_b.get(y, x);
                match part.region(y, x) {
                    Region::OnlyA => assert!(a && !b),
                    Region::OnlyB => assert!(!a && b),
                    Region::Overlap => assert!(a ^ b),
                    Region::Outside => assert!(!a && !b),
                }
            }
        }
    }

    #[test]
    fn horizontal_overlap_scans_columns() {
        // A on top, B below: the displacement between demarcation points is
        // horizontal, so the path must advance along columns.
        let part = horizontal_strips(9, 6, 6, 3);
        assert!(part.q1.y.abs_diff(part.q2.y) < part.q1.x.abs_diff(part.q2.x));
        let cm = CostMap::from_fn(&part, |y, _| if y == 4 { 0.0 } else { 9.0 }).unwrap();
        let seam = dp_seam(&cm, &part).unwrap();
        assert_eq!(seam.cost, 0.0);
        assert_eq!(seam.path.len(), 6);
        assert!(seam.path.iter().all(|&(y, _)| y == 4));
        // Rows above the path take A.
        assert!(seam.masks.mask_a.get(3, 2));
        assert!(seam.masks.mask_b.get(4, 2));
    }

    #[test]
    fn deterministic_under_repetition() {
        let part = vertical_strips(7, 10, 7, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cm = CostMap::from_fn(&part, |_, _| (rng.gen_range(0..4) as f64) * 0.25).unwrap();
        let s1 = dp_seam(&cm, &part).unwrap();
        let s2 = dp_seam(&cm, &part).unwrap();
        assert_eq!(s1.path, s2.path);
        assert_eq!(s1.cost, s2.cost);
        assert_eq!(s1.masks.mask_a, s2.masks.mask_a);
    }

    #[test]
    fn scan_axis_follows_demarcation_displacement() {
        let part = vertical_strips(6, 9, 6, 3);
        // Sanity: vertical strips give a vertically dominant displacement.
        let q1 = CrackPoint { y: 0, x: 3 };
        let q2 = CrackPoint { y: 6, x: 6 };
        assert_eq!(part.q1, q1);
        assert_eq!(part.q2, q2);
        assert!(q1.y.abs_diff(q2.y) >= q1.x.abs_diff(q2.x));
    }
}

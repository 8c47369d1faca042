//! Binary masks, soft masks, and the three-region partition of a warped
//! image pair (A-only, B-only, overlap) together with the demarcation
//! points where the two valid-content boundaries cross.

use crate::error::{Result, SeamError};

/// Binary H×W mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(height, width);
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(y, x);
            }
        }
        m
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn put(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    /// Number of set pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn same_shape(&self, other: &Mask) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn and(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && !b)
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        assert!(self.same_shape(other), "mask shape mismatch");
        Mask {
            height: self.height,
            width: self.width,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Morphological closing with a 3×3 structuring element. Dilation treats
    /// out-of-frame as unset and erosion treats it as set, so the result is
    /// extensive (never removes pixels) and frame borders stay intact.
    pub fn close3x3(&self) -> Mask {
        let dilated = self.morph3x3(false, |acc, v| acc || v);
        dilated.morph3x3(true, |acc, v| acc && v)
    }

    fn morph3x3(&self, oob: bool, fold: impl Fn(bool, bool) -> bool) -> Mask {
        let (h, w) = (self.height as isize, self.width as isize);
        Mask::from_fn(self.height, self.width, |y, x| {
            let mut acc = None;
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let yy = y as isize + dy;
                    let xx = x as isize + dx;
                    let v = if yy < 0 || yy >= h || xx < 0 || xx >= w {
                        oob
                    } else {
                        self.bits[yy as usize * self.width + xx as usize]
                    };
                    acc = Some(match acc {
                        None => v,
                        Some(a) => fold(a, v),
                    });
                }
            }
            acc.unwrap()
        })
    }

    /// 4-connected components of the set pixels. Returns per-pixel labels
    /// (`u32::MAX` on unset pixels) and the size of each component.
    pub fn components4(&self) -> (Vec<u32>, Vec<usize>) {
        let mut labels = vec![u32::MAX; self.bits.len()];
        let mut sizes = Vec::new();
        let mut stack = Vec::new();
        for start in 0..self.bits.len() {
            if !self.bits[start] || labels[start] != u32::MAX {
                continue;
            }
            let label = sizes.len() as u32;
            let mut size = 0usize;
            stack.push(start);
            labels[start] = label;
            while let Some(i) = stack.pop() {
                size += 1;
                let (y, x) = (i / self.width, i % self.width);
                let mut visit = |j: usize| {
                    if self.bits[j] && labels[j] == u32::MAX {
                        labels[j] = label;
                        stack.push(j);
                    }
                };
                if y > 0 {
                    visit(i - self.width);
                }
                if y + 1 < self.height {
                    visit(i + self.width);
                }
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < self.width {
                    visit(i + 1);
                }
            }
            sizes.push(size);
        }
        (labels, sizes)
    }

    /// Union of the 4-connected components that contain at least one pixel
    /// of `seeds`.
    pub fn keep_components_touching(&self, seeds: &Mask) -> Mask {
        assert!(self.same_shape(seeds), "mask shape mismatch");
        let (labels, sizes) = self.components4();
        let mut keep = vec![false; sizes.len()];
        for (i, &s) in seeds.bits.iter().enumerate() {
            if s && labels[i] != u32::MAX {
                keep[labels[i] as usize] = true;
            }
        }
        Mask {
            height: self.height,
            width: self.width,
            bits: labels
                .iter()
                .map(|&l| l != u32::MAX && keep[l as usize])
                .collect(),
        }
    }

    /// Largest 4-connected component; ties broken by lowest label, which is
    /// scan order and therefore deterministic.
    pub fn largest_component(&self) -> Mask {
        let (labels, sizes) = self.components4();
        let best = sizes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i as u32);
        Mask {
            height: self.height,
            width: self.width,
            bits: labels.iter().map(|&l| Some(l) == best).collect(),
        }
    }
}

/// Hard selection masks for the composite. Exactly one of the two masks is
/// set wherever either image has valid content, neither outside.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPair {
    pub mask_a: Mask,
    pub mask_b: Mask,
}

impl MaskPair {
    /// Checks disjointness and coverage of `validA ∪ validB`.
    pub fn validate(&self, valid: &ValidMasks) -> Result<()> {
        if !self.mask_a.same_shape(&self.mask_b) || !self.mask_a.same_shape(&valid.valid_a) {
            return Err(SeamError::DimensionMismatch("mask pair shapes".into()));
        }
        for y in 0..self.mask_a.height() {
            for x in 0..self.mask_a.width() {
                let a = self.mask_a.get(y, x);
                let b = self.mask_b.get(y, x);
                let content = valid.valid_a.get(y, x) || valid.valid_b.get(y, x);
                let sum = a as u8 + b as u8;
                if sum != content as u8 {
                    return Err(SeamError::Internal(format!(
                        "mask pair violates coverage at ({y},{x}): a={a} b={b} content={content}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Relaxed selection weights. Only the A side is stored; the B side is
/// `1 − softA` by construction, so the sum-to-one invariant cannot drift.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMaskPair {
    soft_a: crate::raster::ImageF,
}

impl SoftMaskPair {
    pub fn new(soft_a: crate::raster::ImageF) -> Result<Self> {
        if soft_a.channels() != 1 {
            return Err(SeamError::InvalidParam(
                "soft mask must be single-channel".into(),
            ));
        }
        if soft_a.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(SeamError::InvalidParam(
                "soft mask values must lie in [0,1]".into(),
            ));
        }
        Ok(Self { soft_a })
    }

    pub fn soft_a(&self) -> &crate::raster::ImageF {
        &self.soft_a
    }

    #[inline]
    pub fn a(&self, y: usize, x: usize) -> f64 {
        self.soft_a.get(y, x, 0)
    }

    #[inline]
    pub fn b(&self, y: usize, x: usize) -> f64 {
        1.0 - self.soft_a.get(y, x, 0)
    }
}

/// Valid-content masks of the two warped inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidMasks {
    pub valid_a: Mask,
    pub valid_b: Mask,
}

impl ValidMasks {
    pub fn derive(img_a: &crate::raster::ImageF, img_b: &crate::raster::ImageF) -> Result<Self> {
        if img_a.height() != img_b.height() || img_a.width() != img_b.width() {
            return Err(SeamError::DimensionMismatch(format!(
                "valid mask inputs {}x{} vs {}x{}",
                img_a.height(),
                img_a.width(),
                img_b.height(),
                img_b.width()
            )));
        }
        Ok(Self {
            valid_a: img_a.derive_valid_mask(),
            valid_b: img_b.derive_valid_mask(),
        })
    }
}

/// Region label of a pixel relative to the two valid masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// Neither input covers the pixel.
    Outside,
    /// Only A covers it; the composite is pinned to A here.
    OnlyA,
    /// Only B covers it.
    OnlyB,
    /// Both cover it; the seam must live in this region.
    Overlap,
}

/// A vertex of the crack lattice between pixels. Coordinates run 0..=H and
/// 0..=W; vertex (y, x) is the top-left corner of pixel (y, x).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrackPoint {
    pub y: usize,
    pub x: usize,
}

impl CrackPoint {
    pub fn distance(&self, other: &CrackPoint) -> f64 {
        let dy = self.y as f64 - other.y as f64;
        let dx = self.x as f64 - other.x as f64;
        (dy * dy + dx * dx).sqrt()
    }
}

/// Partition of the frame into A-only, B-only, and overlap regions, plus the
/// two demarcation points where the valid-mask boundaries cross.
#[derive(Debug, Clone)]
pub struct RegionPartition {
    height: usize,
    width: usize,
    labels: Vec<Region>,
    pub n11: usize,
    pub n22: usize,
    pub n12: usize,
    pub q1: CrackPoint,
    pub q2: CrackPoint,
}

impl RegionPartition {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn region(&self, y: usize, x: usize) -> Region {
        self.labels[y * self.width + x]
    }

    pub fn region_mask(&self, which: Region) -> Mask {
        Mask::from_fn(self.height, self.width, |y, x| self.region(y, x) == which)
    }

    /// Pixels of the overlap region in row-major order.
    pub fn overlap_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &r)| r == Region::Overlap)
            .map(move |(i, _)| (i / w, i % w))
    }

    /// Row extent (min, max) of the overlap region.
    pub fn overlap_rows(&self) -> (usize, usize) {
        let mut lo = usize::MAX;
        let mut hi = 0;
        for (y, _) in self.overlap_pixels() {
            lo = lo.min(y);
            hi = hi.max(y);
        }
        (lo, hi)
    }

    /// Column extent (min, max) of the overlap region.
    pub fn overlap_cols(&self) -> (usize, usize) {
        let mut lo = usize::MAX;
        let mut hi = 0;
        for (_, x) in self.overlap_pixels() {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        (lo, hi)
    }
}

/// Crack edges of a mask boundary: `horiz[y][x]` separates pixel rows y−1
/// and y at column x, `vert[y][x]` separates pixel columns x−1 and x at
/// row y. Out-of-frame counts as unset, so the frame border of a set region
/// is part of its contour.
struct CrackEdges {
    horiz: Vec<bool>, // (H+1) × W
    vert: Vec<bool>,  // H × (W+1)
}

fn contour(mask: &Mask) -> CrackEdges {
    let (h, w) = (mask.height(), mask.width());
    let mut horiz = vec![false; (h + 1) * w];
    let mut vert = vec![false; h * (w + 1)];
    let at = |y: isize, x: isize| -> bool {
        if y < 0 || y >= h as isize || x < 0 || x >= w as isize {
            false
        } else {
            mask.get(y as usize, x as usize)
        }
    };
    for y in 0..=h {
        for x in 0..w {
            horiz[y * w + x] = at(y as isize - 1, x as isize) != at(y as isize, x as isize);
        }
    }
    for y in 0..h {
        for x in 0..=w {
            vert[y * (w + 1) + x] = at(y as isize, x as isize - 1) != at(y as isize, x as isize);
        }
    }
    CrackEdges { horiz, vert }
}

/// Splits the frame by the two valid masks and locates the demarcation
/// points.
///
/// The demarcation points are crack vertices where the two valid-mask
/// contours actually cross: the vertex touches a crack edge belonging to
/// A's contour only, a crack edge belonging to B's contour only, and at
/// least one overlap pixel. Where the contours merely coincide (identical
/// masks) or never meet (containment) no such vertex exists and the pair is
/// rejected. Among crossing vertices the two with maximum Euclidean
/// distance are chosen; ties go to the lexicographically first pair.
pub fn region_partition(valid: &ValidMasks) -> Result<RegionPartition> {
    if !valid.valid_a.same_shape(&valid.valid_b) {
        return Err(SeamError::DimensionMismatch("valid mask shapes".into()));
    }
    let (h, w) = (valid.valid_a.height(), valid.valid_a.width());
    let mut labels = vec![Region::Outside; h * w];
    let (mut n11, mut n22, mut n12) = (0usize, 0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            let a = valid.valid_a.get(y, x);
            let b = valid.valid_b.get(y, x);
            labels[y * w + x] = match (a, b) {
                (true, false) => {
                    n11 += 1;
                    Region::OnlyA
                }
                (false, true) => {
                    n22 += 1;
                    Region::OnlyB
                }
                (true, true) => {
                    n12 += 1;
                    Region::Overlap
                }
                (false, false) => Region::Outside,
            };
        }
    }
    if n12 == 0 {
        return Err(SeamError::EmptyOverlap);
    }

    let ca = contour(&valid.valid_a);
    let cb = contour(&valid.valid_b);
    let overlap_at = |y: isize, x: isize| -> bool {
        y >= 0
            && (y as usize) < h
            && x >= 0
            && (x as usize) < w
            && labels[y as usize * w + x as usize] == Region::Overlap
    };

    let mut crossings: Vec<CrackPoint> = Vec::new();
    for vy in 0..=h {
        for vx in 0..=w {
            let mut excl_a = false;
            let mut excl_b = false;
            let mut check = |on_a: bool, on_b: bool| {
                excl_a |= on_a && !on_b;
                excl_b |= on_b && !on_a;
            };
            // Horizontal edges left/right of the vertex, vertical above/below.
            if vx > 0 {
                check(ca.horiz[vy * w + (vx - 1)], cb.horiz[vy * w + (vx - 1)]);
            }
            if vx < w {
                check(ca.horiz[vy * w + vx], cb.horiz[vy * w + vx]);
            }
            if vy > 0 {
                check(
                    ca.vert[(vy - 1) * (w + 1) + vx],
                    cb.vert[(vy - 1) * (w + 1) + vx],
                );
            }
            if vy < h {
                check(ca.vert[vy * (w + 1) + vx], cb.vert[vy * (w + 1) + vx]);
            }
            if !(excl_a && excl_b) {
                continue;
            }
            let (iy, ix) = (vy as isize, vx as isize);
            let touches_overlap = overlap_at(iy - 1, ix - 1)
                || overlap_at(iy - 1, ix)
                || overlap_at(iy, ix - 1)
                || overlap_at(iy, ix);
            if touches_overlap {
                crossings.push(CrackPoint { y: vy, x: vx });
            }
        }
    }
    if crossings.len() < 2 {
        return Err(SeamError::DegenerateBoundary(format!(
            "{} contour crossing(s); need 2",
            crossings.len()
        )));
    }

    // crossings is already in (y, x) lexicographic order from the scan.
    let (mut q1, mut q2) = (crossings[0], crossings[1]);
    let mut best = q1.distance(&q2);
    for i in 0..crossings.len() {
        for j in (i + 1)..crossings.len() {
            let d = crossings[i].distance(&crossings[j]);
            if d > best {
                best = d;
                q1 = crossings[i];
                q2 = crossings[j];
            }
        }
    }

    Ok(RegionPartition {
        height: h,
        width: w,
        labels,
        n11,
        n22,
        n12,
        q1,
        q2,
    })
}

//! Real-valued images and the pixel-level operators shared by every seam
//! method: Sobel edge extraction, box filtering (with its exact adjoint),
//! mask-based composition, and valid-content mask derivation.

use std::path::Path;

use crate::error::{Result, SeamError};
use crate::mask::{Mask, MaskPair};

/// Threshold above which a warped pixel counts as valid content.
/// Warped backgrounds are exact zeros by construction, so anything at or
/// above one 8-bit step is content.
pub const VALID_THRESHOLD: f64 = 1.0 / 255.0;

/// An H×W×C image with `f64` samples, row-major and channel-interleaved.
///
/// `normalized` marks whether samples are confined to `[0, 1]`. Loaded and
/// composed images are normalized; intermediate buffers such as Sobel
/// magnitudes or difference images are not.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
    normalized: bool,
}

impl ImageF {
    /// All-zero image.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
            normalized: true,
        }
    }

    /// Wraps raw samples. `data.len()` must equal `height * width * channels`.
    pub fn from_vec(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
        normalized: bool,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(SeamError::InvalidParam(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(SeamError::DimensionMismatch(format!(
                "data length {} != {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            normalized,
        })
    }

    /// Builds an image by evaluating `f(y, x, c)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        normalized: bool,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = Self::zeros(height, width, channels);
        img.normalized = normalized;
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    img.data[(y * width + x) * channels + c] = f(y, x, c);
                }
            }
        }
        img
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn set_normalized(&mut self, normalized: bool) {
        self.normalized = normalized;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Channel-summed absolute difference against `other` at one pixel.
    #[inline]
    pub fn abs_diff_at(&self, other: &ImageF, y: usize, x: usize) -> f64 {
        let base = (y * self.width + x) * self.channels;
        let mut d = 0.0;
        for c in 0..self.channels {
            d += (self.data[base + c] - other.data[base + c]).abs();
        }
        d
    }

    pub fn same_shape(&self, other: &ImageF) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.channels == other.channels
    }

    fn expect_same_shape(&self, other: &ImageF, what: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(SeamError::DimensionMismatch(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )));
        }
        Ok(())
    }

    /// Loads an 8-bit grayscale or RGB PNG/PPM/PGM and scales samples to
    /// `[0, 1]` by dividing by 255.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let dynamic = image::open(path).map_err(|e| match e {
            image::ImageError::IoError(source) => SeamError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => SeamError::ImageFormat {
                path: path.to_path_buf(),
                reason: other.to_string(),
            },
        })?;
        let (height, width, channels, raw) = match dynamic {
            image::DynamicImage::ImageLuma8(img) => {
                let (w, h) = (img.width() as usize, img.height() as usize);
                (h, w, 1usize, img.into_raw())
            }
            image::DynamicImage::ImageRgb8(img) => {
                let (w, h) = (img.width() as usize, img.height() as usize);
                (h, w, 3usize, img.into_raw())
            }
            other => {
                return Err(SeamError::ImageFormat {
                    path: path.to_path_buf(),
                    reason: format!("expected 8-bit gray or RGB, got {:?}", other.color()),
                })
            }
        };
        let data = raw.iter().map(|&b| b as f64 / 255.0).collect();
        Ok(Self {
            height,
            width,
            channels,
            data,
            normalized: true,
        })
    }

    /// Saves as 8-bit PNG or binary PPM/PGM depending on the file extension.
    /// Samples are clamped to `[0, 1]` and quantized with round-to-nearest.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let quantized: Vec<u8> = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let (w, h) = (self.width as u32, self.height as u32);
        let result = match self.channels {
            1 => image::GrayImage::from_raw(w, h, quantized)
                .expect("buffer length checked by construction")
                .save(path),
            3 => image::RgbImage::from_raw(w, h, quantized)
                .expect("buffer length checked by construction")
                .save(path),
            _ => unreachable!("channels constrained to 1 or 3"),
        };
        result.map_err(|e| match e {
            image::ImageError::IoError(source) => SeamError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => SeamError::ImageFormat {
                path: path.to_path_buf(),
                reason: other.to_string(),
            },
        })
    }

    /// Per-pixel luminance `0.299 R + 0.587 G + 0.114 B`.
    pub fn to_gray(&self) -> Result<ImageF> {
        if self.channels == 1 {
            return Ok(self.clone());
        }
        if self.channels != 3 {
            return Err(SeamError::InvalidParam(format!(
                "to_gray expects 3 channels, got {}",
                self.channels
            )));
        }
        let mut out = ImageF::zeros(self.height, self.width, 1);
        out.normalized = self.normalized;
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            out.data[i] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        }
        Ok(out)
    }

    /// Sobel gradient magnitude with 3×3 kernels and replicate padding.
    /// The output is flagged non-normalized (magnitudes can reach ~4√2).
    pub fn sobel_edges(&self) -> Result<ImageF> {
        if self.channels != 1 {
            return Err(SeamError::InvalidParam(format!(
                "sobel_edges expects 1 channel, got {}",
                self.channels
            )));
        }
        if self.height < 3 || self.width < 3 {
            return Err(SeamError::InvalidParam(format!(
                "sobel_edges needs at least 3x3, got {}x{}",
                self.height, self.width
            )));
        }
        let (h, w) = (self.height, self.width);
        let at = |y: isize, x: isize| -> f64 {
            let yy = y.clamp(0, h as isize - 1) as usize;
            let xx = x.clamp(0, w as isize - 1) as usize;
            self.data[yy * w + xx]
        };
        let mut out = ImageF::zeros(h, w, 1);
        out.normalized = false;
        for y in 0..h as isize {
            for x in 0..w as isize {
                let gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                    - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
                let gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                    - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
                out.data[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
            }
        }
        Ok(out)
    }

    /// Mean filter over an m×m window with replicate padding, computed with a
    /// summed-area table so the cost is independent of `m`.
    pub fn box_filter(&self, m: usize) -> Result<ImageF> {
        check_box_size(m, self.height, self.width)?;
        let r = (m - 1) / 2;
        let inv = 1.0 / (m as f64 * m as f64);
        let (h, w, ch) = (self.height, self.width, self.channels);
        let (eh, ew) = (h + 2 * r, w + 2 * r);
        let mut out = self.clone();
        out.normalized = false;

        // One channel at a time keeps the table small and the loops simple.
        let mut sat = vec![0.0f64; (eh + 1) * (ew + 1)];
        for c in 0..ch {
            for ey in 0..eh {
                let row_src = clamp_ext(ey, r, h);
                let mut run = 0.0;
                for ex in 0..ew {
                    let col_src = clamp_ext(ex, r, w);
                    run += self.data[(row_src * w + col_src) * ch + c];
                    sat[(ey + 1) * (ew + 1) + (ex + 1)] = sat[ey * (ew + 1) + (ex + 1)] + run;
                }
            }
            for y in 0..h {
                for x in 0..w {
                    let sum = sat[(y + m) * (ew + 1) + (x + m)] - sat[y * (ew + 1) + (x + m)]
                        - sat[(y + m) * (ew + 1) + x]
                        + sat[y * (ew + 1) + x];
                    out.data[(y * w + x) * ch + c] = sum * inv;
                }
            }
            if c + 1 < ch {
                sat.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Ok(out)
    }

    /// Exact adjoint of [`box_filter`](Self::box_filter): given a gradient
    /// with respect to the filter output, returns the gradient with respect
    /// to the input, accounting for replicate padding at the borders.
    pub fn box_filter_adjoint(&self, m: usize) -> Result<ImageF> {
        check_box_size(m, self.height, self.width)?;
        let r = (m - 1) / 2;
        let inv = 1.0 / (m as f64 * m as f64);
        let (h, w, ch) = (self.height, self.width, self.channels);
        let (eh, ew) = (h + 2 * r, w + 2 * r);
        let mut out = ImageF::zeros(h, w, ch);
        out.normalized = false;

        let mut diff = vec![0.0f64; (eh + 1) * (ew + 1)];
        for c in 0..ch {
            // Scatter each output gradient over its m×m source window in the
            // extended frame, using a 2-D difference array.
            for y in 0..h {
                for x in 0..w {
                    let g = self.data[(y * w + x) * ch + c] * inv;
                    if g == 0.0 {
                        continue;
                    }
                    diff[y * (ew + 1) + x] += g;
                    diff[y * (ew + 1) + (x + m)] -= g;
                    diff[(y + m) * (ew + 1) + x] -= g;
                    diff[(y + m) * (ew + 1) + (x + m)] += g;
                }
            }
            // Prefix-sum the difference array into the extended gradient and
            // fold replicated border cells back onto their source pixels.
            let mut prev_row = vec![0.0f64; ew];
            for ey in 0..eh {
                let row_src = clamp_ext(ey, r, h);
                let mut run = 0.0;
                for ex in 0..ew {
                    run += diff[ey * (ew + 1) + ex];
                    let cell = prev_row[ex] + run;
                    prev_row[ex] = cell;
                    let col_src = clamp_ext(ex, r, w);
                    out.data[(row_src * w + col_src) * ch + c] += cell;
                }
            }
            if c + 1 < ch {
                diff.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Ok(out)
    }

    /// Bilinear resample to `new_height`×`new_width` (used to bring pairs to
    /// the working resolution; masks travel the other way by nearest).
    pub fn resize_bilinear(&self, new_height: usize, new_width: usize) -> Result<ImageF> {
        if new_height == 0 || new_width == 0 {
            return Err(SeamError::InvalidParam(
                "resize target must be nonzero".into(),
            ));
        }
        if new_height == self.height && new_width == self.width {
            return Ok(self.clone());
        }
        let mut out = ImageF::zeros(new_height, new_width, self.channels);
        out.normalized = self.normalized;
        let sy = self.height as f64 / new_height as f64;
        let sx = self.width as f64 / new_width as f64;
        for y in 0..new_height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, self.height as f64 - 1.0);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for x in 0..new_width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, self.width as f64 - 1.0);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                for c in 0..self.channels {
                    let v00 = self.get(y0, x0, c);
                    let v01 = self.get(y0, x1, c);
                    let v10 = self.get(y1, x0, c);
                    let v11 = self.get(y1, x1, c);
                    let top = v00 + (v01 - v00) * wx;
                    let bot = v10 + (v11 - v10) * wx;
                    out.set(y, x, c, top + (bot - top) * wy);
                }
            }
        }
        Ok(out)
    }

    /// Nearest-neighbor resample. Keeps values exactly, so it suits soft
    /// masks and label-like rasters where interpolation would invent data.
    pub fn resize_nearest(&self, new_height: usize, new_width: usize) -> Result<ImageF> {
        if new_height == 0 || new_width == 0 {
            return Err(SeamError::InvalidParam(
                "resize target must be nonzero".into(),
            ));
        }
        if new_height == self.height && new_width == self.width {
            return Ok(self.clone());
        }
        let mut out = ImageF::zeros(new_height, new_width, self.channels);
        out.normalized = self.normalized;
        let sy = self.height as f64 / new_height as f64;
        let sx = self.width as f64 / new_width as f64;
        for y in 0..new_height {
            let src_y = (((y as f64 + 0.5) * sy) as usize).min(self.height - 1);
            for x in 0..new_width {
                let src_x = (((x as f64 + 0.5) * sx) as usize).min(self.width - 1);
                for c in 0..self.channels {
                    out.set(y, x, c, self.get(src_y, src_x, c));
                }
            }
        }
        Ok(out)
    }

    /// Composite `I^C(p) = I^A(p)·maskA(p) + I^B(p)·maskB(p)` per channel.
    pub fn compose(img_a: &ImageF, img_b: &ImageF, masks: &MaskPair) -> Result<ImageF> {
        img_a.expect_same_shape(img_b, "compose inputs")?;
        if masks.mask_a.height() != img_a.height || masks.mask_a.width() != img_a.width {
            return Err(SeamError::DimensionMismatch(format!(
                "compose masks {}x{} vs image {}x{}",
                masks.mask_a.height(),
                masks.mask_a.width(),
                img_a.height,
                img_a.width
            )));
        }
        let mut out = ImageF::zeros(img_a.height, img_a.width, img_a.channels);
        out.normalized = img_a.normalized && img_b.normalized;
        let ch = img_a.channels;
        for y in 0..img_a.height {
            for x in 0..img_a.width {
                let a = masks.mask_a.get(y, x);
                let b = masks.mask_b.get(y, x);
                if !a && !b {
                    continue;
                }
                let base = (y * img_a.width + x) * ch;
                for c in 0..ch {
                    let mut v = 0.0;
                    if a {
                        v += img_a.data[base + c];
                    }
                    if b {
                        v += img_b.data[base + c];
                    }
                    out.data[base + c] = v;
                }
            }
        }
        Ok(out)
    }

    /// Marks pixels carrying content: any channel above [`VALID_THRESHOLD`],
    /// then a 3×3 morphological closing to fill pinholes left by warping.
    pub fn derive_valid_mask(&self) -> Mask {
        let mut mask = Mask::new(self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                let base = (y * self.width + x) * self.channels;
                let lit = (0..self.channels).any(|c| self.data[base + c] > VALID_THRESHOLD);
                mask.put(y, x, lit);
            }
        }
        mask.close3x3()
    }
}

#[inline]
fn clamp_ext(e: usize, r: usize, n: usize) -> usize {
    // Extended coordinate -> source coordinate under replicate padding.
    (e as isize - r as isize).clamp(0, n as isize - 1) as usize
}

fn check_box_size(m: usize, h: usize, w: usize) -> Result<()> {
    if m < 3 || m.is_multiple_of(2) {
        return Err(SeamError::InvalidParam(format!(
            "box filter size must be odd and >= 3, got {m}"
        )));
    }
    if m > h.min(w) {
        return Err(SeamError::InvalidParam(format!(
            "box filter size {m} exceeds image extent {h}x{w}"
        )));
    }
    Ok(())
}

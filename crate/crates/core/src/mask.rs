//! Head masks: loading, synthetic generation, feathering, coverage.
//!
//! Mask files are 8-bit single-channel lossless rasters, 0 = background,
//! 255 = head. In memory, weights live in `[0,1]` and may be soft.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::buffer::{clamp01, quantize8, resample_area};
use crate::error::{Error, Result};

/// H×W soft weight map in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskBuffer {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

/// Where a mask comes from. The face parser itself is external to this
/// pipeline; its merged single-channel output enters as a file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskSource {
    /// A single-channel raster on disk.
    File { path: PathBuf },
    /// Anti-aliased filled ellipse, for hermetic fixtures and tests.
    SyntheticEllipse {
        center: (f64, f64),
        axes: (f64, f64),
        rotation: f64,
    },
    /// Output of an external segmentation model, pre-merged to one channel.
    ExternalParserOutput { path: PathBuf },
}

impl MaskBuffer {
    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        assert!(width >= 1 && height >= 1, "mask dimensions must be >= 1");
        Self {
            width,
            height,
            data: vec![clamp01(value); width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f32) -> Self {
        assert!(width >= 1 && height >= 1, "mask dimensions must be >= 1");
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(clamp01(f(x, y)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f32) {
        self.data[y as usize * self.width as usize + x as usize] = clamp01(v);
    }

    /// True if every weight is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Threshold into a hard 0/1 mask.
    pub fn binarize(&self, threshold: f32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Tight bounding box of strictly positive weights, as (x, y, w, h).
    pub fn bounding_box(&self) -> Result<(u32, u32, u32, u32)> {
        let mut min_x = u32::MAX;
        let mut min_y = u32::MAX;
        let mut max_x = 0u32;
        let mut max_y = 0u32;
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) > 0.0 {
                    any = true;
                    min_x = min_x.min(x);
                    min_y = min_y.min(y);
                    max_x = max_x.max(x);
                    max_y = max_y.max(y);
                }
            }
        }
        if !any {
            return Err(Error::EmptyRegion);
        }
        Ok((min_x, min_y, max_x - min_x + 1, max_y - min_y + 1))
    }

    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if x + w > self.width || y + h > self.height || w == 0 || h == 0 {
            return Err(Error::dims(
                (w, h),
                (self.width, self.height),
                "mask crop rectangle out of bounds",
            ));
        }
        let mut data = Vec::with_capacity(w as usize * h as usize);
        for yy in y..y + h {
            let start = yy as usize * self.width as usize + x as usize;
            data.extend_from_slice(&self.data[start..start + w as usize]);
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }

    /// Area-average resample; weights stay in `[0,1]`.
    pub fn resize(&self, new_width: u32, new_height: u32) -> Self {
        let data = resample_area(
            &self.data,
            self.width,
            self.height,
            1,
            new_width,
            new_height,
        );
        Self {
            width: new_width,
            height: new_height,
            data: data.into_iter().map(clamp01).collect(),
        }
    }

    /// Quantize to 8 bits and write as grayscale.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| quantize8(v)).collect();
        let img = image::GrayImage::from_raw(self.width, self.height, bytes)
            .expect("buffer length matches dimensions");
        img.save(path).map_err(|e| Error::DecodeError {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Load a mask file and check it against the paired image dimensions.
///
/// Only single-channel rasters are accepted; 8-bit values scale to
/// `[0,1]` (16-bit grayscale scales by 65535).
pub fn load_mask(path: &Path, expected_dims: (u32, u32)) -> Result<MaskBuffer> {
    let img = image::open(path).map_err(|e| Error::DecodeError {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (width, height) = (img.width(), img.height());
    let data: Vec<f32> = match img {
        image::DynamicImage::ImageLuma8(g) => {
            g.into_raw().into_iter().map(|v| v as f32 / 255.0).collect()
        }
        image::DynamicImage::ImageLuma16(g) => g
            .into_raw()
            .into_iter()
            .map(|v| v as f32 / 65535.0)
            .collect(),
        other => {
            return Err(Error::DecodeError {
                path: path.to_path_buf(),
                message: format!(
                    "mask must be single-channel grayscale, found {:?}",
                    other.color()
                ),
            })
        }
    };
    if (width, height) != expected_dims {
        return Err(Error::dims(
            expected_dims,
            (width, height),
            format!("mask {}", path.display()),
        ));
    }
    Ok(MaskBuffer {
        width,
        height,
        data,
    })
}

/// Materialize a mask from any [`MaskSource`].
pub fn resolve_mask(source: &MaskSource, expected_dims: (u32, u32)) -> Result<MaskBuffer> {
    match source {
        MaskSource::File { path } | MaskSource::ExternalParserOutput { path } => {
            load_mask(path, expected_dims)
        }
        MaskSource::SyntheticEllipse {
            center,
            axes,
            rotation,
        } => synthetic_head_mask(expected_dims.0, expected_dims.1, *center, *axes, *rotation),
    }
}

/// Filled ellipse of ones with an anti-aliased one-pixel boundary.
///
/// `center` and `axes` are in pixel units; `rotation` in radians. The
/// center must lie inside the canvas and both axes must be positive.
pub fn synthetic_head_mask(
    width: u32,
    height: u32,
    center: (f64, f64),
    axes: (f64, f64),
    rotation: f64,
) -> Result<MaskBuffer> {
    if !(axes.0 > 0.0 && axes.1 > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "ellipse axes must be positive, got ({}, {})",
            axes.0, axes.1
        )));
    }
    if center.0 < 0.0 || center.0 >= width as f64 || center.1 < 0.0 || center.1 >= height as f64 {
        return Err(Error::InvalidGeometry(format!(
            "ellipse center ({}, {}) outside {}x{} canvas",
            center.0, center.1, width, height
        )));
    }
    let (sin_r, cos_r) = rotation.sin_cos();
    let mask = MaskBuffer::from_fn(width, height, |x, y| {
        // Pixel centers at half-integer coordinates.
        let dx = (x as f64 + 0.5) - center.0;
        let dy = (y as f64 + 0.5) - center.1;
        let u = (dx * cos_r + dy * sin_r) / axes.0;
        let v = (-dx * sin_r + dy * cos_r) / axes.1;
        let rho = (u * u + v * v).sqrt();
        if rho == 0.0 {
            return 1.0;
        }
        // Approximate pixel-space signed distance to the boundary via the
        // gradient of rho, giving a ~1px anti-aliased transition.
        let gx = (u * cos_r / axes.0) - (v * sin_r / axes.1);
        let gy = (u * sin_r / axes.0) + (v * cos_r / axes.1);
        let grad = (gx * gx + gy * gy).sqrt().max(1e-12);
        let dist = (1.0 - rho) / grad;
        (dist + 0.5).clamp(0.0, 1.0) as f32
    });
    Ok(mask)
}

/// Normalized box blur with the given radius; radius 0 is the identity.
///
/// Two separable passes with windows clipped at the borders and divided
/// by the in-bounds tap count, so constant masks are preserved exactly.
pub fn feather(mask: &MaskBuffer, radius: u32) -> MaskBuffer {
    if radius == 0 {
        return mask.clone();
    }
    let w = mask.width as usize;
    let h = mask.height as usize;
    let r = radius as usize;

    // Horizontal pass.
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        let row = &mask.data[y * w..(y + 1) * w];
        let mut prefix = Vec::with_capacity(w + 1);
        prefix.push(0.0f64);
        for &v in row {
            prefix.push(prefix.last().unwrap() + v as f64);
        }
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r + 1).min(w);
            tmp[y * w + x] = ((prefix[hi] - prefix[lo]) / (hi - lo) as f64) as f32;
        }
    }

    // Vertical pass.
    let mut out = vec![0.0f32; w * h];
    let mut prefix = vec![0.0f64; h + 1];
    for x in 0..w {
        for y in 0..h {
            prefix[y + 1] = prefix[y] + tmp[y * w + x] as f64;
        }
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r + 1).min(h);
            out[y * w + x] = clamp01(((prefix[hi] - prefix[lo]) / (hi - lo) as f64) as f32);
        }
    }

    MaskBuffer {
        width: mask.width,
        height: mask.height,
        data: out,
    }
}

/// Mean mask weight: `sum(values) / (width * height)`.
pub fn coverage_fraction(mask: &MaskBuffer) -> f64 {
    let sum: f64 = mask.data.iter().map(|&v| v as f64).sum();
    sum / (mask.width as f64 * mask.height as f64)
}

//! In-memory RGB raster, the pixel currency of the pipeline.
//!
//! Pixels are stored as `f32` in `[0,1]` in nonlinear (stored) sRGB and
//! quantized to 8 bits only at file I/O, so chained operations do not
//! accumulate quantization error.

use std::path::Path;

use crate::error::{Error, Result};

/// H×W×3 color raster with interleaved RGB channels in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl ImageBuffer {
    /// Solid-color image. Components are clamped to `[0,1]`.
    pub fn filled(width: u32, height: u32, rgb: [f32; 3]) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        let px = [clamp01(rgb[0]), clamp01(rgb[1]), clamp01(rgb[2])];
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&px);
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Build from a per-pixel function returning RGB triples.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [f32; 3]) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                data.push(clamp01(px[0]));
                data.push(clamp01(px[1]));
                data.push(clamp01(px[2]));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Wrap raw interleaved data; length must be `width * height * 3`.
    /// Values are clamped into `[0,1]`.
    pub fn from_raw(width: u32, height: u32, mut data: Vec<f32>) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        assert_eq!(
            data.len(),
            width as usize * height as usize * 3,
            "raw data length must be width*height*3"
        );
        for v in &mut data {
            *v = clamp01(*v);
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
    pub fn pixel(&self, x: u32, y: u32) -> [f32; 3] {
        let i = self.index(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Write a pixel, clamping each channel into `[0,1]`.
    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [f32; 3]) {
        let i = self.index(x, y);
        self.data[i] = clamp01(rgb[0]);
        self.data[i + 1] = clamp01(rgb[1]);
        self.data[i + 2] = clamp01(rgb[2]);
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y as usize * self.width as usize + x as usize) * 3
    }

    /// Rec. 709 luma of the stored (nonlinear) pixel values.
    #[inline]
    pub fn luma(&self, x: u32, y: u32) -> f32 {
        let [r, g, b] = self.pixel(x, y);
        0.2126 * r + 0.7152 * g + 0.0722 * b
    }

    /// Decode an image file into `[0,1]` floats. Any color layout is
    /// converted to 8-bit RGB first.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::DecodeError {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let rgb = img.to_rgb8();
        let (width, height) = rgb.dimensions();
        let data = rgb.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Quantize to 8-bit RGB and write. Format from the file extension;
    /// PNG is the lossless interchange format used by the pipeline.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| quantize8(v)).collect();
        let img = image::RgbImage::from_raw(self.width, self.height, bytes)
            .expect("buffer length matches dimensions");
        img.save(path).map_err(|e| Error::DecodeError {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// The 8-bit bytes this image quantizes to, without touching disk.
    pub fn to_bytes_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize8(v)).collect()
    }

    /// Axis-aligned crop. The rectangle must lie inside the image.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if x + w > self.width || y + h > self.height || w == 0 || h == 0 {
            return Err(Error::dims(
                (w, h),
                (self.width, self.height),
                "crop rectangle out of bounds",
            ));
        }
        let mut data = Vec::with_capacity(w as usize * h as usize * 3);
        for yy in y..y + h {
            let start = (yy as usize * self.width as usize + x as usize) * 3;
            data.extend_from_slice(&self.data[start..start + w as usize * 3]);
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }

    /// Resample to new dimensions with box-overlap area averaging.
    pub fn resize(&self, new_width: u32, new_height: u32) -> Self {
        let data = resample_area(
            &self.data,
            self.width,
            self.height,
            3,
            new_width,
            new_height,
        );
        Self {
            width: new_width,
            height: new_height,
            data,
        }
    }
}

#[inline]
pub(crate) fn clamp01(v: f32) -> f32 {
    v.clamp(0.0, 1.0)
}

#[inline]
pub(crate) fn quantize8(v: f32) -> u8 {
    (clamp01(v) * 255.0).round() as u8
}

/// Box-overlap area resampling over interleaved planes.
///
/// Each destination pixel averages the source box it covers, with partial
/// source pixels weighted by overlap area. Constant inputs map to the same
/// constant, and downscales are true area averages.
pub(crate) fn resample_area(
    src: &[f32],
    src_w: u32,
    src_h: u32,
    channels: usize,
    dst_w: u32,
    dst_h: u32,
) -> Vec<f32> {
    assert!(dst_w >= 1 && dst_h >= 1);
    if (src_w, src_h) == (dst_w, dst_h) {
        return src.to_vec();
    }
    let sx = src_w as f64 / dst_w as f64;
    let sy = src_h as f64 / dst_h as f64;
    let mut out = vec![0.0f32; dst_w as usize * dst_h as usize * channels];
    let mut acc = vec![0.0f64; channels];
    for dy in 0..dst_h as usize {
        let y0 = dy as f64 * sy;
        let y1 = (dy + 1) as f64 * sy;
        for dx in 0..dst_w as usize {
            let x0 = dx as f64 * sx;
            let x1 = (dx + 1) as f64 * sx;
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut total = 0.0f64;
            let iy0 = y0.floor() as usize;
            let iy1 = (y1.ceil() as usize).min(src_h as usize);
            let ix0 = x0.floor() as usize;
            let ix1 = (x1.ceil() as usize).min(src_w as usize);
            for sy_i in iy0..iy1 {
                let wy = overlap(sy_i as f64, y0, y1);
                if wy <= 0.0 {
                    continue;
                }
                for sx_i in ix0..ix1 {
                    let wx = overlap(sx_i as f64, x0, x1);
                    if wx <= 0.0 {
                        continue;
                    }
                    let w = wx * wy;
                    let base = (sy_i * src_w as usize + sx_i) * channels;
                    for c in 0..channels {
                        acc[c] += src[base + c] as f64 * w;
                    }
                    total += w;
                }
            }
            let base = (dy * dst_w as usize + dx) * channels;
            for c in 0..channels {
                out[base + c] = (acc[c] / total) as f32;
            }
        }
    }
    out
}

/// Overlap length of unit interval `[i, i+1)` with `[lo, hi)`.
#[inline]
fn overlap(i: f64, lo: f64, hi: f64) -> f64 {
    (hi.min(i + 1.0) - lo.max(i)).max(0.0)
}

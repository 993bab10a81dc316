//! sRGB ↔ CIE L*a*b* conversion under a D65 white point.
//!
//! All color arithmetic in the pipeline (mean estimation, correction
//! shifts) happens in Lab; images themselves stay in stored sRGB. The
//! white point is defined as the row sums of the RGB→XYZ matrix, so
//! neutral grays map to a = b = 0 exactly.

use serde::{Deserialize, Serialize};

use crate::buffer::ImageBuffer;

/// sRGB(D65) linear RGB → XYZ, IEC 61966-2-1 primaries.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

/// Exact inverse of `RGB_TO_XYZ` (full f64 precision, not the rounded
/// textbook matrix) so round trips are limited only by the transfer
/// function arithmetic.
#[allow(clippy::excessive_precision)]
const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.2404548360214087, -1.5371388501025751, -0.498531546868481],
    [-0.96926638987565383, 1.8760109288424911, 0.041556082346673545],
    [0.055643419604213672, -0.20402585426769818, 1.057225162457929],
];

/// Reference white = matrix row sums; grays are neutral by construction.
const WHITE: [f64; 3] = [
    RGB_TO_XYZ[0][0] + RGB_TO_XYZ[0][1] + RGB_TO_XYZ[0][2],
    RGB_TO_XYZ[1][0] + RGB_TO_XYZ[1][1] + RGB_TO_XYZ[1][2],
    RGB_TO_XYZ[2][0] + RGB_TO_XYZ[2][1] + RGB_TO_XYZ[2][2],
];

const DELTA: f64 = 6.0 / 29.0;

/// A CIE L*a*b* color. L in `[0,100]` for in-gamut inputs; a and b are
/// the green–red and blue–yellow opponents, nominally `[-128,127]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabColor {
    pub fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }

    /// Componentwise difference, the correction shift `self - other`.
    pub fn delta_to(&self, other: &LabColor) -> [f64; 3] {
        [self.l - other.l, self.a - other.a, self.b - other.b]
    }
}

/// Lab values for every pixel of an image, kept at f64.
#[derive(Debug, Clone)]
pub struct LabPlane {
    width: u32,
    height: u32,
    data: Vec<LabColor>,
}

impl LabPlane {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> LabColor {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: LabColor) {
        self.data[y as usize * self.width as usize + x as usize] = c;
    }

    pub fn pixels(&self) -> &[LabColor] {
        &self.data
    }
}

#[inline]
fn srgb_decode(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn srgb_encode(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

#[inline]
fn lab_f_inv(t: f64) -> f64 {
    if t > DELTA {
        t * t * t
    } else {
        3.0 * DELTA * DELTA * (t - 4.0 / 29.0)
    }
}

/// Convert one stored-sRGB pixel (components in `[0,1]`) to Lab.
pub fn srgb_to_lab(rgb: [f64; 3]) -> LabColor {
    let lin = [
        srgb_decode(rgb[0]),
        srgb_decode(rgb[1]),
        srgb_decode(rgb[2]),
    ];
    let mut xyz = [0.0f64; 3];
    for (i, row) in RGB_TO_XYZ.iter().enumerate() {
        xyz[i] = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
    }
    let fx = lab_f(xyz[0] / WHITE[0]);
    let fy = lab_f(xyz[1] / WHITE[1]);
    let fz = lab_f(xyz[2] / WHITE[2]);
    LabColor {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// Convert a Lab color back to stored sRGB, clamping each channel to
/// `[0,1]`. Out-of-gamut inputs are clipped, never rejected.
pub fn lab_to_srgb(c: LabColor) -> [f64; 3] {
    let fy = (c.l + 16.0) / 116.0;
    let fx = fy + c.a / 500.0;
    let fz = fy - c.b / 200.0;
    let xyz = [
        lab_f_inv(fx) * WHITE[0],
        lab_f_inv(fy) * WHITE[1],
        lab_f_inv(fz) * WHITE[2],
    ];
    let mut rgb = [0.0f64; 3];
    for (i, row) in XYZ_TO_RGB.iter().enumerate() {
        let lin = row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2];
        rgb[i] = srgb_encode(lin.max(0.0)).clamp(0.0, 1.0);
    }
    rgb
}

/// Elementwise [`srgb_to_lab`] over a whole image.
pub fn image_to_lab(img: &ImageBuffer) -> LabPlane {
    let mut data = Vec::with_capacity(img.width() as usize * img.height() as usize);
    for px in img.data().chunks_exact(3) {
        data.push(srgb_to_lab([px[0] as f64, px[1] as f64, px[2] as f64]));
    }
    LabPlane {
        width: img.width(),
        height: img.height(),
        data,
    }
}

/// Elementwise [`lab_to_srgb`] back into an image (clamped per channel).
pub fn lab_to_image(plane: &LabPlane) -> ImageBuffer {
    let mut data = Vec::with_capacity(plane.data.len() * 3);
    for c in &plane.data {
        let rgb = lab_to_srgb(*c);
        data.push(rgb[0] as f32);
        data.push(rgb[1] as f32);
        data.push(rgb[2] as f32);
    }
    ImageBuffer::from_raw(plane.width, plane.height, data)
}

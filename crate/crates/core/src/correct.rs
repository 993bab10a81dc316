//! Input color correction: estimate mean facial colors in Lab and shift
//! the stylized head by the source-minus-target difference, so the
//! synthesized head keeps the subject's skin tone instead of the
//! character's.

use serde::{Deserialize, Serialize};

use crate::buffer::ImageBuffer;
use crate::color::{image_to_lab, lab_to_srgb, srgb_to_lab, LabColor};
use crate::error::{Error, Result};
use crate::mask::MaskBuffer;

/// Which side of the pair a region statistic was measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionRole {
    SourceFace,
    TargetFace,
}

/// Mask-weighted mean color of a region, with the weight mass that
/// produced it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegionStats {
    pub mean: LabColor,
    pub pixel_weight: f64,
    pub region_id: RegionRole,
}

/// Where the correction shift is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplyRegion {
    /// Shift every pixel (the downstream composition discards background
    /// pixels anyway for binary masks).
    WholeImage,
    /// Shift only pixels with positive mask weight.
    MaskedHead,
}

/// Which Lab channels the shift touches. Defaults to all three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelToggles {
    pub l: bool,
    pub a: bool,
    pub b: bool,
}

impl Default for ChannelToggles {
    fn default() -> Self {
        Self {
            l: true,
            a: true,
            b: true,
        }
    }
}

/// The resolved correction: shift `delta` on the selected channels within
/// the selected region. Every manifest record carries these explicitly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectionParams {
    pub delta: [f64; 3],
    pub apply_region: ApplyRegion,
    pub channels: ChannelToggles,
}

impl CorrectionParams {
    /// The shift that moves the target-face mean onto the source-face mean.
    pub fn from_stats(
        src: &RegionStats,
        tgt: &RegionStats,
        apply_region: ApplyRegion,
        channels: ChannelToggles,
    ) -> Self {
        let full = src.mean.delta_to(&tgt.mean);
        Self {
            delta: [
                if channels.l { full[0] } else { 0.0 },
                if channels.a { full[1] } else { 0.0 },
                if channels.b { full[2] } else { 0.0 },
            ],
            apply_region,
            channels,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.delta == [0.0, 0.0, 0.0]
    }
}

/// Mask-weighted mean of the per-pixel Lab values.
///
/// Fails with [`Error::EmptyRegion`] when the mask weights sum to zero.
pub fn masked_mean_lab(
    img: &ImageBuffer,
    mask: &MaskBuffer,
    region_id: RegionRole,
) -> Result<RegionStats> {
    if mask.dimensions() != img.dimensions() {
        return Err(Error::dims(
            img.dimensions(),
            mask.dimensions(),
            "stats mask vs image",
        ));
    }
    let mut sum = [0.0f64; 3];
    let mut weight = 0.0f64;
    for (px, &m) in img.data().chunks_exact(3).zip(mask.data()) {
        if m <= 0.0 {
            continue;
        }
        let w = m as f64;
        let lab = srgb_to_lab([px[0] as f64, px[1] as f64, px[2] as f64]);
        sum[0] += lab.l * w;
        sum[1] += lab.a * w;
        sum[2] += lab.b * w;
        weight += w;
    }
    if weight <= 0.0 {
        return Err(Error::EmptyRegion);
    }
    Ok(RegionStats {
        mean: LabColor::new(sum[0] / weight, sum[1] / weight, sum[2] / weight),
        pixel_weight: weight,
        region_id,
    })
}

/// Shift the head image's Lab values by `params.delta`.
///
/// A zero delta returns the input unchanged, bit for bit. With
/// `ApplyRegion::MaskedHead`, pixels at mask weight 0 are also left
/// bit-identical. Results re-enter sRGB through the usual gamut clamp.
pub fn correct_color(
    head_styled: &ImageBuffer,
    params: &CorrectionParams,
    mask: &MaskBuffer,
) -> Result<ImageBuffer> {
    if mask.dimensions() != head_styled.dimensions() {
        return Err(Error::dims(
            head_styled.dimensions(),
            mask.dimensions(),
            "mask vs head",
        ));
    }
    if params.is_zero() {
        return Ok(head_styled.clone());
    }
    let (w, h) = head_styled.dimensions();
    let lab = image_to_lab(head_styled);
    let mut out = head_styled.clone();
    for y in 0..h {
        for x in 0..w {
            if params.apply_region == ApplyRegion::MaskedHead && mask.get(x, y) <= 0.0 {
                continue;
            }
            let c = lab.get(x, y);
            let shifted = LabColor::new(
                c.l + params.delta[0],
                c.a + params.delta[1],
                c.b + params.delta[2],
            );
            let rgb = lab_to_srgb(shifted);
            out.set_pixel(x, y, [rgb[0] as f32, rgb[1] as f32, rgb[2] as f32]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compose::{compose_fullbody, CompositionInputs};

    fn mid_image(w: u32, h: u32, seed: u32) -> ImageBuffer {
        // Values in [0.35, 0.65]: far from the gamut boundary, so small
        // Lab shifts never clamp.
        ImageBuffer::from_fn(w, h, |x, y| {
            let t = x.wrapping_mul(97).wrapping_add(y.wrapping_mul(61)).wrapping_add(seed);
            [
                0.35 + 0.3 * ((t % 101) as f32 / 100.0),
                0.35 + 0.3 * (((t / 5) % 97) as f32 / 96.0),
                0.35 + 0.3 * (((t / 11) % 89) as f32 / 88.0),
            ]
        })
    }

    #[test]
    fn uniform_image_mean_equals_pixel_lab() {
        let img = ImageBuffer::filled(6, 4, [0.2, 0.5, 0.8]);
        let mask = MaskBuffer::from_fn(6, 4, |x, _| if x < 3 { 1.0 } else { 0.0 });
        let stats = masked_mean_lab(&img, &mask, RegionRole::SourceFace).unwrap();
        let expect = srgb_to_lab([
            img.pixel(0, 0)[0] as f64,
            img.pixel(0, 0)[1] as f64,
            img.pixel(0, 0)[2] as f64,
        ]);
        assert!((stats.mean.l - expect.l).abs() <= 1e-9);
        assert!((stats.mean.a - expect.a).abs() <= 1e-9);
        assert!((stats.mean.b - expect.b).abs() <= 1e-9);
        assert_eq!(stats.pixel_weight, 12.0);
        assert_eq!(stats.region_id, RegionRole::SourceFace);
    }

    #[test]
    fn two_equal_weight_pixels_average_arithmetically() {
        // Construct two gray pixels, read their L, and check the mean
        // sits at the midpoint (a and b stay 0 on the neutral axis).
        let a = 0.2f32;
        let b = 0.8f32;
        let img = ImageBuffer::from_fn(2, 1, |x, _| {
            if x == 0 {
                [a, a, a]
            } else {
                [b, b, b]
            }
        });
        let la = srgb_to_lab([a as f64; 3]);
        let lb = srgb_to_lab([b as f64; 3]);
        let stats =
            masked_mean_lab(&img, &MaskBuffer::filled(2, 1, 1.0), RegionRole::TargetFace).unwrap();
        assert!((stats.mean.l - (la.l + lb.l) / 2.0).abs() <= 1e-9);
        assert!(stats.mean.a.abs() <= 1e-9 && stats.mean.b.abs() <= 1e-9);
    }

    #[test]
    fn masked_mean_matches_weighted_sum_oracle() {
        // Brute-force accumulation over an 8x8 image and a soft mask.
        let img = mid_image(8, 8, 3);
        let mask = MaskBuffer::from_fn(8, 8, |x, y| ((x * 7 + y * 13) % 10) as f32 / 9.0);
        let stats = masked_mean_lab(&img, &mask, RegionRole::SourceFace).unwrap();

        let mut sum = [0.0f64; 3];
        let mut weight = 0.0f64;
        for y in 0..8 {
            for x in 0..8 {
                let m = mask.get(x, y) as f64;
                if m <= 0.0 {
                    continue;
                }
                let p = img.pixel(x, y);
                let lab = srgb_to_lab([p[0] as f64, p[1] as f64, p[2] as f64]);
                sum[0] += lab.l * m;
                sum[1] += lab.a * m;
                sum[2] += lab.b * m;
                weight += m;
            }
        }
        assert!((stats.mean.l - sum[0] / weight).abs() <= 1e-6);
        assert!((stats.mean.a - sum[1] / weight).abs() <= 1e-6);
        assert!((stats.mean.b - sum[2] / weight).abs() <= 1e-6);
        assert!((stats.pixel_weight - weight).abs() <= 1e-6);
    }

    #[test]
    fn empty_mask_is_rejected() {
        let img = ImageBuffer::filled(4, 4, [0.5; 3]);
        let err = masked_mean_lab(&img, &MaskBuffer::filled(4, 4, 0.0), RegionRole::SourceFace)
            .unwrap_err();
        assert!(matches!(err, Error::EmptyRegion));
    }

    #[test]
    fn zero_delta_is_bitwise_identity() {
        let img = mid_image(7, 5, 9);
        let mask = MaskBuffer::filled(7, 5, 1.0);
        let stats = masked_mean_lab(&img, &mask, RegionRole::SourceFace).unwrap();
        let params = CorrectionParams::from_stats(
            &stats,
            &stats,
            ApplyRegion::WholeImage,
            ChannelToggles::default(),
        );
        assert!(params.is_zero());
        let out = correct_color(&img, &params, &mask).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn lightness_shift_moves_measured_mean_by_delta() {
        // Closed-loop oracle: apply a known delta, re-measure the mean.
        let img = ImageBuffer::filled(10, 10, [0.5; 3]);
        let mask = MaskBuffer::filled(10, 10, 1.0);
        let before = masked_mean_lab(&img, &mask, RegionRole::TargetFace).unwrap();
        let params = CorrectionParams {
            delta: [20.0, 0.0, 0.0],
            apply_region: ApplyRegion::WholeImage,
            channels: ChannelToggles::default(),
        };
        let out = correct_color(&img, &params, &mask).unwrap();
        let after = masked_mean_lab(&out, &mask, RegionRole::TargetFace).unwrap();
        assert!((after.mean.l - before.mean.l - 20.0).abs() <= 0.5);
        assert!((after.mean.a - before.mean.a).abs() <= 0.5);
        assert!((after.mean.b - before.mean.b).abs() <= 0.5);
    }

    #[test]
    fn overflowing_shift_clamps_into_gamut() {
        let img = ImageBuffer::filled(4, 4, [0.9; 3]);
        let params = CorrectionParams {
            delta: [50.0, 0.0, 0.0],
            apply_region: ApplyRegion::WholeImage,
            channels: ChannelToggles::default(),
        };
        let out = correct_color(&img, &params, &MaskBuffer::filled(4, 4, 1.0)).unwrap();
        for v in out.data() {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn masked_head_leaves_background_bit_identical() {
        let img = mid_image(12, 12, 4);
        let mask = MaskBuffer::from_fn(12, 12, |x, y| if x > 3 && y > 3 { 1.0 } else { 0.0 });
        let params = CorrectionParams {
            delta: [5.0, -3.0, 2.0],
            apply_region: ApplyRegion::MaskedHead,
            channels: ChannelToggles::default(),
        };
        let out = correct_color(&img, &params, &mask).unwrap();
        for y in 0..12 {
            for x in 0..12 {
                if mask.get(x, y) == 0.0 {
                    assert_eq!(out.pixel(x, y), img.pixel(x, y));
                } else {
                    assert_ne!(out.pixel(x, y), img.pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn channel_toggles_restrict_the_shift() {
        let img = ImageBuffer::filled(6, 6, [0.5; 3]);
        let mask = MaskBuffer::filled(6, 6, 1.0);
        let src = RegionStats {
            mean: LabColor::new(60.0, 5.0, -4.0),
            pixel_weight: 1.0,
            region_id: RegionRole::SourceFace,
        };
        let tgt = RegionStats {
            mean: LabColor::new(50.0, 1.0, 2.0),
            pixel_weight: 1.0,
            region_id: RegionRole::TargetFace,
        };
        let ab_only = ChannelToggles {
            l: false,
            a: true,
            b: true,
        };
        let params = CorrectionParams::from_stats(&src, &tgt, ApplyRegion::WholeImage, ab_only);
        assert_eq!(params.delta[0], 0.0);
        let before = masked_mean_lab(&img, &mask, RegionRole::TargetFace).unwrap();
        let out = correct_color(&img, &params, &mask).unwrap();
        let after = masked_mean_lab(&out, &mask, RegionRole::TargetFace).unwrap();
        assert!((after.mean.l - before.mean.l).abs() <= 0.05);
        assert!((after.mean.a - before.mean.a - 4.0).abs() <= 0.05);
        assert!((after.mean.b - before.mean.b + 6.0).abs() <= 0.05);
    }

    #[test]
    fn whole_image_then_compose_equals_masked_then_compose_on_binary_masks() {
        let head = mid_image(10, 10, 21);
        let bg = mid_image(10, 10, 22);
        let mask = MaskBuffer::from_fn(10, 10, |x, y| if (x + y) % 2 == 0 { 1.0 } else { 0.0 });
        let delta = [6.0, -2.0, 3.0];
        let whole = CorrectionParams {
            delta,
            apply_region: ApplyRegion::WholeImage,
            channels: ChannelToggles::default(),
        };
        let masked = CorrectionParams {
            delta,
            apply_region: ApplyRegion::MaskedHead,
            channels: ChannelToggles::default(),
        };
        let via_whole = compose_fullbody(&CompositionInputs {
            head_styled: &correct_color(&head, &whole, &mask).unwrap(),
            background_styled: &bg,
            mask: &mask,
            feather_radius: 0,
        })
        .unwrap();
        let via_masked = compose_fullbody(&CompositionInputs {
            head_styled: &correct_color(&head, &masked, &mask).unwrap(),
            background_styled: &bg,
            mask: &mask,
            feather_radius: 0,
        })
        .unwrap();
        assert_eq!(via_whole, via_masked);
    }
}

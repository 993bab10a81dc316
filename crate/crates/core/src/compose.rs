//! Head/background composition under a head mask.
//!
//! The target image is assembled from an independently stylized head and
//! an independently stylized background: head pixels where the mask is 1,
//! background pixels where it is 0, and a convex blend in between. With a
//! binary mask and feather radius 0 the output is a hard partition of the
//! two inputs, which keeps background pixel statistics exactly at the
//! source distribution when the background stylizer is the identity.

use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};
use crate::mask::{feather, MaskBuffer};

/// Everything [`compose_fullbody`] needs; all rasters share dimensions.
#[derive(Debug)]
pub struct CompositionInputs<'a> {
    pub head_styled: &'a ImageBuffer,
    pub background_styled: &'a ImageBuffer,
    pub mask: &'a MaskBuffer,
    pub feather_radius: u32,
}

/// Per-channel blend of one head pixel over one background pixel.
///
/// Exact at the mask extremes (bit-equal to an input) and clamped into
/// the convex hull of the two values elsewhere.
#[inline]
pub(crate) fn blend_channel(head: f32, background: f32, weight: f32) -> f32 {
    if weight <= 0.0 {
        background
    } else if weight >= 1.0 {
        head
    } else {
        let lo = head.min(background);
        let hi = head.max(background);
        (background + weight * (head - background)).clamp(lo, hi)
    }
}

/// Combine stylized head and stylized background under the head mask.
///
/// The mask is feathered by `feather_radius` first; radius 0 keeps hard
/// mask edges. Blending happens per channel on stored sRGB values.
pub fn compose_fullbody(inp: &CompositionInputs<'_>) -> Result<ImageBuffer> {
    let dims = inp.head_styled.dimensions();
    if inp.background_styled.dimensions() != dims {
        return Err(Error::dims(
            dims,
            inp.background_styled.dimensions(),
            "background vs head",
        ));
    }
    if inp.mask.dimensions() != dims {
        return Err(Error::dims(dims, inp.mask.dimensions(), "mask vs head"));
    }
    let mask = feather(inp.mask, inp.feather_radius);

    let (w, h) = dims;
    let mut out = inp.background_styled.clone();
    for y in 0..h {
        for x in 0..w {
            let m = mask.get(x, y);
            if m <= 0.0 {
                continue;
            }
            let hp = inp.head_styled.pixel(x, y);
            let bp = inp.background_styled.pixel(x, y);
            out.set_pixel(
                x,
                y,
                [
                    blend_channel(hp[0], bp[0], m),
                    blend_channel(hp[1], bp[1], m),
                    blend_channel(hp[2], bp[2], m),
                ],
            );
        }
    }
    Ok(out)
}

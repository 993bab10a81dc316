//! Face-paste augmentation: place k face crops on a stylized landscape
//! without overlap, and build the aligned source-side image with the same
//! layout so the training pair stays pixel-registered.
//!
//! Placement is seeded rejection sampling over top-left corners. Faces
//! are placed in the given order; a face that cannot be placed within the
//! attempt budget restarts the whole layout, and a bounded number of
//! restarts later the layout is reported infeasible (the record is
//! skipped, never emitted with a bad layout).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::ImageBuffer;
use crate::compose::blend_channel;
use crate::error::{Error, Result};
use crate::mask::MaskBuffer;

/// Whole-layout restarts before giving up.
const MAX_RESTARTS: u32 = 10;

/// One pasted rectangle: top-left offset, size, and which face it holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub face_index: usize,
}

impl PlacementRect {
    /// Area of the intersection with another rectangle. Touching edges
    /// count as zero.
    pub fn intersection_area(&self, other: &PlacementRect) -> u64 {
        let x_overlap = (self.x + self.w).min(other.x + other.w) as i64
            - self.x.max(other.x) as i64;
        let y_overlap = (self.y + self.h).min(other.y + other.h) as i64
            - self.y.max(other.y) as i64;
        if x_overlap <= 0 || y_overlap <= 0 {
            0
        } else {
            x_overlap as u64 * y_overlap as u64
        }
    }
}

/// A successful placement plan. Invariants: exactly `k_requested`
/// placements, pairwise disjoint, all inside the canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutFaceLayout {
    pub canvas_width: u32,
    pub canvas_height: u32,
    pub placements: Vec<PlacementRect>,
    pub seed: u64,
    pub k_requested: usize,
    pub attempts_used: u64,
}

/// Plan non-overlapping placements for the first `k` of `face_dims` on a
/// `canvas`, deterministically for a fixed seed.
pub fn plan_cutface(
    canvas: (u32, u32),
    face_dims: &[(u32, u32)],
    k: usize,
    seed: u64,
    max_attempts: u32,
) -> Result<CutFaceLayout> {
    assert!(k <= face_dims.len(), "k must not exceed the face list");
    assert!(max_attempts >= 1, "max_attempts must be >= 1");
    let (cw, ch) = canvas;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts_total: u64 = 0;

    // A face larger than the canvas can never fit, restarts included.
    for &(w, h) in face_dims.iter().take(k) {
        debug_assert!(w >= 1 && h >= 1);
        if w > cw || h > ch {
            return Err(Error::PlacementInfeasible {
                attempts: 0,
                restarts: 0,
            });
        }
    }

    for restart in 0..=MAX_RESTARTS {
        let mut placed: Vec<PlacementRect> = Vec::with_capacity(k);
        let mut failed = false;
        'faces: for (face_index, &(w, h)) in face_dims.iter().take(k).enumerate() {
            for _ in 0..max_attempts {
                attempts_total += 1;
                let x = rng.random_range(0..=cw - w);
                let y = rng.random_range(0..=ch - h);
                let candidate = PlacementRect {
                    x,
                    y,
                    w,
                    h,
                    face_index,
                };
                if placed
                    .iter()
                    .all(|p| p.intersection_area(&candidate) == 0)
                {
                    placed.push(candidate);
                    continue 'faces;
                }
            }
            failed = true;
            break;
        }
        if !failed {
            return Ok(CutFaceLayout {
                canvas_width: cw,
                canvas_height: ch,
                placements: placed,
                seed,
                k_requested: k,
                attempts_used: attempts_total,
            });
        }
        let _ = restart;
    }

    Err(Error::PlacementInfeasible {
        attempts: attempts_total,
        restarts: MAX_RESTARTS,
    })
}

fn check_layout_inputs(
    landscape: &ImageBuffer,
    faces: &[(&ImageBuffer, &MaskBuffer)],
    layout: &CutFaceLayout,
) -> Result<()> {
    if landscape.dimensions() != (layout.canvas_width, layout.canvas_height) {
        return Err(Error::dims(
            (layout.canvas_width, layout.canvas_height),
            landscape.dimensions(),
            "landscape vs layout canvas",
        ));
    }
    for rect in &layout.placements {
        let (img, mask) = faces.get(rect.face_index).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "layout references face {} but only {} provided",
                rect.face_index,
                faces.len()
            ))
        })?;
        if img.dimensions() != (rect.w, rect.h) {
            return Err(Error::dims(
                (rect.w, rect.h),
                img.dimensions(),
                format!("face {} vs its placement", rect.face_index),
            ));
        }
        if mask.dimensions() != (rect.w, rect.h) {
            return Err(Error::dims(
                (rect.w, rect.h),
                mask.dimensions(),
                format!("face mask {} vs its placement", rect.face_index),
            ));
        }
    }
    Ok(())
}

fn paste_faces(
    canvas: &ImageBuffer,
    faces: &[(&ImageBuffer, &MaskBuffer)],
    layout: &CutFaceLayout,
) -> (ImageBuffer, MaskBuffer) {
    let mut out = canvas.clone();
    let mut union = MaskBuffer::filled(canvas.width(), canvas.height(), 0.0);
    for rect in &layout.placements {
        let (img, mask) = &faces[rect.face_index];
        for fy in 0..rect.h {
            for fx in 0..rect.w {
                let m = mask.get(fx, fy);
                let (cx, cy) = (rect.x + fx, rect.y + fy);
                if m > 0.0 {
                    let fp = img.pixel(fx, fy);
                    let bp = out.pixel(cx, cy);
                    out.set_pixel(
                        cx,
                        cy,
                        [
                            blend_channel(fp[0], bp[0], m),
                            blend_channel(fp[1], bp[1], m),
                            blend_channel(fp[2], bp[2], m),
                        ],
                    );
                }
                union.set(cx, cy, union.get(cx, cy).max(m));
            }
        }
    }
    (out, union)
}

/// Paste stylized faces onto the stylized landscape at the planned
/// rectangles. Also returns the union of the pasted head masks for
/// downstream supervision and analysis.
pub fn apply_cutface(
    landscape_styled: &ImageBuffer,
    faces: &[(&ImageBuffer, &MaskBuffer)],
    layout: &CutFaceLayout,
) -> Result<(ImageBuffer, MaskBuffer)> {
    check_layout_inputs(landscape_styled, faces, layout)?;
    Ok(paste_faces(landscape_styled, faces, layout))
}

/// The source half of an augmented pair: identical geometry to
/// [`apply_cutface`], pasting the unstylized source faces onto the
/// unstylized landscape so the pair stays aligned.
pub fn pair_cutface_source(
    landscape_src: &ImageBuffer,
    source_faces: &[(&ImageBuffer, &MaskBuffer)],
    layout: &CutFaceLayout,
) -> Result<ImageBuffer> {
    check_layout_inputs(landscape_src, source_faces, layout)?;
    Ok(paste_faces(landscape_src, source_faces, layout).0)
}

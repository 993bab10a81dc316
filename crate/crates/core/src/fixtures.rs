//! Synthetic fixture corpus: a fully hermetic stand-in for real inputs
//! (photos, externally stylized heads, parser masks, landscape pool) so
//! the whole pipeline can build and be tested with zero model weights.
//!
//! Every record is deterministic in (seed, record id). Heads are binary
//! ellipse masks; the stylized-head inputs deliberately shift the face
//! toward a pale character palette over a divergent lavender background,
//! so color correction has a real, nonzero delta to undo.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};
use crate::mask::{synthetic_head_mask, MaskBuffer};
use crate::pipeline::derive_record_seed;
use crate::stylize::quantize_channel;

/// Skin tones sampled per record, spanning deep to pale.
const SKIN_TONES: [[f32; 3]; 6] = [
    [0.36, 0.22, 0.15],
    [0.55, 0.35, 0.22],
    [0.72, 0.51, 0.38],
    [0.80, 0.60, 0.48],
    [0.92, 0.74, 0.62],
    [0.96, 0.82, 0.72],
];

/// The character palette the stylized head drifts toward.
const CHARACTER_TONE: [f32; 3] = [0.95, 0.86, 0.78];

/// Flat divergent backdrop behind stylized heads (discarded by
/// composition, present so discarding it is observable).
const STYLED_BACKDROP: [f32; 3] = [0.76, 0.68, 0.86];

const LANDSCAPE_COUNT: usize = 8;

/// Paths of a generated corpus.
#[derive(Debug, Clone)]
pub struct FixtureCorpus {
    pub root: PathBuf,
    pub config_path: PathBuf,
    pub record_ids: Vec<String>,
}

fn lerp(a: [f32; 3], b: [f32; 3], t: f32) -> [f32; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

struct RecordShapes {
    mask: MaskBuffer,
    skin: [f32; 3],
    bg_top: [f32; 3],
    bg_bottom: [f32; 3],
    texture_phase: f64,
}

fn record_shapes(size: u32, rng: &mut ChaCha8Rng) -> Result<RecordShapes> {
    let s = size as f64;
    let center = (
        s * 0.5 + rng.random_range(-s / 16.0..s / 16.0),
        s * 0.42 + rng.random_range(-s / 20.0..s / 20.0),
    );
    let axes = (
        s * rng.random_range(0.18..0.26),
        s * rng.random_range(0.24..0.33),
    );
    let rotation = rng.random_range(-0.15..0.15);
    let mask = synthetic_head_mask(size, size, center, axes, rotation)?.binarize(0.5);

    let skin = SKIN_TONES[rng.random_range(0..SKIN_TONES.len())];
    let bg_top = [
        rng.random_range(0.3..0.7),
        rng.random_range(0.35..0.75),
        rng.random_range(0.4..0.8),
    ];
    let bg_bottom = [
        rng.random_range(0.2..0.5),
        rng.random_range(0.25..0.55),
        rng.random_range(0.2..0.5),
    ];
    Ok(RecordShapes {
        mask,
        skin,
        bg_top,
        bg_bottom,
        texture_phase: rng.random_range(0.0..std::f64::consts::TAU),
    })
}

fn source_image(size: u32, shapes: &RecordShapes) -> ImageBuffer {
    ImageBuffer::from_fn(size, size, |x, y| {
        let ty = y as f32 / (size - 1).max(1) as f32;
        if shapes.mask.get(x, y) >= 1.0 {
            // Shaded skin with a gentle deterministic grain.
            let shade = 1.0 - 0.25 * ty;
            let grain = 0.03
                * ((x as f64 * 0.9 + shapes.texture_phase).sin()
                    * (y as f64 * 0.7 + shapes.texture_phase).cos()) as f32;
            [
                shapes.skin[0] * shade + grain,
                shapes.skin[1] * shade + grain,
                shapes.skin[2] * shade + grain,
            ]
        } else {
            let wave =
                0.05 * ((x as f64 * 0.23 + shapes.texture_phase).sin()) as f32;
            let base = lerp(shapes.bg_top, shapes.bg_bottom, ty);
            [base[0] + wave, base[1] + wave, base[2] + wave]
        }
    })
}

/// The stand-in for an externally synthesized head image: the head drifts
/// toward the character tone and flattens; the backdrop is divergent.
fn head_styled_image(size: u32, shapes: &RecordShapes, source: &ImageBuffer) -> ImageBuffer {
    ImageBuffer::from_fn(size, size, |x, y| {
        if shapes.mask.get(x, y) >= 1.0 {
            let p = source.pixel(x, y);
            let drifted = lerp(p, CHARACTER_TONE, 0.65);
            [
                quantize_channel(drifted[0], 10),
                quantize_channel(drifted[1], 10),
                quantize_channel(drifted[2], 10),
            ]
        } else {
            let ty = y as f32 / (size - 1).max(1) as f32;
            [
                STYLED_BACKDROP[0] - 0.05 * ty,
                STYLED_BACKDROP[1] - 0.03 * ty,
                STYLED_BACKDROP[2] - 0.06 * ty,
            ]
        }
    })
}

fn landscape_image(size: u32, rng: &mut ChaCha8Rng) -> ImageBuffer {
    let horizon = rng.random_range(0.45..0.7) * size as f64;
    let sky_top = [
        rng.random_range(0.45..0.7),
        rng.random_range(0.6..0.85),
        rng.random_range(0.8..0.98),
    ];
    let ground = [
        rng.random_range(0.25..0.5),
        rng.random_range(0.45..0.7),
        rng.random_range(0.2..0.4),
    ];
    let sun = (
        rng.random_range(0.15..0.85) * size as f64,
        rng.random_range(0.1..0.35) * size as f64,
        rng.random_range(0.04..0.09) * size as f64,
    );
    let hill_phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    ImageBuffer::from_fn(size, size, |x, y| {
        let fx = x as f64;
        let fy = y as f64;
        let hill = horizon + (fx * 0.08 + hill_phase).sin() * size as f64 * 0.04;
        if fy < hill {
            let d = ((fx - sun.0).powi(2) + (fy - sun.1).powi(2)).sqrt();
            if d < sun.2 {
                return [1.0, 0.95, 0.75];
            }
            let t = (fy / hill) as f32;
            [
                sky_top[0] as f32 * (1.0 - 0.3 * t) + 0.2 * t,
                sky_top[1] as f32 * (1.0 - 0.2 * t) + 0.15 * t,
                sky_top[2] as f32,
            ]
        } else {
            let t = ((fy - hill) / (size as f64 - hill).max(1.0)) as f32;
            [
                ground[0] as f32 * (1.0 - 0.4 * t),
                ground[1] as f32 * (1.0 - 0.35 * t),
                ground[2] as f32 * (1.0 - 0.3 * t),
            ]
        }
    })
}

/// Generate a corpus of `records` synthetic records at `size`×`size`
/// under `root`, plus a landscape pool and a ready-to-run `config.json`.
pub fn generate_fixture_corpus(
    root: &Path,
    records: usize,
    size: u32,
    seed: u64,
) -> Result<FixtureCorpus> {
    if records == 0 {
        return Err(Error::InvalidConfig("fixture corpus needs >= 1 record".into()));
    }
    if size < 32 {
        return Err(Error::InvalidConfig(
            "fixture size must be >= 32 so heads have room".into(),
        ));
    }
    for sub in ["source", "head", "mask", "landscape"] {
        let dir = root.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let mut record_ids = Vec::with_capacity(records);
    for i in 0..records {
        let id = format!("rec{i:03}");
        let mut rng = ChaCha8Rng::seed_from_u64(derive_record_seed(seed, &id));
        let shapes = record_shapes(size, &mut rng)?;
        let source = source_image(size, &shapes);
        let head = head_styled_image(size, &shapes, &source);
        source.save(&root.join("source").join(format!("{id}.png")))?;
        head.save(&root.join("head").join(format!("{id}.png")))?;
        shapes
            .mask
            .save(&root.join("mask").join(format!("{id}.png")))?;
        record_ids.push(id);
    }

    for i in 0..LANDSCAPE_COUNT {
        let id = format!("land{i:02}");
        let mut rng = ChaCha8Rng::seed_from_u64(derive_record_seed(seed, &format!("__{id}__")));
        landscape_image(size, &mut rng).save(&root.join("landscape").join(format!("{id}.png")))?;
    }

    let config = serde_json::json!({
        "inputs": { "records_dir": "." },
        "backend": { "kind": "identity" },
        "correction": { "enabled": true, "apply_region": "whole_image" },
        "cutface": { "ratio": 0.25, "k_min": 1, "k_max": 3, "landscape_dir": "landscape" },
        "analysis": { "bins": 64 },
        "output": { "dir": "out", "feather_radius": 3 },
        "seed": seed
    });
    let config_path = root.join("config.json");
    std::fs::write(
        &config_path,
        serde_json::to_string_pretty(&config).expect("fixture config serializes"),
    )
    .map_err(|e| Error::io(&config_path, e))?;

    Ok(FixtureCorpus {
        root: root.to_path_buf(),
        config_path,
        record_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correct::{masked_mean_lab, RegionRole};
    use crate::mask::load_mask;

    #[test]
    fn corpus_generates_all_files_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let a = generate_fixture_corpus(&dir.path().join("a"), 4, 64, 11).unwrap();
        let _ = generate_fixture_corpus(&dir.path().join("b"), 4, 64, 11).unwrap();
        assert_eq!(a.record_ids, vec!["rec000", "rec001", "rec002", "rec003"]);
        for id in &a.record_ids {
            for sub in ["source", "head", "mask"] {
                let pa = dir.path().join("a").join(sub).join(format!("{id}.png"));
                let pb = dir.path().join("b").join(sub).join(format!("{id}.png"));
                assert!(pa.exists());
                assert_eq!(
                    std::fs::read(&pa).unwrap(),
                    std::fs::read(&pb).unwrap(),
                    "{sub}/{id} differs between same-seed runs"
                );
            }
        }
        assert!(a.config_path.exists());
    }

    #[test]
    fn fixture_masks_are_binary_with_sane_coverage() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_fixture_corpus(dir.path(), 6, 64, 3).unwrap();
        for id in &corpus.record_ids {
            let mask = load_mask(
                &dir.path().join("mask").join(format!("{id}.png")),
                (64, 64),
            )
            .unwrap();
            assert!(mask.is_binary());
            let cov = crate::mask::coverage_fraction(&mask);
            assert!(cov > 0.05 && cov < 0.6, "coverage {cov} out of range");
        }
    }

    #[test]
    fn styled_head_mean_differs_from_source_head_mean() {
        // The whole point of the corpus: correction must have work to do.
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_fixture_corpus(dir.path(), 6, 64, 5).unwrap();
        for id in &corpus.record_ids {
            let source =
                ImageBuffer::load(&dir.path().join("source").join(format!("{id}.png"))).unwrap();
            let head =
                ImageBuffer::load(&dir.path().join("head").join(format!("{id}.png"))).unwrap();
            let mask = load_mask(
                &dir.path().join("mask").join(format!("{id}.png")),
                (64, 64),
            )
            .unwrap();
            let s = masked_mean_lab(&source, &mask, RegionRole::SourceFace).unwrap();
            let t = masked_mean_lab(&head, &mask, RegionRole::TargetFace).unwrap();
            let delta = s.mean.delta_to(&t.mean);
            let magnitude = (delta[0].powi(2) + delta[1].powi(2) + delta[2].powi(2)).sqrt();
            assert!(magnitude > 1.0, "{id}: styled head too close to source");
        }
    }
}

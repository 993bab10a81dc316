//! The batch executor: walk input records, run
//! stylize → correct → compose per record (plus face-paste augmentation
//! for a configured fraction), write pairs, and emit the manifest.
//!
//! Records are independent. Each derives its own seed from the global
//! seed and its output id, so worker count and scheduling order cannot
//! change any output byte.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::buffer::ImageBuffer;
use crate::compose::{compose_fullbody, CompositionInputs};
use crate::config::{BuildConfig, RecordInputs};
use crate::correct::{correct_color, masked_mean_lab, CorrectionParams, RegionRole};
use crate::cutface::{apply_cutface, pair_cutface_source, plan_cutface};
use crate::error::{Error, Result};
use crate::manifest::{
    DatasetManifest, EntryCorrection, EntryInputs, EntryKind, EntryOutputs, ManifestEntry,
    MANIFEST_VERSION,
};
use crate::mask::{feather, load_mask, MaskBuffer};
use crate::stylize::stylize;

/// Stable 64-bit seed for one output record: SHA-256 over the global
/// seed and the record's output id.
pub fn derive_record_seed(global_seed: u64, record_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global_seed.to_le_bytes());
    hasher.update(b"/");
    hasher.update(record_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// A record's loaded inputs plus its computed corrected head.
struct PreparedRecord {
    source: ImageBuffer,
    corrected: ImageBuffer,
    mask: MaskBuffer,
    correction: Option<EntryCorrection>,
}

/// Load one record's files and compute the color-corrected head image.
fn prepare_record(record: &RecordInputs, config: &BuildConfig) -> Result<PreparedRecord> {
    let source = ImageBuffer::load(&record.source_path)?;
    let dims = source.dimensions();
    let head_styled = ImageBuffer::load(&record.head_styled_path)?;
    if head_styled.dimensions() != dims {
        return Err(Error::dims(
            dims,
            head_styled.dimensions(),
            format!("head image {}", record.head_styled_path.display()),
        ));
    }
    let mask = load_mask(&record.mask_path, dims)?;
    let stats_mask = match &record.face_stats_mask_path {
        Some(p) => load_mask(p, dims)?,
        None => mask.clone(),
    };

    let (corrected, correction) = if config.correction.enabled {
        let src_stats = masked_mean_lab(&source, &stats_mask, RegionRole::SourceFace)?;
        let tgt_stats = masked_mean_lab(&head_styled, &stats_mask, RegionRole::TargetFace)?;
        let params = CorrectionParams::from_stats(
            &src_stats,
            &tgt_stats,
            config.correction.apply_region,
            config.correction.channels,
        );
        let corrected = correct_color(&head_styled, &params, &mask)?;
        (
            corrected,
            Some(EntryCorrection {
                delta: params.delta,
                apply_region: params.apply_region,
                channels: params.channels,
            }),
        )
    } else {
        (head_styled, None)
    };

    Ok(PreparedRecord {
        source,
        corrected,
        mask,
        correction,
    })
}

fn skip_entry(record_id: &str, kind: EntryKind, seed: u64, reason: String) -> ManifestEntry {
    ManifestEntry {
        record_id: record_id.to_string(),
        kind,
        seed,
        inputs: None,
        outputs: None,
        correction: None,
        layout: None,
        landscape: None,
        face_records: None,
        skip_reason: Some(reason),
        target_sha256: None,
    }
}

fn process_composed(
    record: &RecordInputs,
    config: &BuildConfig,
    out_root: &Path,
) -> ManifestEntry {
    let seed = derive_record_seed(config.seed, &record.record_id);
    let run = || -> Result<ManifestEntry> {
        let prepared = prepare_record(record, config)?;
        let styled_bg = stylize(&prepared.source, &config.backend, &record.record_id)?;
        let composed = compose_fullbody(&CompositionInputs {
            head_styled: &prepared.corrected,
            background_styled: &styled_bg.image,
            mask: &prepared.mask,
            feather_radius: config.output.feather_radius,
        })?;

        let outputs = EntryOutputs {
            source: format!("src/{}.png", record.record_id),
            target: format!("tgt/{}.png", record.record_id),
            mask: format!("masks/{}.png", record.record_id),
        };
        prepared.source.save(&out_root.join(&outputs.source))?;
        composed.save(&out_root.join(&outputs.target))?;
        prepared.mask.save(&out_root.join(&outputs.mask))?;
        let target_sha256 = sha256_file(&out_root.join(&outputs.target))?;

        Ok(ManifestEntry {
            record_id: record.record_id.clone(),
            kind: EntryKind::Composed,
            seed,
            inputs: Some(EntryInputs {
                source: record.source_path.clone(),
                head_styled: record.head_styled_path.clone(),
                mask: record.mask_path.clone(),
                face_stats_mask: record.face_stats_mask_path.clone(),
            }),
            outputs: Some(outputs),
            correction: prepared.correction,
            layout: None,
            landscape: None,
            face_records: None,
            skip_reason: None,
            target_sha256: Some(target_sha256),
        })
    };
    run().unwrap_or_else(|e| {
        skip_entry(&record.record_id, EntryKind::Composed, seed, e.to_string())
    })
}

/// A face crop ready for pasting: the corrected-target crop, the aligned
/// source crop, and the shared mask, all at the placement size.
struct FaceCrop {
    styled: ImageBuffer,
    source: ImageBuffer,
    mask: MaskBuffer,
}

fn crop_and_scale_face(
    donor: &RecordInputs,
    config: &BuildConfig,
    canvas: (u32, u32),
    scale: f64,
) -> Result<FaceCrop> {
    let prepared = prepare_record(donor, config)?;
    let (bx, by, bw, bh) = prepared.mask.bounding_box()?;
    let styled = prepared.corrected.crop(bx, by, bw, bh)?;
    let source = prepared.source.crop(bx, by, bw, bh)?;
    let mask = prepared.mask.crop(bx, by, bw, bh)?;

    // Target height from the scale draw, aspect preserved, shrunk if the
    // width would not fit the canvas.
    let mut th = ((canvas.1 as f64 * scale).round() as u32).clamp(1, canvas.1);
    let mut tw = ((th as f64 * bw as f64 / bh as f64).round() as u32).max(1);
    if tw > canvas.0 {
        tw = canvas.0;
        th = ((tw as f64 * bh as f64 / bw as f64).round() as u32).clamp(1, canvas.1);
    }

    Ok(FaceCrop {
        styled: styled.resize(tw, th),
        source: source.resize(tw, th),
        mask: feather(&mask.resize(tw, th), config.output.feather_radius),
    })
}

fn process_cutface(
    base_id: &str,
    donors: &[RecordInputs],
    landscapes: &[PathBuf],
    config: &BuildConfig,
    out_root: &Path,
) -> ManifestEntry {
    let out_id = format!("{base_id}_cf0");
    let seed = derive_record_seed(config.seed, &out_id);
    let run = || -> Result<ManifestEntry> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let landscape_path = &landscapes[rng.random_range(0..landscapes.len())];
        let landscape = ImageBuffer::load(landscape_path)?;
        let landscape_stem = landscape_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let styled_landscape = stylize(
            &landscape,
            &config.backend,
            &format!("landscape_{landscape_stem}"),
        )?;

        let k = rng.random_range(config.cutface.k_min..=config.cutface.k_max);
        let donor_picks: Vec<&RecordInputs> = if k <= donors.len() {
            let mut idx: Vec<usize> = (0..donors.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(k);
            idx.into_iter().map(|i| &donors[i]).collect()
        } else {
            (0..k)
                .map(|_| &donors[rng.random_range(0..donors.len())])
                .collect()
        };

        let canvas = landscape.dimensions();
        let mut crops = Vec::with_capacity(k);
        for donor in &donor_picks {
            let scale = rng.random_range(config.cutface.scale_min..=config.cutface.scale_max);
            crops.push(crop_and_scale_face(donor, config, canvas, scale)?);
        }

        let dims: Vec<(u32, u32)> = crops.iter().map(|c| c.styled.dimensions()).collect();
        let plan_seed = rng.random::<u64>();
        let layout = plan_cutface(canvas, &dims, k, plan_seed, config.cutface.max_attempts)?;

        let styled_faces: Vec<(&ImageBuffer, &MaskBuffer)> =
            crops.iter().map(|c| (&c.styled, &c.mask)).collect();
        let source_faces: Vec<(&ImageBuffer, &MaskBuffer)> =
            crops.iter().map(|c| (&c.source, &c.mask)).collect();

        let (target, union_mask) = apply_cutface(&styled_landscape.image, &styled_faces, &layout)?;
        let source = pair_cutface_source(&landscape, &source_faces, &layout)?;

        let outputs = EntryOutputs {
            source: format!("src/{out_id}.png"),
            target: format!("tgt/{out_id}.png"),
            mask: format!("masks/{out_id}.png"),
        };
        source.save(&out_root.join(&outputs.source))?;
        target.save(&out_root.join(&outputs.target))?;
        union_mask.save(&out_root.join(&outputs.mask))?;
        let target_sha256 = sha256_file(&out_root.join(&outputs.target))?;

        Ok(ManifestEntry {
            record_id: out_id.clone(),
            kind: EntryKind::Cutface,
            seed,
            inputs: None,
            outputs: Some(outputs),
            correction: None,
            layout: Some(layout),
            landscape: Some(landscape_stem),
            face_records: Some(
                donor_picks
                    .iter()
                    .map(|d| d.record_id.clone())
                    .collect(),
            ),
            skip_reason: None,
            target_sha256: Some(target_sha256),
        })
    };
    run().unwrap_or_else(|e| skip_entry(&out_id, EntryKind::Cutface, seed, e.to_string()))
}

/// Run the full batch build and write `manifest.json` last, atomically.
///
/// Per-record failures become manifest entries with a `skip_reason`;
/// only an invalid config or an unwritable output root is fatal.
pub fn build_dataset(config: &BuildConfig, jobs: usize) -> Result<DatasetManifest> {
    config.validate()?;
    let mut records = config.resolve_records()?;
    if records.is_empty() {
        return Err(Error::InvalidConfig("input listing is empty".into()));
    }
    records.sort_by(|a, b| a.record_id.cmp(&b.record_id));

    let out_root = &config.output.dir;
    for sub in ["src", "tgt", "masks"] {
        let dir = out_root.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;

    // Stage 1: composed pairs, one per record.
    let mut composed: Vec<ManifestEntry> = pool.install(|| {
        use rayon::prelude::*;
        records
            .par_iter()
            .map(|r| process_composed(r, config, out_root))
            .collect()
    });
    composed.sort_by(|a, b| a.record_id.cmp(&b.record_id));

    // Stage 2: augmented pairs for floor(ratio * n) records, selected by
    // a seeded shuffle so the choice is independent of worker count.
    let augment_count = (config.cutface.ratio * records.len() as f64).floor() as usize;
    let mut cutface_entries: Vec<ManifestEntry> = Vec::new();
    if augment_count > 0 {
        let landscapes = list_landscapes(config)?;
        let donors: Vec<RecordInputs> = {
            let ok_ids: std::collections::BTreeSet<&str> = composed
                .iter()
                .filter(|e| e.skip_reason.is_none())
                .map(|e| e.record_id.as_str())
                .collect();
            records
                .iter()
                .filter(|r| ok_ids.contains(r.record_id.as_str()))
                .cloned()
                .collect()
        };
        let mut base_ids: Vec<String> = records.iter().map(|r| r.record_id.clone()).collect();
        let mut selector =
            ChaCha8Rng::seed_from_u64(derive_record_seed(config.seed, "__augment_selection__"));
        base_ids.shuffle(&mut selector);
        base_ids.truncate(augment_count);
        base_ids.sort();

        cutface_entries = pool.install(|| {
            use rayon::prelude::*;
            base_ids
                .par_iter()
                .map(|base| {
                    if donors.is_empty() {
                        let out_id = format!("{base}_cf0");
                        let seed = derive_record_seed(config.seed, &out_id);
                        skip_entry(
                            &out_id,
                            EntryKind::Cutface,
                            seed,
                            "no successfully composed records to donate faces".into(),
                        )
                    } else {
                        process_cutface(base, &donors, &landscapes, config, out_root)
                    }
                })
                .collect()
        });
        cutface_entries.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    }

    let mut entries = composed;
    entries.extend(cutface_entries);
    entries.sort_by(|a, b| a.record_id.cmp(&b.record_id));

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        global_seed: config.seed,
        paper_exact: config.paper_exact,
        backend: config.backend.clone(),
        backend_hash: config.backend.content_hash(),
        feather_radius: config.output.feather_radius,
        summary: DatasetManifest::compute_summary(&entries),
        entries,
    };
    manifest.write_atomic(&out_root.join("manifest.json"))?;
    Ok(manifest)
}

fn list_landscapes(config: &BuildConfig) -> Result<Vec<PathBuf>> {
    let dir = config
        .cutface
        .landscape_dir
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("cutface requires landscape_dir".into()))?;
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .map(|x| matches!(x.to_string_lossy().as_ref(), "png" | "jpg" | "jpeg"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no landscape images under {}",
            dir.display()
        )));
    }
    Ok(paths)
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// One problem found by [`validate_inputs`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub record_id: String,
    pub path: PathBuf,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub records_checked: usize,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

fn issue_kind(e: &Error) -> &'static str {
    match e {
        Error::DimensionMismatch { .. } => "DimensionMismatch",
        Error::DecodeError { .. } => "DecodeError",
        Error::EmptyRegion => "EmptyRegion",
        _ => "Error",
    }
}

/// Check that every record's files exist, decode, and agree on
/// dimensions. Reporting only; the exit policy belongs to the caller.
pub fn validate_inputs(config: &BuildConfig) -> Result<ValidationReport> {
    let records = config.resolve_records()?;
    let mut report = ValidationReport {
        records_checked: records.len(),
        ..Default::default()
    };
    for record in &records {
        let source = match ImageBuffer::load(&record.source_path) {
            Ok(img) => img,
            Err(e) => {
                report.issues.push(ValidationIssue {
                    record_id: record.record_id.clone(),
                    path: record.source_path.clone(),
                    kind: issue_kind(&e).into(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let dims = source.dimensions();
        match ImageBuffer::load(&record.head_styled_path) {
            Ok(head) if head.dimensions() != dims => {
                let e = Error::dims(dims, head.dimensions(), "head vs source");
                report.issues.push(ValidationIssue {
                    record_id: record.record_id.clone(),
                    path: record.head_styled_path.clone(),
                    kind: issue_kind(&e).into(),
                    message: e.to_string(),
                });
            }
            Ok(_) => {}
            Err(e) => report.issues.push(ValidationIssue {
                record_id: record.record_id.clone(),
                path: record.head_styled_path.clone(),
                kind: issue_kind(&e).into(),
                message: e.to_string(),
            }),
        }
        let mut check_mask = |path: &PathBuf| {
            if let Err(e) = load_mask(path, dims) {
                report.issues.push(ValidationIssue {
                    record_id: record.record_id.clone(),
                    path: path.clone(),
                    kind: issue_kind(&e).into(),
                    message: e.to_string(),
                });
            }
        };
        check_mask(&record.mask_path);
        if let Some(p) = &record.face_stats_mask_path {
            check_mask(p);
        }
    }
    if config.cutface.ratio > 0.0 {
        if let Err(e) = list_landscapes(config) {
            report.issues.push(ValidationIssue {
                record_id: "<landscapes>".into(),
                path: config
                    .cutface
                    .landscape_dir
                    .clone()
                    .unwrap_or_default(),
                kind: "InvalidConfig".into(),
                message: e.to_string(),
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_seeds_are_stable_and_distinct() {
        let a = derive_record_seed(7, "rec000");
        let b = derive_record_seed(7, "rec000");
        let c = derive_record_seed(7, "rec001");
        let d = derive_record_seed(8, "rec000");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}

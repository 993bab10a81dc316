//! The dataset manifest: one JSON document recording every emitted pair,
//! its provenance (seeds, correction deltas, layouts), and summary
//! counts. Written atomically after all outputs exist, so a killed run
//! never leaves a manifest claiming files that are not on disk.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::correct::{ApplyRegion, ChannelToggles};
use crate::cutface::CutFaceLayout;
use crate::error::{Error, Result};
use crate::stylize::BackendSpec;

/// Schema version this build writes and reads.
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Composed,
    Cutface,
}

/// Output files of one record, relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryOutputs {
    pub source: String,
    pub target: String,
    pub mask: String,
}

/// Input files a record was built from, recorded so the analysis pass
/// can recompute region statistics without the original config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryInputs {
    pub source: PathBuf,
    pub head_styled: PathBuf,
    pub mask: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face_stats_mask: Option<PathBuf>,
}

/// Correction settings applied to one record, spelled out explicitly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryCorrection {
    pub delta: [f64; 3],
    pub apply_region: ApplyRegion,
    pub channels: ChannelToggles,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub record_id: String,
    pub kind: EntryKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<EntryInputs>,
    /// Absent exactly when the record was skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<EntryOutputs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<EntryCorrection>,
    /// Augmented records: the placement plan and its ingredients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<CutFaceLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landscape: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face_records: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
    /// SHA-256 of the emitted target file, for cheap reproducibility
    /// comparisons between runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_sha256: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSummary {
    pub composed: usize,
    pub cutface: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub global_seed: u64,
    pub paper_exact: bool,
    pub backend: BackendSpec,
    pub backend_hash: String,
    pub feather_radius: u32,
    pub entries: Vec<ManifestEntry>,
    pub summary: ManifestSummary,
}

impl DatasetManifest {
    /// Tally the summary from the entries (the two must always agree).
    pub fn compute_summary(entries: &[ManifestEntry]) -> ManifestSummary {
        let mut s = ManifestSummary::default();
        for e in entries {
            if e.skip_reason.is_some() {
                s.skipped += 1;
            } else {
                match e.kind {
                    EntryKind::Composed => s.composed += 1,
                    EntryKind::Cutface => s.cutface += 1,
                }
            }
        }
        s
    }

    /// Serialize and write via a temp file + rename, after all outputs.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, json.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Load a manifest, rejecting schema versions this build cannot read.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Json {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        if manifest.version > MANIFEST_VERSION {
            return Err(Error::UnsupportedManifestVersion {
                found: manifest.version,
                supported: MANIFEST_VERSION,
            });
        }
        Ok(manifest)
    }

    /// Entries that produced output files.
    pub fn emitted(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.outputs.is_some())
    }
}

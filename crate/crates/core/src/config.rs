//! Build configuration: a JSON document with sections
//! `{inputs, backend, correction, cutface, analysis, output}`.
//!
//! Relative paths inside the file are resolved against the directory the
//! config was loaded from, so a config can travel with its fixture tree.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::correct::{ApplyRegion, ChannelToggles};
use crate::error::{Error, Result};
use crate::stylize::BackendSpec;

/// One input record: a source photo, the externally stylized head image
/// for it, and the head mask. All three must agree on dimensions.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RecordInputs {
    pub record_id: String,
    pub source_path: PathBuf,
    pub head_styled_path: PathBuf,
    pub mask_path: PathBuf,
    /// Optional tighter mask for the mean-color statistics (for example
    /// a skin-only mask); defaults to the head mask when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face_stats_mask_path: Option<PathBuf>,
}

/// Where records come from: an explicit list, or a directory containing
/// `source/`, `head/`, and `mask/` subdirectories with matching stems.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InputsConfig {
    #[serde(default)]
    pub records: Vec<RecordInputs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectionConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_apply_region")]
    pub apply_region: ApplyRegion,
    #[serde(default)]
    pub channels: ChannelToggles,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            apply_region: ApplyRegion::WholeImage,
            channels: ChannelToggles::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutFaceConfig {
    /// Fraction of records that additionally emit an augmented pair.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_k_min")]
    pub k_min: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Face height range as a fraction of canvas height.
    #[serde(default = "default_scale_min")]
    pub scale_min: f64,
    #[serde(default = "default_scale_max")]
    pub scale_max: f64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landscape_dir: Option<PathBuf>,
}

impl Default for CutFaceConfig {
    fn default() -> Self {
        Self {
            ratio: 0.25,
            k_min: 1,
            k_max: 3,
            scale_min: 0.25,
            scale_max: 0.5,
            max_attempts: 100,
            landscape_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisConfig {
    #[serde(default = "default_bins")]
    pub bins: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { bins: 64 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default = "default_feather_radius")]
    pub feather_radius: u32,
}

fn default_true() -> bool {
    true
}
fn default_apply_region() -> ApplyRegion {
    ApplyRegion::WholeImage
}
fn default_ratio() -> f64 {
    0.25
}
fn default_k_min() -> usize {
    1
}
fn default_k_max() -> usize {
    3
}
fn default_scale_min() -> f64 {
    0.25
}
fn default_scale_max() -> f64 {
    0.5
}
fn default_max_attempts() -> u32 {
    100
}
fn default_bins() -> usize {
    64
}
fn default_feather_radius() -> u32 {
    3
}

/// The full build configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildConfig {
    pub inputs: InputsConfig,
    pub backend: BackendSpec,
    #[serde(default)]
    pub correction: CorrectionConfig,
    #[serde(default)]
    pub cutface: CutFaceConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
    /// Exact mode: hard mask edges (feather 0), whole-image correction,
    /// no augmentation. Recorded in the manifest.
    #[serde(default)]
    pub paper_exact: bool,
}

impl BuildConfig {
    /// Parse a JSON config file, resolving relative paths against the
    /// config's own directory, and validate it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: BuildConfig =
            serde_json::from_str(&text).map_err(|e| Error::Json {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.rebase_paths(base);
        config.validate()?;
        Ok(config)
    }

    /// Apply the exact-mode overrides.
    pub fn apply_paper_exact(&mut self) {
        self.paper_exact = true;
        self.output.feather_radius = 0;
        self.correction.apply_region = ApplyRegion::WholeImage;
        self.cutface.ratio = 0.0;
    }

    fn rebase_paths(&mut self, base: &Path) {
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for r in &mut self.inputs.records {
            rebase(&mut r.source_path);
            rebase(&mut r.head_styled_path);
            rebase(&mut r.mask_path);
            if let Some(p) = &mut r.face_stats_mask_path {
                rebase(p);
            }
        }
        if let Some(d) = &mut self.inputs.records_dir {
            rebase(d);
        }
        if let Some(d) = &mut self.cutface.landscape_dir {
            rebase(d);
        }
        if let BackendSpec::PrecomputedDir { dir } = &mut self.backend {
            rebase(dir);
        }
        rebase(&mut self.output.dir);
    }

    pub fn validate(&self) -> Result<()> {
        self.backend.validate()?;
        if self.inputs.records.is_empty() && self.inputs.records_dir.is_none() {
            return Err(Error::InvalidConfig(
                "inputs must provide records or records_dir".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.cutface.ratio) {
            return Err(Error::InvalidConfig(format!(
                "cutface.ratio must be in [0,1], got {}",
                self.cutface.ratio
            )));
        }
        if self.cutface.k_min > self.cutface.k_max {
            return Err(Error::InvalidConfig(format!(
                "cutface.k_min {} exceeds k_max {}",
                self.cutface.k_min, self.cutface.k_max
            )));
        }
        if self.cutface.ratio > 0.0 && self.cutface.landscape_dir.is_none() {
            return Err(Error::InvalidConfig(
                "cutface.ratio > 0 requires cutface.landscape_dir".into(),
            ));
        }
        if !(self.cutface.scale_min > 0.0
            && self.cutface.scale_min <= self.cutface.scale_max
            && self.cutface.scale_max <= 1.0)
        {
            return Err(Error::InvalidConfig(format!(
                "cutface scale range [{}, {}] must satisfy 0 < min <= max <= 1",
                self.cutface.scale_min, self.cutface.scale_max
            )));
        }
        if self.cutface.max_attempts < 1 {
            return Err(Error::InvalidConfig(
                "cutface.max_attempts must be >= 1".into(),
            ));
        }
        if self.analysis.bins < 2 {
            return Err(Error::InvalidConfig("analysis.bins must be >= 2".into()));
        }
        if self.output.dir.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("output.dir is empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.inputs.records {
            if !seen.insert(r.record_id.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate record_id '{}'",
                    r.record_id
                )));
            }
        }
        Ok(())
    }

    /// Materialize the record list: the explicit list when given,
    /// otherwise a scan of `records_dir` sorted by stem.
    pub fn resolve_records(&self) -> Result<Vec<RecordInputs>> {
        if !self.inputs.records.is_empty() {
            return Ok(self.inputs.records.clone());
        }
        let dir = self
            .inputs
            .records_dir
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("no records and no records_dir".into()))?;
        let source_dir = dir.join("source");
        let mut records = Vec::new();
        let entries = std::fs::read_dir(&source_dir).map_err(|e| Error::io(&source_dir, e))?;
        let mut stems: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let p = e.path();
                if p.extension().map(|x| x == "png").unwrap_or(false) {
                    p.file_stem().map(|s| s.to_string_lossy().into_owned())
                } else {
                    None
                }
            })
            .collect();
        stems.sort();
        for stem in stems {
            let stats = dir.join("stats_mask").join(format!("{stem}.png"));
            records.push(RecordInputs {
                record_id: stem.clone(),
                source_path: source_dir.join(format!("{stem}.png")),
                head_styled_path: dir.join("head").join(format!("{stem}.png")),
                mask_path: dir.join("mask").join(format!("{stem}.png")),
                face_stats_mask_path: stats.exists().then_some(stats),
            });
        }
        if records.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "no .png records found under {}",
                source_dir.display()
            )));
        }
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "inputs": { "records": [{
                "record_id": "a",
                "source_path": "source/a.png",
                "head_styled_path": "head/a.png",
                "mask_path": "mask/a.png"
            }]},
            "backend": { "kind": "identity" },
            "cutface": { "ratio": 0.0 },
            "output": { "dir": "out" }
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, minimal_json()).unwrap();
        let cfg = BuildConfig::load(&path).unwrap();
        assert_eq!(cfg.output.feather_radius, 3);
        assert_eq!(cfg.cutface.k_max, 3);
        assert_eq!(cfg.analysis.bins, 64);
        assert!(cfg.correction.enabled);
        assert_eq!(cfg.correction.apply_region, ApplyRegion::WholeImage);
        assert!(!cfg.paper_exact);
        // Relative paths were rebased onto the config directory.
        assert!(cfg.inputs.records[0].source_path.starts_with(dir.path()));
        assert!(cfg.output.dir.starts_with(dir.path()));
    }

    #[test]
    fn invalid_ratio_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        let json = minimal_json().replace(
            r#""cutface": { "ratio": 0.0 },"#,
            r#""cutface": { "ratio": 1.5 },"#,
        );
        std::fs::write(&path, json).unwrap();
        assert!(matches!(
            BuildConfig::load(&path),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn ratio_without_landscapes_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, minimal_json()).unwrap();
        let mut cfg = BuildConfig::load(&path).unwrap();
        cfg.cutface.landscape_dir = None;
        cfg.cutface.ratio = 0.5;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        cfg.cutface.ratio = 0.0;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn duplicate_record_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        let json = minimal_json().replace(
            r#""mask_path": "mask/a.png"
            }]"#,
            r#""mask_path": "mask/a.png"
            }, {
                "record_id": "a",
                "source_path": "source/a.png",
                "head_styled_path": "head/a.png",
                "mask_path": "mask/a.png"
            }]"#,
        );
        std::fs::write(&path, json).unwrap();
        assert!(matches!(
            BuildConfig::load(&path),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn paper_exact_overrides_extensions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, minimal_json()).unwrap();
        let mut cfg = BuildConfig::load(&path).unwrap();
        cfg.apply_paper_exact();
        assert!(cfg.paper_exact);
        assert_eq!(cfg.output.feather_radius, 0);
        assert_eq!(cfg.cutface.ratio, 0.0);
        assert_eq!(cfg.correction.apply_region, ApplyRegion::WholeImage);
    }

    #[test]
    fn malformed_json_reports_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, "{not json").unwrap();
        assert!(matches!(BuildConfig::load(&path), Err(Error::Json { .. })));
    }
}

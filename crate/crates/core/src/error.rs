//! Error types shared across the pipeline.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the dataset pipeline.
///
/// Record-level errors (everything except `Io` and `InvalidConfig`) are
/// recoverable: the batch executor records them as a skip reason and moves
/// on to the next record.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two rasters that must share dimensions do not.
    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {actual_w}x{actual_h}{}", context_suffix(context))]
    DimensionMismatch {
        expected_w: u32,
        expected_h: u32,
        actual_w: u32,
        actual_h: u32,
        context: String,
    },

    /// A raster file could not be read or decoded.
    #[error("failed to decode {path}: {message}")]
    DecodeError { path: PathBuf, message: String },

    /// A masked operation was asked to run over a mask with zero total weight.
    #[error("empty region: mask weights sum to zero")]
    EmptyRegion,

    /// Synthetic mask parameters describe an impossible shape.
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// Two histograms being compared do not share channel or bin layout.
    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),

    /// Rejection sampling could not place all requested rectangles.
    #[error("placement infeasible after {attempts} attempts ({restarts} restarts)")]
    PlacementInfeasible { attempts: u64, restarts: u32 },

    /// An external stylization command failed. The captured stderr rides
    /// along so it lands in the manifest's skip reason.
    #[error("external backend failure: {reason}{}", stderr_suffix(stderr))]
    ExternalBackendFailure { reason: String, stderr: String },

    /// A precomputed-backend file keyed by the record id is absent.
    #[error("missing precomputed stylization for '{record_id}' at {path}")]
    MissingPrecomputed { record_id: String, path: PathBuf },

    /// Configuration rejected at parse/validation time. Fatal.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Manifest schema version not understood by this build.
    #[error("unsupported manifest version {found} (this build reads version {supported})")]
    UnsupportedManifestVersion { found: u32, supported: u32 },

    /// Filesystem error. Fatal when it hits the output root.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// JSON (config or manifest) parse error.
    #[error("json error in {path}: {message}")]
    Json { path: PathBuf, message: String },
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

fn stderr_suffix(stderr: &str) -> String {
    let trimmed = stderr.trim();
    if trimmed.is_empty() {
        String::new()
    } else {
        format!("; stderr: {trimmed}")
    }
}

impl Error {
    pub(crate) fn dims(
        expected: (u32, u32),
        actual: (u32, u32),
        context: impl Into<String>,
    ) -> Self {
        Error::DimensionMismatch {
            expected_w: expected.0,
            expected_h: expected.1,
            actual_w: actual.0,
            actual_h: actual.1,
            context: context.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

//! toonpair-core: builds paired photo→cartoon training datasets.
//!
//! The pipeline composes each training target from two independently
//! stylized parts — an externally synthesized head and a stylized
//! background — under a head mask, shifts the head's Lab color by the
//! difference of mean facial colors so skin tones survive stylization,
//! and optionally augments the corpus by pasting face crops onto
//! stylized landscapes without overlap. A distribution-analysis pass
//! quantifies how far each synthesized region drifted from the source
//! pixels.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`buffer`], [`color`]: rasters in `[0,1]` and sRGB ↔ Lab math
//! - [`mask`]: head masks, feathering, coverage
//! - [`stylize`]: background stylization backends (built-in and external)
//! - [`compose`]: head/background composition
//! - [`correct`]: mean-color estimation and the Lab shift
//! - [`cutface`]: non-overlapping face-paste augmentation
//! - [`analysis`]: histograms, earth mover's distance, dataset report
//! - [`pipeline`]: the batch executor and input validation
//! - [`config`], [`manifest`]: the JSON surfaces
//! - [`fixtures`]: hermetic synthetic corpus generator

pub mod analysis;
pub mod buffer;
pub mod color;
pub mod compose;
pub mod config;
pub mod correct;
pub mod cutface;
pub mod error;
pub mod fixtures;
pub mod manifest;
pub mod mask;
pub mod pipeline;
pub mod stylize;

pub use analysis::{
    channel_histogram, distribution_report, emd_1d, Channel, ChannelHistogram, Comparison,
    DistributionReport, Region,
};
pub use buffer::ImageBuffer;
pub use color::{image_to_lab, lab_to_image, lab_to_srgb, srgb_to_lab, LabColor, LabPlane};
pub use compose::{compose_fullbody, CompositionInputs};
pub use config::{BuildConfig, RecordInputs};
pub use correct::{
    correct_color, masked_mean_lab, ApplyRegion, ChannelToggles, CorrectionParams, RegionRole,
    RegionStats,
};
pub use cutface::{
    apply_cutface, pair_cutface_source, plan_cutface, CutFaceLayout, PlacementRect,
};
pub use error::{Error, Result};
pub use fixtures::{generate_fixture_corpus, FixtureCorpus};
pub use manifest::{DatasetManifest, EntryKind, ManifestEntry};
pub use mask::{
    coverage_fraction, feather, load_mask, resolve_mask, synthetic_head_mask, MaskBuffer,
    MaskSource,
};
pub use pipeline::{build_dataset, validate_inputs, ValidationReport};
pub use stylize::{cartoonize, run_external, stylize, BackendSpec, StylizedResult};

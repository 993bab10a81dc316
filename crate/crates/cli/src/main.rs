//! Command-line surface for the dataset pipeline.
//!
//! Exit codes: 0 success, 1 runtime failure (including strict-mode
//! validation findings), 2 usage errors.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use toonpair_core::analysis::ALL_COMPARISONS;
use toonpair_core::config::BuildConfig;
use toonpair_core::correct::{ApplyRegion as CoreApplyRegion, ChannelToggles};
use toonpair_core::fixtures::generate_fixture_corpus;
use toonpair_core::manifest::DatasetManifest;
use toonpair_core::pipeline::{build_dataset, validate_inputs};
use toonpair_core::stylize::cartoonize;
use toonpair_core::{distribution_report, BackendSpec, ImageBuffer};

#[derive(Parser)]
#[command(
    name = "toonpair",
    version,
    about = "Build paired photo/cartoon training datasets: head-aware composition, \
             Lab color correction, face-paste augmentation, and distribution analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the batch pipeline and write pairs plus a manifest.
    Build(Box<BuildArgs>),
    /// Check that every input record exists, decodes, and agrees on dimensions.
    Validate(ValidateArgs),
    /// Measure pixel-distribution drift over a built dataset.
    Analyze(AnalyzeArgs),
    /// Run the built-in cartoonizer over a single image (backend debugging).
    Cartoonize(CartoonizeArgs),
    /// Generate the hermetic synthetic fixture corpus.
    GenFixtures(GenFixturesArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ApplyRegionArg {
    WholeImage,
    MaskedHead,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKindArg {
    Identity,
    Cartoonize,
    External,
    Precomputed,
}

#[derive(Args)]
struct BuildArgs {
    /// JSON config file; flags below override individual fields.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed (overrides seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; outputs are identical for any value.
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
    /// Exact composition mode: feather radius 0, whole-image correction,
    /// no augmentation.
    #[arg(long)]
    paper_exact: bool,
    /// Records directory override (source/, head/, mask/ convention).
    #[arg(long)]
    records_dir: Option<PathBuf>,
    /// Mask feather radius in pixels.
    #[arg(long)]
    feather_radius: Option<u32>,
    /// Disable mean-color correction.
    #[arg(long)]
    no_correction: bool,
    /// Where the correction shift applies.
    #[arg(long, value_enum)]
    apply_region: Option<ApplyRegionArg>,
    /// Lab channels the correction shifts, as a subset of "Lab".
    #[arg(long)]
    channels: Option<String>,
    /// Fraction of records that also emit an augmented pair.
    #[arg(long)]
    cutface_ratio: Option<f64>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Face height range as a fraction of canvas height.
    #[arg(long)]
    scale_min: Option<f64>,
    #[arg(long)]
    scale_max: Option<f64>,
    /// Placement attempts per face before restarting the layout.
    #[arg(long)]
    max_attempts: Option<u32>,
    /// Landscape pool directory for augmentation.
    #[arg(long)]
    landscape_dir: Option<PathBuf>,
    /// Histogram bins for the analysis section.
    #[arg(long)]
    bins: Option<usize>,
    /// Backend kind override; parameters come from the flags below.
    #[arg(long, value_enum)]
    backend: Option<BackendKindArg>,
    /// Cartoonize: per-channel quantization levels.
    #[arg(long)]
    quant_levels: Option<u32>,
    /// Cartoonize: normalized Sobel threshold above which pixels darken.
    #[arg(long)]
    edge_threshold: Option<f64>,
    /// Cartoonize: selective-mean smoothing passes.
    #[arg(long)]
    smooth_iterations: Option<u32>,
    /// External backend: command template containing {in} and {out}.
    #[arg(long)]
    backend_template: Option<String>,
    /// External backend: max concurrent subprocesses.
    #[arg(long)]
    max_concurrent: Option<usize>,
    /// Precomputed backend: directory of <record_id>.png results.
    #[arg(long)]
    precomputed_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Exit nonzero if any record is invalid.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    records_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Manifest of a built dataset.
    #[arg(long)]
    manifest: PathBuf,
    /// Report directory (CSV tables, summary.json, plots/).
    #[arg(long, default_value = "report")]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    bins: usize,
    /// Directory holding the manifest's relative output paths; defaults
    /// to the manifest's parent directory.
    #[arg(long)]
    dataset_root: Option<PathBuf>,
}

#[derive(Args)]
struct CartoonizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 8)]
    quant_levels: u32,
    #[arg(long, default_value_t = 0.3)]
    edge_threshold: f64,
    #[arg(long, default_value_t = 3)]
    smooth_iterations: u32,
}

#[derive(Args)]
struct GenFixturesArgs {
    /// Corpus root directory to create.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    records: usize,
    #[arg(long, default_value_t = 96)]
    size: u32,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn parse_channels(spec: &str) -> anyhow::Result<ChannelToggles> {
    let mut toggles = ChannelToggles {
        l: false,
        a: false,
        b: false,
    };
    for ch in spec.chars() {
        match ch {
            'L' => toggles.l = true,
            'a' => toggles.a = true,
            'b' => toggles.b = true,
            other => bail!("unknown Lab channel '{other}' (expected a subset of \"Lab\")"),
        }
    }
    if !(toggles.l || toggles.a || toggles.b) {
        bail!("--channels must name at least one of L, a, b");
    }
    Ok(toggles)
}

fn build_backend_override(args: &BuildArgs) -> anyhow::Result<Option<BackendSpec>> {
    let Some(kind) = args.backend else {
        return Ok(None);
    };
    let spec = match kind {
        BackendKindArg::Identity => BackendSpec::Identity,
        BackendKindArg::Cartoonize => BackendSpec::Cartoonize {
            quant_levels: args.quant_levels.unwrap_or(8),
            edge_threshold: args.edge_threshold.unwrap_or(0.3),
            smooth_iterations: args.smooth_iterations.unwrap_or(3),
        },
        BackendKindArg::External => BackendSpec::ExternalCommand {
            template: args
                .backend_template
                .clone()
                .context("--backend external requires --backend-template")?,
            max_concurrent: args.max_concurrent,
        },
        BackendKindArg::Precomputed => BackendSpec::PrecomputedDir {
            dir: args
                .precomputed_dir
                .clone()
                .context("--backend precomputed requires --precomputed-dir")?,
        },
    };
    Ok(Some(spec))
}

fn apply_build_overrides(config: &mut BuildConfig, args: &BuildArgs) -> anyhow::Result<()> {
    if let Some(out) = &args.out {
        config.output.dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(dir) = &args.records_dir {
        config.inputs.records_dir = Some(dir.clone());
        config.inputs.records.clear();
    }
    if let Some(r) = args.feather_radius {
        config.output.feather_radius = r;
    }
    if args.no_correction {
        config.correction.enabled = false;
    }
    if let Some(region) = args.apply_region {
        config.correction.apply_region = match region {
            ApplyRegionArg::WholeImage => CoreApplyRegion::WholeImage,
            ApplyRegionArg::MaskedHead => CoreApplyRegion::MaskedHead,
        };
    }
    if let Some(spec) = &args.channels {
        config.correction.channels = parse_channels(spec)?;
    }
    if let Some(ratio) = args.cutface_ratio {
        config.cutface.ratio = ratio;
    }
    if let Some(k) = args.k_min {
        config.cutface.k_min = k;
    }
    if let Some(k) = args.k_max {
        config.cutface.k_max = k;
    }
    if let Some(s) = args.scale_min {
        config.cutface.scale_min = s;
    }
    if let Some(s) = args.scale_max {
        config.cutface.scale_max = s;
    }
    if let Some(a) = args.max_attempts {
        config.cutface.max_attempts = a;
    }
    if let Some(dir) = &args.landscape_dir {
        config.cutface.landscape_dir = Some(dir.clone());
    }
    if let Some(bins) = args.bins {
        config.analysis.bins = bins;
    }
    if let Some(backend) = build_backend_override(args)? {
        config.backend = backend;
    }
    if args.paper_exact {
        config.apply_paper_exact();
    }
    config.validate().context("config rejected after flag overrides")?;
    Ok(())
}

fn cmd_build(args: BuildArgs) -> anyhow::Result<u8> {
    let mut config = BuildConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    apply_build_overrides(&mut config, &args)?;
    let manifest = build_dataset(&config, args.jobs)?;
    println!(
        "built {} composed + {} augmented pairs ({} skipped) -> {}",
        manifest.summary.composed,
        manifest.summary.cutface,
        manifest.summary.skipped,
        config.output.dir.join("manifest.json").display()
    );
    for entry in manifest.entries.iter().filter(|e| e.skip_reason.is_some()) {
        eprintln!(
            "  skipped {}: {}",
            entry.record_id,
            entry.skip_reason.as_deref().unwrap_or("")
        );
    }
    Ok(0)
}

fn cmd_validate(args: ValidateArgs) -> anyhow::Result<u8> {
    let mut config = BuildConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(dir) = &args.records_dir {
        config.inputs.records_dir = Some(dir.clone());
        config.inputs.records.clear();
    }
    let report = validate_inputs(&config)?;
    if report.is_clean() {
        println!("{} records valid", report.records_checked);
        return Ok(0);
    }
    for issue in &report.issues {
        println!(
            "{}: {} at {}: {}",
            issue.record_id,
            issue.kind,
            issue.path.display(),
            issue.message
        );
    }
    println!(
        "{} issue(s) across {} records",
        report.issues.len(),
        report.records_checked
    );
    Ok(if args.strict { 1 } else { 0 })
}

fn cmd_analyze(args: AnalyzeArgs) -> anyhow::Result<u8> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let dataset_root = args.dataset_root.clone().unwrap_or_else(|| {
        args.manifest
            .parent()
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| PathBuf::from("."))
    });
    let report = distribution_report(&manifest, &dataset_root, &args.out, args.bins)?;

    println!("analyzed {} composed records", report.records_analyzed);
    println!("emd per comparison and channel:");
    for comparison in ALL_COMPARISONS {
        let mut row = format!("  {:<18}", comparison.as_str());
        for channel in toonpair_core::analysis::ALL_CHANNELS {
            let value = report
                .emd_for(comparison, channel)
                .map(|v| format!("{}={:.4}", channel.as_str(), v))
                .unwrap_or_else(|| format!("{}=n/a", channel.as_str()));
            row.push_str(&format!(" {value}"));
        }
        println!("{row}");
    }
    println!(
        "mean head coverage {:.3}; background fraction {:.3} (reference portrait corpora: {:.3})",
        report.mean_head_coverage,
        report.mean_background_fraction,
        report.reference_background_fraction
    );
    if !report.gaps.is_empty() {
        println!("gaps:");
        for gap in &report.gaps {
            println!("  {gap}");
        }
    }
    println!("report written to {}", args.out.display());
    Ok(0)
}

fn cmd_cartoonize(args: CartoonizeArgs) -> anyhow::Result<u8> {
    let img = ImageBuffer::load(&args.input)?;
    let out = cartoonize(
        &img,
        args.quant_levels,
        args.edge_threshold,
        args.smooth_iterations,
    );
    out.save(&args.output)?;
    println!(
        "cartoonized {} -> {} (q={}, t={}, smooth={})",
        args.input.display(),
        args.output.display(),
        args.quant_levels,
        args.edge_threshold,
        args.smooth_iterations
    );
    Ok(0)
}

fn cmd_gen_fixtures(args: GenFixturesArgs) -> anyhow::Result<u8> {
    let corpus = generate_fixture_corpus(&args.out, args.records, args.size, args.seed)?;
    println!(
        "generated {} records at {}x{} under {} (config: {})",
        corpus.record_ids.len(),
        args.size,
        args.size,
        corpus.root.display(),
        corpus.config_path.display()
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(args) => cmd_build(*args),
        Command::Validate(args) => cmd_validate(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Cartoonize(args) => cmd_cartoonize(args),
        Command::GenFixtures(args) => cmd_gen_fixtures(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

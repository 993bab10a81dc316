//! Pixel-distribution analysis: mask-weighted channel histograms, a 1-D
//! earth mover's distance between them, and the dataset-level report
//! comparing source regions against their synthesized counterparts.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::buffer::ImageBuffer;
use crate::color::{image_to_lab, LabColor};
use crate::correct::{masked_mean_lab, RegionRole};
use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, EntryKind};
use crate::mask::{coverage_fraction, MaskBuffer};

/// Background share of the frame in a typical portrait corpus; reported
/// next to measured coverage for orientation, never asserted.
pub const REFERENCE_BACKGROUND_FRACTION: f64 = 0.356;

/// Which per-pixel quantity a histogram bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "R")]
    Red,
    #[serde(rename = "G")]
    Green,
    #[serde(rename = "B")]
    Blue,
    #[serde(rename = "L")]
    LabL,
    #[serde(rename = "a")]
    LabA,
    #[serde(rename = "b")]
    LabB,
}

pub const ALL_CHANNELS: [Channel; 6] = [
    Channel::Red,
    Channel::Green,
    Channel::Blue,
    Channel::LabL,
    Channel::LabA,
    Channel::LabB,
];

pub const SRGB_CHANNELS: [Channel; 3] = [Channel::Red, Channel::Green, Channel::Blue];

impl Channel {
    /// Fixed binning range for the channel.
    pub fn range(self) -> (f64, f64) {
        match self {
            Channel::Red | Channel::Green | Channel::Blue => (0.0, 1.0),
            Channel::LabL => (0.0, 100.0),
            Channel::LabA | Channel::LabB => (-128.0, 127.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Red => "R",
            Channel::Green => "G",
            Channel::Blue => "B",
            Channel::LabL => "L",
            Channel::LabA => "a",
            Channel::LabB => "b",
        }
    }

    fn of_pixel(self, rgb: [f32; 3], lab: LabColor) -> f64 {
        match self {
            Channel::Red => rgb[0] as f64,
            Channel::Green => rgb[1] as f64,
            Channel::Blue => rgb[2] as f64,
            Channel::LabL => lab.l,
            Channel::LabA => lab.a,
            Channel::LabB => lab.b,
        }
    }
}

/// Which part of the frame the histogram was accumulated over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Head,
    Background,
    Full,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Head => "head",
            Region::Background => "background",
            Region::Full => "full",
        }
    }
}

/// Mask-weighted histogram with uniform bins over the channel's range.
/// Mass is conserved: `sum(counts) == total_weight`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelHistogram {
    pub channel: Channel,
    pub region: Region,
    pub bins: usize,
    pub counts: Vec<f64>,
    pub total_weight: f64,
}

impl ChannelHistogram {
    pub fn empty(channel: Channel, region: Region, bins: usize) -> Self {
        Self {
            channel,
            region,
            bins,
            counts: vec![0.0; bins],
            total_weight: 0.0,
        }
    }

    /// Merge another histogram by addition (accumulation is associative
    /// and commutative, so partial histograms can be combined freely).
    pub fn merge(&mut self, other: &ChannelHistogram) -> Result<()> {
        if self.channel != other.channel || self.bins != other.bins {
            return Err(Error::ChannelMismatch(format!(
                "cannot merge {}/{} bins={} with {}/{} bins={}",
                self.channel.as_str(),
                self.region.as_str(),
                self.bins,
                other.channel.as_str(),
                other.region.as_str(),
                other.bins
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_weight += other.total_weight;
        Ok(())
    }

    pub fn bin_edges(&self, index: usize) -> (f64, f64) {
        let (lo, hi) = self.channel.range();
        let width = (hi - lo) / self.bins as f64;
        (lo + index as f64 * width, lo + (index + 1) as f64 * width)
    }
}

#[inline]
fn bin_index(value: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let t = ((value - lo) / (hi - lo)).clamp(0.0, 1.0);
    ((t * bins as f64) as usize).min(bins - 1)
}

/// Accumulate a mask-weighted histogram of one channel.
pub fn channel_histogram(
    img: &ImageBuffer,
    mask: &MaskBuffer,
    channel: Channel,
    bins: usize,
    region: Region,
) -> Result<ChannelHistogram> {
    if bins < 2 {
        return Err(Error::InvalidConfig(format!(
            "histogram bins must be >= 2, got {bins}"
        )));
    }
    if mask.dimensions() != img.dimensions() {
        return Err(Error::dims(
            img.dimensions(),
            mask.dimensions(),
            "histogram mask vs image",
        ));
    }
    let needs_lab = matches!(channel, Channel::LabL | Channel::LabA | Channel::LabB);
    let lab = needs_lab.then(|| image_to_lab(img));
    let (lo, hi) = channel.range();
    let mut hist = ChannelHistogram::empty(channel, region, bins);
    let (w, h) = img.dimensions();
    for y in 0..h {
        for x in 0..w {
            let m = mask.get(x, y) as f64;
            if m <= 0.0 {
                continue;
            }
            let value = channel.of_pixel(
                img.pixel(x, y),
                lab.as_ref()
                    .map(|p| p.get(x, y))
                    .unwrap_or(LabColor::new(0.0, 0.0, 0.0)),
            );
            hist.counts[bin_index(value, lo, hi, bins)] += m;
            hist.total_weight += m;
        }
    }
    if hist.total_weight <= 0.0 {
        return Err(Error::EmptyRegion);
    }
    Ok(hist)
}

/// 1-D earth mover's distance between two histograms on the same grid:
/// mean absolute CDF difference of the unit-normalized masses, scaled by
/// the channel range.
pub fn emd_1d(a: &ChannelHistogram, b: &ChannelHistogram) -> Result<f64> {
    if a.channel != b.channel || a.bins != b.bins {
        return Err(Error::ChannelMismatch(format!(
            "emd between {} ({} bins) and {} ({} bins)",
            a.channel.as_str(),
            a.bins,
            b.channel.as_str(),
            b.bins
        )));
    }
    if a.total_weight <= 0.0 || b.total_weight <= 0.0 {
        return Err(Error::EmptyRegion);
    }
    let (lo, hi) = a.channel.range();
    let mut cdf_a = 0.0f64;
    let mut cdf_b = 0.0f64;
    let mut acc = 0.0f64;
    for i in 0..a.bins {
        cdf_a += a.counts[i] / a.total_weight;
        cdf_b += b.counts[i] / b.total_weight;
        acc += (cdf_a - cdf_b).abs();
    }
    Ok(acc / a.bins as f64 * (hi - lo))
}

// ---------------------------------------------------------------------------
// Dataset-level report
// ---------------------------------------------------------------------------

/// The three distribution comparisons the report quantifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Source background vs composed-target background.
    Background,
    /// Source head vs corrected head (the head region of the target).
    HeadCorrected,
    /// Source head vs uncorrected head (the stylized head input).
    HeadUncorrected,
}

impl Comparison {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparison::Background => "background",
            Comparison::HeadCorrected => "head_corrected",
            Comparison::HeadUncorrected => "head_uncorrected",
        }
    }
}

pub const ALL_COMPARISONS: [Comparison; 3] = [
    Comparison::Background,
    Comparison::HeadCorrected,
    Comparison::HeadUncorrected,
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmdRow {
    pub comparison: Comparison,
    pub channel: Channel,
    pub emd: f64,
}

/// Weighted running mean of Lab values across records.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct MeanLab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
    pub weight: f64,
}

impl MeanLab {
    fn add(&mut self, mean: LabColor, weight: f64) {
        self.l += mean.l * weight;
        self.a += mean.a * weight;
        self.b += mean.b * weight;
        self.weight += weight;
    }

    fn finalize(mut self) -> Self {
        if self.weight > 0.0 {
            self.l /= self.weight;
            self.a /= self.weight;
            self.b /= self.weight;
        }
        self
    }
}

/// Everything the analysis pass measured, also serialized to
/// `summary.json` in the report directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionReport {
    pub records_analyzed: usize,
    pub bins: usize,
    pub emd: Vec<EmdRow>,
    pub mean_lab_source_head: MeanLab,
    pub mean_lab_corrected_head: MeanLab,
    pub mean_lab_uncorrected_head: MeanLab,
    /// Mean head-mask coverage over the corpus, and its complement.
    pub mean_head_coverage: f64,
    pub mean_background_fraction: f64,
    /// Orientation constant for portrait corpora; not a pass/fail bound.
    pub reference_background_fraction: f64,
    /// Records whose regions could not be measured, with the reason.
    pub gaps: Vec<String>,
}

impl DistributionReport {
    pub fn emd_for(&self, comparison: Comparison, channel: Channel) -> Option<f64> {
        self.emd
            .iter()
            .find(|r| r.comparison == comparison && r.channel == channel)
            .map(|r| r.emd)
    }
}

struct HistogramSet {
    /// Keyed `[channel][region]` over head/background/full.
    source: Vec<ChannelHistogram>,
    target: Vec<ChannelHistogram>,
    head_input: Vec<ChannelHistogram>,
}

/// Build the distribution report for every emitted composed record of a
/// dataset, write CSV tables and plot rasters under `out_dir`, and
/// return the measured summary.
///
/// `dataset_root` is the directory holding the manifest's relative
/// output paths (usually the manifest's parent directory).
pub fn distribution_report(
    manifest: &DatasetManifest,
    dataset_root: &Path,
    out_dir: &Path,
    bins: usize,
) -> Result<DistributionReport> {
    if bins < 2 {
        return Err(Error::InvalidConfig(format!(
            "report bins must be >= 2, got {bins}"
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut gaps: Vec<String> = Vec::new();
    let mut sets: Option<HistogramSet> = None;
    let mut mean_src_head = MeanLab::default();
    let mut mean_cor_head = MeanLab::default();
    let mut mean_unc_head = MeanLab::default();
    let mut coverage_sum = 0.0f64;
    let mut records = 0usize;

    for entry in manifest.emitted() {
        if entry.kind != EntryKind::Composed {
            continue;
        }
        let outputs = entry.outputs.as_ref().expect("emitted entries have outputs");
        let inputs = match &entry.inputs {
            Some(i) => i,
            None => {
                gaps.push(format!("{}: no recorded inputs", entry.record_id));
                continue;
            }
        };
        let source = ImageBuffer::load(&inputs.source)?;
        let target = ImageBuffer::load(&dataset_root.join(&outputs.target))?;
        let head_input = ImageBuffer::load(&inputs.head_styled)?;
        let mask = crate::mask::load_mask(
            &dataset_root.join(&outputs.mask),
            source.dimensions(),
        )?;
        if target.dimensions() != source.dimensions()
            || head_input.dimensions() != source.dimensions()
        {
            gaps.push(format!("{}: dimension mismatch", entry.record_id));
            continue;
        }
        let background = invert_mask(&mask);

        let had_head = mask.data().iter().any(|&v| v > 0.0);
        let had_background = background.data().iter().any(|&v| v > 0.0);
        if !had_head {
            gaps.push(format!("{}: empty head region", entry.record_id));
        }
        if !had_background {
            gaps.push(format!("{}: empty background region", entry.record_id));
        }

        let sets = sets.get_or_insert_with(|| HistogramSet {
            source: make_histograms(bins),
            target: make_histograms(bins),
            head_input: make_histograms(bins),
        });
        accumulate(&mut sets.source, &source, &mask, &background, bins)?;
        accumulate(&mut sets.target, &target, &mask, &background, bins)?;
        accumulate(&mut sets.head_input, &head_input, &mask, &background, bins)?;

        if had_head {
            let s = masked_mean_lab(&source, &mask, RegionRole::SourceFace)?;
            mean_src_head.add(s.mean, s.pixel_weight);
            let c = masked_mean_lab(&target, &mask, RegionRole::TargetFace)?;
            mean_cor_head.add(c.mean, c.pixel_weight);
            let u = masked_mean_lab(&head_input, &mask, RegionRole::TargetFace)?;
            mean_unc_head.add(u.mean, u.pixel_weight);
        }
        coverage_sum += coverage_fraction(&mask);
        records += 1;
    }

    let sets = sets.ok_or_else(|| {
        Error::InvalidConfig("no emitted composed records to analyze".into())
    })?;

    // Pairwise EMD table.
    let mut emd_rows = Vec::new();
    for channel in ALL_CHANNELS {
        let pairs = [
            (
                Comparison::Background,
                find(&sets.source, channel, Region::Background),
                find(&sets.target, channel, Region::Background),
            ),
            (
                Comparison::HeadCorrected,
                find(&sets.source, channel, Region::Head),
                find(&sets.target, channel, Region::Head),
            ),
            (
                Comparison::HeadUncorrected,
                find(&sets.source, channel, Region::Head),
                find(&sets.head_input, channel, Region::Head),
            ),
        ];
        for (comparison, a, b) in pairs {
            match emd_1d(a, b) {
                Ok(emd) => emd_rows.push(EmdRow {
                    comparison,
                    channel,
                    emd,
                }),
                Err(Error::EmptyRegion) => gaps.push(format!(
                    "{}/{}: region empty across corpus",
                    comparison.as_str(),
                    channel.as_str()
                )),
                Err(e) => return Err(e),
            }
        }
    }

    // CSV tables.
    write_histogram_csv(&out_dir.join("hist_source.csv"), &sets.source)?;
    write_histogram_csv(&out_dir.join("hist_target.csv"), &sets.target)?;
    write_histogram_csv(&out_dir.join("hist_head_input.csv"), &sets.head_input)?;
    write_emd_csv(&out_dir.join("emd.csv"), &emd_rows)?;

    // Plot rasters: one overlay per comparison and channel.
    let plot_dir = out_dir.join("plots");
    std::fs::create_dir_all(&plot_dir).map_err(|e| Error::io(&plot_dir, e))?;
    for channel in ALL_CHANNELS {
        let plots = [
            (Comparison::Background, &sets.source, &sets.target, Region::Background),
            (Comparison::HeadCorrected, &sets.source, &sets.target, Region::Head),
            (Comparison::HeadUncorrected, &sets.source, &sets.head_input, Region::Head),
        ];
        for (comparison, left, right, region) in plots {
            let img = render_histogram_pair(
                find(left, channel, region),
                find(right, channel, region),
            );
            let name = format!("{}_{}.png", comparison.as_str(), channel.as_str());
            img.save(&plot_dir.join(name))?;
        }
    }

    let report = DistributionReport {
        records_analyzed: records,
        bins,
        emd: emd_rows,
        mean_lab_source_head: mean_src_head.finalize(),
        mean_lab_corrected_head: mean_cor_head.finalize(),
        mean_lab_uncorrected_head: mean_unc_head.finalize(),
        mean_head_coverage: if records > 0 {
            coverage_sum / records as f64
        } else {
            0.0
        },
        mean_background_fraction: if records > 0 {
            1.0 - coverage_sum / records as f64
        } else {
            0.0
        },
        reference_background_fraction: REFERENCE_BACKGROUND_FRACTION,
        gaps,
    };

    let summary_path = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Json {
        path: summary_path.clone(),
        message: e.to_string(),
    })?;
    std::fs::write(&summary_path, json).map_err(|e| Error::io(&summary_path, e))?;

    Ok(report)
}

fn invert_mask(mask: &MaskBuffer) -> MaskBuffer {
    MaskBuffer::from_fn(mask.width(), mask.height(), |x, y| 1.0 - mask.get(x, y))
}

fn make_histograms(bins: usize) -> Vec<ChannelHistogram> {
    let mut v = Vec::new();
    for channel in ALL_CHANNELS {
        for region in [Region::Head, Region::Background, Region::Full] {
            v.push(ChannelHistogram::empty(channel, region, bins));
        }
    }
    v
}

fn find(set: &[ChannelHistogram], channel: Channel, region: Region) -> &ChannelHistogram {
    set.iter()
        .find(|h| h.channel == channel && h.region == region)
        .expect("histogram set covers all channel/region pairs")
}

fn accumulate(
    set: &mut [ChannelHistogram],
    img: &ImageBuffer,
    head: &MaskBuffer,
    background: &MaskBuffer,
    bins: usize,
) -> Result<()> {
    let full = MaskBuffer::filled(img.width(), img.height(), 1.0);
    for hist in set.iter_mut() {
        let mask = match hist.region {
            Region::Head => head,
            Region::Background => background,
            Region::Full => &full,
        };
        match channel_histogram(img, mask, hist.channel, bins, hist.region) {
            Ok(h) => hist.merge(&h)?,
            Err(Error::EmptyRegion) => {} // recorded as a gap by the caller
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn write_histogram_csv(path: &Path, set: &[ChannelHistogram]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let emit = |w: &mut dyn Write| -> std::io::Result<()> {
        writeln!(w, "channel,region,bin_index,bin_left,bin_right,weight")?;
        for hist in set {
            for (i, count) in hist.counts.iter().enumerate() {
                let (left, right) = hist.bin_edges(i);
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    hist.channel.as_str(),
                    hist.region.as_str(),
                    i,
                    left,
                    right,
                    count
                )?;
            }
        }
        Ok(())
    };
    emit(&mut w).map_err(|e| Error::io(path, e))
}

fn write_emd_csv(path: &Path, rows: &[EmdRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let emit = |w: &mut dyn Write| -> std::io::Result<()> {
        writeln!(w, "comparison,channel,emd")?;
        for row in rows {
            writeln!(
                w,
                "{},{},{}",
                row.comparison.as_str(),
                row.channel.as_str(),
                row.emd
            )?;
        }
        Ok(())
    };
    emit(&mut w).map_err(|e| Error::io(path, e))
}

/// Render two histograms as overlaid translucent bars: left series red,
/// right series blue, overlap purple, on a white canvas.
fn render_histogram_pair(a: &ChannelHistogram, b: &ChannelHistogram) -> ImageBuffer {
    const BAR_W: u32 = 6;
    const HEIGHT: u32 = 200;
    const MARGIN: u32 = 10;
    let bins = a.bins as u32;
    let width = bins * BAR_W + 2 * MARGIN;
    let height = HEIGHT + 2 * MARGIN;

    let density = |h: &ChannelHistogram, i: usize| {
        if h.total_weight > 0.0 {
            h.counts[i] / h.total_weight
        } else {
            0.0
        }
    };
    let mut peak = 0.0f64;
    for i in 0..a.bins {
        peak = peak.max(density(a, i)).max(density(b, i));
    }
    if peak <= 0.0 {
        peak = 1.0;
    }

    ImageBuffer::from_fn(width, height, |x, y| {
        if x < MARGIN || x >= width - MARGIN || y < MARGIN || y >= height - MARGIN {
            return [1.0, 1.0, 1.0];
        }
        let bin = ((x - MARGIN) / BAR_W) as usize;
        let level = (height - MARGIN - 1 - y) as f64 / HEIGHT as f64;
        let in_a = level <= density(a, bin) / peak;
        let in_b = level <= density(b, bin) / peak;
        match (in_a, in_b) {
            (true, true) => [0.55, 0.25, 0.55],
            (true, false) => [0.85, 0.35, 0.35],
            (false, true) => [0.35, 0.35, 0.85],
            (false, false) => [1.0, 1.0, 1.0],
        }
    })
}

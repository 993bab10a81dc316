//! Background stylization backends.
//!
//! Everything that turns a photo into a stylized raster enters the
//! pipeline through [`stylize`]: the identity passthrough, a built-in
//! deterministic cartoonizer (so the full pipeline runs hermetically),
//! a subprocess adapter for real stylization models, and a directory of
//! precomputed results keyed by record id.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Condvar, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};

/// Luma difference below which a neighbor joins the selective mean.
const SMOOTH_THRESHOLD: f32 = 0.1;
/// Multiplier applied to pixels flagged as edges.
const EDGE_DARKEN: f32 = 0.25;
/// Quantization levels at or above this are a no-op (8-bit sources
/// already carry at most 256 levels per channel).
const QUANT_DISABLED_AT: u32 = 256;

/// Which stylization backend to run, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    /// Pass the input through untouched.
    Identity,
    /// Built-in cartoonizer: selective-mean smoothing, edge darkening,
    /// then uniform per-channel quantization to `quant_levels` centers.
    Cartoonize {
        quant_levels: u32,
        edge_threshold: f64,
        #[serde(default = "default_smooth_iterations")]
        smooth_iterations: u32,
    },
    /// Subprocess adapter. The template must contain `{in}` and `{out}`.
    ExternalCommand {
        template: String,
        #[serde(default)]
        max_concurrent: Option<usize>,
    },
    /// Directory of already-stylized rasters named `<record_id>.png`.
    PrecomputedDir { dir: PathBuf },
}

fn default_smooth_iterations() -> u32 {
    3
}

impl BackendSpec {
    /// Parameter validation, run at config parse time.
    pub fn validate(&self) -> Result<()> {
        match self {
            BackendSpec::Identity => Ok(()),
            BackendSpec::Cartoonize {
                quant_levels,
                edge_threshold,
                ..
            } => {
                if *quant_levels < 1 {
                    return Err(Error::InvalidConfig(
                        "cartoonize quant_levels must be >= 1".into(),
                    ));
                }
                if !(0.0..=1.0).contains(edge_threshold) {
                    return Err(Error::InvalidConfig(format!(
                        "cartoonize edge_threshold must be in [0,1], got {edge_threshold}"
                    )));
                }
                Ok(())
            }
            BackendSpec::ExternalCommand { template, .. } => {
                if !template.contains("{in}") || !template.contains("{out}") {
                    return Err(Error::InvalidConfig(
                        "external command template must contain {in} and {out}".into(),
                    ));
                }
                Ok(())
            }
            BackendSpec::PrecomputedDir { dir } => {
                if dir.as_os_str().is_empty() {
                    return Err(Error::InvalidConfig("precomputed dir is empty".into()));
                }
                Ok(())
            }
        }
    }

    /// Short human-readable tag recorded next to each output.
    pub fn id(&self) -> String {
        match self {
            BackendSpec::Identity => "identity".into(),
            BackendSpec::Cartoonize {
                quant_levels,
                edge_threshold,
                smooth_iterations,
            } => format!("cartoonize(q={quant_levels},t={edge_threshold},s={smooth_iterations})"),
            BackendSpec::ExternalCommand { .. } => "external_command".into(),
            BackendSpec::PrecomputedDir { .. } => "precomputed_dir".into(),
        }
    }

    /// Stable digest of the backend parameters.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("backend spec serializes");
        hex_digest(&[json.as_bytes()])
    }
}

/// A stylized image together with how it was produced.
#[derive(Debug, Clone)]
pub struct StylizedResult {
    pub image: ImageBuffer,
    pub backend_id: String,
    /// Digest of input pixels + backend parameters + record key.
    pub content_hash: String,
}

/// Run the configured backend over one image.
///
/// `record_id` keys precomputed lookups and names temp files for the
/// subprocess adapter; built-in backends ignore it.
pub fn stylize(img: &ImageBuffer, spec: &BackendSpec, record_id: &str) -> Result<StylizedResult> {
    let image = match spec {
        BackendSpec::Identity => img.clone(),
        BackendSpec::Cartoonize {
            quant_levels,
            edge_threshold,
            smooth_iterations,
        } => cartoonize(img, *quant_levels, *edge_threshold, *smooth_iterations),
        BackendSpec::ExternalCommand {
            template,
            max_concurrent,
        } => {
            let _permit = subprocess_gate(*max_concurrent);
            let dir = tempfile::Builder::new()
                .prefix("stylize-")
                .tempdir()
                .map_err(|e| Error::io(std::env::temp_dir(), e))?;
            let input_path = dir.path().join(format!("{record_id}_in.png"));
            let output_path = dir.path().join(format!("{record_id}_out.png"));
            run_external(template, img, &input_path, &output_path)?
        }
        BackendSpec::PrecomputedDir { dir } => {
            let path = dir.join(format!("{record_id}.png"));
            if !path.exists() {
                return Err(Error::MissingPrecomputed {
                    record_id: record_id.to_string(),
                    path,
                });
            }
            let loaded = ImageBuffer::load(&path)?;
            if loaded.dimensions() != img.dimensions() {
                return Err(Error::dims(
                    img.dimensions(),
                    loaded.dimensions(),
                    format!("precomputed {}", path.display()),
                ));
            }
            loaded
        }
    };

    let mut hash_parts: Vec<Vec<u8>> = vec![
        img.to_bytes_rgb8(),
        serde_json::to_string(spec).expect("backend spec serializes").into_bytes(),
    ];
    if matches!(
        spec,
        BackendSpec::PrecomputedDir { .. } | BackendSpec::ExternalCommand { .. }
    ) {
        hash_parts.push(record_id.as_bytes().to_vec());
    }
    let content_hash = hex_digest(&hash_parts.iter().map(|p| p.as_slice()).collect::<Vec<_>>());

    Ok(StylizedResult {
        image,
        backend_id: spec.id(),
        content_hash,
    })
}

/// Write `img` to `input_path`, run the command template with `{in}` and
/// `{out}` substituted, then read and validate the output raster.
pub fn run_external(
    template: &str,
    img: &ImageBuffer,
    input_path: &Path,
    output_path: &Path,
) -> Result<ImageBuffer> {
    if !template.contains("{in}") || !template.contains("{out}") {
        return Err(Error::InvalidConfig(
            "external command template must contain {in} and {out}".into(),
        ));
    }
    img.save(input_path)?;
    let cmd = template
        .replace("{in}", &input_path.to_string_lossy())
        .replace("{out}", &output_path.to_string_lossy());
    let output = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .output()
        .map_err(|e| Error::ExternalBackendFailure {
            reason: format!("failed to spawn `{cmd}`: {e}"),
            stderr: String::new(),
        })?;
    if !output.status.success() {
        return Err(Error::ExternalBackendFailure {
            reason: format!("`{cmd}` exited with {}", output.status),
            stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        });
    }
    if !output_path.exists() {
        return Err(Error::ExternalBackendFailure {
            reason: format!("`{cmd}` produced no output at {}", output_path.display()),
            stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        });
    }
    let result = ImageBuffer::load(output_path)?;
    if result.dimensions() != img.dimensions() {
        return Err(Error::ExternalBackendFailure {
            reason: format!(
                "output dimensions {}x{} do not match input {}x{}",
                result.width(),
                result.height(),
                img.width(),
                img.height()
            ),
            stderr: String::new(),
        });
    }
    Ok(result)
}

/// Built-in cartoonizer. Stages, in order: selective-mean smoothing,
/// Sobel edge darkening, uniform quantization. Quantization runs last so
/// the per-channel palette never exceeds `quant_levels`.
pub fn cartoonize(
    img: &ImageBuffer,
    quant_levels: u32,
    edge_threshold: f64,
    smooth_iterations: u32,
) -> ImageBuffer {
    let smoothing_off = smooth_iterations == 0;
    let edges_off = edge_threshold >= 1.0;
    let quant_off = quant_levels >= QUANT_DISABLED_AT;
    if smoothing_off && edges_off && quant_off {
        return img.clone();
    }

    let mut work = img.clone();
    for _ in 0..smooth_iterations {
        work = selective_mean_3x3(&work);
    }
    if !edges_off {
        let mags = sobel_magnitude(&work);
        let (w, h) = work.dimensions();
        for y in 0..h {
            for x in 0..w {
                if mags[(y * w + x) as usize] > edge_threshold {
                    let p = work.pixel(x, y);
                    work.set_pixel(x, y, [p[0] * EDGE_DARKEN, p[1] * EDGE_DARKEN, p[2] * EDGE_DARKEN]);
                }
            }
        }
    }
    if !quant_off {
        let (w, h) = work.dimensions();
        for y in 0..h {
            for x in 0..w {
                let p = work.pixel(x, y);
                work.set_pixel(
                    x,
                    y,
                    [
                        quantize_channel(p[0], quant_levels),
                        quantize_channel(p[1], quant_levels),
                        quantize_channel(p[2], quant_levels),
                    ],
                );
            }
        }
    }
    work
}

/// Snap a value to the nearest of `q` level centers at `(i + 0.5) / q`.
#[inline]
pub fn quantize_channel(v: f32, q: u32) -> f32 {
    let idx = ((v * q as f32).floor() as u32).min(q - 1);
    (idx as f32 + 0.5) / q as f32
}

/// One pass of 3×3 selective-mean smoothing: neighbors whose luma sits
/// within [`SMOOTH_THRESHOLD`] of the center contribute to the average;
/// others are treated as belonging to a different region.
fn selective_mean_3x3(img: &ImageBuffer) -> ImageBuffer {
    let (w, h) = img.dimensions();
    ImageBuffer::from_fn(w, h, |x, y| {
        let center_luma = img.luma(x, y);
        let mut acc = [0.0f32; 3];
        let mut n = 0u32;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let nx = x as i64 + dx;
                let ny = y as i64 + dy;
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let (nx, ny) = (nx as u32, ny as u32);
                if (img.luma(nx, ny) - center_luma).abs() > SMOOTH_THRESHOLD {
                    continue;
                }
                let p = img.pixel(nx, ny);
                acc[0] += p[0];
                acc[1] += p[1];
                acc[2] += p[2];
                n += 1;
            }
        }
        [acc[0] / n as f32, acc[1] / n as f32, acc[2] / n as f32]
    })
}

/// Per-pixel Sobel gradient magnitude of the luma, normalized into
/// `[0,1]` (divided by the kernel's maximum response 4√2), with
/// replicated borders.
fn sobel_magnitude(img: &ImageBuffer) -> Vec<f64> {
    let (w, h) = img.dimensions();
    let luma_at = |x: i64, y: i64| -> f64 {
        let cx = x.clamp(0, w as i64 - 1) as u32;
        let cy = y.clamp(0, h as i64 - 1) as u32;
        img.luma(cx, cy) as f64
    };
    let norm = 4.0 * std::f64::consts::SQRT_2;
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let gx = -luma_at(x - 1, y - 1) + luma_at(x + 1, y - 1)
                - 2.0 * luma_at(x - 1, y)
                + 2.0 * luma_at(x + 1, y)
                - luma_at(x - 1, y + 1)
                + luma_at(x + 1, y + 1);
            let gy = -luma_at(x - 1, y - 1) - 2.0 * luma_at(x, y - 1) - luma_at(x + 1, y - 1)
                + luma_at(x - 1, y + 1)
                + 2.0 * luma_at(x, y + 1)
                + luma_at(x + 1, y + 1);
            out.push((gx * gx + gy * gy).sqrt() / norm);
        }
    }
    out
}

/// Counting semaphore capping concurrent external subprocesses.
struct SubprocessGate {
    limit: usize,
    state: Mutex<usize>,
    cv: Condvar,
}

static GATE: OnceLock<SubprocessGate> = OnceLock::new();

struct GatePermit;

impl Drop for GatePermit {
    fn drop(&mut self) {
        if let Some(gate) = GATE.get() {
            let mut in_use = gate.state.lock().unwrap();
            *in_use -= 1;
            gate.cv.notify_one();
        }
    }
}

/// Acquire a slot in the process-wide subprocess cap. The cap is sized on
/// first use from the backend's `max_concurrent`, defaulting to the
/// logical core count.
fn subprocess_gate(max_concurrent: Option<usize>) -> GatePermit {
    let gate = GATE.get_or_init(|| SubprocessGate {
        limit: max_concurrent
            .unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map(|n| n.get())
                    .unwrap_or(4)
            })
            .max(1),
        state: Mutex::new(0),
        cv: Condvar::new(),
    });
    let mut in_use = gate.state.lock().unwrap();
    while *in_use >= gate.limit {
        in_use = gate.cv.wait(in_use).unwrap();
    }
    *in_use += 1;
    GatePermit
}

fn hex_digest(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p);
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(w: u32, h: u32) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, |x, y| {
            [
                x as f32 / (w - 1).max(1) as f32,
                y as f32 / (h - 1).max(1) as f32,
                ((x + y) % 7) as f32 / 6.0,
            ]
        })
    }

    #[test]
    fn identity_backend_returns_input_bit_exactly() {
        let img = gradient_image(13, 9);
        let r = stylize(&img, &BackendSpec::Identity, "r0").unwrap();
        assert_eq!(r.image, img);
        assert_eq!(r.backend_id, "identity");
    }

    #[test]
    fn degenerate_cartoonize_parameters_are_identity() {
        let img = gradient_image(11, 11);
        let spec = BackendSpec::Cartoonize {
            quant_levels: 256,
            edge_threshold: 1.0,
            smooth_iterations: 0,
        };
        let r = stylize(&img, &spec, "r0").unwrap();
        assert_eq!(r.image, img);
    }

    #[test]
    fn two_level_quantizer_snaps_gray_to_level_center() {
        // 0.4 lies in the lower half of a 2-level quantizer whose centers
        // are 0.25 and 0.75.
        let img = ImageBuffer::filled(5, 5, [0.4; 3]);
        let spec = BackendSpec::Cartoonize {
            quant_levels: 2,
            edge_threshold: 1.0,
            smooth_iterations: 0,
        };
        let out = stylize(&img, &spec, "r0").unwrap().image;
        for v in out.data() {
            assert!((v - 0.25).abs() <= 1e-6);
        }
        assert!((quantize_channel(0.4, 2) - 0.25).abs() < 1e-7);
        assert!((quantize_channel(0.6, 2) - 0.75).abs() < 1e-7);
        assert!((quantize_channel(1.0, 2) - 0.75).abs() < 1e-7);
    }

    #[test]
    fn quantized_palette_never_exceeds_level_count() {
        let img = gradient_image(32, 32);
        for q in [2u32, 3, 5, 8] {
            let out = cartoonize(&img, q, 0.2, 3);
            for c in 0..3 {
                let mut levels: Vec<u32> = out
                    .data()
                    .iter()
                    .skip(c)
                    .step_by(3)
                    .map(|v| (v * 1_000_000.0).round() as u32)
                    .collect();
                levels.sort_unstable();
                levels.dedup();
                assert!(
                    levels.len() <= q as usize,
                    "palette {} exceeds q={q}",
                    levels.len()
                );
            }
        }
    }

    #[test]
    fn smoothing_flattens_speckle_noise() {
        // Speckle 0.08 above a flat field sits within the luma threshold,
        // so the selective mean averages it down.
        let mut img = ImageBuffer::filled(9, 9, [0.5; 3]);
        img.set_pixel(4, 4, [0.58, 0.58, 0.58]);
        let out = cartoonize(&img, 256, 1.0, 1);
        assert!(out.pixel(4, 4)[0] < 0.58 - 1e-4);
        // A strong step edge survives untouched (up to float averaging).
        let edge = ImageBuffer::from_fn(9, 9, |x, _| if x < 4 { [0.1; 3] } else { [0.9; 3] });
        let out = cartoonize(&edge, 256, 1.0, 3);
        assert!((out.pixel(3, 4)[0] - 0.1).abs() <= 1e-6);
        assert!((out.pixel(4, 4)[0] - 0.9).abs() <= 1e-6);
    }

    #[test]
    fn edges_darken_only_above_threshold() {
        let edge = ImageBuffer::from_fn(12, 12, |x, _| if x < 6 { [0.1; 3] } else { [0.9; 3] });
        let out = cartoonize(&edge, 256, 0.3, 0);
        // Pixels at the step get darkened, flat areas stay.
        assert_eq!(out.pixel(0, 6), [0.1, 0.1, 0.1]);
        assert_eq!(out.pixel(11, 6), [0.9, 0.9, 0.9]);
        let at_edge = out.pixel(6, 6);
        assert!(at_edge[0] < 0.9 * 0.5, "edge pixel not darkened: {at_edge:?}");
        // Threshold 1.0 disables darkening entirely.
        let no_edges = cartoonize(&edge, 256, 1.0, 0);
        assert_eq!(no_edges, edge);
    }

    #[test]
    fn cartoonize_is_deterministic_and_hash_stable() {
        let img = gradient_image(16, 16);
        let spec = BackendSpec::Cartoonize {
            quant_levels: 6,
            edge_threshold: 0.25,
            smooth_iterations: 2,
        };
        let a = stylize(&img, &spec, "x").unwrap();
        let b = stylize(&img, &spec, "y").unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.content_hash, b.content_hash);
        let other = stylize(
            &img,
            &BackendSpec::Cartoonize {
                quant_levels: 7,
                edge_threshold: 0.25,
                smooth_iterations: 2,
            },
            "x",
        )
        .unwrap();
        assert_ne!(a.content_hash, other.content_hash);
    }

    #[test]
    fn external_copy_command_round_trips() {
        let img = gradient_image(8, 6);
        let spec = BackendSpec::ExternalCommand {
            template: "cp {in} {out}".into(),
            max_concurrent: Some(2),
        };
        let r = stylize(&img, &spec, "rec1").unwrap();
        // Through one 8-bit file write, so only quantization error.
        for (a, b) in img.data().iter().zip(r.image.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn external_failure_modes_are_reported() {
        let img = gradient_image(4, 4);
        let nonzero = BackendSpec::ExternalCommand {
            template: "cp {in} {out} && exit 3".into(),
            max_concurrent: None,
        };
        match stylize(&img, &nonzero, "r").unwrap_err() {
            Error::ExternalBackendFailure { reason, .. } => {
                assert!(reason.contains("exited"), "{reason}")
            }
            other => panic!("unexpected error {other:?}"),
        }

        let no_output = BackendSpec::ExternalCommand {
            template: "test -f {in} && true {out}".into(),
            max_concurrent: None,
        };
        match stylize(&img, &no_output, "r").unwrap_err() {
            Error::ExternalBackendFailure { reason, .. } => {
                assert!(reason.contains("no output"), "{reason}")
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn external_wrong_dimensions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let wrong = dir.path().join("wrong.png");
        ImageBuffer::filled(3, 3, [0.5; 3]).save(&wrong).unwrap();
        let img = gradient_image(4, 4);
        let spec = BackendSpec::ExternalCommand {
            template: format!("test -f {{in}} && cp {} {{out}}", wrong.display()),
            max_concurrent: None,
        };
        match stylize(&img, &spec, "r").unwrap_err() {
            Error::ExternalBackendFailure { reason, .. } => {
                assert!(reason.contains("dimensions"), "{reason}")
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn precomputed_dir_loads_by_record_id() {
        let dir = tempfile::tempdir().unwrap();
        let styled = gradient_image(6, 6);
        styled.save(&dir.path().join("rec7.png")).unwrap();
        let spec = BackendSpec::PrecomputedDir {
            dir: dir.path().to_path_buf(),
        };
        let input = ImageBuffer::filled(6, 6, [0.2; 3]);
        let r = stylize(&input, &spec, "rec7").unwrap();
        assert_eq!(r.image.dimensions(), (6, 6));
        let err = stylize(&input, &spec, "rec8").unwrap_err();
        assert!(matches!(err, Error::MissingPrecomputed { .. }));
    }

    #[test]
    fn template_without_placeholders_is_invalid() {
        let spec = BackendSpec::ExternalCommand {
            template: "cp a b".into(),
            max_concurrent: None,
        };
        assert!(matches!(spec.validate(), Err(Error::InvalidConfig(_))));
        assert!(BackendSpec::Identity.validate().is_ok());
        assert!(matches!(
            BackendSpec::Cartoonize {
                quant_levels: 0,
                edge_threshold: 0.5,
                smooth_iterations: 3
            }
            .validate(),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            BackendSpec::Cartoonize {
                quant_levels: 4,
                edge_threshold: 1.5,
                smooth_iterations: 3
            }
            .validate(),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn backend_spec_serde_round_trips() {
        let specs = [
            BackendSpec::Identity,
            BackendSpec::Cartoonize {
                quant_levels: 8,
                edge_threshold: 0.3,
                smooth_iterations: 3,
            },
            BackendSpec::ExternalCommand {
                template: "cp {in} {out}".into(),
                max_concurrent: Some(4),
            },
            BackendSpec::PrecomputedDir {
                dir: PathBuf::from("/tmp/pre"),
            },
        ];
        for spec in specs {
            let json = serde_json::to_string(&spec).unwrap();
            let back: BackendSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(spec, back);
        }
        let parsed: BackendSpec =
            serde_json::from_str(r#"{"kind":"cartoonize","quant_levels":8,"edge_threshold":0.3}"#)
                .unwrap();
        assert_eq!(
            parsed,
            BackendSpec::Cartoonize {
                quant_levels: 8,
                edge_threshold: 0.3,
                smooth_iterations: 3
            }
        );
    }
}

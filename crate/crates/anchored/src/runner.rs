//! Runs the pipeline and writes its output directory:
//!
//! ```text
//! scene.ply  layout.json  report.json
//! frames/inpaint_##.png  frames/refine_##.png
//! eval/render_##.png     depth/##.png
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use anchored_core::adapters::AdapterSet;
use anchored_core::gaussian::GaussianScene;
use anchored_core::geometry::{CameraIntrinsics, CameraPose};
use anchored_core::pipeline::{run_full, Clock, PipelineInputs, RunReport};
use anchored_core::RgbImage;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::{imageio, ply};

/// Wall-clock milliseconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct StdClock(Instant);

impl StdClock {
    pub fn start() -> Self {
        StdClock(Instant::now())
    }
}

impl Clock for StdClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureRecord {
    pub stage: String,
    pub error: String,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ReportFile<'a> {
    #[serde(flatten)]
    pub run: &'a RunReport,
    /// The config file exactly as given, or null.
    pub config: &'a serde_json::Value,
    pub resolved_config: &'a RunConfig,
    /// `sha256:` digest of scene.ply.
    pub scene_digest: Option<String>,
    pub failure: Option<FailureRecord>,
    pub total_ms: f64,
}

pub struct GenerateJob {
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    pub config: RunConfig,
    pub raw_config: serde_json::Value,
}

#[derive(Debug)]
pub struct GenerateSummary {
    pub report: RunReport,
    pub scene_digest: String,
}

/// A run that stopped early; report.json was still written.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {error}")]
pub struct GenerateFailure {
    pub stage: String,
    pub error: Error,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_images(dir: &Path, prefix: &str, images: &[RgbImage]) -> Result<()> {
    for (i, img) in images.iter().enumerate() {
        imageio::write_rgb(&dir.join(format!("{prefix}{i:02}.png")), img)?;
    }
    Ok(())
}

fn report_file<'a>(
    job: &'a GenerateJob,
    run: &'a RunReport,
    scene_digest: Option<String>,
    failure: Option<FailureRecord>,
    total_ms: f64,
) -> ReportFile<'a> {
    ReportFile { run, config: &job.raw_config, resolved_config: &job.config, scene_digest, failure, total_ms }
}

pub fn generate(job: &GenerateJob, adapters: &mut AdapterSet) -> std::result::Result<GenerateSummary, GenerateFailure> {
    let clock = StdClock::start();
    let fail = |stage: &str, error: Error| GenerateFailure { stage: stage.into(), error };
    create_dir(&job.output).map_err(|e| fail("output", e))?;
    let image = match &job.input {
        Some(p) => Some(imageio::read_rgb(p).map_err(|e| fail("input", e))?),
        None => None,
    };
    let inputs = PipelineInputs { image, layout: None };
    let report_path = job.output.join("report.json");
    let file = |run, digest, failure| report_file(job, run, digest, failure, clock.now_ms());

    let out = match run_full(&inputs, &job.config.pipeline, adapters, &clock) {
        Ok(out) => out,
        Err(f) => {
            let record = FailureRecord { stage: f.stage.into(), error: f.error.to_string() };
            write_json(&report_path, &file(&f.report, None, Some(record))).map_err(|e| fail("output", e))?;
            return Err(fail(f.stage, f.error.into()));
        }
    };

    let write_all = || -> Result<String> {
        let bytes = ply::encode(&out.scene);
        std::fs::write(job.output.join("scene.ply"), &bytes).map_err(|e| Error::io(job.output.join("scene.ply"), e))?;
        write_json(&job.output.join("layout.json"), &out.layout)?;
        let frames = job.output.join("frames");
        create_dir(&frames)?;
        write_images(&frames, "inpaint_", &out.inpaint_images)?;
        write_images(&frames, "refine_", &out.refine_images)?;
        let eval = job.output.join("eval");
        create_dir(&eval)?;
        write_images(&eval, "render_", &out.eval_renders)?;
        let depth = job.output.join("depth");
        create_dir(&depth)?;
        for (i, d) in out.eval_depths.iter().enumerate() {
            imageio::write_depth_mm(&depth.join(format!("{i:02}.png")), d)?;
        }
        Ok(sha256_hex(&bytes))
    };
    let digest = write_all().map_err(|e| fail("output", e))?;
    write_json(&report_path, &file(&out.report, Some(digest.clone()), None)).map_err(|e| fail("output", e))?;
    Ok(GenerateSummary { report: out.report, scene_digest: digest })
}

/// Renders `n` views at uniformly spaced yaws around `center`, composited over black.
pub fn render_views(scene: &GaussianScene, center: [f64; 3], n: usize, k: &CameraIntrinsics) -> Vec<RgbImage> {
    (0..n)
        .map(|i| {
            let pose = CameraPose::looking_at_yaw(center, i as f64 * 360.0 / n as f64);
            scene.render(k, &pose).composite
        })
        .collect()
}

/// PNG files in `dir`, sorted by name.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

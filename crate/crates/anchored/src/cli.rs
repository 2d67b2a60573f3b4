//! `anchored` command line. Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anchored_core::pipeline::{evaluate, Resolution, EVAL_FRAMES};
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{self, AdapterMode, Overrides, RunConfig};
use crate::error::{Error, Result};
use crate::runner::{self, GenerateJob};
use crate::{imageio, ply};

#[derive(Debug, Parser)]
#[command(name = "anchored", version, about = "Single-view to 360° indoor scene synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct AdapterArgs {
    /// JSON config file with `pipeline` and `adapter` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub adapter: Option<AdapterMode>,
    /// Model-service base URL (overrides ANCHORED_MODEL_ENDPOINT and the config).
    #[arg(long)]
    pub endpoint: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a scene from an input view (or a text prompt) and write the output directory.
    Generate {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Text-only generation prompt, used without --input.
        #[arg(long)]
        prompt: Option<String>,
        #[command(flatten)]
        adapters: AdapterArgs,
    },
    /// Render uniformly spaced 360° views of a PLY scene.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        views: u32,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(1..))]
        size: u32,
        #[arg(long, default_value_t = 90.0)]
        fov: f64,
        /// Camera centre `x,y,z`; defaults to the room centre from a sibling layout.json, else the origin.
        #[arg(long, value_delimiter = ',', num_args = 3, allow_negative_numbers = true)]
        center: Option<Vec<f64>>,
    },
    /// Score 15 rendered frames for appearance consistency and geometric plausibility.
    Eval {
        #[arg(long)]
        renders: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        adapters: AdapterArgs,
    },
}

#[derive(Debug, Serialize)]
struct Scores {
    appearance: f64,
    geometry: f64,
}

fn load_config(args: &AdapterArgs, flags: Overrides) -> Result<(RunConfig, serde_json::Value)> {
    let (cfg, raw) = match &args.config {
        Some(p) => config::load(p)?,
        None => (RunConfig::default(), serde_json::Value::Null),
    };
    let flags = Overrides { adapter: args.adapter, endpoint: args.endpoint.clone(), ..flags };
    Ok((config::resolve(cfg, &flags, config::env_endpoint())?, raw))
}

fn room_center(scene: &Path) -> Result<[f64; 3]> {
    let layout = scene.with_file_name("layout.json");
    if !layout.exists() {
        return Ok([0.0; 3]);
    }
    let text = std::fs::read_to_string(&layout).map_err(|e| Error::io(&layout, e))?;
    let l: anchored_core::geometry::LayoutScene =
        serde_json::from_str(&text).map_err(|e| Error::format(&layout, e.to_string()))?;
    Ok(l.center)
}

fn run_command(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Generate { input, output, seed, prompt, adapters } => {
            let (cfg, raw) = load_config(&adapters, Overrides { seed, prompt, ..Default::default() })?;
            if input.is_none() && cfg.pipeline.prompt.as_deref().is_none_or(|p| p.trim().is_empty()) {
                return Err(Error::Usage("generate needs --input or a text prompt (--prompt or pipeline.prompt)".into()));
            }
            let mut set = config::build_adapters(&cfg.adapter);
            let job = GenerateJob { input, output: output.clone(), config: cfg, raw_config: raw };
            let summary = runner::generate(&job, &mut set)
                .map_err(|f| Error::Stage { stage: f.stage, source: Box::new(f.error) })?;
            let line = serde_json::json!({
                "output": output,
                "scene_digest": summary.scene_digest,
                "frame_counts": summary.report.frame_counts,
                "scores": summary.report.scores.map(|s| Scores { appearance: s.appearance, geometry: s.geometry }),
            });
            writeln!(out, "{line}").ok();
        }
        Command::Render { scene, views, output, size, fov, center } => {
            let s = ply::read(&scene)?;
            let center = match center {
                Some(c) => [c[0], c[1], c[2]],
                None => room_center(&scene)?,
            };
            let k = Resolution { width: size as usize, height: size as usize, fov_deg: fov }
                .intrinsics()
                .map_err(|e| Error::Usage(e.to_string()))?;
            std::fs::create_dir_all(&output).map_err(|e| Error::io(&output, e))?;
            for (i, img) in runner::render_views(&s, center, views as usize, &k).iter().enumerate() {
                imageio::write_rgb(&output.join(format!("render_{i:02}.png")), img)?;
            }
        }
        Command::Eval { renders, input, adapters } => {
            let (cfg, _) = load_config(&adapters, Overrides::default())?;
            let paths = runner::list_pngs(&renders)?;
            if paths.len() != EVAL_FRAMES {
                return Err(Error::Usage(format!(
                    "eval needs exactly {EVAL_FRAMES} PNG frames in {}, found {}",
                    renders.display(),
                    paths.len()
                )));
            }
            let frames = paths.iter().map(|p| imageio::read_rgb(p)).collect::<Result<Vec<_>>>()?;
            let reference = imageio::read_rgb(&input)?;
            let mut set = config::build_adapters(&cfg.adapter);
            let s = evaluate(&frames, &reference, &mut set)?;
            for a in &s.unparsed {
                let _ = writeln!(err, "warning: answer {a:?} is neither Yes nor No; counted as No");
            }
            writeln!(out, "{}", serde_json::to_string(&Scores { appearance: s.appearance, geometry: s.geometry }).unwrap())
                .ok();
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run(args: impl IntoIterator<Item = impl Into<OsString> + Clone>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match run_command(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            let prefix = if code == 2 { "usage error" } else { "error" };
            let _ = writeln!(err, "{prefix}: {e}");
            code
        }
    }
}

//! End-to-end orchestration: scene description and layout, the input view as
//! a wallpaper on the selected wall, warp-and-inpaint, warp-and-refine, and
//! post-optimization with consistency sampling plus geometry alignment.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::adapters::{AdapterSet, CallCounts, DepthEstimator, DepthRequest, DescribeRequest, Describer, InpaintRequest, Inpainter};
use crate::depth::{align_depth_affine, apply_affine, AffineDepthParams};
use crate::error::{Error, Result};
use crate::gaussian::{FrameEntry, GaussianScene, OptimizerConfig, SpawnConfig, ViewUpdate};
use crate::geometry::{
    build_trajectory, builtin_templates, procedural_layout, render_depth, route_template, unproject,
    CameraIntrinsics, CameraPose, LayoutScene, Proximity, RoomSpec, Stage, TrajectoryConfig, Viewpoint,
};
use crate::grouting::{grouting_block, prepare_input_view, GroutMode, GroutingConfig, GroutingContext};
use crate::hash::mix_seed;
use crate::raster::{AlphaMask, DepthMap, RgbImage};
use crate::sampling::{run_mcs, McsConfig, McsView};

pub const DESCRIPTION_QUESTION: &str =
    "Describe this indoor scene in one short paragraph. Mention the room category and the interior design style.";
pub const SCENE_CORE_QUESTION: &str = "Identify the scene category, interior style, wall color, and floor color of this room. \
Answer with four short phrases in exactly this order, separated by commas.";
pub const REFINE_QUESTION: &str =
    "Describe the visible content of this image in one sentence, and ensure style consistency with the rest of the room.";
pub const STYLE_CONSISTENCY_CLAUSE: &str = "Ensure style consistency with the rest of the room.";

pub const APPEARANCE_REFERENCE_PROMPT: &str = "Describe the image's visual style, lighting, and dominant color using one word for each. \
List them in this order, separated by commas. For example: 'modern, bright, beige'.";
pub const GEOMETRY_PROMPT: &str = "Does the scene in this image appear geometrically plausible, with a realistic spatial layout, \
natural proportions, and coherent 3D structure? Pay special attention to sudden or unnatural corners, broken geometry, \
or inconsistent depth transitions. Respond only with a single word: Yes or No.";

/// Per-frame appearance question for a reference style.
pub fn appearance_judge_prompt(style: &str, lighting: &str, color: &str) -> String {
    format!(
        "The reference style is as follows: Visual style: {style}, Lighting: {lighting}, Dominant color: {color}. \
Based on the image, are the visual style, lighting and dominant color consistent with the reference? \
Respond with a single word: Yes or No."
    )
}

/// Frames the evaluation expects.
pub const EVAL_FRAMES: usize = 15;

/// Room attributes that make up the structured generation prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneCore {
    pub category: String,
    pub style: String,
    pub wall_color: String,
    pub floor_color: String,
}

impl SceneCore {
    /// Parses `category, style, wall colour, floor colour`.
    pub fn parse(text: &str) -> Result<Self> {
        let fields: Vec<&str> = text.trim().trim_end_matches('.').split(',').map(str::trim).collect();
        if fields.len() != 4 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse(format!("scene core needs four non-empty comma-separated fields, got {text:?}")));
        }
        Ok(SceneCore {
            category: fields[0].to_string(),
            style: fields[1].to_string(),
            wall_color: fields[2].to_string(),
            floor_color: fields[3].to_string(),
        })
    }

    pub fn prompt(&self) -> String {
        format!("{}-style {}, {} walls, {} floor", self.style, self.category, self.wall_color, self.floor_color)
    }
}

pub fn extract_scene_description(image: &RgbImage, describer: &mut (impl Describer + ?Sized)) -> Result<String> {
    let text = describer
        .describe(&DescribeRequest { image, question: DESCRIPTION_QUESTION })
        .map_err(|e| e.context("scene description"))?;
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::Parse("scene description is empty".to_string()));
    }
    Ok(text.to_string())
}

pub fn extract_scene_core(image: &RgbImage, describer: &mut (impl Describer + ?Sized)) -> Result<SceneCore> {
    let text = describer
        .describe(&DescribeRequest { image, question: SCENE_CORE_QUESTION })
        .map_err(|e| e.context("scene core"))?;
    SceneCore::parse(&text)
}

/// Prompt for a refine-stage view: scene core, the view's own description,
/// and a consistency clause.
pub fn refine_prompt(core_prompt: &str, description: &str) -> String {
    format!("{core_prompt}. {} {STYLE_CONSISTENCY_CLAUSE}", description.trim())
}

/// Camera resolution used for every stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Resolution {
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution { width: 128, height: 128, fov_deg: 90.0 }
    }
}

impl Resolution {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::from_fov(self.width, self.height, self.fov_deg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomConfig {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    pub furniture_count: usize,
}

impl Default for RoomConfig {
    fn default() -> Self {
        RoomConfig { width: 5.0, depth: 4.0, height: 2.8, furniture_count: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub resolution: Resolution,
    pub room: RoomConfig,
    pub inpaint_trajectory: TrajectoryConfig,
    pub refine_trajectory: TrajectoryConfig,
    pub post_opt_trajectory: TrajectoryConfig,
    /// Fraction of the input width cropped from each side.
    pub crop_fraction: f64,
    /// Strength for distant inpaint-stage views.
    pub inpaint_gamma: f64,
    /// Strength for distant refine-stage views.
    pub refine_gamma: f64,
    pub grouting: GroutingConfig,
    pub spawn: SpawnConfig,
    /// Fit to the input view before the first stage.
    pub initial_optimizer: OptimizerConfig,
    /// Fit after each generated view.
    pub view_optimizer: OptimizerConfig,
    pub mcs: McsConfig,
    /// Apply input geometry alignment before consistency sampling instead of after.
    pub align_before_mcs: bool,
    /// Re-fit after the input view's Gaussians are moved to the aligned depth.
    pub alignment_iterations: usize,
    pub evaluate: bool,
    /// Text-only prompt, used when no input image is given.
    pub prompt: Option<String>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let view_optimizer = OptimizerConfig { iterations: 40, ..Default::default() };
        PipelineConfig {
            resolution: Resolution::default(),
            room: RoomConfig::default(),
            inpaint_trajectory: TrajectoryConfig::inpaint(),
            refine_trajectory: TrajectoryConfig::refine(),
            post_opt_trajectory: TrajectoryConfig::post_opt(),
            crop_fraction: 0.05,
            inpaint_gamma: 1.0,
            refine_gamma: 0.5,
            grouting: GroutingConfig::default(),
            spawn: SpawnConfig { stride: 2, ..Default::default() },
            initial_optimizer: OptimizerConfig { iterations: 200, ..Default::default() },
            view_optimizer,
            mcs: McsConfig { iterations_per_step: 2, optimizer: view_optimizer, ..Default::default() },
            align_before_mcs: false,
            alignment_iterations: 30,
            evaluate: true,
            prompt: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.resolution.intrinsics()?;
        for (t, stage) in [
            (&self.inpaint_trajectory, Stage::Inpaint),
            (&self.refine_trajectory, Stage::Refine),
            (&self.post_opt_trajectory, Stage::PostOpt),
        ] {
            if t.stage != stage {
                return Err(Error::input(format!("{} trajectory has the wrong stage tag", stage.as_str())));
            }
            if t.n_views < 2 {
                return Err(Error::input(format!("{} trajectory needs at least two views", stage.as_str())));
            }
        }
        for (name, g) in [("inpaint_gamma", self.inpaint_gamma), ("refine_gamma", self.refine_gamma), ("mcs.strength", self.mcs.strength)] {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::input(format!("{name} must be in [0, 1]")));
            }
        }
        if self.spawn.stride == 0 {
            return Err(Error::input("spawn stride must be positive"));
        }
        Ok(())
    }
}

/// Milliseconds since some fixed origin. The core has no clock of its own.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// Reports zero for every timing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub index: usize,
    pub yaw_deg: f64,
    pub proximity: Proximity,
    /// Whether the grouting procedure ran for this view.
    pub grouted: bool,
    pub calls: CallCounts,
    pub alpha_before: f64,
    pub alpha_after: f64,
    pub spawned: usize,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub views: Vec<ViewRecord>,
    /// Supervision frames the stage's scene holds when it finishes.
    pub frames: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCounts {
    pub inpaint: usize,
    pub refine: usize,
    pub post_opt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    pub appearance: f64,
    pub geometry: f64,
    pub reference_style: [String; 3],
    /// Answers that were neither "Yes" nor "No"; each counted as "No".
    pub unparsed: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub description: Option<String>,
    pub scene_core: Option<SceneCore>,
    pub prompt: String,
    pub template: Option<String>,
    pub stages: Vec<StageReport>,
    pub frame_counts: FrameCounts,
    pub alignment: Option<AffineDepthParams>,
    pub scores: Option<EvalScores>,
    pub initial_psnr: Option<f64>,
}

/// Camera, layout and adapters shared by the stages of one run.
pub struct Session<'a> {
    pub config: &'a PipelineConfig,
    pub layout: &'a LayoutScene,
    pub intrinsics: CameraIntrinsics,
    pub adapters: &'a mut AdapterSet,
    pub clock: &'a dyn Clock,
}

impl Session<'_> {
    fn layout_depth(&self, pose: &CameraPose) -> Result<DepthMap> {
        render_depth(self.layout, &self.intrinsics, pose)
    }

    fn trajectory(&self, cfg: &TrajectoryConfig) -> Result<Vec<Viewpoint>> {
        build_trajectory(self.layout, cfg)
    }
}

/// Initial scene built from the cropped input treated as the yaw-0 frame.
pub struct InputView {
    pub frame: FrameEntry,
    pub depth: DepthMap,
    pub scene: GaussianScene,
}

/// The cropped input is resampled to the working resolution and placed as
/// the whole yaw-0 view; Gaussians sit on the layout depth behind it.
pub fn project_input_to_wall(image: &RgbImage, session: &Session<'_>) -> Result<InputView> {
    let k = session.intrinsics;
    let image = if image.same_shape(k.width, k.height) { image.clone() } else { image.resize_bilinear(k.width, k.height) };
    let pose = CameraPose::looking_at_yaw(session.layout.center, 0.0);
    let depth = session.layout_depth(&pose)?;
    let full = AlphaMask::ones(k.width, k.height);
    let frame = FrameEntry::new(image, full.clone(), pose, k)?;
    let mut scene = GaussianScene::new();
    scene.integrate_view(
        &ViewUpdate { image: &frame.image, spawn_region: &full, depth: &depth, pose: &pose, intrinsics: &k, view: 0 },
        &session.config.spawn,
        &session.config.initial_optimizer,
        mix_seed(session.config.seed, 1),
    )?;
    Ok(InputView { frame, depth, scene })
}

fn seam_image(render: &RgbImage, unknown: &AlphaMask) -> RgbImage {
    let mut out = render.clone();
    out.paste_where(&RgbImage::new(render.width(), render.height()), unknown);
    out
}

/// Warp-and-inpaint: grows `scene` one counter-clockwise view at a time.
/// Returns the generated image of every view.
pub fn stage_inpaint(scene: &mut GaussianScene, prompt: &str, session: &mut Session<'_>) -> Result<(StageReport, Vec<RgbImage>)> {
    let cfg = session.config;
    let k = session.intrinsics;
    let mut records = Vec::new();
    let mut images = Vec::new();
    for vp in session.trajectory(&cfg.inpaint_trajectory)? {
        let start = session.clock.now_ms();
        let mark = session.adapters.call_log().len();
        let r = (|| -> Result<(ViewRecord, RgbImage)> {
            let render = scene.render(&k, &vp.pose);
            let depth = session.layout_depth(&vp.pose)?;
            let unknown = render.alpha.unknown_region();
            let seam = seam_image(&render.rgb, &unknown);
            let grouted = unknown.known_count() > 0 && vp.proximity == Proximity::Close;
            let image = if unknown.known_count() == 0 {
                render.rgb.clone()
            } else if grouted {
                let ctx = GroutingContext {
                    seam_image: &seam,
                    unknown: &unknown,
                    rendered_depth: &depth,
                    prompt,
                    mode: GroutMode::Inpaint,
                    seed: cfg.seed,
                };
                grouting_block(&ctx, &cfg.grouting, session.adapters)?.image
            } else {
                let req = InpaintRequest {
                    image: &seam,
                    depth: &depth,
                    generate: &unknown,
                    prompt,
                    gamma: cfg.inpaint_gamma,
                    seed: cfg.seed,
                };
                let mut out = session.adapters.inpaint(&req)?;
                out.paste_where(&seam, &unknown.unknown_region());
                out
            };
            let report = scene.integrate_view(
                &ViewUpdate { image: &image, spawn_region: &unknown, depth: &depth, pose: &vp.pose, intrinsics: &k, view: vp.index as u32 },
                &cfg.spawn,
                &cfg.view_optimizer,
                mix_seed(cfg.seed, 100 + vp.index as u64),
            )?;
            let after = scene.render(&k, &vp.pose).alpha.mean();
            let record = ViewRecord {
                index: vp.index,
                yaw_deg: vp.yaw_deg,
                proximity: vp.proximity,
                grouted,
                calls: CallCounts::default(),
                alpha_before: render.alpha.mean(),
                alpha_after: after,
                spawned: report.spawned,
                millis: 0.0,
            };
            Ok((record, image))
        })()
        .map_err(|e| e.context(format!("inpaint view {} (yaw {:.0})", vp.index, vp.yaw_deg)))?;
        let (mut record, image) = r;
        record.calls = session.adapters.counts_since(mark);
        record.millis = session.clock.now_ms() - start;
        records.push(record);
        images.push(image);
    }
    Ok((StageReport { stage: Stage::Inpaint, views: records, frames: scene.frames().len() }, images))
}

/// Warp-and-refine: builds a fresh scene clockwise from renders of the
/// read-only inpainted scene. With an input view, refine view 0 is the input.
pub fn stage_refine(
    inpainted: &GaussianScene,
    input: Option<&FrameEntry>,
    core_prompt: &str,
    session: &mut Session<'_>,
) -> Result<(GaussianScene, StageReport, Vec<RgbImage>)> {
    let cfg = session.config;
    let k = session.intrinsics;
    let mut refined = GaussianScene::new();
    let mut records = Vec::new();
    let mut images = Vec::new();
    for vp in session.trajectory(&cfg.refine_trajectory)? {
        let start = session.clock.now_ms();
        let mark = session.adapters.call_log().len();
        let r = (|| -> Result<(ViewRecord, RgbImage)> {
            let anchored = input.filter(|f| vp.yaw_deg == 0.0 && f.pose == vp.pose);
            let base = match anchored {
                Some(f) => f.image.clone(),
                None => inpainted.render(&k, &vp.pose).rgb,
            };
            let depth = session.layout_depth(&vp.pose)?;
            let current = refined.render(&k, &vp.pose);
            let spawn_region = current.alpha.unknown_region();
            // input pixels are known content, whatever the refined scene holds
            let unknown = if anchored.is_some() { AlphaMask::zeros(k.width, k.height) } else { spawn_region.clone() };
            let grouted = vp.proximity == Proximity::Close;
            let image = if grouted {
                let ctx = GroutingContext {
                    seam_image: &base,
                    unknown: &unknown,
                    rendered_depth: &depth,
                    prompt: core_prompt,
                    mode: GroutMode::Refine,
                    seed: cfg.seed,
                };
                grouting_block(&ctx, &cfg.grouting, session.adapters)?.image
            } else {
                let description = session
                    .adapters
                    .describe(&DescribeRequest { image: &base, question: REFINE_QUESTION })?;
                let prompt = refine_prompt(core_prompt, &description);
                let req = InpaintRequest {
                    image: &base,
                    depth: &depth,
                    generate: &unknown,
                    prompt: &prompt,
                    gamma: cfg.refine_gamma,
                    seed: cfg.seed,
                };
                let mut out = session.adapters.inpaint(&req)?;
                out.paste_where(&base, &unknown.unknown_region());
                out
            };
            let report = refined.integrate_view(
                &ViewUpdate { image: &image, spawn_region: &spawn_region, depth: &depth, pose: &vp.pose, intrinsics: &k, view: vp.index as u32 },
                &cfg.spawn,
                &cfg.view_optimizer,
                mix_seed(cfg.seed, 200 + vp.index as u64),
            )?;
            let record = ViewRecord {
                index: vp.index,
                yaw_deg: vp.yaw_deg,
                proximity: vp.proximity,
                grouted,
                calls: CallCounts::default(),
                alpha_before: current.alpha.mean(),
                alpha_after: refined.render(&k, &vp.pose).alpha.mean(),
                spawned: report.spawned,
                millis: 0.0,
            };
            Ok((record, image))
        })()
        .map_err(|e| e.context(format!("refine view {} (yaw {:.0})", vp.index, vp.yaw_deg)))?;
        let (mut record, image) = r;
        record.calls = session.adapters.counts_since(mark);
        record.millis = session.clock.now_ms() - start;
        records.push(record);
        images.push(image);
    }
    let report = StageReport { stage: Stage::Refine, views: records, frames: refined.frames().len() };
    Ok((refined, report, images))
}

/// Estimated input depth aligned to the rendered wall depth, and the fit.
pub fn align_input_geometry(
    input: &RgbImage,
    wall_depth: &DepthMap,
    estimator: &mut (impl DepthEstimator + ?Sized),
) -> Result<(DepthMap, AffineDepthParams)> {
    let est = estimator.estimate_depth(&DepthRequest { image: input, reference: Some(wall_depth) })?;
    let full = AlphaMask::ones(input.width(), input.height());
    let params = align_depth_affine(&est, wall_depth, &full)?;
    Ok((apply_affine(&est, params), params))
}

/// Moves every Gaussian spawned from refine view 0 onto `depth`, unprojected
/// through the yaw-0 camera. Returns how many moved.
fn reseat_input_gaussians(scene: &mut GaussianScene, depth: &DepthMap, k: &CameraIntrinsics, pose: &CameraPose) -> usize {
    let points = unproject(depth, k, pose);
    let mut moved = 0;
    for g in scene.primitives_mut() {
        let Some(o) = g.origin else { continue };
        if o.view != 0 {
            continue;
        }
        let (u, v) = (o.pixel as usize % k.width, o.pixel as usize / k.width);
        if let Some(p) = points.get(u, v) {
            g.position = p;
            moved += 1;
        }
    }
    moved
}

pub struct PostOptOutput {
    pub report: StageReport,
    pub images: Vec<RgbImage>,
    pub views: Vec<Viewpoint>,
    pub alignment: Option<AffineDepthParams>,
}

/// Consistency sampling over the post-optimization views, plus input
/// geometry alignment before or after it.
pub fn stage_post_opt(
    scene: &mut GaussianScene,
    input: Option<&InputView>,
    prompt: &str,
    session: &mut Session<'_>,
) -> Result<PostOptOutput> {
    let cfg = session.config;
    let k = session.intrinsics;
    let views = session.trajectory(&cfg.post_opt_trajectory)?;
    let mcs_views: Vec<McsView> = views.iter().map(|v| McsView { pose: v.pose, intrinsics: k }).collect();
    let before: Vec<f64> = views.iter().map(|v| scene.render(&k, &v.pose).alpha.mean()).collect();
    let start = session.clock.now_ms();

    let align = |scene: &mut GaussianScene, extra: &[FrameEntry], session: &mut Session<'_>| -> Result<Option<AffineDepthParams>> {
        let Some(iv) = input else { return Ok(None) };
        let (aligned, params) =
            align_input_geometry(&iv.frame.image, &iv.depth, session.adapters).map_err(|e| e.context("geometry alignment"))?;
        reseat_input_gaussians(scene, &aligned, &k, &iv.frame.pose);
        let mut frames = alloc::vec![iv.frame.clone()];
        frames.extend_from_slice(extra);
        let opt = OptimizerConfig { iterations: cfg.alignment_iterations, ..cfg.view_optimizer };
        scene.optimize_on(&frames, &opt, mix_seed(cfg.seed, 300))?;
        Ok(Some(params))
    };

    let mark = session.adapters.call_log().len();
    let mut alignment = None;
    if cfg.align_before_mcs {
        alignment = align(scene, &[], session)?;
    }
    let mcs_cfg = McsConfig { seed: mix_seed(cfg.seed, 400), ..cfg.mcs.clone() };
    let out = run_mcs(&mcs_views, scene, session.adapters, prompt, &mcs_cfg).map_err(|e| e.context("consistency sampling"))?;
    let full = AlphaMask::ones(k.width, k.height);
    let mcs_frames = views
        .iter()
        .zip(&out.images)
        .map(|(v, img)| FrameEntry::new(img.clone(), full.clone(), v.pose, k))
        .collect::<Result<Vec<_>>>()?;
    if !cfg.align_before_mcs {
        alignment = align(scene, &mcs_frames, session)?;
    }
    let calls = session.adapters.counts_since(mark);
    let n = views.len();
    let per_view = CallCounts { denoise: calls.denoise / n, ..Default::default() };
    let millis = (session.clock.now_ms() - start) / n as f64;
    let records = views
        .iter()
        .zip(before)
        .map(|(v, b)| ViewRecord {
            index: v.index,
            yaw_deg: v.yaw_deg,
            proximity: v.proximity,
            grouted: false,
            calls: per_view,
            alpha_before: b,
            alpha_after: scene.render(&k, &v.pose).alpha.mean(),
            spawned: 0,
            millis,
        })
        .collect();
    Ok(PostOptOutput {
        report: StageReport { stage: Stage::PostOpt, views: records, frames: mcs_frames.len() },
        images: out.images,
        views,
        alignment,
    })
}

fn parse_answer(text: &str) -> Option<bool> {
    let t = text.trim().trim_end_matches(['.', '!']).trim().to_lowercase();
    match t.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Fraction of "Yes" answers over the frames for appearance consistency
/// (against the input's extracted style) and for geometric plausibility.
pub fn evaluate(renders: &[RgbImage], reference: &RgbImage, describer: &mut (impl Describer + ?Sized)) -> Result<EvalScores> {
    if renders.len() != EVAL_FRAMES {
        return Err(Error::input(format!("evaluation needs {EVAL_FRAMES} frames, got {}", renders.len())));
    }
    let style_text = describer.describe(&DescribeRequest { image: reference, question: APPEARANCE_REFERENCE_PROMPT })?;
    let fields: Vec<&str> = style_text.trim().trim_end_matches('.').split(',').map(str::trim).collect();
    if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
        return Err(Error::Parse(format!("reference style needs three comma-separated words, got {style_text:?}")));
    }
    let judge = appearance_judge_prompt(fields[0], fields[1], fields[2]);
    let mut unparsed = Vec::new();
    let score = |question: &str, unparsed: &mut Vec<String>, describer: &mut _| -> Result<f64> {
        let mut yes = 0;
        for image in renders {
            let a = Describer::describe(describer, &DescribeRequest { image, question })?;
            match parse_answer(&a) {
                Some(true) => yes += 1,
                Some(false) => {}
                None => unparsed.push(a),
            }
        }
        Ok(yes as f64 / renders.len() as f64)
    };
    let appearance = score(&judge, &mut unparsed, describer)?;
    let geometry = score(GEOMETRY_PROMPT, &mut unparsed, describer)?;
    Ok(EvalScores {
        appearance,
        geometry,
        reference_style: [fields[0].to_string(), fields[1].to_string(), fields[2].to_string()],
        unparsed,
    })
}

#[derive(Debug, Clone, Default)]
pub struct PipelineInputs {
    /// Without an image the run is text-only and needs `PipelineConfig::prompt`.
    pub image: Option<RgbImage>,
    /// Overrides the procedural layout.
    pub layout: Option<LayoutScene>,
}

pub struct RunOutput {
    pub scene: GaussianScene,
    pub layout: LayoutScene,
    pub inpaint_images: Vec<RgbImage>,
    pub refine_images: Vec<RgbImage>,
    pub eval_renders: Vec<RgbImage>,
    pub eval_depths: Vec<DepthMap>,
    pub report: RunReport,
}

/// A failed run: the stage that failed, why, and the report so far.
#[derive(Debug)]
pub struct RunFailure {
    pub stage: &'static str,
    pub error: Error,
    pub report: RunReport,
}

impl core::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.error)
    }
}

pub fn run_full(
    inputs: &PipelineInputs,
    cfg: &PipelineConfig,
    adapters: &mut AdapterSet,
    clock: &dyn Clock,
) -> core::result::Result<RunOutput, RunFailure> {
    let mut report = RunReport { seed: cfg.seed, ..Default::default() };
    macro_rules! stage {
        ($name:expr, $e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => return Err(RunFailure { stage: $name, error, report }),
            }
        };
    }
    stage!("config", cfg.validate());
    let k = stage!("config", cfg.resolution.intrinsics());

    // geometry setup
    let (description, core) = match &inputs.image {
        Some(img) => {
            let d = stage!("geometry", extract_scene_description(img, adapters));
            let c = stage!("geometry", extract_scene_core(img, adapters));
            (d, Some(c))
        }
        None => match &cfg.prompt {
            Some(p) if !p.trim().is_empty() => (p.trim().to_string(), None),
            _ => return Err(RunFailure { stage: "config", error: Error::input("text-only runs need a prompt"), report }),
        },
    };
    report.prompt = core.as_ref().map(SceneCore::prompt).unwrap_or_else(|| description.clone());
    report.description = Some(description.clone());
    report.scene_core = core;
    let layout = match &inputs.layout {
        Some(l) => l.clone(),
        None => {
            let templates = builtin_templates();
            let template = route_template(&templates, &description).cloned();
            report.template = template.as_ref().map(|t| t.name.clone());
            let r = cfg.room;
            let spec = RoomSpec { template, ..RoomSpec::new(r.width, r.depth, r.height, r.furniture_count) };
            stage!("geometry", procedural_layout(cfg.seed, &spec))
        }
    };
    let prompt = report.prompt.clone();
    let mut session = Session { config: cfg, layout: &layout, intrinsics: k, adapters, clock };

    let input_view = match &inputs.image {
        Some(img) => {
            let cropped = stage!("geometry", prepare_input_view(img, cfg.crop_fraction));
            let iv = stage!("geometry", project_input_to_wall(&cropped, &session));
            let out = iv.scene.render(&k, &iv.frame.pose);
            report.initial_psnr = Some(crate::gaussian::psnr(&out.composite, &iv.frame.image, None));
            Some(iv)
        }
        None => None,
    };

    let mut inpainted = input_view.as_ref().map(|iv| iv.scene.clone()).unwrap_or_default();
    let (inpaint_report, inpaint_images) = stage!("inpaint", stage_inpaint(&mut inpainted, &prompt, &mut session));
    report.frame_counts.inpaint = inpaint_report.frames;
    report.stages.push(inpaint_report);

    let (mut scene, refine_report, refine_images) =
        stage!("refine", stage_refine(&inpainted, input_view.as_ref().map(|iv| &iv.frame), &prompt, &mut session));
    report.frame_counts.refine = refine_report.frames;
    report.stages.push(refine_report);

    let post = stage!("post_opt", stage_post_opt(&mut scene, input_view.as_ref(), &prompt, &mut session));
    report.frame_counts.post_opt = post.report.frames;
    report.alignment = post.alignment;
    report.stages.push(post.report);

    let renders: Vec<_> = post.views.iter().map(|v| scene.render(&k, &v.pose)).collect();
    let eval_renders: Vec<RgbImage> = renders.iter().map(|r| r.composite.clone()).collect();
    let eval_depths = renders.into_iter().map(|r| r.depth).collect();
    if cfg.evaluate && eval_renders.len() == EVAL_FRAMES {
        let reference = inputs.image.as_ref().unwrap_or(&eval_renders[0]);
        report.scores = Some(stage!("evaluate", evaluate(&eval_renders, reference, session.adapters)));
    }
    Ok(RunOutput { scene, layout, inpaint_images, refine_images, eval_renders, eval_depths, report })
}

//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail.

use std::path::Path;
use std::time::{Duration, Instant};

use anchored::config::RunConfig;
use anchored::core::adapters::{AdapterSet, CallCounts, Describer, DescribeRequest, Endpoint, StubDenoiseMode, StubDenoiser};
use anchored::core::depth::{affine_residual, align_depth_affine, apply_affine};
use anchored::core::gaussian::primitive::{normalize_quat, COLOR, LOG_SCALE, OPACITY, PARAM_COUNT, POSITION, ROTATION};
use anchored::core::gaussian::{init_from_pointmap, psnr, FrameEntry, GaussianPrimitive, GaussianScene, LossConfig, OptimizerConfig, RasterSettings, SpawnConfig};
use anchored::core::geometry::{build_trajectory, procedural_layout, render_depth, CameraIntrinsics, CameraPose, LayoutScene, Proximity, RoomSpec};
use anchored::core::grouting::{grouting_block, max_column_jump, GroutMode, GroutingConfig, GroutingContext};
use anchored::core::pipeline::{
    appearance_judge_prompt, evaluate, run_full, NoClock, PipelineConfig, PipelineInputs, Resolution, APPEARANCE_REFERENCE_PROMPT,
    EVAL_FRAMES, GEOMETRY_PROMPT,
};
use anchored::core::sampling::{build_schedule, rectify_mu, sample, DenoisingState, ScheduleConfig, Signal, StepContext};
use anchored::core::{AlphaMask, DepthMap, RgbImage};
use anchored::runner::{generate, GenerateJob};
use anchored::{imageio, ply};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn depth_alignment() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_rel, mut worst_res) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let alpha = rng.random_range(0.2..=5.0);
        let beta = rng.random_range(-0.2..=0.2);
        // 1/d stays above 0.25 so the distorted inverse depth is positive
        let (a0, ax, ay) = (rng.random_range(1.0..2.0), rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01));
        let rendered = DepthMap::from_fn(64, 64, |u, v| Some(a0 + ax * u as f64 + ay * v as f64 + 0.3 * ((u * 7 + v * 13) % 17) as f64 / 17.0));
        let est = DepthMap::from_fn(64, 64, |u, v| rendered.get(u, v).map(|d| alpha / (1.0 / d - beta)));
        let mask = AlphaMask::ones(64, 64);
        let p = align_depth_affine(&est, &rendered, &mask).map_err(|e| e.to_string())?;
        worst_rel = worst_rel.max(((p.alpha - alpha) / alpha).abs()).max(((p.beta - beta) / beta).abs());
        worst_res = worst_res.max(affine_residual(&est, &rendered, &mask, p).map_err(|e| e.to_string())?);
        let aligned = apply_affine(&est, p);
        ensure(aligned.valid_count() == 64 * 64, || "aligned depth lost pixels".into())?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst_rel < 1e-6, || format!("parameter relative error {worst_rel:e}"))?;
    ensure(worst_res < 1e-12, || format!("residual {worst_res:e}"))?;
    ensure(secs < 5.0, || format!("took {secs:.2} s"))?;
    Ok(format!("max rel err {worst_rel:.1e}, max residual {worst_res:.1e}, {secs:.2} s"))
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Nearest hit over all triangles by solving the 3x3 barycentric system.
fn oracle_hit(layout: &LayoutScene, o: [f64; 3], d: [f64; 3]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for tri in &layout.triangles {
        let [a, b, c] = tri.vertices;
        let (e1, e2) = (sub(b, a), sub(c, a));
        let m = Matrix3::new(-d[0], e1[0], e2[0], -d[1], e1[1], e2[1], -d[2], e1[2], e2[2]);
        let Some(inv) = m.try_inverse() else { continue };
        let x = inv * Vector3::from(sub(o, a));
        let (t, u, v) = (x.x, x.y, x.z);
        if t > 1e-9 && u >= -1e-9 && v >= -1e-9 && u + v <= 1.0 + 1e-9 && best.is_none_or(|bt| t < bt) {
            best = Some(t);
        }
    }
    best
}

fn layout_depth() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let layout = procedural_layout(17, &RoomSpec::new(5.0, 4.0, 2.8, 3)).map_err(|e| e.to_string())?;
    let k = CameraIntrinsics::from_fov(32, 24, 75.0).unwrap();
    let b = layout.room_aabb;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let c = [
            rng.random_range(b.min[0] + 0.3..b.max[0] - 0.3),
            rng.random_range(b.min[1] + 0.3..b.max[1] - 0.3),
            rng.random_range(b.min[2] + 0.3..b.max[2] - 0.3),
        ];
        let yaw = rng.random_range(0.0..360.0);
        let pitch: f64 = rng.random_range(-25.0f64..25.0).to_radians();
        let base = CameraPose::looking_at_yaw(c, yaw).rotation_matrix();
        let tilt = Matrix3::new(1.0, 0.0, 0.0, 0.0, pitch.cos(), -pitch.sin(), 0.0, pitch.sin(), pitch.cos());
        let pose = CameraPose::from_center(tilt * base, Vector3::from(c)).map_err(|e| e.to_string())?;
        let depth = render_depth(&layout, &k, &pose).map_err(|e| e.to_string())?;
        let r_t = pose.rotation_matrix().transpose();
        for v in 0..k.height {
            for u in 0..k.width {
                let cam = Vector3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
                let w = r_t * cam;
                let want = oracle_hit(&layout, c, [w.x, w.y, w.z]).ok_or_else(|| format!("oracle miss at ({u},{v})"))?;
                let got = depth.get(u, v).ok_or_else(|| format!("invalid depth at ({u},{v})"))?;
                worst = worst.max((got - want).abs());
            }
        }
    }
    ensure(worst < 1e-6, || format!("max depth error {worst:e} m"))?;
    Ok(format!("50 poses, max error {worst:.1e} m"))
}

fn random_scene(rng: &mut ChaCha8Rng) -> GaussianScene {
    let prims = (0..8)
        .map(|_| {
            let mut g = GaussianPrimitive::from_decoded(
                [rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(1.5..3.0)],
                normalize_quat([rng.random_range(-1.0..1.0), rng.random(), rng.random(), rng.random()]),
                [rng.random_range(0.1..0.4), rng.random_range(0.1..0.4), rng.random_range(0.1..0.4)],
                rng.random_range(0.2..0.8),
                [rng.random(), rng.random(), rng.random()],
                None,
            );
            g.rotation = g.rotation.map(|c| c * 1.3);
            g
        })
        .collect();
    GaussianScene::from_primitives(prims)
}

fn rasterizer_gradients() -> Check {
    let k = CameraIntrinsics::from_fov(16, 16, 60.0).unwrap();
    let pose = CameraPose::identity();
    let settings = RasterSettings::exact();
    let loss = LossConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let groups = [("position", POSITION, ROTATION), ("rotation", ROTATION, LOG_SCALE), ("scale", LOG_SCALE, OPACITY), ("opacity", OPACITY, COLOR), ("color", COLOR, PARAM_COUNT)];
    let mut checked = [0usize; 5];
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let scene = random_scene(&mut rng);
        let target = RgbImage::from_fn(16, 16, |_, _| [rng.random(), rng.random(), rng.random()]);
        let mask = AlphaMask::from_fn(16, 16, |u, v| if (u * 3 + v) % 7 == 0 { 0.0 } else { 1.0 });
        let (_, grads) = scene.render_gradients(&k, &pose, &target, &mask, &loss, &settings).map_err(|e| e.to_string())?;
        for pi in 0..scene.len() {
            let base = scene.primitives()[pi].params();
            for p in 0..PARAM_COUNT {
                let h = 1e-4;
                let eval = |delta: f64| {
                    let mut s = scene.clone();
                    let mut q = base;
                    q[p] += delta;
                    s.primitives_mut()[pi].set_params(&q);
                    s.render_gradients(&k, &pose, &target, &mask, &loss, &settings).unwrap().0
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = grads[pi][p];
                let scale = fd.abs().max(an.abs());
                if scale < 1e-7 {
                    continue;
                }
                let rel = (fd - an).abs() / scale;
                let g = groups.iter().position(|(_, lo, hi)| (*lo..*hi).contains(&p)).unwrap();
                checked[g] += 1;
                ensure(rel < 1e-3, || format!("{} param {p}: fd {fd:e} analytic {an:e}", groups[g].0))?;
                worst = worst.max(rel);
            }
        }
    }
    for (g, n) in groups.iter().zip(checked) {
        ensure(n > 0, || format!("no signal for {}", g.0))?;
    }
    Ok(format!("{} coordinates, max rel err {worst:.1e}", checked.iter().sum::<usize>()))
}

fn single_view_fit() -> Check {
    let n = 64;
    let k = CameraIntrinsics::from_fov(n, n, 90.0).unwrap();
    let layout = procedural_layout(4, &RoomSpec::new(4.0, 5.0, 2.8, 1)).map_err(|e| e.to_string())?;
    let pose = CameraPose::looking_at_yaw(layout.center, 0.0);
    let depth = render_depth(&layout, &k, &pose).map_err(|e| e.to_string())?;
    let image = RgbImage::from_fn(n, n, |u, v| {
        let (x, y) = (u as f64 / n as f64, v as f64 / n as f64);
        [0.5 + 0.4 * (6.0 * x).sin() * (4.0 * y).cos(), 0.3 + 0.5 * x * y, 0.8 - 0.6 * y]
    });
    let grey = RgbImage::filled(n, n, [0.5; 3]);
    let mut scene = GaussianScene::new();
    scene.add_primitives(
        init_from_pointmap(&grey, &depth, &k, &pose, &AlphaMask::ones(n, n), &SpawnConfig::default(), 0).map_err(|e| e.to_string())?,
    );
    scene.push_frame(FrameEntry::new(image.clone(), AlphaMask::ones(n, n), pose, k).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let cfg = OptimizerConfig { iterations: 400, ..Default::default() };
    let mut a = scene.clone();
    let mut b = scene;
    a.optimize(&cfg, 11).map_err(|e| e.to_string())?;
    b.optimize(&cfg, 11).map_err(|e| e.to_string())?;
    let p = psnr(&a.render(&k, &pose).composite, &image, None);
    ensure(p >= 30.0, || format!("psnr {p:.2} dB"))?;
    ensure(a == b, || "seeded runs differ".into())?;
    Ok(format!("psnr {p:.2} dB, bitwise identical"))
}

fn schedule_identity() -> Check {
    let mut worst = 0.0f64;
    for steps in [1, 10, 50] {
        let s = build_schedule(&ScheduleConfig { steps, ..Default::default() }).map_err(|e| e.to_string())?;
        for t in 1..=steps {
            let (st, dt, _) = s.coefficients(t);
            worst = worst.max((st * s.alpha_bar[t].sqrt() + dt - s.alpha_bar[t - 1].sqrt()).abs());
        }
    }
    ensure(worst < 1e-12, || format!("identity error {worst:e}"))?;
    let s = build_schedule(&ScheduleConfig { steps: 50, ..Default::default() }).map_err(|e| e.to_string())?;
    let target = Signal::from_image(&RgbImage::from_fn(8, 8, |u, v| [u as f64 / 8.0, v as f64 / 8.0, 0.5]));
    let mut st = DenoisingState::start(&Signal::filled(8, 8, 0.0), &s, 1.0, 7).map_err(|e| e.to_string())?;
    let mut d = StubDenoiser::new(StubDenoiseMode::Fixed).with_target(target.clone());
    sample(&mut st, &s, &mut d, StepContext { prompt: "", denoiser_reference: None }).map_err(|e| e.to_string())?;
    let mae = st.x.mean_abs_diff(&target);
    ensure(mae < 1e-6, || format!("stub sampling MAE {mae:e}"))?;
    Ok(format!("identity error {worst:.1e}, sampling MAE {mae:.1e}"))
}

fn rectification() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..6), rng.random_range(1..6));
        let mut sig = || Signal::from_vec(w, h, (0..w * h * 3).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let (mu, bar) = (sig(), sig());
        if bar.std() < 1e-3 {
            continue;
        }
        let weight = rng.random_range(0.0..=1.0);
        let r = rectify_mu(&mu, &bar, weight).map_err(|e| e.to_string())?;
        let scaled = Signal::from_vec(w, h, bar.as_slice().iter().map(|v| r.phi * v).collect()).unwrap();
        worst = worst.max((scaled.std() - mu.std()).abs());
        ensure(rectify_mu(&mu, &bar, 0.0).map_err(|e| e.to_string())?.mu_hat == mu, || "w = 0 is not a fixed point".into())?;
        ensure(rectify_mu(&mu, &mu, weight).map_err(|e| e.to_string())?.mu_hat == mu, || "identical reference is not a fixed point".into())?;
    }
    ensure(worst < 1e-9, || format!("normalization error {worst:e}"))?;
    let mu = Signal::from_vec(1, 1, vec![0.0, 2.0, 0.0]).unwrap();
    let bar = Signal::from_vec(1, 1, vec![0.0, 4.0, 0.0]).unwrap();
    let r = rectify_mu(&mu, &bar, 0.5).map_err(|e| e.to_string())?;
    ensure(r.mu_hat == mu, || format!("worked example gave {:?}", r.mu_hat.as_slice()))?;
    Ok(format!("normalization error {worst:.1e}, fixed points exact, worked example [0,2]"))
}

fn small_pipeline_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.resolution = Resolution { width: 32, height: 32, fov_deg: 90.0 };
    cfg.spawn.stride = 1;
    cfg.initial_optimizer.iterations = 60;
    cfg.view_optimizer.iterations = 10;
    cfg.mcs.schedule.steps = 4;
    cfg.mcs.iterations_per_step = 1;
    cfg.alignment_iterations = 5;
    cfg
}

fn input_image(w: usize, h: usize) -> RgbImage {
    RgbImage::from_fn(w, h, |u, v| {
        let (x, y) = (u as f64 / w as f64, v as f64 / h as f64);
        [0.35 + 0.3 * x, 0.5 + 0.1 * (9.0 * y).sin(), 0.65 - 0.3 * y]
    })
}

fn grouting_contract() -> Check {
    let (w, h, seam) = (20, 12, 12);
    let image = RgbImage::from_fn(w, h, |u, v| if u < seam { [0.55 + 0.01 * v as f64, 0.5, 0.45 + 0.005 * u as f64] } else { [0.0; 3] });
    let unknown = AlphaMask::from_fn(w, h, |u, _| if u >= seam { 1.0 } else { 0.0 });
    let depth = DepthMap::from_fn(w, h, |u, v| Some(2.0 + 0.05 * u as f64 + 0.02 * v as f64));
    let before = max_column_jump(&image, seam);
    for mode in [GroutMode::Inpaint, GroutMode::Refine] {
        let ctx = GroutingContext { seam_image: &image, unknown: &unknown, rendered_depth: &depth, prompt: "modern-style office", mode, seed: 5 };
        let mut adapters = AdapterSet::stub();
        let out = grouting_block(&ctx, &GroutingConfig::default(), &mut adapters).map_err(|e| e.to_string())?;
        for i in 0..image.len_pixels() {
            // the mask marks the hole, so "set" means unknown
            if !unknown.is_known_at(i) {
                ensure(out.image.pixel_at(i) == image.pixel_at(i), || format!("{mode:?}: known pixel {i} changed"))?;
            }
        }
        use Endpoint::*;
        ensure(adapters.call_log() == [Inpaint, Depth, Inpaint, Depth, Inpaint], || format!("{mode:?}: calls {:?}", adapters.call_log()))?;
        let after = max_column_jump(&out.image, seam);
        ensure(after <= before, || format!("{mode:?}: seam jump {after} > {before}"))?;
    }

    let out = run_full(&PipelineInputs { image: Some(input_image(40, 32)), layout: None }, &small_pipeline_config(), &mut AdapterSet::stub(), &NoClock)
        .map_err(|f| format!("pipeline failed in {}: {}", f.stage, f.error))?;
    let pattern = CallCounts { inpaint: 3, depth: 2, ..Default::default() };
    let mut grouted = 0;
    for stage in &out.report.stages[..2] {
        for v in &stage.views {
            if v.calls == pattern {
                ensure(v.proximity == Proximity::Close, || format!("{:?} view {} grouted but distant", stage.stage, v.index))?;
                grouted += 1;
            }
        }
    }
    ensure(grouted > 0, || "no grouted views in a pipeline run".into())?;
    Ok(format!("known region exact, seam jump {before:.3} not increased, {grouted} grouted views all Close"))
}

fn run_e2e(dir: &Path, input: &Path) -> Result<(Duration, String), String> {
    let config = RunConfig::default();
    let job = GenerateJob { input: Some(input.to_path_buf()), output: dir.to_path_buf(), config, raw_config: serde_json::Value::Null };
    let start = Instant::now();
    let summary = generate(&job, &mut AdapterSet::stub()).map_err(|e| e.to_string())?;
    Ok((start.elapsed(), summary.scene_digest))
}

fn end_to_end() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = tmp.path().join("input.png");
    imageio::write_rgb(&input, &input_image(160, 128)).map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let (ta, da) = run_e2e(&a, &input)?;
    let (tb, db) = run_e2e(&b, &input)?;
    let limit = Duration::from_secs(600);
    ensure(ta < limit && tb < limit, || format!("runs took {:.0} s and {:.0} s", ta.as_secs_f64(), tb.as_secs_f64()))?;

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("report.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let counts = &report["frame_counts"];
    ensure(*counts == serde_json::json!({"inpaint": 21, "refine": 8, "post_opt": 15}), || format!("frame counts {counts}"))?;

    let scene = ply::read(&a.join("scene.ply")).map_err(|e| e.to_string())?;
    let layout: LayoutScene = serde_json::from_str(&std::fs::read_to_string(a.join("layout.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let cfg = PipelineConfig::default();
    let k = cfg.resolution.intrinsics().map_err(|e| e.to_string())?;
    ensure(k.width == 128 && k.height == 128, || format!("resolution {}x{}", k.width, k.height))?;
    let views = build_trajectory(&layout, &cfg.post_opt_trajectory).map_err(|e| e.to_string())?;
    ensure(views.len() == 15, || format!("{} eval views", views.len()))?;
    let alphas: Vec<f64> = views.iter().map(|v| scene.render(&k, &v.pose).alpha.mean()).collect();
    let min_alpha = alphas.iter().cloned().fold(f64::INFINITY, f64::min);
    ensure(min_alpha >= 0.98, || format!("mean alpha per view {alphas:.3?}"))?;
    ensure(da == db, || format!("digests differ: {da} vs {db}"))?;
    Ok(format!("{:.0} s and {:.0} s, min view alpha {min_alpha:.4}, counts 21/8/15, digest stable", ta.as_secs_f64(), tb.as_secs_f64()))
}

/// Answers the style question, then a scripted sequence.
struct Scripted {
    answers: Vec<&'static str>,
}

impl Describer for Scripted {
    fn describe(&mut self, req: &DescribeRequest<'_>) -> anchored::core::Result<String> {
        if req.question == APPEARANCE_REFERENCE_PROMPT {
            return Ok("modern, bright, beige".into());
        }
        Ok(self.answers.remove(0).into())
    }
}

fn evaluation_harness() -> Check {
    let frames = vec![RgbImage::new(4, 4); EVAL_FRAMES];
    let reference = RgbImage::new(4, 4);
    let s = evaluate(&frames, &reference, &mut AdapterSet::stub()).map_err(|e| e.to_string())?;
    ensure((s.appearance, s.geometry) == (1.0, 1.0), || format!("stub scores ({}, {})", s.appearance, s.geometry))?;
    let mut answers = vec!["Yes"; 12];
    answers.extend(["No"; 3]);
    answers.extend(["Yes"; 15]);
    let s = evaluate(&frames, &reference, &mut Scripted { answers }).map_err(|e| e.to_string())?;
    ensure((s.appearance - 0.8).abs() < 1e-12, || format!("12/3 fixture gave {}", s.appearance))?;

    let reference_prompt = "Describe the image's visual style, lighting, and dominant color using one word for each. \
List them in this order, separated by commas. For example: 'modern, bright, beige'.";
    let judge = "The reference style is as follows: Visual style: xxx, Lighting: xxx, Dominant color: xxx. \
Based on the image, are the visual style, lighting and dominant color consistent with the reference? \
Respond with a single word: Yes or No.";
    let geometry = "Does the scene in this image appear geometrically plausible, with a realistic spatial layout, \
natural proportions, and coherent 3D structure? Pay special attention to sudden or unnatural corners, broken geometry, \
or inconsistent depth transitions. Respond only with a single word: Yes or No.";
    ensure(APPEARANCE_REFERENCE_PROMPT == reference_prompt, || "appearance reference prompt differs".into())?;
    ensure(appearance_judge_prompt("xxx", "xxx", "xxx") == judge, || "appearance judge prompt differs".into())?;
    ensure(GEOMETRY_PROMPT == geometry, || "geometry prompt differs".into())?;
    Ok("stub (1.0, 1.0), 12 Yes / 3 No gives 0.8, prompts byte-identical".into())
}

fn main() {
    let checks: [(&str, fn() -> Check); 9] = [
        ("depth alignment recovery", depth_alignment),
        ("layout depth correctness", layout_depth),
        ("rasterizer gradients", rasterizer_gradients),
        ("single-view fit", single_view_fit),
        ("schedule identity", schedule_identity),
        ("rectification algebra", rectification),
        ("grouting contract", grouting_contract),
        ("end-to-end stub run", end_to_end),
        ("evaluation harness", evaluation_harness),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

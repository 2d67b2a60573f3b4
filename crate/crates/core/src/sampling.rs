//! Ancestral diffusion sampling arithmetic, partial sampling by strength, and
//! multi-view consistency sampling that rectifies each view's clean-signal
//! estimate towards renders of a shared scene.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::adapters::{DenoiseRequest, Denoiser};
use crate::error::{Error, Result};
use crate::gaussian::{FrameEntry, GaussianScene, OptimizerConfig};
use crate::geometry::{CameraIntrinsics, CameraPose};
use crate::hash::mix_seed;
use crate::raster::{AlphaMask, RgbImage};

/// Unclamped three-channel image-shaped signal, interleaved like [`RgbImage`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Signal {
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::input("signal buffer length does not match dimensions"));
        }
        Ok(Signal { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Signal { width, height, data: alloc::vec![value; width * height * 3] }
    }

    pub fn from_image(image: &RgbImage) -> Self {
        Signal { width: image.width(), height: image.height(), data: image.as_slice().to_vec() }
    }

    /// Standard normal samples.
    pub fn noise(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..width * height * 3).map(|_| StandardNormal.sample(rng)).collect();
        Signal { width, height, data }
    }

    /// Clamps into `[0, 1]`.
    pub fn to_image(&self) -> RgbImage {
        RgbImage::from_vec(self.width, self.height, self.data.clone()).expect("signal dimensions are valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &Signal) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn zip_map(&self, other: &Signal, f: impl Fn(f64, f64) -> f64) -> Signal {
        debug_assert!(self.same_shape(other));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Signal { width: self.width, height: self.height, data }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population standard deviation over every element.
    pub fn std(&self) -> f64 {
        let m = self.mean();
        (self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64).sqrt()
    }

    pub fn mean_abs_diff(&self, other: &Signal) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum::<f64>() / self.data.len() as f64
    }
}

/// Per-step noise variances `β_1..β_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarianceSpec {
    /// Linear ramp from `start` at `t = 1` to `end` at `t = T`.
    Linear { start: f64, end: f64 },
    /// A linear ramp over `base_steps` fine steps, subsampled to `T` coarse
    /// steps so that every coarse step spans whole fine steps and `ᾱ_T`
    /// matches the fine schedule's end.
    Subsampled { start: f64, end: f64, base_steps: usize },
    Explicit(Vec<f64>),
}

impl Default for VarianceSpec {
    fn default() -> Self {
        VarianceSpec::Subsampled { start: 1e-4, end: 0.02, base_steps: 1000 }
    }
}

impl VarianceSpec {
    fn betas(&self, steps: usize) -> Vec<f64> {
        let ramp = |a: f64, b: f64| -> Vec<f64> {
            (0..steps)
                .map(|i| if steps == 1 { a } else { a + (b - a) * i as f64 / (steps - 1) as f64 })
                .collect()
        };
        match self {
            VarianceSpec::Linear { start, end } => ramp(*start, *end),
            VarianceSpec::Subsampled { start, end, base_steps } => {
                let n = (*base_steps).max(1);
                let fine: Vec<f64> = (0..n)
                    .map(|i| if n == 1 { *start } else { start + (end - start) * i as f64 / (n - 1) as f64 })
                    .collect();
                let mut ab = Vec::with_capacity(n + 1);
                ab.push(1.0);
                for b in &fine {
                    let prev: f64 = *ab.last().expect("non-empty");
                    ab.push(prev * (1.0 - b));
                }
                let edge = |i: usize| ((i * n) as f64 / steps as f64).round() as usize;
                (1..=steps).map(|t| 1.0 - ab[edge(t)] / ab[edge(t - 1)]).collect()
            }
            VarianceSpec::Explicit(b) => b.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub variance: VarianceSpec,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { steps: 50, variance: VarianceSpec::default() }
    }
}

/// Constants of `x_{t−1} = s_t·x_t + d_t·μ_t + σ_t·ε`, indexed by `t − 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub betas: Vec<f64>,
    /// `ᾱ_0 = 1` through `ᾱ_T`.
    pub alpha_bar: Vec<f64>,
    pub s: Vec<f64>,
    pub d: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `(s_t, d_t, σ_t)` for `t ∈ [1, T]`.
    pub fn coefficients(&self, t: usize) -> (f64, f64, f64) {
        (self.s[t - 1], self.d[t - 1], self.sigma[t - 1])
    }
}

/// DDPM posterior coefficients for the given variance ramp.
pub fn build_schedule(cfg: &ScheduleConfig) -> Result<DiffusionSchedule> {
    if cfg.steps == 0 {
        return Err(Error::input("schedule needs at least one step"));
    }
    let betas = cfg.variance.betas(cfg.steps);
    if betas.len() != cfg.steps {
        return Err(Error::input(format!("expected {} variances, got {}", cfg.steps, betas.len())));
    }
    if betas.iter().any(|b| !(0.0..1.0).contains(b)) {
        return Err(Error::input("noise variances must lie in [0, 1)"));
    }
    let mut alpha_bar = Vec::with_capacity(cfg.steps + 1);
    alpha_bar.push(1.0);
    for b in &betas {
        let prev = *alpha_bar.last().expect("non-empty");
        alpha_bar.push(prev * (1.0 - b));
    }
    let (mut s, mut d, mut sigma) = (Vec::new(), Vec::new(), Vec::new());
    for t in 1..=cfg.steps {
        let beta = betas[t - 1];
        let (ab, ab_prev) = (alpha_bar[t], alpha_bar[t - 1]);
        let denom = 1.0 - ab;
        if denom <= 0.0 {
            s.push(1.0);
            d.push(0.0);
            sigma.push(0.0);
            continue;
        }
        s.push((1.0 - beta).sqrt() * (1.0 - ab_prev) / denom);
        d.push(ab_prev.sqrt() * beta / denom);
        sigma.push((beta * (1.0 - ab_prev) / denom).max(0.0).sqrt());
    }
    Ok(DiffusionSchedule { betas, alpha_bar, s, d, sigma })
}

/// `round(γ·T)`.
pub fn strength_to_start_step(gamma: f64, steps: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::input("denoising strength must be in [0, 1]"));
    }
    Ok((gamma * steps as f64).round() as usize)
}

/// `μ̂ = w·φ·μ̄ + (1 − w)·μ` with `φ = std(μ)/std(μ̄)`, evaluated as
/// `μ + w·(φ·μ̄ − μ)` so both fixed points hold bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Rectified {
    pub mu_hat: Signal,
    pub phi: f64,
}

pub fn rectify_mu(mu: &Signal, mu_bar: &Signal, w: f64) -> Result<Rectified> {
    if !mu.same_shape(mu_bar) {
        return Err(Error::input("rectification inputs differ in shape"));
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::input("rectification weight must be in [0, 1]"));
    }
    let (sm, sb) = (mu.std(), mu_bar.std());
    if w == 0.0 {
        let phi = if sb > 0.0 { sm / sb } else { 1.0 };
        return Ok(Rectified { mu_hat: mu.clone(), phi });
    }
    if !(sb > 0.0) {
        return Err(Error::degenerate("reference render has zero dynamic range"));
    }
    let phi = sm / sb;
    Ok(Rectified { mu_hat: mu.zip_map(mu_bar, |m, b| m + w * (phi * b - m)), phi })
}

/// Rectification weight per step, linear from `start` at `t = T` to `end` at `t = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightSchedule {
    pub start: f64,
    pub end: f64,
}

impl Default for WeightSchedule {
    fn default() -> Self {
        WeightSchedule { start: 0.8, end: 0.2 }
    }
}

impl WeightSchedule {
    pub fn constant(w: f64) -> Self {
        WeightSchedule { start: w, end: w }
    }

    pub fn at(&self, t: usize, steps: usize) -> f64 {
        if steps <= 1 {
            return self.start;
        }
        let k = (t.saturating_sub(1)) as f64 / (steps - 1) as f64;
        self.end + (self.start - self.end) * k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoisingState {
    pub x: Signal,
    pub t: usize,
    rng: ChaCha8Rng,
    seed: u64,
}

impl DenoisingState {
    /// State at `t0 = round(γ·T)`: pure noise at `t0 = T`, the input itself
    /// at `t0 = 0`, and the forward-noised input in between.
    pub fn start(input: &Signal, schedule: &DiffusionSchedule, gamma: f64, seed: u64) -> Result<Self> {
        let t0 = strength_to_start_step(gamma, schedule.steps())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = if t0 == 0 {
            input.clone()
        } else {
            let eps = Signal::noise(input.width, input.height, &mut rng);
            if t0 == schedule.steps() {
                eps
            } else {
                let ab = schedule.alpha_bar[t0];
                input.zip_map(&eps, |x, e| ab.sqrt() * x + (1.0 - ab).sqrt() * e)
            }
        };
        Ok(DenoisingState { x, t: t0, rng, seed })
    }

    pub fn is_done(&self) -> bool {
        self.t == 0
    }
}

/// Optional rectification applied to the denoiser output before the update.
#[derive(Debug, Clone, Copy)]
pub struct Rectifier<'a> {
    pub reference: &'a Signal,
    pub weight: f64,
}

/// What one step produced besides the new state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// The (possibly rectified) clean-signal estimate used for the update.
    pub mu: Signal,
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub prompt: &'a str,
    /// Passed to the denoiser as its reference signal.
    pub denoiser_reference: Option<&'a Signal>,
}

/// One ancestral update from `t` to `t − 1`.
pub fn sample_step(
    state: &mut DenoisingState,
    schedule: &DiffusionSchedule,
    denoiser: &mut (impl Denoiser + ?Sized),
    rectifier: Option<Rectifier<'_>>,
    ctx: StepContext<'_>,
) -> Result<StepOutput> {
    let t = state.t;
    if t == 0 {
        return Err(Error::input("sampling already reached t = 0"));
    }
    let req = DenoiseRequest {
        x: &state.x,
        t,
        total: schedule.steps(),
        prompt: ctx.prompt,
        seed: mix_seed(state.seed, t as u64),
        reference: ctx.denoiser_reference,
    };
    let mu = denoiser.denoise(&req).map_err(|e| e.context(format!("denoising step t={t}")))?;
    let (mu, phi) = match rectifier {
        Some(r) => {
            let out = rectify_mu(&mu, r.reference, r.weight).map_err(|e| e.context(format!("rectifying at t={t}")))?;
            (out.mu_hat, Some(out.phi))
        }
        None => (mu, None),
    };
    let (s, d, sigma) = schedule.coefficients(t);
    let eps = Signal::noise(state.x.width, state.x.height, &mut state.rng);
    let data = state
        .x
        .data
        .iter()
        .zip(&mu.data)
        .zip(&eps.data)
        .map(|((x, m), e)| s * x + d * m + sigma * e)
        .collect();
    state.x.data = data;
    state.t = t - 1;
    Ok(StepOutput { mu, phi })
}

/// Runs a state down to `t = 0` without rectification.
pub fn sample(
    state: &mut DenoisingState,
    schedule: &DiffusionSchedule,
    denoiser: &mut (impl Denoiser + ?Sized),
    ctx: StepContext<'_>,
) -> Result<()> {
    while !state.is_done() {
        sample_step(state, schedule, denoiser, None, ctx)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McsConfig {
    pub schedule: ScheduleConfig,
    /// Denoising strength the per-view chains start from.
    pub strength: f64,
    pub weights: WeightSchedule,
    /// Scene optimization steps after every denoising step.
    pub iterations_per_step: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for McsConfig {
    fn default() -> Self {
        McsConfig {
            schedule: ScheduleConfig::default(),
            strength: 1.0,
            weights: WeightSchedule::default(),
            iterations_per_step: 10,
            optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct McsView {
    pub pose: CameraPose,
    pub intrinsics: CameraIntrinsics,
}

/// Per-step record of a consistency-sampling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsStep {
    pub t: usize,
    pub weight: f64,
    /// φ per view.
    pub phi: Vec<f64>,
    /// Mean |x_{t−1} − render| per view, after the scene update.
    pub render_gap: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McsOutput {
    pub images: Vec<RgbImage>,
    /// Renders of the scene when sampling began; the denoiser's reference.
    pub initial_renders: Vec<Signal>,
    pub steps: Vec<McsStep>,
}

fn render_signal(scene: &GaussianScene, v: &McsView, cfg: &OptimizerConfig) -> Signal {
    Signal::from_image(&scene.render_with(&v.intrinsics, &v.pose, &cfg.raster).composite)
}

/// Lockstep sampling over all views. Each step renders every view from the
/// current scene, rectifies that view's estimate towards its render, advances
/// every chain, then fits the scene to the rectified estimates.
pub fn run_mcs(
    views: &[McsView],
    scene: &mut GaussianScene,
    denoiser: &mut (impl Denoiser + ?Sized),
    prompt: &str,
    cfg: &McsConfig,
) -> Result<McsOutput> {
    if views.is_empty() {
        return Err(Error::input("consistency sampling needs at least one view"));
    }
    let schedule = build_schedule(&cfg.schedule)?;
    let steps = schedule.steps();
    let initial: Vec<Signal> = views.iter().map(|v| render_signal(scene, v, &cfg.optimizer)).collect();
    let mut states = initial
        .iter()
        .enumerate()
        .map(|(i, x)| DenoisingState::start(x, &schedule, cfg.strength, mix_seed(cfg.seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let full = |v: &McsView| AlphaMask::ones(v.intrinsics.width, v.intrinsics.height);
    let mut records = Vec::new();
    while states[0].t > 0 {
        let t = states[0].t;
        let w = cfg.weights.at(t, steps);
        let mut phi = Vec::with_capacity(views.len());
        let mut frames = Vec::with_capacity(views.len());
        for (i, (view, state)) in views.iter().zip(&mut states).enumerate() {
            let reference = render_signal(scene, view, &cfg.optimizer);
            let out = sample_step(
                state,
                &schedule,
                denoiser,
                Some(Rectifier { reference: &reference, weight: w }),
                StepContext { prompt, denoiser_reference: Some(&initial[i]) },
            )
            .map_err(|e| e.context(format!("view {i}")))?;
            phi.push(out.phi.unwrap_or(1.0));
            frames.push(FrameEntry::new(out.mu.to_image(), full(view), view.pose, view.intrinsics)?);
        }
        let opt = OptimizerConfig { iterations: cfg.iterations_per_step, ..cfg.optimizer };
        scene.optimize_on(&frames, &opt, mix_seed(cfg.seed, 1000 + t as u64))?;
        let render_gap =
            views.iter().zip(&states).map(|(v, s)| s.x.mean_abs_diff(&render_signal(scene, v, &cfg.optimizer))).collect();
        records.push(McsStep { t, weight: w, phi, render_gap });
    }
    Ok(McsOutput { images: states.iter().map(|s| s.x.to_image()).collect(), initial_renders: initial, steps: records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::{StubDenoiseMode, StubDenoiser};
    use crate::gaussian::GaussianPrimitive;
    use proptest::prelude::*;

    fn cfg(steps: usize) -> ScheduleConfig {
        ScheduleConfig { steps, ..Default::default() }
    }

    #[test]
    fn schedule_identity_holds() {
        for steps in [1, 10, 50] {
            let s = build_schedule(&cfg(steps)).unwrap();
            for t in 1..=steps {
                let (st, dt, _) = s.coefficients(t);
                let lhs = st * s.alpha_bar[t].sqrt() + dt;
                assert!((lhs - s.alpha_bar[t - 1].sqrt()).abs() < 1e-12, "T={steps} t={t}");
            }
            assert_eq!(s.sigma[0], 0.0);
            assert!(s.sigma.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn single_step_collapses_to_estimate() {
        let s = build_schedule(&cfg(1)).unwrap();
        let (st, dt, sg) = s.coefficients(1);
        assert_eq!((st, dt, sg), (0.0, 1.0, 0.0));
    }

    #[test]
    fn zero_variance_is_pass_through() {
        let s = build_schedule(&ScheduleConfig { steps: 5, variance: VarianceSpec::Linear { start: 0.0, end: 0.0 } })
            .unwrap();
        assert!(s.s.iter().all(|v| *v == 1.0));
        assert!(s.d.iter().chain(&s.sigma).all(|v| *v == 0.0));
    }

    #[test]
    fn invalid_variances_are_rejected() {
        assert!(build_schedule(&ScheduleConfig { steps: 2, variance: VarianceSpec::Explicit(alloc::vec![0.1]) }).is_err());
        assert!(build_schedule(&ScheduleConfig { steps: 1, variance: VarianceSpec::Explicit(alloc::vec![1.0]) }).is_err());
        assert!(build_schedule(&cfg(0)).is_err());
    }

    #[test]
    fn strength_endpoints() {
        assert_eq!(strength_to_start_step(1.0, 1000).unwrap(), 1000);
        assert_eq!(strength_to_start_step(0.5, 1000).unwrap(), 500);
        assert_eq!(strength_to_start_step(0.0, 1000).unwrap(), 0);
        assert!(strength_to_start_step(1.1, 10).is_err());
    }

    #[test]
    fn gamma_zero_returns_input_and_gamma_one_ignores_it() {
        let s = build_schedule(&cfg(10)).unwrap();
        let a = Signal::filled(4, 3, 0.25);
        let b = Signal::filled(4, 3, 0.75);
        assert_eq!(DenoisingState::start(&a, &s, 0.0, 1).unwrap().x, a);
        assert_eq!(DenoisingState::start(&a, &s, 1.0, 1).unwrap().x, DenoisingState::start(&b, &s, 1.0, 1).unwrap().x);
    }

    #[test]
    fn rectify_worked_example() {
        let mu = Signal::from_vec(1, 1, alloc::vec![0.0, 2.0, 0.0]).unwrap();
        let bar = Signal::from_vec(1, 1, alloc::vec![0.0, 4.0, 0.0]).unwrap();
        let r = rectify_mu(&mu, &bar, 0.5).unwrap();
        assert_eq!(r.phi, 0.5);
        assert_eq!(r.mu_hat, mu);
    }

    #[test]
    fn rectify_zero_reference_is_degenerate() {
        let mu = Signal::filled(2, 2, 0.3);
        let bar = Signal::filled(2, 2, 0.5);
        assert!(matches!(rectify_mu(&mu, &bar, 0.5), Err(Error::Degenerate(_))));
        assert_eq!(rectify_mu(&mu, &bar, 0.0).unwrap().mu_hat, mu);
    }

    fn signal_strategy() -> impl Strategy<Value = (Signal, Signal, f64)> {
        (prop::collection::vec(-2.0f64..2.0, 12), prop::collection::vec(-2.0f64..2.0, 12), 0.0f64..=1.0).prop_map(
            |(a, b, w)| (Signal::from_vec(2, 2, a).unwrap(), Signal::from_vec(2, 2, b).unwrap(), w),
        )
    }

    proptest! {
        #[test]
        fn rectify_properties((mu, bar, w) in signal_strategy()) {
            prop_assume!(bar.std() > 1e-3);
            let r = rectify_mu(&mu, &bar, w).unwrap();
            let scaled = Signal::from_vec(2, 2, bar.as_slice().iter().map(|v| r.phi * v).collect()).unwrap();
            prop_assert!((scaled.std() - mu.std()).abs() < 1e-9);
            prop_assert_eq!(&rectify_mu(&mu, &bar, 0.0).unwrap().mu_hat, &mu);
            prop_assert_eq!(&rectify_mu(&mu, &mu, w).unwrap().mu_hat, &mu);
            // the reference's share of the estimate has std exactly w·std(μ)
            if mu.std() > 1e-6 {
                let contrib = Signal::from_vec(2, 2, bar.as_slice().iter().map(|v| w * r.phi * v).collect()).unwrap();
                prop_assert!((contrib.std() / mu.std() - w).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn final_step_form_returns_estimate() {
        let s = build_schedule(&cfg(1)).unwrap();
        let target = Signal::from_vec(1, 1, alloc::vec![0.1, 0.5, 0.9]).unwrap();
        let mut st = DenoisingState::start(&Signal::filled(1, 1, 0.0), &s, 1.0, 3).unwrap();
        let mut d = StubDenoiser::new(StubDenoiseMode::Fixed).with_target(target.clone());
        sample_step(&mut st, &s, &mut d, None, StepContext { prompt: "", denoiser_reference: None }).unwrap();
        assert_eq!(st.x, target);
    }

    #[test]
    fn fixed_target_sampling_converges() {
        let s = build_schedule(&cfg(50)).unwrap();
        let target = Signal::from_image(&RgbImage::from_fn(8, 8, |u, v| [u as f64 / 8.0, v as f64 / 8.0, 0.5]));
        let mut st = DenoisingState::start(&Signal::filled(8, 8, 0.0), &s, 1.0, 7).unwrap();
        let mut d = StubDenoiser::new(StubDenoiseMode::Fixed).with_target(target.clone());
        sample(&mut st, &s, &mut d, StepContext { prompt: "", denoiser_reference: None }).unwrap();
        assert!(st.x.mean_abs_diff(&target) < 1e-6);
    }

    #[test]
    fn zero_weight_rectifier_matches_plain_sampling() {
        let s = build_schedule(&cfg(20)).unwrap();
        let target = Signal::from_image(&RgbImage::from_fn(6, 5, |u, _| [u as f64 / 6.0, 0.2, 0.7]));
        let bar = Signal::from_image(&RgbImage::from_fn(6, 5, |_, v| [0.1, v as f64 / 5.0, 0.4]));
        let ctx = StepContext { prompt: "p", denoiser_reference: Some(&target) };
        let mut a = DenoisingState::start(&Signal::filled(6, 5, 0.0), &s, 1.0, 2).unwrap();
        let mut b = a.clone();
        let mut d = StubDenoiser::default();
        while !a.is_done() {
            sample_step(&mut a, &s, &mut d, None, ctx).unwrap();
            sample_step(&mut b, &s, &mut d, Some(Rectifier { reference: &bar, weight: 0.0 }), ctx).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn weight_ramp_endpoints() {
        let w = WeightSchedule::default();
        assert!((w.at(50, 50) - 0.8).abs() < 1e-15);
        assert!((w.at(1, 50) - 0.2).abs() < 1e-15);
    }

    fn small_scene() -> (GaussianScene, Vec<McsView>) {
        let k = CameraIntrinsics::from_fov(16, 16, 90.0).unwrap();
        let mut prims = Vec::new();
        for j in 0..8 {
            for i in 0..8 {
                let (x, y) = (-0.9 + 0.25 * i as f64, -0.9 + 0.25 * j as f64);
                let c = [0.2 + 0.08 * i as f64, 0.3 + 0.05 * j as f64, 0.5];
                prims.push(GaussianPrimitive::isotropic([x, y, 2.0], 0.12, 0.9, c, None));
            }
        }
        let views = alloc::vec![
            McsView { pose: CameraPose::identity(), intrinsics: k },
            McsView {
                pose: CameraPose::new(nalgebra::Matrix3::identity(), nalgebra::Vector3::new(-0.1, 0.0, 0.0)).unwrap(),
                intrinsics: k
            },
        ];
        (GaussianScene::from_primitives(prims), views)
    }

    #[test]
    fn full_weight_pulls_images_towards_renders() {
        let (mut scene, views) = small_scene();
        let cfg = McsConfig {
            schedule: cfg(20),
            weights: WeightSchedule::constant(1.0),
            iterations_per_step: 2,
            seed: 4,
            ..Default::default()
        };
        let out = run_mcs(&views[..1], &mut scene, &mut StubDenoiser::default(), "p", &cfg).unwrap();
        assert_eq!(out.steps.len(), 20);
        let gaps: Vec<f64> = out.steps.iter().map(|s| s.render_gap[0]).collect();
        for pair in gaps[gaps.len() - 10..].windows(2) {
            assert!(pair[1] <= pair[0], "{gaps:?}");
        }
    }

    #[test]
    fn mcs_is_deterministic() {
        let (scene, views) = small_scene();
        let cfg = McsConfig { schedule: cfg(5), iterations_per_step: 1, seed: 9, ..Default::default() };
        let (mut a, mut b) = (scene.clone(), scene);
        let oa = run_mcs(&views, &mut a, &mut StubDenoiser::default(), "p", &cfg).unwrap();
        let ob = run_mcs(&views, &mut b, &mut StubDenoiser::default(), "p", &cfg).unwrap();
        assert_eq!(oa, ob);
        assert_eq!(a, b);
    }
}

//! The model boundary. Every neural model the pipeline needs sits behind one
//! of four traits; [`AdapterSet`] bundles one of each and logs every call.
//! The stubs here are deterministic stand-ins that make the whole pipeline
//! runnable offline.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::{fingerprint_f64, fingerprint_str, mix_seed};
use crate::raster::{AlphaMask, DepthMap, RgbImage};
use crate::sampling::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Inpaint,
    Depth,
    Describe,
    Denoise,
}

impl Endpoint {
    pub fn as_str(self) -> &'static str {
        match self {
            Endpoint::Inpaint => "inpaint",
            Endpoint::Depth => "depth",
            Endpoint::Describe => "describe",
            Endpoint::Denoise => "denoise",
        }
    }
}

/// Depth-conditioned inpainting request.
#[derive(Debug, Clone, Copy)]
pub struct InpaintRequest<'a> {
    pub image: &'a RgbImage,
    /// Conditioning depth, metres.
    pub depth: &'a DepthMap,
    /// 1 marks pixels to generate.
    pub generate: &'a AlphaMask,
    pub prompt: &'a str,
    /// Denoising strength in `[0, 1]`.
    pub gamma: f64,
    pub seed: u64,
}

impl InpaintRequest<'_> {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.image.width(), self.image.height());
        if self.depth.width() != w || self.depth.height() != h || self.generate.width() != w || self.generate.height() != h
        {
            return Err(Error::input("inpaint image, depth and mask sizes differ"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::input("inpaint gamma must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DepthRequest<'a> {
    pub image: &'a RgbImage,
    /// Layout depth for the same view when the caller has it. Never sent to a
    /// remote model; stubs use it to behave like a geometry-aware estimator.
    pub reference: Option<&'a DepthMap>,
}

#[derive(Debug, Clone, Copy)]
pub struct DescribeRequest<'a> {
    pub image: &'a RgbImage,
    pub question: &'a str,
}

impl DescribeRequest<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.question.trim().is_empty() {
            return Err(Error::input("describe question must not be empty"));
        }
        Ok(())
    }
}

/// One denoiser evaluation: estimate the clean signal from `x` at step `t` of `total`.
#[derive(Debug, Clone, Copy)]
pub struct DenoiseRequest<'a> {
    pub x: &'a Signal,
    pub t: usize,
    pub total: usize,
    pub prompt: &'a str,
    pub seed: u64,
    /// What the caller expects the clean signal to look like, if anything.
    /// Local only, like [`DepthRequest::reference`].
    pub reference: Option<&'a Signal>,
}

impl DenoiseRequest<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.t > self.total {
            return Err(Error::input("denoise step must be in [1, T]"));
        }
        if let Some(r) = self.reference {
            if !r.same_shape(self.x) {
                return Err(Error::input("denoise reference shape differs from x"));
            }
        }
        Ok(())
    }
}

pub trait Inpainter {
    fn inpaint(&mut self, req: &InpaintRequest<'_>) -> Result<RgbImage>;
}

pub trait DepthEstimator {
    fn estimate_depth(&mut self, req: &DepthRequest<'_>) -> Result<DepthMap>;
}

pub trait Describer {
    fn describe(&mut self, req: &DescribeRequest<'_>) -> Result<String>;
}

/// Returns the model's estimate of the clean signal, not the predicted noise.
pub trait Denoiser {
    fn denoise(&mut self, req: &DenoiseRequest<'_>) -> Result<Signal>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub inpaint: usize,
    pub depth: usize,
    pub describe: usize,
    pub denoise: usize,
}

impl CallCounts {
    pub fn of(calls: &[Endpoint]) -> Self {
        let mut c = CallCounts::default();
        for e in calls {
            match e {
                Endpoint::Inpaint => c.inpaint += 1,
                Endpoint::Depth => c.depth += 1,
                Endpoint::Describe => c.describe += 1,
                Endpoint::Denoise => c.denoise += 1,
            }
        }
        c
    }
}

/// One adapter of each kind plus an ordered log of the calls made through it.
/// Responses are checked for shape and range before they reach the pipeline.
pub struct AdapterSet {
    inpainter: Box<dyn Inpainter>,
    depth: Box<dyn DepthEstimator>,
    describer: Box<dyn Describer>,
    denoiser: Box<dyn Denoiser>,
    log: Vec<Endpoint>,
}

impl AdapterSet {
    pub fn new(
        inpainter: Box<dyn Inpainter>,
        depth: Box<dyn DepthEstimator>,
        describer: Box<dyn Describer>,
        denoiser: Box<dyn Denoiser>,
    ) -> Self {
        AdapterSet { inpainter, depth, describer, denoiser, log: Vec::new() }
    }

    /// All four stubs with default settings.
    pub fn stub() -> Self {
        AdapterSet::new(
            Box::new(StubInpainter),
            Box::new(StubDepthEstimator::default()),
            Box::new(StubDescriber),
            Box::new(StubDenoiser::default()),
        )
    }

    pub fn with_inpainter(mut self, a: Box<dyn Inpainter>) -> Self {
        self.inpainter = a;
        self
    }

    pub fn with_depth_estimator(mut self, a: Box<dyn DepthEstimator>) -> Self {
        self.depth = a;
        self
    }

    pub fn with_describer(mut self, a: Box<dyn Describer>) -> Self {
        self.describer = a;
        self
    }

    pub fn with_denoiser(mut self, a: Box<dyn Denoiser>) -> Self {
        self.denoiser = a;
        self
    }

    pub fn call_log(&self) -> &[Endpoint] {
        &self.log
    }

    pub fn counts(&self) -> CallCounts {
        CallCounts::of(&self.log)
    }

    /// Counts of calls made after the log had `mark` entries.
    pub fn counts_since(&self, mark: usize) -> CallCounts {
        CallCounts::of(&self.log[mark.min(self.log.len())..])
    }
}

impl Inpainter for AdapterSet {
    fn inpaint(&mut self, req: &InpaintRequest<'_>) -> Result<RgbImage> {
        req.validate()?;
        self.log.push(Endpoint::Inpaint);
        let out = self.inpainter.inpaint(req)?;
        if !out.same_shape(req.image.width(), req.image.height()) {
            return Err(adapter_error(Endpoint::Inpaint, "response image size differs from request"));
        }
        Ok(out)
    }
}

impl DepthEstimator for AdapterSet {
    fn estimate_depth(&mut self, req: &DepthRequest<'_>) -> Result<DepthMap> {
        self.log.push(Endpoint::Depth);
        let out = self.depth.estimate_depth(req)?;
        if out.width() != req.image.width() || out.height() != req.image.height() {
            return Err(adapter_error(Endpoint::Depth, "response depth size differs from request"));
        }
        Ok(out)
    }
}

impl Describer for AdapterSet {
    fn describe(&mut self, req: &DescribeRequest<'_>) -> Result<String> {
        req.validate()?;
        self.log.push(Endpoint::Describe);
        self.describer.describe(req)
    }
}

impl Denoiser for AdapterSet {
    fn denoise(&mut self, req: &DenoiseRequest<'_>) -> Result<Signal> {
        req.validate()?;
        self.log.push(Endpoint::Denoise);
        let out = self.denoiser.denoise(req)?;
        if !out.same_shape(req.x) {
            return Err(adapter_error(Endpoint::Denoise, "response shape differs from request"));
        }
        Ok(out)
    }
}

pub fn adapter_error(endpoint: Endpoint, message: impl Into<String>) -> Error {
    Error::Adapter { endpoint: endpoint.as_str(), message: message.into() }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h - h.floor()) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Fills generated pixels with a flat colour whose hue is a hash of the
/// prompt's leading clause (text up to the first '.') and the seed, shaded
/// darker with distance. Generated pixels become
/// `(1 − γ)·input + γ·fill`; everything else is returned unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubInpainter;

impl StubInpainter {
    pub fn fill_color(prompt: &str, seed: u64) -> [f64; 3] {
        let key = prompt.split('.').next().unwrap_or("").trim();
        let h = fingerprint_str(key, seed);
        hsv_to_rgb((h >> 11) as f64 / (1u64 << 53) as f64, 0.45, 0.9)
    }

    /// Brightness factor in `[0.55, 1]`, falling linearly over the valid depth range.
    fn shade(depth: &DepthMap, i: usize) -> f64 {
        match (depth.get_at(i), depth.range()) {
            (Some(d), Some((lo, hi))) if hi > lo => 1.0 - 0.45 * (d - lo) / (hi - lo),
            _ => 0.8,
        }
    }
}

impl Inpainter for StubInpainter {
    fn inpaint(&mut self, req: &InpaintRequest<'_>) -> Result<RgbImage> {
        req.validate()?;
        let base = Self::fill_color(req.prompt, req.seed);
        let g = req.gamma;
        let mut out = req.image.clone();
        for i in 0..out.len_pixels() {
            if g == 0.0 || !req.generate.is_known_at(i) {
                continue;
            }
            let s = Self::shade(req.depth, i);
            let src = req.image.pixel_at(i);
            out.set_pixel_at(i, core::array::from_fn(|c| (1.0 - g) * src[c] + g * base[c] * s));
        }
        Ok(out)
    }
}

/// Affine inverse-depth distortion applied by the stub estimator:
/// the output `D̂` satisfies `alpha / D̂ + beta = 1 / D` for truth `D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthDistortion {
    pub alpha: f64,
    pub beta: f64,
    /// Relative amplitude of a smooth multiplicative ripple on inverse depth.
    pub noise: f64,
}

impl Default for DepthDistortion {
    fn default() -> Self {
        DepthDistortion { alpha: 1.5, beta: 0.05, noise: 0.0 }
    }
}

/// Geometry-aware stand-in for a monocular depth model. With a truth map
/// (registered for an exact image, or passed as the request reference) it
/// returns the truth warped by [`DepthDistortion`]; without one it returns a
/// smooth seeded field in `[0.5, 10]` m.
#[derive(Debug, Clone, Default)]
pub struct StubDepthEstimator {
    pub distortion: DepthDistortion,
    pub seed: u64,
    registered: Vec<(u64, DepthMap)>,
}

impl StubDepthEstimator {
    pub fn new(distortion: DepthDistortion, seed: u64) -> Self {
        StubDepthEstimator { distortion, seed, registered: Vec::new() }
    }

    /// Test hook: answer requests for exactly this image with `truth`.
    pub fn register(&mut self, image: &RgbImage, truth: DepthMap) {
        let key = fingerprint_f64(image.as_slice());
        self.registered.retain(|(k, _)| *k != key);
        self.registered.push((key, truth));
    }

    fn distort(&self, truth: &DepthMap, phase: f64) -> DepthMap {
        let DepthDistortion { alpha, beta, noise } = self.distortion;
        let w = truth.width();
        let mut out = DepthMap::invalid(w, truth.height());
        for i in 0..truth.len_pixels() {
            let Some(d) = truth.get_at(i) else { continue };
            let (u, v) = ((i % w) as f64, (i / w) as f64);
            let ripple = 1.0 + noise * (0.13 * u + phase).sin() * (0.11 * v + 2.0 * phase).cos();
            let inv = (1.0 / d - beta) / alpha * ripple;
            if inv > 0.0 {
                out.set_at(i, 1.0 / inv);
            }
        }
        out
    }

    fn smooth_field(w: usize, h: usize, seed: u64) -> DepthMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<[f64; 3]> = (0..3)
            .map(|_| {
                [
                    rng.random_range(0.5..2.0) * core::f64::consts::TAU / w as f64,
                    rng.random_range(0.5..2.0) * core::f64::consts::TAU / h as f64,
                    rng.random_range(0.0..core::f64::consts::TAU),
                ]
            })
            .collect();
        DepthMap::from_fn(w, h, |u, v| {
            let s: f64 = waves.iter().map(|[a, b, p]| (a * u as f64 + b * v as f64 + p).sin()).sum::<f64>() / 3.0;
            Some(5.25 + 4.75 * s)
        })
    }
}

impl DepthEstimator for StubDepthEstimator {
    fn estimate_depth(&mut self, req: &DepthRequest<'_>) -> Result<DepthMap> {
        let key = fingerprint_f64(req.image.as_slice());
        let phase = (mix_seed(key, self.seed) >> 11) as f64 / (1u64 << 53) as f64 * core::f64::consts::TAU;
        let truth = self.registered.iter().find(|(k, _)| *k == key).map(|(_, d)| d).or(req.reference);
        match truth {
            Some(t) if t.width() == req.image.width() && t.height() == req.image.height() => Ok(self.distort(t, phase)),
            Some(_) => Err(Error::input("registered depth size differs from the image")),
            None => Ok(Self::smooth_field(req.image.width(), req.image.height(), mix_seed(key, self.seed))),
        }
    }
}

pub const STUB_SCENE_CORE: &str = "living room, modern, white, oak";
pub const STUB_STYLE: &str = "modern, bright, white";
pub const STUB_DESCRIPTION: &str =
    "A modern living room with white walls, an oak floor, a fabric sofa and a low wooden coffee table.";

/// Answers by question pattern: scene-core questions get a four-field list,
/// style questions a three-word list, yes/no questions "Yes", anything else
/// a fixed one-sentence description.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubDescriber;

impl Describer for StubDescriber {
    fn describe(&mut self, req: &DescribeRequest<'_>) -> Result<String> {
        req.validate()?;
        let q = req.question;
        let text = if q.contains("Yes or No") {
            "Yes"
        } else if q.contains("scene category") {
            STUB_SCENE_CORE
        } else if q.contains("visual style, lighting, and dominant color") {
            STUB_STYLE
        } else {
            STUB_DESCRIPTION
        };
        Ok(text.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum StubDenoiseMode {
    /// `(1 − t/T)·x + (t/T)·target`.
    #[default]
    Blend,
    /// Always the target.
    Fixed,
}

/// Denoiser stand-in pulling towards a target: the registered one if set,
/// else the request reference, else `x` itself.
#[derive(Debug, Clone, Default)]
pub struct StubDenoiser {
    pub mode: StubDenoiseMode,
    target: Option<Signal>,
}

impl StubDenoiser {
    pub fn new(mode: StubDenoiseMode) -> Self {
        StubDenoiser { mode, target: None }
    }

    pub fn with_target(mut self, target: Signal) -> Self {
        self.target = Some(target);
        self
    }
}

impl Denoiser for StubDenoiser {
    fn denoise(&mut self, req: &DenoiseRequest<'_>) -> Result<Signal> {
        req.validate()?;
        let Some(target) = self.target.as_ref().or(req.reference) else {
            return Ok(req.x.clone());
        };
        if !target.same_shape(req.x) {
            return Err(Error::input("stub denoiser target shape differs from x"));
        }
        Ok(match self.mode {
            StubDenoiseMode::Fixed => target.clone(),
            StubDenoiseMode::Blend => {
                let k = req.t as f64 / req.total as f64;
                req.x.zip_map(target, |x, y| (1.0 - k) * x + k * y)
            }
        })
    }
}

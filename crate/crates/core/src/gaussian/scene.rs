use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::loss::{masked_loss, LossConfig};
use crate::gaussian::optim::{adam_step, AdamState, OptimizerConfig};
use crate::gaussian::primitive::{GaussianPrimitive, Origin, ParamArray};
use crate::gaussian::render::{project_scene, RasterSettings, RenderOutput};
use crate::geometry::{unproject, CameraIntrinsics, CameraPose};
use crate::raster::{AlphaMask, DepthMap, RgbImage};

/// One supervision view: the image, where it may be trusted, and its camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub image: RgbImage,
    pub mask: AlphaMask,
    pub pose: CameraPose,
    pub intrinsics: CameraIntrinsics,
}

impl FrameEntry {
    pub fn new(image: RgbImage, mask: AlphaMask, pose: CameraPose, intrinsics: CameraIntrinsics) -> Result<Self> {
        let f = FrameEntry { image, mask, pose, intrinsics };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        if !self.image.same_shape(w, h) || self.mask.width() != w || self.mask.height() != h {
            return Err(Error::input("frame image and mask must match the intrinsics size"));
        }
        Ok(())
    }
}

/// How new primitives are seeded from a point map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpawnConfig {
    /// Use every `stride`-th pixel in each direction.
    pub stride: usize,
    pub opacity: f64,
}

impl Default for SpawnConfig {
    fn default() -> Self {
        SpawnConfig { stride: 1, opacity: 0.9 }
    }
}

/// One isotropic primitive per region pixel with valid depth, sized to the
/// pixel footprint at that depth.
pub fn init_from_pointmap(
    image: &RgbImage,
    depth: &DepthMap,
    k: &CameraIntrinsics,
    pose: &CameraPose,
    region: &AlphaMask,
    spawn: &SpawnConfig,
    view: u32,
) -> Result<Vec<GaussianPrimitive>> {
    let (w, h) = (k.width, k.height);
    if !image.same_shape(w, h) || depth.width() != w || depth.height() != h || region.width() != w || region.height() != h {
        return Err(Error::input("spawn inputs must match the intrinsics size"));
    }
    let stride = spawn.stride.max(1);
    let points = unproject(depth, k, pose);
    let mut out = Vec::new();
    for v in (0..h).step_by(stride) {
        for u in (0..w).step_by(stride) {
            let i = v * w + u;
            if !region.is_known_at(i) {
                continue;
            }
            let (Some(p), Some(z)) = (points.get(u, v), depth.get_at(i)) else { continue };
            out.push(GaussianPrimitive::isotropic(
                p,
                k.pixel_footprint(z) * stride as f64,
                spawn.opacity,
                image.pixel_at(i),
                Some(Origin { view, pixel: i as u32 }),
            ));
        }
    }
    Ok(out)
}

/// A newly generated view to fold into the scene.
#[derive(Debug, Clone, Copy)]
pub struct ViewUpdate<'a> {
    pub image: &'a RgbImage,
    /// 1 where new primitives should be spawned.
    pub spawn_region: &'a AlphaMask,
    pub depth: &'a DepthMap,
    pub pose: &'a CameraPose,
    pub intrinsics: &'a CameraIntrinsics,
    pub view: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub iterations: usize,
    /// Loss of the final iteration, if any ran.
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateReport {
    pub spawned: usize,
    pub optimize: OptimizeReport,
}

/// Gaussian primitives with their optimizer state and supervision frames.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianScene {
    primitives: Vec<GaussianPrimitive>,
    adam: Vec<AdamState>,
    frames: Vec<FrameEntry>,
}

impl GaussianScene {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_primitives(primitives: Vec<GaussianPrimitive>) -> Self {
        let adam = alloc::vec![AdamState::default(); primitives.len()];
        GaussianScene { primitives, adam, frames: Vec::new() }
    }

    pub fn primitives(&self) -> &[GaussianPrimitive] {
        &self.primitives
    }

    /// Mutable access to existing primitives; the set itself cannot shrink or grow here.
    pub fn primitives_mut(&mut self) -> &mut [GaussianPrimitive] {
        &mut self.primitives
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn frames(&self) -> &[FrameEntry] {
        &self.frames
    }

    pub fn add_primitives(&mut self, new: impl IntoIterator<Item = GaussianPrimitive>) -> usize {
        let before = self.primitives.len();
        self.primitives.extend(new);
        self.adam.resize(self.primitives.len(), AdamState::default());
        self.primitives.len() - before
    }

    pub fn push_frame(&mut self, frame: FrameEntry) -> Result<()> {
        frame.validate()?;
        self.frames.push(frame);
        Ok(())
    }

    pub fn render(&self, k: &CameraIntrinsics, pose: &CameraPose) -> RenderOutput {
        self.render_with(k, pose, &RasterSettings::default())
    }

    pub fn render_with(&self, k: &CameraIntrinsics, pose: &CameraPose, settings: &RasterSettings) -> RenderOutput {
        project_scene(&self.primitives, k, pose, settings).forward()
    }

    /// Loss of the composite render against `target` on known `mask` pixels,
    /// and its gradient with respect to every primitive.
    pub fn render_gradients(
        &self,
        k: &CameraIntrinsics,
        pose: &CameraPose,
        target: &RgbImage,
        mask: &AlphaMask,
        loss: &LossConfig,
        settings: &RasterSettings,
    ) -> Result<(f64, Vec<ParamArray>)> {
        if !target.same_shape(k.width, k.height) || mask.width() != k.width || mask.height() != k.height {
            return Err(Error::input("target and mask must match the intrinsics size"));
        }
        let projected = project_scene(&self.primitives, k, pose, settings);
        let out = projected.forward();
        let l = masked_loss(&out.composite, target, mask, loss);
        Ok((l.value, projected.backward(&self.primitives, &l.grad)))
    }

    /// Runs `cfg.iterations` Adam steps against this scene's own frames.
    pub fn optimize(&mut self, cfg: &OptimizerConfig, seed: u64) -> Result<OptimizeReport> {
        let frames = core::mem::take(&mut self.frames);
        let r = self.optimize_on(&frames, cfg, seed);
        self.frames = frames;
        r
    }

    /// Runs Adam steps against an arbitrary frame list, sampling one frame
    /// uniformly per step. The scene's own frame list is not touched.
    pub fn optimize_on(&mut self, frames: &[FrameEntry], cfg: &OptimizerConfig, seed: u64) -> Result<OptimizeReport> {
        if cfg.iterations == 0 {
            return Ok(OptimizeReport { iterations: 0, final_loss: None });
        }
        if frames.is_empty() {
            return Err(Error::input("optimization needs at least one frame"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut last = None;
        for _ in 0..cfg.iterations {
            let f = &frames[rng.random_range(0..frames.len())];
            let (loss, grads) =
                self.render_gradients(&f.intrinsics, &f.pose, &f.image, &f.mask, &cfg.loss, &cfg.raster)?;
            for ((g, s), d) in self.primitives.iter_mut().zip(self.adam.iter_mut()).zip(&grads) {
                adam_step(g, s, d, cfg);
            }
            last = Some(loss);
        }
        Ok(OptimizeReport { iterations: cfg.iterations, final_loss: last })
    }

    /// Spawns primitives over the update's region, records the view as a
    /// supervision frame (masked to valid depth) and optimizes.
    pub fn integrate_view(
        &mut self,
        update: &ViewUpdate<'_>,
        spawn: &SpawnConfig,
        cfg: &OptimizerConfig,
        seed: u64,
    ) -> Result<IntegrateReport> {
        let new = init_from_pointmap(
            update.image,
            update.depth,
            update.intrinsics,
            update.pose,
            update.spawn_region,
            spawn,
            update.view,
        )?;
        let spawned = self.add_primitives(new);
        self.push_frame(FrameEntry::new(
            update.image.clone(),
            update.depth.validity_mask(),
            *update.pose,
            *update.intrinsics,
        )?)?;
        let optimize = self.optimize(cfg, seed)?;
        Ok(IntegrateReport { spawned, optimize })
    }
}

//! Seam blending between the input view and generated content at views close
//! to the input: inpaint, re-estimate depth, regenerate the whole frame,
//! re-estimate again, then inpaint the original hole with the refined depth.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::adapters::{DepthEstimator, DepthRequest, InpaintRequest, Inpainter};
use crate::depth::{align_depth_affine, apply_affine, crop_margins, AffineDepthParams};
use crate::error::{Error, Result};
use crate::raster::{AlphaMask, DepthMap, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroutMode {
    Inpaint,
    Refine,
}

/// Denoising strengths of the three inpainting passes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroutGammas {
    pub first: f64,
    pub regenerate: f64,
    pub last: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroutingConfig {
    pub inpaint: GroutGammas,
    pub refine: GroutGammas,
}

impl Default for GroutingConfig {
    fn default() -> Self {
        GroutingConfig {
            inpaint: GroutGammas { first: 1.0, regenerate: 0.95, last: 1.0 },
            refine: GroutGammas { first: 0.5, regenerate: 0.5, last: 0.5 },
        }
    }
}

impl GroutingConfig {
    pub fn gammas(&self, mode: GroutMode) -> GroutGammas {
        match mode {
            GroutMode::Inpaint => self.inpaint,
            GroutMode::Refine => self.refine,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GroutingContext<'a> {
    /// View holding the known content plus holes.
    pub seam_image: &'a RgbImage,
    /// 1 marks the originally unknown pixels.
    pub unknown: &'a AlphaMask,
    pub rendered_depth: &'a DepthMap,
    pub prompt: &'a str,
    pub mode: GroutMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroutingOutput {
    pub image: RgbImage,
    /// Second depth estimate, aligned to the rendered depth.
    pub depth: DepthMap,
    pub alignment: AffineDepthParams,
}

fn step<T>(n: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.context(format!("grouting step {n}")))
}

pub fn grouting_block<A>(ctx: &GroutingContext<'_>, cfg: &GroutingConfig, adapters: &mut A) -> Result<GroutingOutput>
where
    A: Inpainter + DepthEstimator + ?Sized,
{
    let (w, h) = (ctx.seam_image.width(), ctx.seam_image.height());
    if ctx.unknown.width() != w || ctx.unknown.height() != h {
        return Err(Error::input("grouting mask size differs from the image"));
    }
    let g = cfg.gammas(ctx.mode);
    let inpaint = |a: &mut A, image: &RgbImage, depth: &DepthMap, generate: &AlphaMask, gamma: f64| {
        a.inpaint(&InpaintRequest { image, depth, generate, prompt: ctx.prompt, gamma, seed: ctx.seed })
    };
    let estimate = |a: &mut A, image: &RgbImage| -> Result<DepthMap> {
        let d = a.estimate_depth(&DepthRequest { image, reference: Some(ctx.rendered_depth) })?;
        if d.valid_count() == 0 {
            return Err(Error::degenerate("depth estimate has no valid pixels"));
        }
        Ok(d)
    };

    let first = step(1, inpaint(adapters, ctx.seam_image, ctx.rendered_depth, ctx.unknown, g.first))?;
    let d1 = step(2, estimate(adapters, &first))?;
    let full = AlphaMask::ones(w, h);
    let regenerated = step(3, inpaint(adapters, &first, &d1, &full, g.regenerate))?;
    let d2 = step(4, estimate(adapters, &regenerated))?;
    let alignment = step(4, align_depth_affine(&d2, ctx.rendered_depth, &full))?;
    let refined = apply_affine(&d2, alignment);
    let mut image = step(5, inpaint(adapters, ctx.seam_image, &refined, ctx.unknown, g.last))?;
    // the last pass may only write inside the hole, whatever the adapter did
    image.paste_where(ctx.seam_image, &ctx.unknown.unknown_region());
    Ok(GroutingOutput { image, depth: refined, alignment })
}

/// Crops partial objects off the left and right edges of the input view.
pub fn prepare_input_view(image: &RgbImage, crop_fraction: f64) -> Result<RgbImage> {
    crop_margins(image, crop_fraction)
}

/// Largest per-row colour jump (L1 over channels) between column `c − 1` and `c`.
pub fn max_column_jump(image: &RgbImage, c: usize) -> f64 {
    (0..image.height())
        .map(|v| {
            let (a, b) = (image.pixel(c - 1, v), image.pixel(c, v));
            (0..3).map(|k| (a[k] - b[k]).abs()).sum::<f64>()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::{AdapterSet, CallCounts, Endpoint};

    struct Fixture {
        image: RgbImage,
        unknown: AlphaMask,
        depth: DepthMap,
    }

    /// Left 60 % known texture, right side an empty hole.
    fn fixture() -> Fixture {
        let (w, h) = (20, 12);
        let seam = 12;
        let image = RgbImage::from_fn(w, h, |u, v| {
            if u < seam {
                [0.55 + 0.01 * v as f64, 0.5, 0.45 + 0.005 * u as f64]
            } else {
                [0.0; 3]
            }
        });
        let unknown = AlphaMask::from_fn(w, h, |u, _| if u >= seam { 1.0 } else { 0.0 });
        let depth = DepthMap::from_fn(w, h, |u, v| Some(2.0 + 0.05 * u as f64 + 0.02 * v as f64));
        Fixture { image, unknown, depth }
    }

    fn ctx<'a>(f: &'a Fixture, unknown: &'a AlphaMask, mode: GroutMode) -> GroutingContext<'a> {
        GroutingContext { seam_image: &f.image, unknown, rendered_depth: &f.depth, prompt: "modern-style office", mode, seed: 5 }
    }

    #[test]
    fn known_region_is_preserved_exactly() {
        let f = fixture();
        for mode in [GroutMode::Inpaint, GroutMode::Refine] {
            let out = grouting_block(&ctx(&f, &f.unknown, mode), &GroutingConfig::default(), &mut AdapterSet::stub()).unwrap();
            for i in 0..f.image.len_pixels() {
                if !f.unknown.is_known_at(i) {
                    assert_eq!(out.image.pixel_at(i), f.image.pixel_at(i));
                }
            }
            assert_ne!(out.image, f.image);
        }
    }

    #[test]
    fn empty_hole_returns_input() {
        let f = fixture();
        let none = AlphaMask::zeros(20, 12);
        let out = grouting_block(&ctx(&f, &none, GroutMode::Inpaint), &GroutingConfig::default(), &mut AdapterSet::stub())
            .unwrap();
        assert_eq!(out.image, f.image);
        assert_eq!(out.depth.valid_count(), 20 * 12);
    }

    #[test]
    fn call_pattern_is_three_inpaints_two_depths() {
        let f = fixture();
        let mut a = AdapterSet::stub();
        grouting_block(&ctx(&f, &f.unknown, GroutMode::Inpaint), &GroutingConfig::default(), &mut a).unwrap();
        use Endpoint::*;
        assert_eq!(a.call_log(), &[Inpaint, Depth, Inpaint, Depth, Inpaint]);
        assert_eq!(a.counts(), CallCounts { inpaint: 3, depth: 2, ..Default::default() });
    }

    #[test]
    fn is_deterministic() {
        let f = fixture();
        let run = || {
            grouting_block(&ctx(&f, &f.unknown, GroutMode::Refine), &GroutingConfig::default(), &mut AdapterSet::stub())
                .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn seam_jump_does_not_increase() {
        let f = fixture();
        let before = max_column_jump(&f.image, 12);
        for mode in [GroutMode::Inpaint, GroutMode::Refine] {
            let out = grouting_block(&ctx(&f, &f.unknown, mode), &GroutingConfig::default(), &mut AdapterSet::stub()).unwrap();
            let after = max_column_jump(&out.image, 12);
            assert!(after <= before, "{mode:?}: {after} > {before}");
        }
    }

    #[test]
    fn aligned_depth_matches_layout() {
        let f = fixture();
        let out = grouting_block(&ctx(&f, &f.unknown, GroutMode::Inpaint), &GroutingConfig::default(), &mut AdapterSet::stub())
            .unwrap();
        for i in 0..f.depth.len_pixels() {
            assert!((out.depth.get_at(i).unwrap() - f.depth.get_at(i).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn crop_matches_margins() {
        let img = RgbImage::new(512, 4);
        assert_eq!(prepare_input_view(&img, 0.05).unwrap().width(), 460);
        assert_eq!(prepare_input_view(&img, 0.0).unwrap(), img);
    }
}

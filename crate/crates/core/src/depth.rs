//! Depth-map algebra: inverse-depth affine alignment, forward warping between
//! views and margin cropping.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::camera::{project_point, CameraIntrinsics, CameraPose};
use crate::raster::{AlphaMask, DepthMap, RgbImage};

/// Maps estimated depth `d` to `1 / (alpha / d + beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineDepthParams {
    pub alpha: f64,
    /// Inverse metres.
    pub beta: f64,
}

impl AffineDepthParams {
    pub const IDENTITY: AffineDepthParams = AffineDepthParams { alpha: 1.0, beta: 0.0 };
}

fn same_dims(a: (usize, usize), b: (usize, usize), what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Input(alloc::format!("{what}: raster sizes differ ({a:?} vs {b:?})")));
    }
    Ok(())
}

/// Pixels that are masked known and valid in both maps, as `(1/estimated, 1/rendered)`.
fn inverse_pairs(estimated: &DepthMap, rendered: &DepthMap, mask: &AlphaMask) -> Result<Vec<(f64, f64)>> {
    let dims = (estimated.width(), estimated.height());
    same_dims(dims, (rendered.width(), rendered.height()), "depth alignment")?;
    same_dims(dims, (mask.width(), mask.height()), "depth alignment mask")?;
    Ok((0..estimated.len_pixels())
        .filter(|&i| mask.is_known_at(i))
        .filter_map(|i| Some((1.0 / estimated.get_at(i)?, 1.0 / rendered.get_at(i)?)))
        .collect())
}

/// Least-squares fit of `alpha / estimated + beta ≈ 1 / rendered` over
/// jointly valid, masked pixels.
pub fn align_depth_affine(estimated: &DepthMap, rendered: &DepthMap, mask: &AlphaMask) -> Result<AffineDepthParams> {
    let pairs = inverse_pairs(estimated, rendered, mask)?;
    if pairs.len() < 2 {
        return Err(Error::input("depth alignment needs at least two jointly valid pixels"));
    }
    // Normal equations solved in centred form, which is the same solution
    // with far less cancellation.
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut sq = 0.0;
    for &(x, y) in &pairs {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        sq += x * x;
    }
    if !(sxx > 1e-18 * sq) {
        return Err(Error::degenerate("estimated inverse depth is constant over the fitted pixels"));
    }
    let alpha = sxy / sxx;
    Ok(AffineDepthParams { alpha, beta: my - alpha * mx })
}

/// Sum of squared inverse-depth residuals of `params` over the fitted domain.
pub fn affine_residual(
    estimated: &DepthMap,
    rendered: &DepthMap,
    mask: &AlphaMask,
    params: AffineDepthParams,
) -> Result<f64> {
    Ok(inverse_pairs(estimated, rendered, mask)?
        .iter()
        .map(|&(x, y)| {
            let r = params.alpha * x + params.beta - y;
            r * r
        })
        .sum())
}

/// Aligned depth; pixels whose aligned inverse depth is not positive become invalid.
pub fn apply_affine(estimated: &DepthMap, params: AffineDepthParams) -> DepthMap {
    let mut out = DepthMap::invalid(estimated.width(), estimated.height());
    for i in 0..estimated.len_pixels() {
        if let Some(d) = estimated.get_at(i) {
            let inv = params.alpha / d + params.beta;
            if inv > 0.0 {
                out.set_at(i, 1.0 / inv);
            }
        }
    }
    out
}

/// Forward-warped view: colour, coverage and the z-depth in the destination camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Warped {
    pub image: RgbImage,
    pub alpha: AlphaMask,
    pub depth: DepthMap,
}

/// Splats every valid source pixel into the destination view, one pixel per
/// source sample, keeping the nearest depth. Equal depths keep the smaller
/// source index. Holes are left for the inpainter.
pub fn forward_warp_full(
    image: &RgbImage,
    depth: &DepthMap,
    src: &CameraPose,
    dst: &CameraPose,
    k: &CameraIntrinsics,
) -> Result<Warped> {
    let (w, h) = (k.width, k.height);
    same_dims((image.width(), image.height()), (w, h), "forward warp image")?;
    same_dims((depth.width(), depth.height()), (w, h), "forward warp depth")?;
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut source = vec![usize::MAX; w * h];
    let r_t = src.rotation_matrix().transpose();
    let t = src.translation_vector();
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let Some(z) = depth.get_at(i) else { continue };
            let world = r_t * (k.ray(u as f64, v as f64) * z - t);
            let Some(p) = project_point(&world, k, dst) else { continue };
            let (du, dv) = (p.u.round(), p.v.round());
            if du < 0.0 || dv < 0.0 || du >= w as f64 || dv >= h as f64 {
                continue;
            }
            let j = dv as usize * w + du as usize;
            if p.depth < zbuf[j] {
                zbuf[j] = p.depth;
                source[j] = i;
            }
        }
    }
    let mut out = RgbImage::new(w, h);
    let mut alpha = AlphaMask::zeros(w, h);
    let mut out_depth = DepthMap::invalid(w, h);
    for j in 0..w * h {
        if source[j] != usize::MAX {
            out.set_pixel_at(j, image.pixel_at(source[j]));
            alpha.set_at(j, 1.0);
            out_depth.set_at(j, zbuf[j]);
        }
    }
    Ok(Warped { image: out, alpha, depth: out_depth })
}

pub fn forward_warp(
    image: &RgbImage,
    depth: &DepthMap,
    src: &CameraPose,
    dst: &CameraPose,
    k: &CameraIntrinsics,
) -> Result<(RgbImage, AlphaMask)> {
    let w = forward_warp_full(image, depth, src, dst, k)?;
    Ok((w.image, w.alpha))
}

/// Columns removed from each side for a given width and fraction.
pub fn crop_columns(width: usize, fraction: f64) -> Result<usize> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(Error::input("crop fraction must be in [0, 0.5)"));
    }
    let c = (fraction * width as f64).round() as usize;
    if 2 * c >= width {
        return Err(Error::input("crop would remove the whole image"));
    }
    Ok(c)
}

/// Removes `round(fraction · width)` columns from the left and right edges.
pub fn crop_margins(image: &RgbImage, fraction: f64) -> Result<RgbImage> {
    let c = crop_columns(image.width(), fraction)?;
    Ok(RgbImage::from_fn(image.width() - 2 * c, image.height(), |u, v| image.pixel(u + c, v)))
}

pub fn crop_depth_margins(depth: &DepthMap, fraction: f64) -> Result<DepthMap> {
    let c = crop_columns(depth.width(), fraction)?;
    Ok(DepthMap::from_fn(depth.width() - 2 * c, depth.height(), |u, v| depth.get(u + c, v)))
}

pub fn crop_mask_margins(mask: &AlphaMask, fraction: f64) -> Result<AlphaMask> {
    let c = crop_columns(mask.width(), fraction)?;
    Ok(AlphaMask::from_fn(mask.width() - 2 * c, mask.height(), |u, v| mask.value(u + c, v)))
}

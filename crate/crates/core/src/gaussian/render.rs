//! Tile-binned front-to-back compositing of projected splats, and its adjoint.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::gaussian::primitive::{GaussianPrimitive, ParamArray, PARAM_COUNT};
use crate::gaussian::project::{project_splat, splat_backward, ProjCamera, Splat, SplatGrad};
use crate::geometry::{CameraIntrinsics, CameraPose};
use crate::raster::{AlphaMask, DepthMap, RgbImage};

pub const TILE: usize = 8;

/// Rasterizer cut-offs. [`RasterSettings::exact`] disables all of them, which
/// makes the rendered image a smooth function of every parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterSettings {
    /// Footprint half-extent in standard deviations.
    pub extent_sigma: f64,
    /// Contributions below this alpha are skipped.
    pub alpha_min: f64,
    /// Compositing stops once transmittance drops below this.
    pub t_min: f64,
}

impl Default for RasterSettings {
    fn default() -> Self {
        RasterSettings { extent_sigma: 3.0, alpha_min: 1.0 / 255.0, t_min: 1e-4 }
    }
}

impl RasterSettings {
    pub fn exact() -> Self {
        RasterSettings { extent_sigma: f64::INFINITY, alpha_min: 0.0, t_min: 0.0 }
    }
}

/// Rendered view.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    /// Colour divided by coverage; black where nothing was drawn.
    pub rgb: RgbImage,
    /// Colour composited over black. This is what losses compare against.
    pub composite: RgbImage,
    /// Accumulated coverage `1 − T_final`.
    pub alpha: AlphaMask,
    /// Coverage-normalized expected z-depth; invalid where alpha is 0.
    pub depth: DepthMap,
}

/// Splats of one scene seen from one camera, sorted front to back and binned
/// into square tiles.
pub struct Projected {
    pub splats: Vec<Splat>,
    hot: Vec<Hot>,
    tiles: Vec<Vec<u32>>,
    tiles_x: usize,
    cam: ProjCamera,
    settings: RasterSettings,
    n_primitives: usize,
}

/// The fields compositing touches, packed for cache locality.
#[derive(Clone, Copy)]
struct Hot {
    mean: [f64; 2],
    conic: [f64; 3],
    opacity: f64,
    radius: f64,
}

struct Contribution {
    splat: u32,
    alpha: f64,
    transmittance: f64,
    gauss: f64,
    dx: f64,
    dy: f64,
}

pub fn project_scene(
    primitives: &[GaussianPrimitive],
    k: &CameraIntrinsics,
    pose: &CameraPose,
    settings: &RasterSettings,
) -> Projected {
    let cam = ProjCamera::new(k, pose);
    let mut splats: Vec<Splat> = primitives
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project_splat(i, g, &cam, settings.extent_sigma))
        .collect();
    // stable: equal depths keep primitive order
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth));

    let tiles_x = k.width.div_ceil(TILE);
    let tiles_y = k.height.div_ceil(TILE);
    let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
    for (si, s) in splats.iter().enumerate() {
        let (x0, x1, y0, y1) = if s.radius.is_finite() {
            let lo = |m: f64| ((m - s.radius).max(0.0) as usize) / TILE;
            let hi = |m: f64, n: usize| ((m + s.radius).min((n - 1) as f64).max(0.0) as usize) / TILE;
            (lo(s.mean[0]), hi(s.mean[0], k.width), lo(s.mean[1]), hi(s.mean[1], k.height))
        } else {
            (0, tiles_x - 1, 0, tiles_y - 1)
        };
        for ty in y0..=y1 {
            for tx in x0..=x1 {
                tiles[ty * tiles_x + tx].push(si as u32);
            }
        }
    }
    let hot = splats
        .iter()
        .map(|s| Hot { mean: s.mean, conic: s.conic, opacity: s.opacity, radius: s.radius })
        .collect();
    Projected { splats, hot, tiles, tiles_x, cam, settings: *settings, n_primitives: primitives.len() }
}

impl Projected {
    fn contributions(&self, u: usize, v: usize, out: &mut Vec<Contribution>) -> f64 {
        out.clear();
        let (px, py) = (u as f64, v as f64);
        let mut t = 1.0;
        for &si in &self.tiles[(v / TILE) * self.tiles_x + u / TILE] {
            let s = &self.hot[si as usize];
            let dx = px - s.mean[0];
            let dy = py - s.mean[1];
            if dx.abs() > s.radius || dy.abs() > s.radius {
                continue;
            }
            let power = -0.5 * (s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy);
            let gauss = power.exp();
            let alpha = s.opacity * gauss;
            if alpha < self.settings.alpha_min || alpha == 0.0 {
                continue;
            }
            out.push(Contribution { splat: si, alpha, transmittance: t, gauss, dx, dy });
            t *= 1.0 - alpha;
            if t < self.settings.t_min {
                break;
            }
        }
        t
    }

    pub fn forward(&self) -> RenderOutput {
        let (w, h) = (self.cam.width, self.cam.height);
        let mut comp = vec![0.0; w * h * 3];
        let mut rgb = vec![0.0; w * h * 3];
        let mut alpha = vec![0.0; w * h];
        let mut depth = DepthMap::invalid(w, h);
        let mut list = Vec::new();
        for v in 0..h {
            for u in 0..w {
                let i = v * w + u;
                let t_final = self.contributions(u, v, &mut list);
                let mut c = [0.0; 3];
                let mut d = 0.0;
                for ct in &list {
                    let s = &self.splats[ct.splat as usize];
                    let wgt = ct.alpha * ct.transmittance;
                    for ch in 0..3 {
                        c[ch] += s.color[ch] * wgt;
                    }
                    d += s.depth * wgt;
                }
                let a = 1.0 - t_final;
                alpha[i] = a;
                comp[i * 3..i * 3 + 3].copy_from_slice(&c);
                if a > 0.0 {
                    for ch in 0..3 {
                        rgb[i * 3 + ch] = c[ch] / a;
                    }
                    depth.set_at(i, d / a);
                }
            }
        }
        RenderOutput {
            rgb: RgbImage::from_vec(w, h, rgb).expect("buffer sized to image"),
            composite: RgbImage::from_vec(w, h, comp).expect("buffer sized to image"),
            alpha: AlphaMask::from_vec(w, h, alpha).expect("buffer sized to image"),
            depth,
        }
    }

    /// Gradients of a loss with respect to every primitive's parameters, given
    /// the loss gradient on the composite image (interleaved RGB). Pixels
    /// with zero incoming gradient contribute nothing.
    pub fn backward(&self, primitives: &[GaussianPrimitive], dl_dcomposite: &[f64]) -> Vec<ParamArray> {
        let (w, h) = (self.cam.width, self.cam.height);
        assert_eq!(dl_dcomposite.len(), w * h * 3, "gradient buffer does not match image");
        assert_eq!(primitives.len(), self.n_primitives, "primitive list changed since projection");
        let mut sg = vec![SplatGrad::default(); self.splats.len()];
        let mut list = Vec::new();
        for v in 0..h {
            for u in 0..w {
                let i = v * w + u;
                let g = &dl_dcomposite[i * 3..i * 3 + 3];
                if g.iter().all(|x| *x == 0.0) {
                    continue;
                }
                self.contributions(u, v, &mut list);
                let mut acc = [0.0; 3];
                for ct in list.iter().rev() {
                    let s = &self.splats[ct.splat as usize];
                    let out = &mut sg[ct.splat as usize];
                    let wgt = ct.alpha * ct.transmittance;
                    let mut d_alpha = 0.0;
                    for ch in 0..3 {
                        d_alpha += g[ch] * ct.transmittance * (s.color[ch] - acc[ch]);
                        out.color[ch] += g[ch] * wgt;
                        acc[ch] = s.color[ch] * ct.alpha + (1.0 - ct.alpha) * acc[ch];
                    }
                    out.opacity += d_alpha * ct.gauss;
                    let d_power = d_alpha * s.opacity * ct.gauss;
                    let (dx, dy) = (ct.dx, ct.dy);
                    out.conic[0] += -0.5 * d_power * dx * dx;
                    out.conic[1] += -d_power * dx * dy;
                    out.conic[2] += -0.5 * d_power * dy * dy;
                    out.mean[0] += d_power * (s.conic[0] * dx + s.conic[1] * dy);
                    out.mean[1] += d_power * (s.conic[1] * dx + s.conic[2] * dy);
                }
            }
        }
        let mut grads = vec![[0.0; PARAM_COUNT]; primitives.len()];
        for (s, g) in self.splats.iter().zip(&sg) {
            if !g.is_zero() {
                grads[s.index] = splat_backward(s, &primitives[s.index], g, &self.cam);
            }
        }
        grads
    }
}

pub fn render_with(
    primitives: &[GaussianPrimitive],
    k: &CameraIntrinsics,
    pose: &CameraPose,
    settings: &RasterSettings,
) -> RenderOutput {
    project_scene(primitives, k, pose, settings).forward()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(n: usize) -> CameraIntrinsics {
        CameraIntrinsics::from_fov(n, n, 90.0).unwrap()
    }

    #[test]
    fn empty_scene_is_black_and_transparent() {
        let out = render_with(&[], &k(16), &CameraPose::identity(), &RasterSettings::default());
        assert!(out.alpha.values().iter().all(|a| *a == 0.0));
        assert!(out.rgb.as_slice().iter().all(|c| *c == 0.0));
        assert_eq!(out.depth.valid_count(), 0);
    }

    #[test]
    fn single_opaque_splat_saturates() {
        let g = GaussianPrimitive::isotropic([0.0, 0.0, 2.0], 5.0, 0.999999, [0.2, 0.7, 0.4], None);
        let out = render_with(&[g], &k(32), &CameraPose::identity(), &RasterSettings::default());
        let c = out.rgb.pixel(16, 16);
        for (a, b) in c.iter().zip([0.2, 0.7, 0.4]) {
            assert!((a - b).abs() < 1e-3);
        }
        assert!(out.alpha.value(16, 16) > 0.99);
        assert!((out.depth.get(16, 16).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn half_red_over_blue() {
        // Red splat whose contribution at the centre pixel is exactly 0.5,
        // in front of an opaque blue backdrop.
        let red = GaussianPrimitive::isotropic([0.0, 0.0, 1.0], 0.01, 0.5, [1.0 - 1e-9, 1e-9, 1e-9], None);
        let mut blue = GaussianPrimitive::isotropic([0.0, 0.0, 3.0], 50.0, 0.5, [1e-9, 1e-9, 1.0 - 1e-9], None);
        blue.opacity_logit = 60.0;
        let out = render_with(&[blue, red], &k(32), &CameraPose::identity(), &RasterSettings::default());
        let c = out.composite.pixel(16, 16);
        // hand composite: 0.5·red + (1 − 0.5)·1·blue, with the blue splat's
        // own Gaussian falloff ≈ 1 at the centre; colours are clamped 1e-6 from 0 and 1
        assert!((c[0] - 0.5).abs() < 1e-5, "{c:?}");
        assert!(c[1].abs() < 1e-5);
        assert!((c[2] - 0.5).abs() < 1e-5, "{c:?}");
    }

    #[test]
    fn outputs_are_bounded() {
        let mut prims = Vec::new();
        for i in 0..30 {
            let f = i as f64;
            prims.push(GaussianPrimitive::isotropic(
                [(f * 0.37).sin(), (f * 0.91).cos() * 0.5, 1.0 + (f * 0.13).fract() * 3.0],
                0.05 + 0.1 * (f * 0.7).fract(),
                0.2 + 0.79 * (f * 0.29).fract(),
                [(f * 0.3).fract(), (f * 0.5).fract(), (f * 0.7).fract()],
                None,
            ));
        }
        let out = render_with(&prims, &k(32), &CameraPose::identity(), &RasterSettings::default());
        assert!(out.alpha.values().iter().all(|a| (0.0..=1.0).contains(a)));
        assert!(out.rgb.as_slice().iter().all(|a| (0.0..=1.0).contains(a)));
        assert!(out.composite.as_slice().iter().all(|a| (0.0..=1.0).contains(a)));
    }

    #[test]
    fn zero_incoming_gradient_gives_zero() {
        let g = GaussianPrimitive::isotropic([0.0, 0.0, 2.0], 0.3, 0.6, [0.5; 3], None);
        let p = project_scene(&[g], &k(16), &CameraPose::identity(), &RasterSettings::default());
        let grads = p.backward(&[g], &vec![0.0; 16 * 16 * 3]);
        assert_eq!(grads, vec![[0.0; PARAM_COUNT]]);
    }
}

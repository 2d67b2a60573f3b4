//! Masked photometric losses with analytic gradients.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::raster::{AlphaMask, RgbImage};

const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;
const WINDOW_SIGMA: f64 = 1.5;
const WINDOW_RADIUS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub l1_weight: f64,
    pub dssim_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { l1_weight: 0.8, dssim_weight: 0.2 }
    }
}

impl LossConfig {
    pub fn l1_only() -> Self {
        LossConfig { l1_weight: 1.0, dssim_weight: 0.0 }
    }
}

/// Loss value and its gradient with respect to the rendered image.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    /// Interleaved RGB, same layout as the image.
    pub grad: Vec<f64>,
}

/// Weighted masked L1 + D-SSIM. Both terms average over known mask pixels
/// and channels; an empty mask yields zero loss and zero gradient.
pub fn masked_loss(render: &RgbImage, target: &RgbImage, mask: &AlphaMask, cfg: &LossConfig) -> LossGrad {
    let mut out = LossGrad { value: 0.0, grad: vec![0.0; render.as_slice().len()] };
    if cfg.l1_weight != 0.0 {
        let l1 = masked_l1(render, target, mask);
        out.value += cfg.l1_weight * l1.value;
        for (o, g) in out.grad.iter_mut().zip(&l1.grad) {
            *o += cfg.l1_weight * g;
        }
    }
    if cfg.dssim_weight != 0.0 {
        let d = masked_dssim(render, target, mask);
        out.value += cfg.dssim_weight * d.value;
        for (o, g) in out.grad.iter_mut().zip(&d.grad) {
            *o += cfg.dssim_weight * g;
        }
    }
    out
}

/// Mean absolute error over known mask pixels. The subgradient at zero is zero.
pub fn masked_l1(render: &RgbImage, target: &RgbImage, mask: &AlphaMask) -> LossGrad {
    let n = mask.known_count();
    let (x, y) = (render.as_slice(), target.as_slice());
    let mut grad = vec![0.0; x.len()];
    if n == 0 {
        return LossGrad { value: 0.0, grad };
    }
    let norm = 1.0 / (3 * n) as f64;
    let mut value = 0.0;
    for p in 0..mask.len_pixels() {
        if !mask.is_known_at(p) {
            continue;
        }
        for ch in 0..3 {
            let i = p * 3 + ch;
            let d = x[i] - y[i];
            value += d.abs();
            grad[i] = if d > 0.0 {
                norm
            } else if d < 0.0 {
                -norm
            } else {
                0.0
            };
        }
    }
    LossGrad { value: value * norm, grad }
}

fn window() -> [f64; 2 * WINDOW_RADIUS + 1] {
    let mut w = [0.0; 2 * WINDOW_RADIUS + 1];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - WINDOW_RADIUS as f64;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable Gaussian blur with zero padding. Self-adjoint.
fn blur(src: &[f64], w: usize, h: usize, win: &[f64]) -> Vec<f64> {
    let r = WINDOW_RADIUS as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in win.iter().enumerate() {
                let xx = x as isize + k as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    acc += wk * src[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in win.iter().enumerate() {
                let yy = y as isize + k as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    acc += wk * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// `1 − mean SSIM` over known mask pixels, computed on mask-multiplied images.
pub fn masked_dssim(render: &RgbImage, target: &RgbImage, mask: &AlphaMask) -> LossGrad {
    let (w, h) = (render.width(), render.height());
    let n = mask.known_count();
    let mut grad = vec![0.0; w * h * 3];
    if n == 0 {
        return LossGrad { value: 0.0, grad };
    }
    let win = window();
    let m: Vec<f64> = (0..w * h).map(|p| if mask.is_known_at(p) { 1.0 } else { 0.0 }).collect();
    let weight = -1.0 / (3 * n) as f64;
    let mut ssim_sum = 0.0;
    for ch in 0..3 {
        let x: Vec<f64> = (0..w * h).map(|p| render.as_slice()[p * 3 + ch] * m[p]).collect();
        let y: Vec<f64> = (0..w * h).map(|p| target.as_slice()[p * 3 + ch] * m[p]).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let mx = blur(&x, w, h, &win);
        let my = blur(&y, w, h, &win);
        let exx = blur(&xx, w, h, &win);
        let eyy = blur(&yy, w, h, &win);
        let exy = blur(&xy, w, h, &win);

        let mut a = vec![0.0; w * h];
        let mut b = vec![0.0; w * h];
        let mut c = vec![0.0; w * h];
        for p in 0..w * h {
            let sxx = exx[p] - mx[p] * mx[p];
            let syy = eyy[p] - my[p] * my[p];
            let sxy = exy[p] - mx[p] * my[p];
            let n1 = 2.0 * mx[p] * my[p] + SSIM_C1;
            let n2 = 2.0 * sxy + SSIM_C2;
            let d1 = mx[p] * mx[p] + my[p] * my[p] + SSIM_C1;
            let d2 = sxx + syy + SSIM_C2;
            let s = (n1 * n2) / (d1 * d2);
            if m[p] == 0.0 {
                continue;
            }
            ssim_sum += s;
            let g = weight;
            // ∂S/∂μx, ∂S/∂σxx, ∂S/∂σxy; written so identical inputs cancel exactly
            a[p] = g * s * (2.0 * my[p] / n1 - 2.0 * mx[p] / d1);
            b[p] = -(g * s / d2);
            c[p] = 2.0 * (g * s / n2);
        }
        let lin: Vec<f64> = (0..w * h).map(|p| a[p] - 2.0 * b[p] * mx[p] - c[p] * my[p]).collect();
        let bl = blur(&lin, w, h, &win);
        let bb = blur(&b, w, h, &win);
        let bc = blur(&c, w, h, &win);
        for p in 0..w * h {
            if m[p] != 0.0 {
                grad[p * 3 + ch] = bl[p] + 2.0 * x[p] * bb[p] + y[p] * bc[p];
            }
        }
    }
    LossGrad { value: 1.0 - ssim_sum / (3 * n) as f64, grad }
}

/// Peak signal-to-noise ratio in dB for images in `[0, 1]`, over known mask
/// pixels (all pixels when `mask` is `None`).
pub fn psnr(a: &RgbImage, b: &RgbImage, mask: Option<&AlphaMask>) -> f64 {
    let mut se = 0.0;
    let mut count = 0usize;
    for p in 0..a.len_pixels() {
        if mask.is_some_and(|m| !m.is_known_at(p)) {
            continue;
        }
        let (x, y) = (a.pixel_at(p), b.pixel_at(p));
        for ch in 0..3 {
            se += (x[ch] - y[ch]) * (x[ch] - y[ch]);
        }
        count += 3;
    }
    if count == 0 {
        return f64::INFINITY;
    }
    let mse = se / count as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

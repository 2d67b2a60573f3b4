//! Per-view raster buffers: colour images, depth maps with validity, coverage
//! masks and point maps. All buffers are row-major, `index = v * width + u`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coverage at or above this value counts as known.
pub const KNOWN_THRESHOLD: f64 = 0.5;

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::input("raster dimensions must be positive"));
    }
    Ok(())
}

/// RGB image with channel values in `[0, 1]`, interleaved per pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        RgbImage { width, height, data }
    }

    /// Builds an image from interleaved RGB values, clamping into `[0, 1]`.
    pub fn from_vec(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height * 3 {
            return Err(Error::input("rgb buffer length does not match dimensions"));
        }
        for v in &mut data {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        Ok(RgbImage { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for v in 0..height {
            for u in 0..width {
                let c = f(u, v);
                data.extend(c.iter().map(|x| x.clamp(0.0, 1.0)));
            }
        }
        RgbImage { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, u: usize, v: usize) -> [f64; 3] {
        let i = (v * self.width + u) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixel_at(&self, index: usize) -> [f64; 3] {
        let i = index * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, u: usize, v: usize, rgb: [f64; 3]) {
        self.set_pixel_at(v * self.width + u, rgb);
    }

    pub fn set_pixel_at(&mut self, index: usize, rgb: [f64; 3]) {
        let i = index * 3;
        for c in 0..3 {
            self.data[i + c] = rgb[c].clamp(0.0, 1.0);
        }
    }

    pub fn same_shape(&self, other_w: usize, other_h: usize) -> bool {
        self.width == other_w && self.height == other_h
    }

    /// Copies pixels of `src` where `region` is known (coverage ≥ threshold).
    pub fn paste_where(&mut self, src: &RgbImage, region: &AlphaMask) {
        for i in 0..self.len_pixels() {
            if region.is_known_at(i) {
                self.set_pixel_at(i, src.pixel_at(i));
            }
        }
    }

    /// Nearest-neighbour resample to a new size.
    pub fn resize_nearest(&self, width: usize, height: usize) -> RgbImage {
        RgbImage::from_fn(width, height, |u, v| {
            let su = ((u as f64 + 0.5) * self.width as f64 / width as f64) as usize;
            let sv = ((v as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            self.pixel(su.min(self.width - 1), sv.min(self.height - 1))
        })
    }

    /// Bilinear resample to a new size, using pixel-centre alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> RgbImage {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        RgbImage::from_fn(width, height, |u, v| {
            let fx = ((u as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
            let fy = ((v as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let x0 = fx as usize;
            let y0 = fy as usize;
            let x1 = (x0 + 1).min(self.width - 1);
            let y1 = (y0 + 1).min(self.height - 1);
            let tx = fx - x0 as f64;
            let ty = fy - y0 as f64;
            let (a, b, c, d) = (
                self.pixel(x0, y0),
                self.pixel(x1, y0),
                self.pixel(x0, y1),
                self.pixel(x1, y1),
            );
            let mut out = [0.0; 3];
            for k in 0..3 {
                let top = a[k] + (b[k] - a[k]) * tx;
                let bot = c[k] + (d[k] - c[k]) * tx;
                out[k] = top + (bot - top) * ty;
            }
            out
        })
    }

    /// Multiplies every pixel by the matching coverage value.
    pub fn premultiplied(&self, alpha: &AlphaMask) -> RgbImage {
        let mut out = self.clone();
        for i in 0..self.len_pixels() {
            let a = alpha.value_at(i);
            for c in 0..3 {
                out.data[i * 3 + c] *= a;
            }
        }
        out
    }
}

/// Per-pixel metric depth (metres, camera-frame z) plus validity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// An all-invalid map.
    pub fn invalid(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Self {
        let ok = depth.is_finite() && depth > 0.0;
        DepthMap {
            width,
            height,
            values: vec![if ok { depth } else { 0.0 }; width * height],
            valid: vec![ok; width * height],
        }
    }

    /// Builds a map from raw values; non-finite or non-positive entries become invalid.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if values.len() != width * height {
            return Err(Error::input("depth buffer length does not match dimensions"));
        }
        let mut map = DepthMap::invalid(width, height);
        for (i, d) in values.into_iter().enumerate() {
            map.set_at(i, d);
        }
        Ok(map)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Self {
        let mut map = DepthMap::invalid(width, height);
        for v in 0..height {
            for u in 0..width {
                if let Some(d) = f(u, v) {
                    map.set_at(v * width + u, d);
                }
            }
        }
        map
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        self.get_at(v * self.width + u)
    }

    pub fn get_at(&self, index: usize) -> Option<f64> {
        if self.valid[index] {
            Some(self.values[index])
        } else {
            None
        }
    }

    pub fn is_valid_at(&self, index: usize) -> bool {
        self.valid[index]
    }

    /// Stores `depth` if it is finite and positive, otherwise marks the pixel invalid.
    pub fn set_at(&mut self, index: usize, depth: f64) {
        if depth.is_finite() && depth > 0.0 {
            self.values[index] = depth;
            self.valid[index] = true;
        } else {
            self.values[index] = 0.0;
            self.valid[index] = false;
        }
    }

    pub fn invalidate_at(&mut self, index: usize) {
        self.values[index] = 0.0;
        self.valid[index] = false;
    }

    /// Raw values; invalid entries hold 0.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Minimum and maximum over valid pixels.
    pub fn range(&self) -> Option<(f64, f64)> {
        let mut out: Option<(f64, f64)> = None;
        for (d, ok) in self.values.iter().zip(&self.valid) {
            if *ok {
                out = Some(match out {
                    None => (*d, *d),
                    Some((lo, hi)) => (lo.min(*d), hi.max(*d)),
                });
            }
        }
        out
    }

    /// Coverage mask with 1 on valid pixels.
    pub fn validity_mask(&self) -> AlphaMask {
        AlphaMask::from_fn(self.width, self.height, |u, v| {
            if self.valid[v * self.width + u] {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Nearest-neighbour resample.
    pub fn resize_nearest(&self, width: usize, height: usize) -> DepthMap {
        DepthMap::from_fn(width, height, |u, v| {
            let su = ((u as f64 + 0.5) * self.width as f64 / width as f64) as usize;
            let sv = ((v as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            self.get(su.min(self.width - 1), sv.min(self.height - 1))
        })
    }
}

/// Per-pixel coverage in `[0, 1]`. A pixel is *known* when its value is at
/// least [`KNOWN_THRESHOLD`]. Used both for rendered alpha and for region
/// selections (spawn regions, generation regions), where 1 marks membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaMask {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl AlphaMask {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        AlphaMask {
            width,
            height,
            values: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self::filled(width, height, 1.0)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn from_vec(width: usize, height: usize, mut values: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if values.len() != width * height {
            return Err(Error::input("mask buffer length does not match dimensions"));
        }
        for v in &mut values {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        Ok(AlphaMask { width, height, values })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                values.push(f(u, v).clamp(0.0, 1.0));
            }
        }
        AlphaMask { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }

    pub fn value_at(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn set_at(&mut self, index: usize, value: f64) {
        self.values[index] = value.clamp(0.0, 1.0);
    }

    pub fn is_known(&self, u: usize, v: usize) -> bool {
        self.value(u, v) >= KNOWN_THRESHOLD
    }

    pub fn is_known_at(&self, index: usize) -> bool {
        self.values[index] >= KNOWN_THRESHOLD
    }

    pub fn known_count(&self) -> usize {
        self.values.iter().filter(|&&v| v >= KNOWN_THRESHOLD).count()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Binary mask: 1 where this mask is *not* known.
    pub fn unknown_region(&self) -> AlphaMask {
        AlphaMask {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .map(|&v| if v >= KNOWN_THRESHOLD { 0.0 } else { 1.0 })
                .collect(),
        }
    }

    /// Binary mask: 1 where both masks are known.
    pub fn intersect(&self, other: &AlphaMask) -> AlphaMask {
        AlphaMask {
            width: self.width,
            height: self.height,
            values: (0..self.values.len())
                .map(|i| if self.is_known_at(i) && other.is_known_at(i) { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Binary mask: 1 where `self` is known and `other` is not.
    pub fn subtract(&self, other: &AlphaMask) -> AlphaMask {
        AlphaMask {
            width: self.width,
            height: self.height,
            values: (0..self.values.len())
                .map(|i| if self.is_known_at(i) && !other.is_known_at(i) { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

/// Per-pixel world-space points with validity, as produced by unprojection.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMap {
    pub width: usize,
    pub height: usize,
    pub points: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
}

impl PointMap {
    pub fn get(&self, u: usize, v: usize) -> Option<[f64; 3]> {
        let i = v * self.width + u;
        if self.valid[i] {
            Some(self.points[i])
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_rejects_nonpositive() {
        let d = DepthMap::from_values(2, 1, vec![-1.0, 2.0]).unwrap();
        assert_eq!(d.get(0, 0), None);
        assert_eq!(d.get(1, 0), Some(2.0));
        assert_eq!(d.valid_count(), 1);
    }

    #[test]
    fn rgb_clamps() {
        let img = RgbImage::from_vec(1, 1, vec![-0.5, 0.5, 3.0]).unwrap();
        assert_eq!(img.pixel(0, 0), [0.0, 0.5, 1.0]);
        assert!(RgbImage::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn mask_set_algebra() {
        let a = AlphaMask::from_vec(4, 1, vec![1.0, 1.0, 0.0, 0.6]).unwrap();
        let b = AlphaMask::from_vec(4, 1, vec![1.0, 0.0, 1.0, 0.4]).unwrap();
        assert_eq!(a.intersect(&b).values(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(a.subtract(&b).values(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(a.unknown_region().values(), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(a.known_count(), 3);
    }

    #[test]
    fn bilinear_resize_of_constant_is_constant() {
        let img = RgbImage::filled(7, 5, [0.25, 0.5, 0.75]);
        let r = img.resize_bilinear(16, 9);
        for i in 0..r.len_pixels() {
            assert_eq!(r.pixel_at(i), [0.25, 0.5, 0.75]);
        }
    }
}

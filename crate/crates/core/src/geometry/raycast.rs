use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::camera::{CameraIntrinsics, CameraPose};
use crate::geometry::layout::{cross, dot, sub, LayoutScene};
use crate::raster::DepthMap;

/// Barycentric slack so rays through shared edges cannot slip between triangles.
const EDGE_EPS: f64 = 1e-12;
const T_MIN: f64 = 1e-9;

/// Nearest hit along `origin + t·dir` for `t > 0`, as `(t, triangle index)`.
/// Triangles are double-sided.
pub fn cast_ray(layout: &LayoutScene, origin: [f64; 3], dir: [f64; 3]) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, tri) in layout.triangles.iter().enumerate() {
        if let Some(t) = intersect(tri.vertices, origin, dir) {
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
    }
    best
}

fn intersect(v: [[f64; 3]; 3], origin: [f64; 3], dir: [f64; 3]) -> Option<f64> {
    let e1 = sub(v[1], v[0]);
    let e2 = sub(v[2], v[0]);
    let p = cross(dir, e2);
    let det = dot(e1, p);
    if det == 0.0 {
        return None;
    }
    let inv = 1.0 / det;
    let s = sub(origin, v[0]);
    let a = dot(s, p) * inv;
    if a < -EDGE_EPS || a > 1.0 + EDGE_EPS {
        return None;
    }
    let q = cross(s, e1);
    let b = dot(dir, q) * inv;
    if b < -EDGE_EPS || a + b > 1.0 + EDGE_EPS {
        return None;
    }
    let t = dot(e2, q) * inv;
    (t > T_MIN).then_some(t)
}

/// Z-depth of the nearest layout surface at every pixel.
///
/// Rays are built with unit camera-frame z, so the hit parameter is the depth.
pub fn render_depth(layout: &LayoutScene, k: &CameraIntrinsics, pose: &CameraPose) -> Result<DepthMap> {
    let r_t = pose.rotation_matrix().transpose();
    let c = pose.center();
    let origin = [c.x, c.y, c.z];
    let mut values = Vec::with_capacity(k.len_pixels());
    for v in 0..k.height {
        for u in 0..k.width {
            let d = r_t * k.ray(u as f64, v as f64);
            match cast_ray(layout, origin, [d.x, d.y, d.z]) {
                Some((t, _)) => values.push(t),
                None => return Err(Error::RayMiss { u, v }),
            }
        }
    }
    DepthMap::from_values(k.width, k.height, values)
}

/// Surface label index image: triangle index of the nearest hit per pixel.
pub fn render_triangle_ids(layout: &LayoutScene, k: &CameraIntrinsics, pose: &CameraPose) -> Result<Vec<usize>> {
    let r_t = pose.rotation_matrix().transpose();
    let c = pose.center();
    let origin = [c.x, c.y, c.z];
    let mut ids = Vec::with_capacity(k.len_pixels());
    for v in 0..k.height {
        for u in 0..k.width {
            let d = r_t * k.ray(u as f64, v as f64);
            match cast_ray(layout, origin, [d.x, d.y, d.z]) {
                Some((_, i)) => ids.push(i),
                None => return Err(Error::RayMiss { u, v }),
            }
        }
    }
    Ok(ids)
}

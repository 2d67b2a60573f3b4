#[allow(unused_imports)]
use num_traits::Float;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{DepthMap, PointMap};
use alloc::vec::Vec;

/// Points at or closer than this camera-frame z are treated as behind the camera.
pub const MIN_PROJECT_Z: f64 = 1e-6;

/// Pinhole intrinsics in pixels. Pixel `(u, v)` sits at continuous image
/// coordinate `(u, v)`, so the principal point of a 512-wide image is 256.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraIntrinsics {
    /// 512×512 with a 90° horizontal field of view.
    fn default() -> Self {
        CameraIntrinsics::from_fov(512, 512, 90.0).expect("default intrinsics are valid")
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = CameraIntrinsics { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels, principal point at the image centre.
    pub fn from_fov(width: usize, height: usize, hfov_deg: f64) -> Result<Self> {
        if !(hfov_deg > 0.0 && hfov_deg < 180.0) {
            return Err(Error::input("horizontal field of view must be in (0, 180) degrees"));
        }
        // tan(45°) is not exactly 1 in floating point.
        let half_tan = if hfov_deg == 90.0 { 1.0 } else { (hfov_deg.to_radians() / 2.0).tan() };
        let f = width as f64 / 2.0 / half_tan;
        Self::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::input("focal lengths must be positive"));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::input("image must be at least 16x16 pixels"));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(Error::input("principal point must lie inside the image"));
        }
        Ok(())
    }

    pub fn len_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Camera-frame ray through pixel `(u, v)`, scaled so its z component is 1.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// World-space width of one pixel at the given z-depth.
    pub fn pixel_footprint(&self, depth: f64) -> f64 {
        depth / self.fx
    }
}

/// Rigid world→camera transform: `x_cam = R · x_world + t`.
///
/// Camera frame: +x right, +y down, +z forward. World frame: +z up, and the
/// selected wall of a layout lies toward +y from the room centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    /// Row-major rotation.
    pub rotation: [[f64; 3]; 3],
    /// Translation in metres.
    pub translation: [f64; 3],
}

const ORTHONORMAL_TOL: f64 = 1e-9;

impl CameraPose {
    pub fn identity() -> Self {
        CameraPose {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = CameraPose {
            rotation: mat_to_rows(&rotation),
            translation: [translation.x, translation.y, translation.z],
        };
        pose.validate()?;
        Ok(pose)
    }

    /// Pose of a camera at `center` whose world→camera rotation is `rotation`.
    pub fn from_center(rotation: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        let t = -(rotation * center);
        Self::new(rotation, t)
    }

    /// Level camera at `center` turned `yaw_deg` clockwise (seen from above)
    /// from the +y axis.
    pub fn looking_at_yaw(center: [f64; 3], yaw_deg: f64) -> Self {
        let (s, c) = yaw_deg.to_radians().sin_cos();
        let r = Matrix3::new(c, -s, 0.0, 0.0, 0.0, -1.0, s, c, 0.0);
        let center = Vector3::from(center);
        let t = -(r * center);
        CameraPose {
            rotation: mat_to_rows(&r),
            translation: [t.x, t.y, t.z],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.rotation_matrix();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !(err <= ORTHONORMAL_TOL) {
            return Err(Error::input("pose rotation is not orthonormal"));
        }
        if (r.determinant() - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::input("pose rotation must have determinant +1"));
        }
        if self.translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("pose translation must be finite"));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let r = &self.rotation;
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation_matrix().transpose() * self.translation_vector())
    }

    /// Viewing direction in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        let r = &self.rotation;
        Vector3::new(r[2][0], r[2][1], r[2][2])
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * p + self.translation_vector()
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix().transpose() * (p - self.translation_vector())
    }
}

fn mat_to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

/// Result of projecting one world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    /// Camera-frame z, metres.
    pub depth: f64,
}

/// Projects a world point; `None` when it lies behind the camera.
pub fn project_point(p: &Vector3<f64>, k: &CameraIntrinsics, pose: &CameraPose) -> Option<Projection> {
    let c = pose.world_to_camera(p);
    if !(c.z > MIN_PROJECT_Z) {
        return None;
    }
    Some(Projection {
        u: k.fx * c.x / c.z + k.cx,
        v: k.fy * c.y / c.z + k.cy,
        depth: c.z,
    })
}

/// Lifts every valid depth pixel to a world point.
pub fn unproject(depth: &DepthMap, k: &CameraIntrinsics, pose: &CameraPose) -> PointMap {
    let (w, h) = (depth.width(), depth.height());
    let r_t = pose.rotation_matrix().transpose();
    let t = pose.translation_vector();
    let mut points = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            match depth.get(u, v) {
                Some(z) => {
                    let cam = k.ray(u as f64, v as f64) * z;
                    let world = r_t * (cam - t);
                    points.push([world.x, world.y, world.z]);
                    valid.push(true);
                }
                None => {
                    points.push([0.0; 3]);
                    valid.push(false);
                }
            }
        }
    }
    PointMap { width: w, height: h, points, valid }
}

/// Projects each point of a point map; invalid or behind-camera points yield `None`.
pub fn project(points: &PointMap, k: &CameraIntrinsics, pose: &CameraPose) -> Vec<Option<Projection>> {
    points
        .points
        .iter()
        .zip(&points.valid)
        .map(|(p, ok)| if *ok { project_point(&Vector3::from(*p), k, pose) } else { None })
        .collect()
}

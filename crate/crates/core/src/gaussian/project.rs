//! Projection of 3D Gaussians to screen-space splats, and its adjoint.

#[allow(unused_imports)]
use num_traits::Float;
use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};

use crate::gaussian::primitive::{
    normalize_quat_backward, quat_to_mat, quat_to_mat_backward, GaussianPrimitive, ParamArray, COLOR, LOG_SCALE,
    OPACITY, POSITION, PARAM_COUNT, ROTATION,
};
use crate::geometry::{CameraIntrinsics, CameraPose};

/// Primitives closer than this camera-frame z are not drawn.
pub const NEAR_PLANE: f64 = 0.01;
/// Screen-space variance added to every splat, in squared pixels.
pub const DILATION: f64 = 0.3;
/// The projection Jacobian is evaluated at most this far outside the frustum,
/// as a multiple of the half-field tangent. Keeps near, off-axis footprints bounded.
pub const FRUSTUM_GUARD: f64 = 1.3;

/// Camera state shared by every projection in one render.
#[derive(Debug, Clone, Copy)]
pub struct ProjCamera {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl ProjCamera {
    pub fn new(k: &CameraIntrinsics, pose: &CameraPose) -> Self {
        ProjCamera {
            rotation: pose.rotation_matrix(),
            translation: pose.translation_vector(),
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
        }
    }
}

/// A projected primitive plus the intermediates its adjoint needs.
#[derive(Debug, Clone)]
pub struct Splat {
    /// Index of the source primitive.
    pub index: usize,
    pub mean: [f64; 2],
    /// Inverse 2D covariance `(A, B, C)` of `[[A, B], [B, C]]`.
    pub conic: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
    /// Camera-frame z.
    pub depth: f64,
    /// Half-extent of the drawn footprint in pixels; infinite draws everywhere.
    pub radius: f64,
    cam: Vector3<f64>,
    /// x/z and y/z as used by the Jacobian, and whether each was clamped.
    tan: [f64; 2],
    clamped: [bool; 2],
    t: Matrix2x3<f64>,
    sigma3: Matrix3<f64>,
    m: Matrix3<f64>,
    rg: Matrix3<f64>,
    scale: [f64; 3],
    quat_unit: [f64; 4],
}

/// Gradient of the loss with respect to a splat's screen-space quantities.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SplatGrad {
    pub mean: [f64; 2],
    pub conic: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
}

impl SplatGrad {
    pub fn is_zero(&self) -> bool {
        self.mean.iter().chain(&self.conic).chain(&self.color).all(|v| *v == 0.0) && self.opacity == 0.0
    }
}

fn mat3(rows: [[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| rows[i][j])
}

/// Projects one primitive; `None` when it is behind the near plane, degenerate,
/// or (for finite `extent_sigma`) entirely off screen.
pub fn project_splat(index: usize, g: &GaussianPrimitive, cam: &ProjCamera, extent_sigma: f64) -> Option<Splat> {
    let c = cam.rotation * Vector3::from(g.position) + cam.translation;
    if !(c.z > NEAR_PLANE) {
        return None;
    }
    let (x, y, z) = (c.x, c.y, c.z);
    let mean = [cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy];
    let scale = g.scale();
    if extent_sigma.is_finite() {
        // cheap conservative cull: ‖J‖_F bounds the spectral norm of J·R
        let smax = scale[0].max(scale[1]).max(scale[2]);
        let jf2 = (cam.fx * cam.fx * (1.0 + x * x / (z * z)) + cam.fy * cam.fy * (1.0 + y * y / (z * z))) / (z * z);
        let r = extent_sigma * (jf2 * smax * smax + DILATION).sqrt();
        let (w, h) = ((cam.width - 1) as f64, (cam.height - 1) as f64);
        if mean[0] + r < 0.0 || mean[0] - r > w || mean[1] + r < 0.0 || mean[1] - r > h {
            return None;
        }
    }
    let lim = [
        FRUSTUM_GUARD * cam.cx.max(cam.width as f64 - cam.cx) / cam.fx,
        FRUSTUM_GUARD * cam.cy.max(cam.height as f64 - cam.cy) / cam.fy,
    ];
    let raw = [x / z, y / z];
    let tan = [raw[0].clamp(-lim[0], lim[0]), raw[1].clamp(-lim[1], lim[1])];
    let clamped = [tan[0] != raw[0], tan[1] != raw[1]];
    let j = Matrix2x3::new(cam.fx / z, 0.0, -cam.fx * tan[0] / z, 0.0, cam.fy / z, -cam.fy * tan[1] / z);
    let quat_unit = g.unit_rotation();
    let rg = mat3(quat_to_mat(quat_unit));
    let m = rg * Matrix3::from_diagonal(&Vector3::from(scale));
    let sigma3 = m * m.transpose();
    let t = j * cam.rotation;
    let cov = t * sigma3 * t.transpose();
    let (a, b, cc) = (cov[(0, 0)] + DILATION, cov[(0, 1)], cov[(1, 1)] + DILATION);
    let det = a * cc - b * b;
    if !(det > 0.0) || !det.is_finite() || !mean[0].is_finite() || !mean[1].is_finite() {
        return None;
    }
    let conic = [cc / det, -b / det, a / det];
    let mid = 0.5 * (a + cc);
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    let radius = if extent_sigma.is_finite() { extent_sigma * lambda_max.sqrt() } else { f64::INFINITY };
    if radius.is_finite() {
        let (w, h) = ((cam.width - 1) as f64, (cam.height - 1) as f64);
        if mean[0] + radius < 0.0 || mean[0] - radius > w || mean[1] + radius < 0.0 || mean[1] - radius > h {
            return None;
        }
    }
    Some(Splat {
        index,
        mean,
        conic,
        opacity: g.opacity(),
        color: g.color(),
        depth: z,
        radius,
        cam: c,
        tan,
        clamped,
        t,
        sigma3,
        m,
        rg,
        scale,
        quat_unit,
    })
}

/// Chains splat-space gradients back to the primitive's raw parameters.
pub fn splat_backward(s: &Splat, g: &GaussianPrimitive, grad: &SplatGrad, cam: &ProjCamera) -> ParamArray {
    let mut out = [0.0; PARAM_COUNT];

    // conic = inverse(Σ2): dΣ2 = −K · dK · K, off-diagonal gradient split over both entries
    let k = Matrix2::new(s.conic[0], s.conic[1], s.conic[1], s.conic[2]);
    let dk = Matrix2::new(grad.conic[0], 0.5 * grad.conic[1], 0.5 * grad.conic[1], grad.conic[2]);
    let g2 = -(k * dk * k);

    // Σ2 = T Σ3 Tᵀ + dilation
    let g3 = s.t.transpose() * g2 * s.t;
    let dt = 2.0 * g2 * s.t * s.sigma3;
    let dj = dt * cam.rotation.transpose();

    let (x, y, z) = (s.cam.x, s.cam.y, s.cam.z);
    let (fx, fy) = (cam.fx, cam.fy);
    let z2 = z * z;
    // J02 = −fx·tx/z with tx = x/z unless clamped
    let (ux, uy) = (!s.clamped[0] as u8 as f64, !s.clamped[1] as u8 as f64);
    let dcam = Vector3::new(
        grad.mean[0] * fx / z - ux * dj[(0, 2)] * fx / z2,
        grad.mean[1] * fy / z - uy * dj[(1, 2)] * fy / z2,
        -grad.mean[0] * fx * x / z2 - grad.mean[1] * fy * y / z2 - dj[(0, 0)] * fx / z2
            + dj[(0, 2)] * (1.0 + ux) * fx * s.tan[0] / z2
            - dj[(1, 1)] * fy / z2
            + dj[(1, 2)] * (1.0 + uy) * fy * s.tan[1] / z2,
    );
    let dpos = cam.rotation.transpose() * dcam;
    out[POSITION..POSITION + 3].copy_from_slice(dpos.as_slice());

    // Σ3 = M Mᵀ with M = R_g · diag(s)
    let dm = 2.0 * g3 * s.m;
    let mut drg = [[0.0; 3]; 3];
    for i in 0..3 {
        for jj in 0..3 {
            drg[i][jj] = dm[(i, jj)] * s.scale[jj];
        }
    }
    for jj in 0..3 {
        let ds: f64 = (0..3).map(|i| dm[(i, jj)] * s.rg[(i, jj)]).sum();
        out[LOG_SCALE + jj] = ds * s.scale[jj];
    }
    let dq_unit = quat_to_mat_backward(s.quat_unit, &drg);
    let dq = normalize_quat_backward(g.rotation, dq_unit);
    out[ROTATION..ROTATION + 4].copy_from_slice(&dq);

    out[OPACITY] = grad.opacity * s.opacity * (1.0 - s.opacity);
    for ch in 0..3 {
        out[COLOR + ch] = grad.color[ch] * s.color[ch] * (1.0 - s.color[ch]);
    }
    out
}

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Number of optimizable scalars per primitive.
pub const PARAM_COUNT: usize = 14;
/// Offsets of each parameter group inside a flat parameter or gradient array.
pub const POSITION: usize = 0;
pub const ROTATION: usize = 3;
pub const LOG_SCALE: usize = 7;
pub const OPACITY: usize = 10;
pub const COLOR: usize = 11;

pub type ParamArray = [f64; PARAM_COUNT];

/// Clamp applied before taking logits of opacity and colour.
pub const LOGIT_EPS: f64 = 1e-6;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(LOGIT_EPS, 1.0 - LOGIT_EPS);
    (p / (1.0 - p)).ln()
}

/// The view and pixel a primitive was spawned from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Origin {
    pub view: u32,
    pub pixel: u32,
}

/// One anisotropic Gaussian, stored in its optimization parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrimitive {
    pub position: [f64; 3],
    /// Quaternion `(w, x, y, z)`; normalized whenever it is used.
    pub rotation: [f64; 4],
    pub log_scale: [f64; 3],
    pub opacity_logit: f64,
    /// Per-channel logits of the RGB colour.
    pub color_raw: [f64; 3],
    pub origin: Option<Origin>,
}

impl GaussianPrimitive {
    pub fn from_decoded(
        position: [f64; 3],
        rotation: [f64; 4],
        scale: [f64; 3],
        opacity: f64,
        color: [f64; 3],
        origin: Option<Origin>,
    ) -> Self {
        GaussianPrimitive {
            position,
            rotation: normalize_quat(rotation),
            log_scale: scale.map(|s| s.max(1e-12).ln()),
            opacity_logit: logit(opacity),
            color_raw: color.map(logit),
            origin,
        }
    }

    /// Isotropic primitive with identity rotation.
    pub fn isotropic(position: [f64; 3], scale: f64, opacity: f64, color: [f64; 3], origin: Option<Origin>) -> Self {
        Self::from_decoded(position, [1.0, 0.0, 0.0, 0.0], [scale; 3], opacity, color, origin)
    }

    pub fn scale(&self) -> [f64; 3] {
        self.log_scale.map(|s| s.exp())
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn color(&self) -> [f64; 3] {
        self.color_raw.map(sigmoid)
    }

    pub fn unit_rotation(&self) -> [f64; 4] {
        normalize_quat(self.rotation)
    }

    pub fn params(&self) -> ParamArray {
        let mut p = [0.0; PARAM_COUNT];
        p[POSITION..POSITION + 3].copy_from_slice(&self.position);
        p[ROTATION..ROTATION + 4].copy_from_slice(&self.rotation);
        p[LOG_SCALE..LOG_SCALE + 3].copy_from_slice(&self.log_scale);
        p[OPACITY] = self.opacity_logit;
        p[COLOR..COLOR + 3].copy_from_slice(&self.color_raw);
        p
    }

    pub fn set_params(&mut self, p: &ParamArray) {
        self.position.copy_from_slice(&p[POSITION..POSITION + 3]);
        self.rotation.copy_from_slice(&p[ROTATION..ROTATION + 4]);
        self.log_scale.copy_from_slice(&p[LOG_SCALE..LOG_SCALE + 3]);
        self.opacity_logit = p[OPACITY];
        self.color_raw.copy_from_slice(&p[COLOR..COLOR + 3]);
    }
}

pub fn normalize_quat(q: [f64; 4]) -> [f64; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return [1.0, 0.0, 0.0, 0.0];
    }
    q.map(|c| c / n)
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`, row-major.
pub fn quat_to_mat(q: [f64; 4]) -> [[f64; 3]; 3] {
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Pulls a gradient on the rotation matrix back to the unit quaternion.
pub fn quat_to_mat_backward(q: [f64; 4], g: &[[f64; 3]; 3]) -> [f64; 4] {
    let [w, x, y, z] = q;
    let dw = 2.0 * (-z * g[0][1] + y * g[0][2] + z * g[1][0] - x * g[1][2] - y * g[2][0] + x * g[2][1]);
    let dx = 2.0
        * (y * g[0][1] + z * g[0][2] + y * g[1][0] - 2.0 * x * g[1][1] - w * g[1][2] + z * g[2][0] + w * g[2][1]
            - 2.0 * x * g[2][2]);
    let dy = 2.0
        * (-2.0 * y * g[0][0] + x * g[0][1] + w * g[0][2] + x * g[1][0] + z * g[1][2] - w * g[2][0] + z * g[2][1]
            - 2.0 * y * g[2][2]);
    let dz = 2.0
        * (-2.0 * z * g[0][0] - w * g[0][1] + x * g[0][2] + w * g[1][0] - 2.0 * z * g[1][1] + y * g[1][2]
            + x * g[2][0]
            + y * g[2][1]);
    [dw, dx, dy, dz]
}

/// Pulls a gradient on the normalized quaternion back to the raw one.
pub fn normalize_quat_backward(q: [f64; 4], dq_unit: [f64; 4]) -> [f64; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if !(n > 0.0) {
        return [0.0; 4];
    }
    let u = q.map(|c| c / n);
    let proj = u[0] * dq_unit[0] + u[1] * dq_unit[1] + u[2] * dq_unit[2] + u[3] * dq_unit[3];
    [0, 1, 2, 3].map(|i| (dq_unit[i] - u[i] * proj) / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_round_trip() {
        let g = GaussianPrimitive::from_decoded([1.0, 2.0, 3.0], [2.0, 0.0, 0.0, 0.0], [0.1, 0.2, 0.3], 0.9, [0.2, 0.5, 0.8], None);
        assert_eq!(g.rotation, [1.0, 0.0, 0.0, 0.0]);
        for (a, b) in g.scale().iter().zip([0.1, 0.2, 0.3]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((g.opacity() - 0.9).abs() < 1e-15);
        for (a, b) in g.color().iter().zip([0.2, 0.5, 0.8]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn params_round_trip() {
        let g = GaussianPrimitive::isotropic([0.5, -1.0, 2.0], 0.05, 0.3, [0.1, 0.9, 0.4], Some(Origin { view: 2, pixel: 7 }));
        let mut h = g;
        h.set_params(&[0.0; PARAM_COUNT]);
        h.set_params(&g.params());
        assert_eq!(g, h);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((logit(sigmoid(3.0)) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn quaternion_matrix_is_rotation() {
        let q = normalize_quat([0.3, -0.5, 0.7, 0.2]);
        let m = nalgebra::Matrix3::from_fn(|i, j| quat_to_mat(q)[i][j]);
        assert!((m.transpose() * m - nalgebra::Matrix3::identity()).abs().max() < 1e-14);
        assert!((m.determinant() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn quaternion_backward_matches_finite_differences() {
        let q = normalize_quat([0.3, -0.5, 0.7, 0.2]);
        let g = [[0.3, -1.0, 0.5], [0.2, 0.7, -0.4], [1.1, 0.05, -0.6]];
        let f = |q: [f64; 4]| {
            let m = quat_to_mat(q);
            (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| m[i][j] * g[i][j]).sum::<f64>()
        };
        let an = quat_to_mat_backward(q, &g);
        for k in 0..4 {
            let h = 1e-6;
            let mut qp = q;
            let mut qm = q;
            qp[k] += h;
            qm[k] -= h;
            let fd = (f(qp) - f(qm)) / (2.0 * h);
            assert!((fd - an[k]).abs() < 1e-8, "component {k}: {fd} vs {}", an[k]);
        }
    }
}

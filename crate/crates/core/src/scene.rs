//! Core domain types: splats, cameras, screen-space splats and pixel groups.

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Quat, Vec3};

/// Number of SH coefficients per channel at degree 3.
pub const SH_COEFFS: usize = 16;

/// Highest supported spherical-harmonics degree.
pub const MAX_SH_DEGREE: u32 = 3;

const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// A trained 3D Gaussian in its on-disk parameterization.
///
/// Scale is stored as log, opacity as logit; the accessors decode them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian3D {
    pub position: [f32; 3],
    pub log_scale: [f32; 3],
    /// Unit quaternion (w, x, y, z).
    pub rotation: [f32; 4],
    pub opacity_logit: f32,
    /// Channel-major SH coefficients, DC term first.
    pub sh: [[f32; SH_COEFFS]; 3],
}

impl Gaussian3D {
    /// Builds a splat, normalizing the rotation. Fails when the quaternion
    /// cannot be normalized or any parameter is non-finite.
    pub fn new(
        position: [f32; 3],
        log_scale: [f32; 3],
        rotation: [f32; 4],
        opacity_logit: f32,
        sh: [[f32; SH_COEFFS]; 3],
    ) -> Result<Self> {
        let finite = position
            .iter()
            .chain(&log_scale)
            .chain(&rotation)
            .chain(std::iter::once(&opacity_logit))
            .chain(sh.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("non-finite gaussian parameter".into()));
        }
        if log_scale.iter().any(|s| !s.exp().is_finite() || s.exp() <= 0.0) {
            return Err(Error::InvalidArgument("scale out of range".into()));
        }
        let q = rotation.map(f64::from);
        let n = math::quat_norm(q);
        if n < 1e-8 {
            return Err(Error::InvalidArgument("degenerate rotation quaternion".into()));
        }
        let rotation = q.map(|c| (c / n) as f32);
        Ok(Self {
            position,
            log_scale,
            rotation,
            opacity_logit,
            sh,
        })
    }

    /// Isotropic splat with a constant (DC-only) color, convenient for
    /// synthetic scenes. `rgb` is the desired decoded color.
    pub fn isotropic(position: [f32; 3], sigma: f32, opacity: f32, rgb: [f32; 3]) -> Self {
        let mut sh = [[0.0; SH_COEFFS]; 3];
        for c in 0..3 {
            sh[c][0] = ((f64::from(rgb[c]) - 0.5) / SH_C0) as f32;
        }
        Self {
            position,
            log_scale: [sigma.ln(); 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: math::logit(f64::from(opacity)) as f32,
            sh,
        }
    }

    pub fn position(&self) -> Vec3 {
        self.position.map(f64::from)
    }

    pub fn scale(&self) -> Vec3 {
        self.log_scale.map(|s| f64::from(s).exp())
    }

    pub fn rotation(&self) -> Quat {
        self.rotation.map(f64::from)
    }

    pub fn opacity(&self) -> f64 {
        math::sigmoid(f64::from(self.opacity_logit))
    }
}

/// Validated SH degree in `0..=3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct ShDegree(u8);

impl ShDegree {
    pub const MAX: ShDegree = ShDegree(3);

    pub fn new(degree: u32) -> Result<Self> {
        if degree > MAX_SH_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "sh degree {degree} exceeds {MAX_SH_DEGREE}"
            )));
        }
        Ok(Self(degree as u8))
    }

    pub fn get(self) -> u32 {
        u32::from(self.0)
    }

    /// Number of non-DC coefficients per channel.
    pub fn rest_per_channel(self) -> usize {
        let d = usize::from(self.0);
        (d + 1) * (d + 1) - 1
    }
}

/// `R S Sᵀ Rᵀ` for the splat's rotation and decoded scale.
pub fn covariance3d(g: &Gaussian3D) -> Mat3 {
    let r = math::quat_to_mat(math::quat_normalize(g.rotation()));
    let s = g.scale();
    // M = R S, Σ = M Mᵀ
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[i][j] * s[j];
        }
    }
    let mut cov = math::mat_mul(&m, &math::transpose(&m));
    for i in 0..3 {
        for j in (i + 1)..3 {
            let v = 0.5 * (cov[i][j] + cov[j][i]);
            cov[i][j] = v;
            cov[j][i] = v;
        }
    }
    cov
}

/// Evaluates view-dependent color with the usual +0.5 offset, clamped below at 0.
pub fn sh_to_color(sh: &[[f32; SH_COEFFS]; 3], view_dir: Vec3, degree: u32) -> Result<[f64; 3]> {
    Ok(eval_sh(sh, view_dir, ShDegree::new(degree)?))
}

pub(crate) fn eval_sh(sh: &[[f32; SH_COEFFS]; 3], dir: Vec3, degree: ShDegree) -> [f64; 3] {
    let basis = sh_basis(dir, degree);
    let n = (degree.get() as usize + 1).pow(2);
    let mut out = [0.0; 3];
    for (c, coeffs) in sh.iter().enumerate() {
        let sum: f64 = coeffs[..n]
            .iter()
            .zip(&basis[..n])
            .map(|(k, b)| f64::from(*k) * b)
            .sum();
        out[c] = (sum + 0.5).max(0.0);
    }
    out
}

fn sh_basis(dir: Vec3, degree: ShDegree) -> [f64; SH_COEFFS] {
    let mut b = [0.0; SH_COEFFS];
    b[0] = SH_C0;
    if degree.get() == 0 {
        return b;
    }
    let [x, y, z] = dir;
    b[1] = -SH_C1 * y;
    b[2] = SH_C1 * z;
    b[3] = -SH_C1 * x;
    if degree.get() == 1 {
        return b;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    b[4] = SH_C2[0] * xy;
    b[5] = SH_C2[1] * yz;
    b[6] = SH_C2[2] * (2.0 * zz - xx - yy);
    b[7] = SH_C2[3] * xz;
    b[8] = SH_C2[4] * (xx - yy);
    if degree.get() == 2 {
        return b;
    }
    b[9] = SH_C3[0] * y * (3.0 * xx - yy);
    b[10] = SH_C3[1] * xy * z;
    b[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
    b[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
    b[14] = SH_C3[5] * z * (xx - yy);
    b[15] = SH_C3[6] * x * (xx - 3.0 * yy);
    b
}

/// Pinhole camera. `orientation` rotates camera-frame vectors into the world
/// frame; the camera looks down its local +z with +y pointing down the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: Vec3,
    pub orientation: Quat,
    pub fov_x: f64,
    pub fov_y: f64,
    pub width: u32,
    pub height: u32,
    pub near_clip: f64,
}

pub const DEFAULT_NEAR_CLIP: f64 = 0.2;

impl CameraPose {
    pub fn new(
        position: Vec3,
        orientation: Quat,
        fov_x: f64,
        fov_y: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let n = math::quat_norm(orientation);
        if !(n >= 1e-8) || !n.is_finite() {
            return Err(Error::InvalidArgument("camera orientation cannot be normalized".into()));
        }
        let fov_ok = |f: f64| f > 0.0 && f < std::f64::consts::PI;
        if !fov_ok(fov_x) || !fov_ok(fov_y) {
            return Err(Error::InvalidArgument("field of view must lie in (0, pi)".into()));
        }
        if position.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite camera position".into()));
        }
        Ok(Self {
            position,
            orientation: math::quat_normalize(orientation),
            fov_x,
            fov_y,
            width,
            height,
            near_clip: DEFAULT_NEAR_CLIP,
        })
    }

    /// Camera looking from `eye` towards `target`, world +y treated as down.
    pub fn look_at(eye: Vec3, target: Vec3, fov_x: f64, width: u32, height: u32) -> Result<Self> {
        let fwd = math::normalize(math::sub(target, eye));
        let mut down = [0.0, 1.0, 0.0];
        if math::dot(fwd, down).abs() > 0.999 {
            down = [0.0, 0.0, 1.0];
        }
        let right = math::normalize(cross(down, fwd));
        let down = cross(fwd, right);
        // columns: right, down, forward
        let m = [
            [right[0], down[0], fwd[0]],
            [right[1], down[1], fwd[1]],
            [right[2], down[2], fwd[2]],
        ];
        let fov_y = 2.0 * ((fov_x * 0.5).tan() * f64::from(height) / f64::from(width)).atan();
        Self::new(eye, mat_to_quat(&m), fov_x, fov_y, width, height)
    }

    pub fn rotation(&self) -> Mat3 {
        math::quat_to_mat(self.orientation)
    }

    /// Unit viewing direction in world space.
    pub fn forward(&self) -> Vec3 {
        let r = self.rotation();
        [r[0][2], r[1][2], r[2][2]]
    }

    pub fn focal(&self) -> (f64, f64) {
        (
            f64::from(self.width) / (2.0 * (self.fov_x * 0.5).tan()),
            f64::from(self.height) / (2.0 * (self.fov_y * 0.5).tan()),
        )
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (f64::from(self.width) * 0.5, f64::from(self.height) * 0.5)
    }

    /// World point to camera frame.
    pub fn to_view(&self, p: Vec3) -> Vec3 {
        let rt = math::transpose(&self.rotation());
        math::mat_vec(&rt, math::sub(p, self.position))
    }
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn mat_to_quat(m: &Mat3) -> Quat {
    let tr = m[0][0] + m[1][1] + m[2][2];
    let q = if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        [
            0.25 * s,
            (m[2][1] - m[1][2]) / s,
            (m[0][2] - m[2][0]) / s,
            (m[1][0] - m[0][1]) / s,
        ]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
        [
            (m[2][1] - m[1][2]) / s,
            0.25 * s,
            (m[0][1] + m[1][0]) / s,
            (m[0][2] + m[2][0]) / s,
        ]
    } else if m[1][1] > m[2][2] {
        let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
        [
            (m[0][2] - m[2][0]) / s,
            (m[0][1] + m[1][0]) / s,
            0.25 * s,
            (m[1][2] + m[2][1]) / s,
        ]
    } else {
        let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
        [
            (m[1][0] - m[0][1]) / s,
            (m[0][2] + m[2][0]) / s,
            (m[1][2] + m[2][1]) / s,
            0.25 * s,
        ]
    };
    math::quat_normalize(q)
}

/// A splat after projection into a particular camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGaussian {
    /// Pixel coordinates; pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`.
    pub mean2d: [f64; 2],
    /// Upper triangle `[a, b, c]` of the inverse 2D covariance `[[a, b], [b, c]]`.
    pub inv_cov2d: [f64; 3],
    /// Upper triangle of the 2D covariance, kept for extent computations.
    pub cov2d: [f64; 3],
    pub depth: f32,
    pub color: [f64; 3],
    pub opacity: f64,
    /// Mahalanobis-squared extent used for tile binning, in `[0, 9]`.
    pub radius_sq_cutoff: f64,
}

impl ProjectedGaussian {
    /// Squared Mahalanobis distance from the mean to `p`.
    #[inline]
    pub fn mahalanobis_sq(&self, p: [f64; 2]) -> f64 {
        let dx = p[0] - self.mean2d[0];
        let dy = p[1] - self.mean2d[1];
        let [a, b, c] = self.inv_cov2d;
        a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
    }
}

/// A `w × w` block of pixels sharing one leader test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelGroup {
    pub origin: [u32; 2],
    pub width: u32,
    pub leader_index: u32,
}

impl PixelGroup {
    /// Groups are tile-aligned; the leader is the top-left pixel.
    pub fn new(origin: [u32; 2], width: u32, tile_size: u32) -> Result<Self> {
        if !matches!(width, 1 | 2 | 4) {
            return Err(Error::InvalidArgument(format!("group width {width} not in {{1, 2, 4}}")));
        }
        if tile_size % width != 0 || origin[0] % width != 0 || origin[1] % width != 0 {
            return Err(Error::InvalidArgument("pixel group is not tile-aligned".into()));
        }
        Ok(Self {
            origin,
            width,
            leader_index: 0,
        })
    }

    pub fn leader(&self) -> [u32; 2] {
        let dx = self.leader_index % self.width;
        let dy = self.leader_index / self.width;
        [self.origin[0] + dx, self.origin[1] + dy]
    }
}

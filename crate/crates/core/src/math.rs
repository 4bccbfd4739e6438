//! Transform algebra shared by every backend.
//!
//! Conventions: right-handed Z-up world, heading-pitch-roll angles in degrees
//! at the API boundary, column-major 4x4 matrices (column `k` occupies
//! elements `4k..4k+4`), and an NDC cube of `[-1, 1]` on all three axes.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const ONE: Vec3 = Vec3::new(1.0, 1.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Vec3::new(s[0], s[1], s[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Returns the zero vector unchanged.
    pub fn normalized(self) -> Vec3 {
        let len = self.length();
        if len > 0.0 {
            self * (1.0 / len)
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub(crate) fn check_finite(self, what: &str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite { what: what.into() })
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

/// Homogeneous 4-vector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec4 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Vec4 {
    pub const fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Vec4 { x, y, z, w }
    }

    pub fn point(p: Vec3) -> Self {
        Vec4::new(p.x, p.y, p.z, 1.0)
    }

    pub fn xyz(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub(crate) fn lerp(self, o: Vec4, t: f64) -> Vec4 {
        Vec4::new(
            self.x + (o.x - self.x) * t,
            self.y + (o.y - self.y) * t,
            self.z + (o.z - self.z) * t,
            self.w + (o.w - self.w) * t,
        )
    }
}

/// Column-major 4x4 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat4(pub [f64; 16]);

impl Default for Mat4 {
    fn default() -> Self {
        Mat4::IDENTITY
    }
}

impl Mat4 {
    pub const IDENTITY: Mat4 = Mat4([
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    ]);

    /// Element at `row`, `col`.
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.0[col * 4 + row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.0[col * 4 + row] = v;
    }

    pub fn from_rows(rows: [[f64; 4]; 4]) -> Mat4 {
        let mut m = Mat4([0.0; 16]);
        for (r, row) in rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                m.set(r, c, *v);
            }
        }
        m
    }

    pub fn translation(t: Vec3) -> Mat4 {
        let mut m = Mat4::IDENTITY;
        m.set(0, 3, t.x);
        m.set(1, 3, t.y);
        m.set(2, 3, t.z);
        m
    }

    pub fn scaling(s: Vec3) -> Mat4 {
        let mut m = Mat4::IDENTITY;
        m.set(0, 0, s.x);
        m.set(1, 1, s.y);
        m.set(2, 2, s.z);
        m
    }

    pub fn transpose(&self) -> Mat4 {
        let mut t = Mat4([0.0; 16]);
        for r in 0..4 {
            for c in 0..4 {
                t.set(c, r, self.at(r, c));
            }
        }
        t
    }

    pub fn transform(&self, v: Vec4) -> Vec4 {
        let m = &self.0;
        Vec4::new(
            m[0] * v.x + m[4] * v.y + m[8] * v.z + m[12] * v.w,
            m[1] * v.x + m[5] * v.y + m[9] * v.z + m[13] * v.w,
            m[2] * v.x + m[6] * v.y + m[10] * v.z + m[14] * v.w,
            m[3] * v.x + m[7] * v.y + m[11] * v.z + m[15] * v.w,
        )
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.transform(Vec4::point(p)).xyz()
    }

    /// Determinant of the upper-left 3x3 block.
    pub fn det3(&self) -> f64 {
        self.upper3().det()
    }

    pub fn upper3(&self) -> Mat3 {
        Mat3([
            Vec3::new(self.0[0], self.0[1], self.0[2]),
            Vec3::new(self.0[4], self.0[5], self.0[6]),
            Vec3::new(self.0[8], self.0[9], self.0[10]),
        ])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Mul for Mat4 {
    type Output = Mat4;
    fn mul(self, o: Mat4) -> Mat4 {
        let mut out = Mat4([0.0; 16]);
        for c in 0..4 {
            for r in 0..4 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += self.at(r, k) * o.at(k, c);
                }
                out.set(r, c, acc);
            }
        }
        out
    }
}

/// 3x3 matrix stored as three columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [Vec3; 3]);

impl Mat3 {
    pub fn det(&self) -> f64 {
        let [a, b, c] = self.0;
        a.dot(b.cross(c))
    }

    /// Cofactor matrix, equal to `det * inverse-transpose`. For the
    /// positive-determinant transforms built by [`compose_trs`] it maps
    /// normals in the same direction as the inverse-transpose.
    pub fn cofactor(&self) -> Mat3 {
        let [a, b, c] = self.0;
        Mat3([b.cross(c), c.cross(a), a.cross(b)])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let [a, b, c] = self.0;
        a * v.x + b * v.y + c * v.z
    }
}

/// Scale accepted by [`compose_trs`]: a scalar is broadcast to all axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scale {
    Uniform(f64),
    PerAxis(Vec3),
}

impl Scale {
    pub fn as_vec3(self) -> Vec3 {
        match self {
            Scale::Uniform(s) => Vec3::new(s, s, s),
            Scale::PerAxis(v) => v,
        }
    }
}

impl From<f64> for Scale {
    fn from(s: f64) -> Self {
        Scale::Uniform(s)
    }
}

impl From<Vec3> for Scale {
    fn from(v: Vec3) -> Self {
        Scale::PerAxis(v)
    }
}

/// Heading-pitch-roll rotation `Rz(h) * Rx(p) * Ry(r)`, angles in degrees.
pub fn rotation_from_hpr(hpr: Vec3) -> Result<Mat4> {
    hpr.check_finite("hpr")?;
    Ok(rotation_unchecked(hpr))
}

fn rotation_unchecked(hpr: Vec3) -> Mat4 {
    let (sh, ch) = hpr.x.to_radians().sin_cos();
    let (sp, cp) = hpr.y.to_radians().sin_cos();
    let (sr, cr) = hpr.z.to_radians().sin_cos();
    // Rz(h) * Rx(p) * Ry(r), expanded.
    Mat4::from_rows([
        [ch * cr - sh * sp * sr, -sh * cp, ch * sr + sh * sp * cr, 0.0],
        [sh * cr + ch * sp * sr, ch * cp, sh * sr - ch * sp * cr, 0.0],
        [-cp * sr, sp, cp * cr, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
}

/// Model matrix `T(position) * R(hpr) * S(scale)`.
pub fn compose_trs(position: Vec3, hpr: Vec3, scale: impl Into<Scale>) -> Result<Mat4> {
    position.check_finite("position")?;
    hpr.check_finite("hpr")?;
    let s = scale.into().as_vec3();
    s.check_finite("scale")?;
    if s.x <= 0.0 || s.y <= 0.0 || s.z <= 0.0 {
        return Err(Error::NonPositiveScale {
            what: "scale".into(),
        });
    }
    Ok(trs_unchecked(position, hpr, s))
}

pub(crate) fn trs_unchecked(position: Vec3, hpr: Vec3, s: Vec3) -> Mat4 {
    let mut m = rotation_unchecked(hpr);
    for (col, k) in [s.x, s.y, s.z].into_iter().enumerate() {
        for row in 0..3 {
            m.0[col * 4 + row] *= k;
        }
    }
    m.0[12] = position.x;
    m.0[13] = position.y;
    m.0[14] = position.z;
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    /// Degrees.
    pub hpr: Vec3,
}

impl CameraPose {
    pub fn new(position: Vec3, hpr: Vec3) -> Self {
        CameraPose { position, hpr }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.hpr.is_finite()
    }

    /// Camera-to-world transform, the inverse of [`view_from_camera`].
    pub fn world_matrix(&self) -> Mat4 {
        Mat4::translation(self.position) * rotation_unchecked(self.hpr) * VIEW_BASIS.transpose()
    }
}

/// World (Z-up, camera looks along +Y) to view space (camera looks along -Z,
/// +Y up): `view_x = world_x`, `view_y = world_z`, `view_z = -world_y`.
pub const VIEW_BASIS: Mat4 = Mat4([
    1.0, 0.0, 0.0, 0.0, //
    0.0, 0.0, -1.0, 0.0, //
    0.0, 1.0, 0.0, 0.0, //
    0.0, 0.0, 0.0, 1.0,
]);

/// `B * R(hpr)^T * T(-position)`.
pub fn view_from_camera(pose: &CameraPose) -> Result<Mat4> {
    pose.position.check_finite("camera position")?;
    pose.hpr.check_finite("camera hpr")?;
    Ok(view_unchecked(pose))
}

pub(crate) fn view_unchecked(pose: &CameraPose) -> Mat4 {
    VIEW_BASIS * rotation_unchecked(pose.hpr).transpose() * Mat4::translation(-pose.position)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProjection")]
pub struct ProjectionParams {
    fov_y_deg: f64,
    aspect: f64,
    near: f64,
    far: f64,
}

#[derive(Deserialize)]
struct RawProjection {
    fov_y_deg: f64,
    aspect: f64,
    near: f64,
    far: f64,
}

impl TryFrom<RawProjection> for ProjectionParams {
    type Error = Error;
    fn try_from(r: RawProjection) -> Result<Self> {
        ProjectionParams::new(r.fov_y_deg, r.aspect, r.near, r.far)
    }
}

impl ProjectionParams {
    pub fn new(fov_y_deg: f64, aspect: f64, near: f64, far: f64) -> Result<Self> {
        let all = [fov_y_deg, aspect, near, far];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProjection("parameters must be finite".into()));
        }
        if !(fov_y_deg > 0.0 && fov_y_deg < 180.0) {
            return Err(Error::InvalidProjection(format!(
                "fov_y_deg {fov_y_deg} not in (0, 180)"
            )));
        }
        if aspect <= 0.0 {
            return Err(Error::InvalidProjection(format!("aspect {aspect} must be > 0")));
        }
        if near <= 0.0 {
            return Err(Error::InvalidProjection(format!("near {near} must be > 0")));
        }
        if far <= near {
            return Err(Error::InvalidProjection(format!(
                "far {far} must exceed near {near}"
            )));
        }
        Ok(ProjectionParams {
            fov_y_deg,
            aspect,
            near,
            far,
        })
    }

    /// 60 degree vertical field of view, near 0.1, far 1000.
    pub fn default_for(width: u32, height: u32) -> Self {
        ProjectionParams {
            fov_y_deg: 60.0,
            aspect: width as f64 / height as f64,
            near: 0.1,
            far: 1000.0,
        }
    }

    pub fn fov_y_deg(&self) -> f64 {
        self.fov_y_deg
    }
    pub fn aspect(&self) -> f64 {
        self.aspect
    }
    pub fn near(&self) -> f64 {
        self.near
    }
    pub fn far(&self) -> f64 {
        self.far
    }
}

/// Right-handed perspective looking down view -Z, NDC depth in `[-1, 1]`.
pub fn perspective_projection(p: &ProjectionParams) -> Mat4 {
    let f = 1.0 / (p.fov_y_deg.to_radians() * 0.5).tan();
    let (n, fa) = (p.near, p.far);
    let mut m = Mat4([0.0; 16]);
    m.set(0, 0, f / p.aspect);
    m.set(1, 1, f);
    m.set(2, 2, -(fa + n) / (fa - n));
    m.set(2, 3, -2.0 * fa * n / (fa - n));
    m.set(3, 2, -1.0);
    m
}

/// Clip-space adjustment that squeezes a scene's NDC square into its tile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipRemap {
    pub scale_x: f64,
    pub scale_y: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

impl ClipRemap {
    pub const IDENTITY: ClipRemap = ClipRemap {
        scale_x: 1.0,
        scale_y: 1.0,
        offset_x: 0.0,
        offset_y: 0.0,
    };

    /// Remap for tile (`row`, `col`) of a `rows` x `cols` grid; row 0 is the
    /// top of the atlas.
    pub fn for_tile(rows: u32, cols: u32, row: u32, col: u32) -> ClipRemap {
        let (rf, cf) = (rows as f64, cols as f64);
        ClipRemap {
            scale_x: 1.0 / cf,
            scale_y: 1.0 / rf,
            offset_x: -1.0 + (2.0 * col as f64 + 1.0) / cf,
            offset_y: 1.0 - (2.0 * row as f64 + 1.0) / rf,
        }
    }
}

pub fn apply_clip_remap(clip: Vec4, remap: &ClipRemap) -> Vec4 {
    Vec4::new(
        clip.x * remap.scale_x + clip.w * remap.offset_x,
        clip.y * remap.scale_y + clip.w * remap.offset_y,
        clip.z,
        clip.w,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).length() <= tol
    }

    #[test]
    fn zero_hpr_is_identity() {
        assert_eq!(rotation_from_hpr(Vec3::ZERO).unwrap(), Mat4::IDENTITY);
    }

    #[test]
    fn heading_rotates_x_onto_y() {
        let r = rotation_from_hpr(Vec3::new(90.0, 0.0, 0.0)).unwrap();
        assert!(close(r.transform_point(Vec3::new(1.0, 0.0, 0.0)), Vec3::new(0.0, 1.0, 0.0), 1e-12));
    }

    #[test]
    fn pitch_rotates_y_onto_z() {
        let r = rotation_from_hpr(Vec3::new(0.0, 90.0, 0.0)).unwrap();
        assert!(close(r.transform_point(Vec3::new(0.0, 1.0, 0.0)), Vec3::new(0.0, 0.0, 1.0), 1e-12));
    }

    #[test]
    fn rotation_rejects_nan() {
        assert!(rotation_from_hpr(Vec3::new(f64::NAN, 0.0, 0.0)).is_err());
        assert!(compose_trs(Vec3::ZERO, Vec3::new(0.0, f64::INFINITY, 0.0), 1.0).is_err());
    }

    #[test]
    fn trs_examples() {
        assert_eq!(compose_trs(Vec3::ZERO, Vec3::ZERO, 1.0).unwrap(), Mat4::IDENTITY);

        let m = compose_trs(Vec3::new(1.0, 2.0, 3.0), Vec3::ZERO, 1.0).unwrap();
        let mut expected = Mat4::IDENTITY;
        expected.0[12..16].copy_from_slice(&[1.0, 2.0, 3.0, 1.0]);
        assert_eq!(m, expected);

        let m = compose_trs(Vec3::new(1.0, 0.0, 0.0), Vec3::new(90.0, 0.0, 0.0), 2.0).unwrap();
        assert!(close(m.transform_point(Vec3::new(1.0, 0.0, 0.0)), Vec3::new(1.0, 2.0, 0.0), 1e-12));
    }

    #[test]
    fn trs_rejects_non_positive_scale() {
        assert!(matches!(
            compose_trs(Vec3::ZERO, Vec3::ZERO, 0.0),
            Err(Error::NonPositiveScale { .. })
        ));
        assert!(compose_trs(Vec3::ZERO, Vec3::ZERO, Vec3::new(1.0, -1.0, 1.0)).is_err());
    }

    #[test]
    fn per_axis_scale_matches_broadcast() {
        let a = compose_trs(Vec3::new(1.0, 2.0, 3.0), Vec3::new(10.0, 20.0, 30.0), 1.5).unwrap();
        let b = compose_trs(Vec3::new(1.0, 2.0, 3.0), Vec3::new(10.0, 20.0, 30.0), Vec3::new(1.5, 1.5, 1.5))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn view_examples() {
        let v = view_from_camera(&CameraPose::default()).unwrap();
        assert!(close(v.transform_point(Vec3::new(0.0, 7.0, 0.0)), Vec3::new(0.0, 0.0, -7.0), 1e-12));
        assert!(close(v.transform_point(Vec3::new(0.0, 0.0, 1.0)), Vec3::new(0.0, 1.0, 0.0), 1e-12));

        let v = view_from_camera(&CameraPose::new(Vec3::new(0.0, -5.0, 0.0), Vec3::ZERO)).unwrap();
        assert!(close(v.transform_point(Vec3::ZERO), Vec3::new(0.0, 0.0, -5.0), 1e-12));
    }

    #[test]
    fn projection_depth_range() {
        let p = ProjectionParams::new(60.0, 1.5, 0.5, 200.0).unwrap();
        let m = perspective_projection(&p);
        let ndc_z = |d: f64| {
            let c = m.transform(Vec4::new(0.0, 0.0, -d, 1.0));
            c.z / c.w
        };
        assert!((ndc_z(0.5) + 1.0).abs() < 1e-12);
        assert!((ndc_z(200.0) - 1.0).abs() < 1e-12);

        let m = perspective_projection(&ProjectionParams::new(90.0, 1.0, 0.1, 10.0).unwrap());
        assert!((m.at(0, 0) - 1.0).abs() < 1e-12);
        assert!((m.at(1, 1) - 1.0).abs() < 1e-12);
        assert_eq!(m.at(3, 2), -1.0);
        assert_eq!(m.at(3, 3), 0.0);
    }

    #[test]
    fn projection_validation() {
        assert!(ProjectionParams::new(0.0, 1.0, 0.1, 10.0).is_err());
        assert!(ProjectionParams::new(180.0, 1.0, 0.1, 10.0).is_err());
        assert!(ProjectionParams::new(60.0, 0.0, 0.1, 10.0).is_err());
        assert!(ProjectionParams::new(60.0, 1.0, 0.0, 10.0).is_err());
        assert!(ProjectionParams::new(60.0, 1.0, 1.0, 1.0).is_err());
        assert!(ProjectionParams::new(f64::NAN, 1.0, 1.0, 2.0).is_err());
        let bad: std::result::Result<ProjectionParams, _> =
            serde_json::from_str(r#"{"fov_y_deg":60,"aspect":1,"near":2,"far":1}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn remap_examples() {
        let c = Vec4::new(0.3, -0.2, 0.1, 1.0);
        assert_eq!(apply_clip_remap(c, &ClipRemap::for_tile(1, 1, 0, 0)), c);

        let o = Vec4::new(0.0, 0.0, 0.0, 1.0);
        assert_eq!(apply_clip_remap(o, &ClipRemap::for_tile(2, 2, 0, 0)), Vec4::new(-0.5, 0.5, 0.0, 1.0));
        assert_eq!(apply_clip_remap(o, &ClipRemap::for_tile(2, 2, 1, 1)), Vec4::new(0.5, -0.5, 0.0, 1.0));
    }

    #[test]
    fn cofactor_is_scaled_inverse_transpose() {
        let m = compose_trs(Vec3::new(3.0, 1.0, -2.0), Vec3::new(20.0, -35.0, 80.0), Vec3::new(2.0, 0.5, 3.0))
            .unwrap()
            .upper3();
        let cof = m.cofactor();
        let det = m.det();
        // M^T * cof = det * I
        for i in 0..3 {
            for j in 0..3 {
                let v = m.0[i].dot(cof.0[j]);
                let expect = if i == j { det } else { 0.0 };
                assert!((v - expect).abs() < 1e-9);
            }
        }
    }
}

//! Rigid-body and projective geometry shared by every stage of the pipeline.
//!
//! Rotations are plain 3x3 matrices wrapped in [`Rotation`]; the axis-angle
//! form ([`AxisAngle`]) is what the rotation search and the motion model
//! operate on. Image lines are homogeneous 3-vectors normalized to unit
//! norm, carried together with the segment endpoints they came from.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point has non-positive depth ({0:.3e})")]
    NonPositiveDepth(f64),
    #[error("projected line endpoints coincide")]
    DegenerateLine,
    #[error("line has no finite image direction")]
    LineAtInfinity,
    #[error("3D line endpoints coincide")]
    ZeroLengthLine,
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Cross-product (hat) matrix of `v`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Unsigned angle between two vectors, in `[0, pi]`.
///
/// Uses `atan2(|a x b|, a . b)`, which stays accurate near 0 and pi where
/// `acos` of the normalized dot product loses precision.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Axis-angle rotation vector: direction is the axis, norm the angle (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisAngle(pub Vec3);

impl AxisAngle {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vec3::new(x, y, z))
    }

    pub fn zero() -> Self {
        Self(Vec3::zeros())
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    pub fn vector(&self) -> Vec3 {
        self.0
    }

    pub fn to_rotation(&self) -> Rotation {
        rodrigues(self)
    }
}

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Wraps a matrix without checking orthonormality.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Self(m)
    }

    /// Wraps a matrix after projecting it onto SO(3) (nearest rotation in
    /// the Frobenius sense).
    pub fn from_matrix_orthonormalized(m: Mat3) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut d = Mat3::identity();
        if (u * v_t).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        Self(u * d * v_t)
    }

    /// Builds a rotation from row-major entries, re-orthonormalizing.
    pub fn from_row_major(entries: &[f64; 9]) -> Self {
        Self::from_matrix_orthonormalized(Mat3::from_row_slice(entries))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn log(&self) -> AxisAngle {
        log_rotation(self)
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        ((self.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    /// Max deviation from orthonormality and unit determinant.
    pub fn orthonormality_error(&self) -> f64 {
        let e = (self.0.transpose() * self.0 - Mat3::identity()).abs().max();
        e.max((self.0.determinant() - 1.0).abs())
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<&Vec3> for &Rotation {
    type Output = Vec3;
    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<&Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<Vec3> for &Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Exponential map from axis-angle to rotation matrix (Rodrigues' formula):
/// `cos(t) I + (1 - cos(t)) b b^T + sin(t) [b]x`.
pub fn rodrigues(r: &AxisAngle) -> Rotation {
    let theta = r.0.norm();
    if theta < 1e-8 {
        // second-order series of exp([r]x)
        let k = skew(&r.0);
        return Rotation(Mat3::identity() + k + 0.5 * k * k);
    }
    let b = r.0 / theta;
    let (s, c) = theta.sin_cos();
    Rotation(c * Mat3::identity() + (1.0 - c) * b * b.transpose() + s * skew(&b))
}

/// Logarithm map, the inverse of [`rodrigues`], with angle in `[0, pi]`.
///
/// At exactly `pi` the axis is only defined up to sign; the returned axis
/// then has its first non-zero component positive.
pub fn log_rotation(rot: &Rotation) -> AxisAngle {
    let m = rot.matrix();
    let cos_theta = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let vee = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);

    if theta < 1e-8 {
        return AxisAngle(0.5 * vee);
    }
    if theta < PI - 1e-3 {
        return AxisAngle(vee * (theta / (2.0 * theta.sin())));
    }

    // Near pi: recover b b^T from the symmetric part, then fix the sign.
    let sym = 0.5 * (m + m.transpose());
    let bbt = (sym - cos_theta * Mat3::identity()) / (1.0 - cos_theta);
    let col = (0..3)
        .max_by(|&a, &b| bbt[(a, a)].total_cmp(&bbt[(b, b)]))
        .unwrap_or(0);
    let mut axis = Vec3::new(bbt[(0, col)], bbt[(1, col)], bbt[(2, col)]);
    axis /= axis.norm();
    // sin(theta) * b = vee / 2; trust it while it carries signal
    if vee.norm() > 1e-12 {
        if axis.dot(&vee) < 0.0 {
            axis = -axis;
        }
    } else if let Some(first) = axis.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            axis = -axis;
        }
    }
    AxisAngle(axis * theta)
}

/// Object-to-camera rigid transform: `X_cam = R X_obj + T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vec3::zeros())
    }

    pub fn transform(&self, p: &Vec3) -> Vec3 {
        self.rotation.matrix() * p + self.translation
    }

    /// Applies a left-multiplied 6-vector increment `[dw; dt]`:
    /// `R <- exp(dw) R`, `T <- T + dt`.
    pub fn perturbed(&self, delta: &[f64; 6]) -> Pose {
        let dw = AxisAngle::new(delta[0], delta[1], delta[2]);
        Pose {
            rotation: rodrigues(&dw) * self.rotation,
            translation: self.translation + Vec3::new(delta[3], delta[4], delta[5]),
        }
    }
}

/// Pinhole intrinsics (pixels). No distortion model: events are assumed
/// undistorted upstream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraIntrinsics {
    /// 640x480 sensor, 800 px focal length, principal point at the center.
    fn default() -> Self {
        Self { fx: 800.0, fy: 800.0, cx: 320.0, cy: 240.0, width: 640, height: 480 }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics("focal lengths must be positive".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) || !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidIntrinsics("principal point outside the image".into()));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Projects a camera-frame point.
    pub fn project(&self, x: &Vec3) -> Result<Vec2, GeometryError> {
        if x.z <= 1e-9 {
            return Err(GeometryError::NonPositiveDepth(x.z));
        }
        Ok(Vec2::new(self.fx * x.x / x.z + self.cx, self.fy * x.y / x.z + self.cy))
    }

    /// Viewing ray (not normalized, z = 1) through a pixel.
    pub fn back_project(&self, p: &Vec2) -> Vec3 {
        Vec3::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }
}

/// Image line segment: unit-norm homogeneous coefficients and endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line2D {
    pub coeffs: Vec3,
    pub p1: Vec2,
    pub p2: Vec2,
}

impl Line2D {
    /// Line through two pixel points, `l = p1h x p2h / |p1h x p2h|`.
    pub fn from_points(p1: Vec2, p2: Vec2) -> Result<Self, GeometryError> {
        if (p1 - p2).norm() < 1e-6 {
            return Err(GeometryError::DegenerateLine);
        }
        let c = p1.push(1.0).cross(&p2.push(1.0));
        Ok(Self { coeffs: c / c.norm(), p1, p2 })
    }

    pub fn length(&self) -> f64 {
        (self.p2 - self.p1).norm()
    }

    pub fn midpoint(&self) -> Vec2 {
        0.5 * (self.p1 + self.p2)
    }

    /// Unit direction from `p1` to `p2`.
    pub fn direction(&self) -> Vec2 {
        (self.p2 - self.p1) / self.length()
    }
}

/// 3D line segment in the model frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line3D {
    pub p1: Vec3,
    pub p2: Vec3,
    pub direction: Vec3,
}

impl Line3D {
    pub fn new(p1: Vec3, p2: Vec3) -> Result<Self, GeometryError> {
        let d = p2 - p1;
        let n = d.norm();
        if n < 1e-12 {
            return Err(GeometryError::ZeroLengthLine);
        }
        Ok(Self { p1, p2, direction: d / n })
    }

    pub fn midpoint(&self) -> Vec3 {
        0.5 * (self.p1 + self.p2)
    }

    pub fn length(&self) -> f64 {
        (self.p2 - self.p1).norm()
    }

    pub fn point_at(&self, s: f64) -> Vec3 {
        self.p1 + s * (self.p2 - self.p1)
    }
}

pub fn project_point(k: &CameraIntrinsics, pose: &Pose, p: &Vec3) -> Result<Vec2, GeometryError> {
    k.project(&pose.transform(p))
}

pub fn project_line(k: &CameraIntrinsics, pose: &Pose, line: &Line3D) -> Result<Line2D, GeometryError> {
    let a = project_point(k, pose, &line.p1)?;
    let b = project_point(k, pose, &line.p2)?;
    Line2D::from_points(a, b)
}

/// Unit normal of the plane through the camera center and the image line,
/// `normalize(K^T l)`.
pub fn interpretation_plane_normal(k: &CameraIntrinsics, l: &Line2D) -> Vec3 {
    let n = k.matrix().transpose() * l.coeffs;
    n / n.norm()
}

/// Signed perpendicular distance (pixels) from a pixel to an image line,
/// `e^T l / sqrt(lx^2 + ly^2)` with `e = (x, y, 1)`.
pub fn event_line_distance(e: &Vec2, l: &Line2D) -> Result<f64, GeometryError> {
    line_distance(e, &l.coeffs)
}

/// Same as [`event_line_distance`] for bare (not necessarily normalized)
/// coefficients.
pub fn line_distance(e: &Vec2, coeffs: &Vec3) -> Result<f64, GeometryError> {
    let nn = coeffs.x * coeffs.x + coeffs.y * coeffs.y;
    if nn < 1e-18 {
        return Err(GeometryError::LineAtInfinity);
    }
    Ok((e.x * coeffs.x + e.y * coeffs.y + coeffs.z) / nn.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat_close(a: &Mat3, b: &Mat3, tol: f64) -> bool {
        (a - b).abs().max() <= tol
    }

    fn k800() -> CameraIntrinsics {
        CameraIntrinsics::default()
    }

    /// Quaternion-based rotation, independent of the Rodrigues code path.
    fn quat_rotate(r: &Vec3, v: &Vec3) -> Vec3 {
        let theta = r.norm();
        let axis = r / theta;
        let (w, q) = ((theta / 2.0).cos(), axis * (theta / 2.0).sin());
        // v' = v + 2w (q x v) + 2 q x (q x v)
        let t = 2.0 * q.cross(v);
        v + w * t + q.cross(&t)
    }

    #[test]
    fn rodrigues_zero_is_identity() {
        assert_eq!(rodrigues(&AxisAngle::zero()), Rotation::identity());
    }

    #[test]
    fn rodrigues_quarter_turn_about_z() {
        let r = rodrigues(&AxisAngle::new(0.0, 0.0, PI / 2.0));
        let v = r * Vec3::x();
        assert!((v - Vec3::y()).norm() < 1e-15);
    }

    #[test]
    fn rodrigues_matches_quaternion_oracle() {
        let r = Vec3::new(0.3, -0.8, 0.5).normalize() * 1.2;
        let rot = rodrigues(&AxisAngle(r));
        assert!((rot.matrix().trace() - (1.0 + 2.0 * 1.2f64.cos())).abs() < 1e-12);
        let axis = r / r.norm();
        assert!((rot * axis - axis).norm() < 1e-12);
        for v in [Vec3::x(), Vec3::y(), Vec3::z(), Vec3::new(0.2, 0.4, -1.0)] {
            assert!((rot * v - quat_rotate(&r, &v)).norm() < 1e-12);
        }
        assert!(rot.orthonormality_error() < 1e-12);
    }

    #[test]
    fn log_identity_and_round_trip() {
        assert_eq!(log_rotation(&Rotation::identity()).0, Vec3::zeros());
        let r = AxisAngle::new(0.1, 0.2, 0.3);
        assert!((log_rotation(&rodrigues(&r)).0 - r.0).norm() < 1e-9);
    }

    #[test]
    fn log_at_pi_uses_positive_convention() {
        let rx = Rotation::from_matrix_unchecked(Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0));
        let a = log_rotation(&rx);
        assert!((a.0 - Vec3::new(PI, 0.0, 0.0)).norm() < 1e-12);
        // both candidate axes reconstruct the rotation
        assert!(mat_close(rodrigues(&a).matrix(), rx.matrix(), 1e-12));
        assert!(mat_close(rodrigues(&AxisAngle(-a.0)).matrix(), rx.matrix(), 1e-12));

        let axis = Vec3::new(-1.0, 2.0, 0.5).normalize();
        let rot = rodrigues(&AxisAngle(axis * PI));
        let got = log_rotation(&rot);
        assert!((got.angle() - PI).abs() < 1e-9);
        assert!(got.0.x > 0.0);
        assert!(mat_close(rodrigues(&got).matrix(), rot.matrix(), 1e-9));
    }

    #[test]
    fn projection_examples() {
        let k = k800();
        let pose = Pose::identity();
        let p = project_point(&k, &pose, &Vec3::new(0.0, 0.0, 5.0)).unwrap();
        assert_eq!(p, Vec2::new(320.0, 240.0));
        let p = project_point(&k, &pose, &Vec3::new(1.0, 0.0, 5.0)).unwrap();
        assert_eq!(p, Vec2::new(480.0, 240.0));
        assert!(matches!(
            project_point(&k, &pose, &Vec3::new(1.0, 0.0, -5.0)),
            Err(GeometryError::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn projection_matches_homogeneous_matrix_oracle() {
        let k = CameraIntrinsics { fx: 700.0, fy: 650.0, cx: 300.0, cy: 250.0, width: 640, height: 480 };
        let pose = Pose::new(rodrigues(&AxisAngle::new(0.3, -0.2, 0.1)), Vec3::new(0.2, -0.1, 6.0));
        let p = Vec3::new(0.4, 0.7, -0.3);
        let m = pose.rotation.matrix();
        let t = pose.translation;
        let mut rt = nalgebra::Matrix3x4::<f64>::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(m);
        rt.set_column(3, &t);
        let h = k.matrix() * rt * nalgebra::Vector4::new(p.x, p.y, p.z, 1.0);
        let expected = Vec2::new(h.x / h.z, h.y / h.z);
        let got = project_point(&k, &pose, &p).unwrap();
        assert!((got - expected).norm() < 1e-9);
    }

    #[test]
    fn line_from_axis_points() {
        let l = Line2D::from_points(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)).unwrap();
        assert!((l.coeffs.abs() - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        let l = Line2D::from_points(Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0)).unwrap();
        assert!((l.coeffs.abs() - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(
            Line2D::from_points(Vec2::new(3.0, 3.0), Vec2::new(3.0, 3.0)),
            Err(GeometryError::DegenerateLine)
        );
    }

    #[test]
    fn projected_line_passes_through_endpoints() {
        let k = k800();
        let pose = Pose::new(rodrigues(&AxisAngle::new(0.1, 0.5, -0.2)), Vec3::new(0.3, 0.1, 7.0));
        let line = Line3D::new(Vec3::new(-1.0, 0.5, 0.2), Vec3::new(0.8, -0.4, -0.6)).unwrap();
        let l = project_line(&k, &pose, &line).unwrap();
        for p in [l.p1, l.p2] {
            assert!(p.push(1.0).dot(&l.coeffs).abs() < 1e-9);
        }
        assert!((l.coeffs.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plane_normal_identity_intrinsics() {
        let k = CameraIntrinsics { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0, width: 1, height: 1 };
        let l = Line2D::from_points(Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)).unwrap();
        assert!((interpretation_plane_normal(&k, &l).abs() - Vec3::y()).norm() < 1e-15);
        let l = Line2D::from_points(Vec2::new(0.0, -1.0), Vec2::new(0.0, 1.0)).unwrap();
        assert!((interpretation_plane_normal(&k, &l).abs() - Vec3::x()).norm() < 1e-15);
    }

    #[test]
    fn plane_normal_is_perpendicular_to_rays() {
        let k = k800();
        // horizontal line through the principal point
        let l = Line2D::from_points(Vec2::new(100.0, 240.0), Vec2::new(500.0, 240.0)).unwrap();
        let n = interpretation_plane_normal(&k, &l);
        assert!((n.abs() - Vec3::y()).norm() < 1e-12);
        let l = Line2D::from_points(Vec2::new(37.0, 12.5), Vec2::new(610.0, 402.0)).unwrap();
        let n = interpretation_plane_normal(&k, &l);
        for i in 0..=20 {
            let p = l.p1 + (l.p2 - l.p1) * (i as f64 / 20.0);
            let ray = k.back_project(&p).normalize();
            assert!(ray.dot(&n).abs() < 1e-9);
        }
    }

    #[test]
    fn distance_examples() {
        let l = Line2D::from_points(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)).unwrap();
        let d = event_line_distance(&Vec2::new(5.0, 3.0), &l).unwrap();
        assert!((d.abs() - 3.0).abs() < 1e-12);
        let on = event_line_distance(&Vec2::new(0.25, 0.0), &l).unwrap();
        assert!(on.abs() < 1e-12);
        let bad = Line2D { coeffs: Vec3::new(0.0, 0.0, 1.0), p1: Vec2::zeros(), p2: Vec2::x() };
        assert_eq!(event_line_distance(&Vec2::zeros(), &bad), Err(GeometryError::LineAtInfinity));
    }

    #[test]
    fn distance_matches_closest_point_search() {
        let l = Line2D::from_points(Vec2::new(12.0, 40.0), Vec2::new(300.0, 190.0)).unwrap();
        let e = Vec2::new(150.0, 20.0);
        // golden-section search over the line parameter
        let f = |s: f64| (l.p1 + s * (l.p2 - l.p1) - e).norm();
        let (mut a, mut b) = (-10.0, 10.0);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let oracle = f(0.5 * (a + b));
        let d = event_line_distance(&e, &l).unwrap();
        assert!((d.abs() - oracle).abs() < 1e-9);
    }

    fn arb_vec3(r: f64) -> impl Strategy<Value = Vec3> {
        (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn arb_in_ball(r: f64) -> impl Strategy<Value = Vec3> {
        arb_vec3(r).prop_filter("inside ball", move |v| v.norm() <= r)
    }

    fn arb_unit() -> impl Strategy<Value = Vec3> {
        arb_vec3(1.0).prop_filter("non-degenerate", |v| v.norm() > 1e-3).prop_map(|v| v.normalize())
    }

    proptest! {
        #[test]
        fn log_exp_round_trip(r in arb_in_ball(PI - 1e-6)) {
            let rot = rodrigues(&AxisAngle(r));
            prop_assert!(rot.orthonormality_error() < 1e-12);
            let back = rodrigues(&log_rotation(&rot));
            prop_assert!(mat_close(back.matrix(), rot.matrix(), 1e-8));
            prop_assert!(log_rotation(&rot).angle() <= PI + 1e-12);
        }

        #[test]
        fn rotated_vector_angle_bounded_by_parameter_distance(
            a1 in arb_in_ball(PI), a2 in arb_in_ball(PI), v in arb_unit()
        ) {
            let lhs = angle_between(&(rodrigues(&AxisAngle(a1)) * v), &(rodrigues(&AxisAngle(a2)) * v));
            prop_assert!(lhs <= (a1 - a2).norm() + 1e-9);
        }

        #[test]
        fn distance_sign_symmetries(
            p1 in arb_vec3(300.0), p2 in arb_vec3(300.0), e in arb_vec3(300.0)
        ) {
            let (p1, p2, e) = (p1.xy(), p2.xy(), e.xy());
            prop_assume!((p1 - p2).norm() > 1e-3);
            let l = Line2D::from_points(p1, p2).unwrap();
            let swapped = Line2D::from_points(p2, p1).unwrap();
            let negated = Line2D { coeffs: -l.coeffs, ..l };
            let d = event_line_distance(&e, &l).unwrap().abs();
            prop_assert!((d - event_line_distance(&e, &swapped).unwrap().abs()).abs() < 1e-9);
            prop_assert!((d - event_line_distance(&e, &negated).unwrap().abs()).abs() < 1e-12);
        }

        #[test]
        fn line_coeffs_are_scale_invariant(
            p1 in arb_vec3(300.0), p2 in arb_vec3(300.0), s1 in 0.1f64..50.0, s2 in -50.0f64..-0.1
        ) {
            let (p1, p2) = (p1.xy(), p2.xy());
            prop_assume!((p1 - p2).norm() > 1e-3);
            let l = Line2D::from_points(p1, p2).unwrap();
            let c = (s1 * p1.push(1.0)).cross(&(s2 * p2.push(1.0)));
            let c = c / c.norm();
            prop_assert!((c - l.coeffs).norm() < 1e-9 || (c + l.coeffs).norm() < 1e-9);
        }
    }
}

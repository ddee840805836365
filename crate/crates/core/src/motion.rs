//! Constant-velocity motion model.
//!
//! Over an interval `dt` a twist `(w, v)` produces the relative motion
//! `dR = exp([w dt]x)`, `dT = J(w dt) v dt`, with `J` the left Jacobian of
//! SO(3). A pose is propagated as `R' = R dR^-1`, `T' = T - R dR^-1 dT`.

use serde::{Deserialize, Serialize};

use crate::geometry::{log_rotation, rodrigues, skew, AxisAngle, Mat3, Pose, Rotation, Vec3};

/// Angular velocity `w` (rad/s, axis times rate) and linear velocity `v` (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub w: Vec3,
    pub v: Vec3,
}

impl Twist {
    pub fn new(w: Vec3, v: Vec3) -> Self {
        Self { w, v }
    }

    pub fn zero() -> Self {
        Self::default()
    }
}

/// Left Jacobian of SO(3) at `phi = theta b`:
/// `sin(t)/t I + (1 - sin(t)/t) b b^T + (1 - cos(t))/t [b]x`.
pub fn left_jacobian(phi: &Vec3) -> Mat3 {
    let theta = phi.norm();
    if theta < 1e-8 {
        return Mat3::identity() + 0.5 * skew(phi);
    }
    let b = phi / theta;
    let (s, c) = theta.sin_cos();
    (s / theta) * Mat3::identity() + (1.0 - s / theta) * b * b.transpose() + ((1.0 - c) / theta) * skew(&b)
}

/// Closed-form inverse of [`left_jacobian`].
pub fn left_jacobian_inverse(phi: &Vec3) -> Mat3 {
    let theta = phi.norm();
    if theta < 1e-8 {
        return Mat3::identity() - 0.5 * skew(phi);
    }
    let b = phi / theta;
    let half = theta / 2.0;
    let hc = half / half.tan();
    hc * Mat3::identity() + (1.0 - hc) * b * b.transpose() - half * skew(&b)
}

/// Relative rotation and translation accumulated over `dt` seconds.
pub fn relative_motion(twist: &Twist, dt: f64) -> (Rotation, Vec3) {
    let phi = twist.w * dt;
    let d_rot = rodrigues(&AxisAngle(phi));
    let d_trans = left_jacobian(&phi) * twist.v * dt;
    (d_rot, d_trans)
}

pub fn predict_pose(pose: &Pose, twist: &Twist, dt: f64) -> Pose {
    let (d_rot, d_trans) = relative_motion(twist, dt);
    let rotation = pose.rotation * d_rot.inverse();
    let translation = pose.translation - rotation * d_trans;
    Pose { rotation, translation }
}

/// Constant twist carrying `prev` onto `curr` in `dt` seconds; the inverse
/// of [`predict_pose`].
pub fn estimate_twist(prev: &Pose, curr: &Pose, dt: f64) -> Twist {
    assert!(dt > 0.0, "estimate_twist needs a positive interval");
    // R_curr = R_prev dR^-1  =>  dR = R_curr^T R_prev
    let d_rot = curr.rotation.transpose() * prev.rotation;
    let phi = log_rotation(&d_rot).0;
    // T_curr = T_prev - R_curr dT
    let d_trans = curr.rotation.transpose() * (prev.translation - curr.translation);
    let v = left_jacobian_inverse(&phi) * d_trans / dt;
    Twist { w: phi / dt, v }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn pose(r: [f64; 3], t: [f64; 3]) -> Pose {
        Pose::new(rodrigues(&AxisAngle::new(r[0], r[1], r[2])), Vec3::from(t))
    }

    fn pose_close(a: &Pose, b: &Pose, tol: f64) -> bool {
        (a.rotation.matrix() - b.rotation.matrix()).abs().max() <= tol && (a.translation - b.translation).norm() <= tol
    }

    #[test]
    fn zero_twist_is_identity_motion() {
        let (r, t) = relative_motion(&Twist::zero(), 0.7);
        assert_eq!(r, Rotation::identity());
        assert_eq!(t, Vec3::zeros());
    }

    #[test]
    fn quarter_turn() {
        let tw = Twist::new(Vec3::new(0.0, 0.0, 1.0), Vec3::zeros());
        let (r, t) = relative_motion(&tw, PI / 2.0);
        assert!((r * Vec3::x() - Vec3::y()).norm() < 1e-15);
        assert_eq!(t, Vec3::zeros());
    }

    #[test]
    fn rotation_shares_rodrigues_path() {
        let tw = Twist::new(Vec3::new(0.3, -1.1, 0.4), Vec3::new(1.0, 2.0, 3.0));
        let (r, _) = relative_motion(&tw, 0.37);
        assert_eq!(r, rodrigues(&AxisAngle(tw.w * 0.37)));
    }

    #[test]
    fn jacobian_matches_quadrature_of_exponential() {
        // J(phi) = int_0^1 exp(s [phi]x) ds, Simpson's rule
        let phi = Vec3::new(0.9, -0.4, 1.3);
        let n = 2000;
        let h = 1.0 / n as f64;
        let mut acc = Mat3::zeros();
        for i in 0..=n {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * rodrigues(&AxisAngle(phi * (i as f64 * h))).matrix();
        }
        let quad = acc * (h / 3.0);
        assert!((left_jacobian(&phi) - quad).abs().max() < 1e-12);
        // translation over dt equals the integrated velocity
        let tw = Twist::new(phi / 0.5, Vec3::new(0.2, 0.1, -0.3));
        let (_, dt) = relative_motion(&tw, 0.5);
        assert!((dt - quad * tw.v * 0.5).norm() < 1e-12);
    }

    #[test]
    fn jacobian_inverse_is_inverse() {
        for phi in [Vec3::new(0.1, 0.2, 0.3), Vec3::new(-2.0, 1.0, 0.5), Vec3::new(1e-10, 0.0, 0.0)] {
            let p = left_jacobian(&phi) * left_jacobian_inverse(&phi);
            assert!((p - Mat3::identity()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn jacobian_series_bound_near_zero() {
        for theta in [1e-4, 5e-4, 9e-4] {
            let phi = Vec3::new(0.6, -0.8, 0.0) * theta;
            assert!((left_jacobian(&phi) - Mat3::identity()).norm() <= theta);
        }
    }

    #[test]
    fn prediction_identities() {
        let p = pose([0.2, -0.1, 0.4], [0.1, 0.2, 6.0]);
        assert!(pose_close(&predict_pose(&p, &Twist::zero(), 0.3), &p, 0.0));
        let tw = Twist::new(Vec3::new(0.3, 0.1, 0.0), Vec3::new(0.7, 0.0, 0.1));
        assert!(pose_close(&predict_pose(&p, &tw, 0.0), &p, 0.0));
    }

    #[test]
    fn two_half_steps_equal_one_step() {
        let p = pose([0.5, 0.2, -0.3], [0.0, 0.1, 5.0]);
        let pure_rot = Twist::new(Vec3::new(0.4, -0.2, 0.9), Vec3::zeros());
        let full = predict_pose(&p, &pure_rot, 0.8);
        let half = predict_pose(&predict_pose(&p, &pure_rot, 0.4), &pure_rot, 0.4);
        assert!(pose_close(&full, &half, 1e-12));
        // also holds with a linear component
        let tw = Twist::new(Vec3::new(0.4, -0.2, 0.9), Vec3::new(0.5, 0.3, -0.2));
        let full = predict_pose(&p, &tw, 0.8);
        let half = predict_pose(&predict_pose(&p, &tw, 0.4), &tw, 0.4);
        assert!(pose_close(&full, &half, 1e-12));
    }

    #[test]
    fn twist_round_trip() {
        let p = pose([0.1, 0.2, 0.3], [0.5, -0.2, 7.0]);
        assert_eq!(estimate_twist(&p, &p, 0.02), Twist::zero());
        let tw = Twist::new(Vec3::new(0.3, -0.1, 0.2), Vec3::new(0.7, 0.1, -0.05));
        let q = predict_pose(&p, &tw, 0.02);
        let got = estimate_twist(&p, &q, 0.02);
        assert!((got.w - tw.w).norm() < 1e-8 && (got.v - tw.v).norm() < 1e-8);
    }

    proptest! {
        #[test]
        fn predict_estimate_round_trip(
            r0 in prop::array::uniform3(-1.5f64..1.5), t0 in prop::array::uniform3(-2.0f64..2.0),
            r1 in prop::array::uniform3(-1.5f64..1.5), t1 in prop::array::uniform3(-2.0f64..2.0),
            dt in 0.001f64..2.0,
        ) {
            let a = pose(r0, t0);
            let b = pose(r1, t1);
            prop_assume!((b.rotation.transpose() * a.rotation).angle() < PI - 1e-3);
            let tw = estimate_twist(&a, &b, dt);
            prop_assert!(pose_close(&predict_pose(&a, &tw, dt), &b, 1e-8));
        }
    }
}

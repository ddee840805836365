//! Pose and trajectory error metrics.

use nalgebra::{Matrix3, SVD};
use thiserror::Error;

use crate::geometry::{Pose, Rotation, Vec3};

/// Timestamp association tolerance, seconds.
pub const TIME_TOL: f64 = 1e-6;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum MetricsError {
    #[error("ground-truth translation has zero norm")]
    ZeroTruthTranslation,
    #[error("{0} associated poses, need at least 3")]
    TooFewPoses(usize),
    #[error("no ground-truth pose within 1e-6 s of t = {0}")]
    TimestampMismatch(f64),
}

/// `acos((tr(R^T R_truth) - 1) / 2)`.
pub fn err_rotation(r: &Rotation, r_truth: &Rotation) -> f64 {
    let m = r.transpose() * *r_truth;
    ((m.matrix().trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

pub fn err_translation(t: &Vec3, t_truth: &Vec3) -> Result<f64, MetricsError> {
    let n = t_truth.norm();
    if n == 0.0 {
        return Err(MetricsError::ZeroTruthTranslation);
    }
    Ok((t - t_truth).norm() / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ate {
    /// Position RMSE after rigid alignment, trajectory units.
    pub rmse: f64,
    /// Largest distance between two ground-truth positions.
    pub extent: f64,
    /// `rmse / extent`.
    pub normalized: f64,
    pub poses: usize,
}

/// Least-squares rotation and translation with `R a_i + t ~ b_i`.
pub fn rigid_align(a: &[Vec3], b: &[Vec3]) -> (Matrix3<f64>, Vec3) {
    let n = a.len() as f64;
    let ca = a.iter().sum::<Vec3>() / n;
    let cb = b.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (p, q) in a.iter().zip(b) {
        h += (p - ca) * (q - cb).transpose();
    }
    let svd = SVD::new(h, true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (vt.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = vt.transpose() * d * u.transpose();
    (r, cb - r * ca)
}

/// ATE RMSE of `estimated` against `truth` (both sorted by time) after
/// rigid alignment of the estimated positions.
pub fn ate_rmse(estimated: &[(f64, Pose)], truth: &[(f64, Pose)]) -> Result<Ate, MetricsError> {
    let mut est = Vec::with_capacity(estimated.len());
    let mut gt = Vec::with_capacity(estimated.len());
    for (t, p) in estimated {
        let i = truth.partition_point(|(tt, _)| *tt < t - TIME_TOL);
        match truth.get(i) {
            Some((tt, q)) if (tt - t).abs() <= TIME_TOL => {
                est.push(p.translation);
                gt.push(q.translation);
            }
            _ => return Err(MetricsError::TimestampMismatch(*t)),
        }
    }
    if est.len() < 3 {
        return Err(MetricsError::TooFewPoses(est.len()));
    }
    let (r, t) = rigid_align(&est, &gt);
    let sq: f64 = est.iter().zip(&gt).map(|(p, q)| (r * p + t - q).norm_squared()).sum();
    let rmse = (sq / est.len() as f64).sqrt();
    let mut extent: f64 = 0.0;
    for (i, p) in gt.iter().enumerate() {
        for q in &gt[i + 1..] {
            extent = extent.max((p - q).norm());
        }
    }
    let normalized = if extent > 0.0 { rmse / extent } else { f64::NAN };
    Ok(Ate { rmse, extent, normalized, poses: est.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{log_rotation, rodrigues, AxisAngle};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn rot(v: (f64, f64, f64)) -> Rotation {
        rodrigues(&AxisAngle::new(v.0, v.1, v.2))
    }

    #[test]
    fn rotation_error_checkpoints() {
        let q = rot((0.0, 0.0, std::f64::consts::FRAC_PI_2));
        assert_eq!(err_rotation(&Rotation::identity(), &Rotation::identity()), 0.0);
        assert!((err_rotation(&q, &Rotation::identity()) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn translation_error_checkpoints() {
        let t = Vec3::new(1.0, -2.0, 3.0);
        assert_eq!(err_translation(&t, &t), Ok(0.0));
        assert!((err_translation(&(2.0 * t), &t).unwrap() - 1.0).abs() < 1e-15);
        let u = Vec3::new(0.5, 0.5, 0.5);
        let hand = ((0.5f64).powi(2) + 2.5f64.powi(2) + 2.5f64.powi(2)).sqrt() / 14f64.sqrt();
        assert!((err_translation(&u, &t).unwrap() - hand).abs() < 1e-15);
        assert_eq!(err_translation(&t, &Vec3::zeros()), Err(MetricsError::ZeroTruthTranslation));
    }

    fn traj(n: usize) -> Vec<(f64, Pose)> {
        (0..n)
            .map(|i| {
                let s = i as f64 * 0.02;
                (s, Pose::new(rot((0.1 * s, 0.0, 0.2)), Vec3::new(s.sin(), 0.5 * s, 3.0 + (2.0 * s).cos())))
            })
            .collect()
    }

    #[test]
    fn ate_zero_for_identical_and_rigidly_moved() {
        let gt = traj(50);
        assert!(ate_rmse(&gt, &gt).unwrap().rmse < 1e-12);
        let g = Pose::new(rot((0.4, -1.0, 2.0)), Vec3::new(3.0, -1.0, 10.0));
        let moved: Vec<(f64, Pose)> =
            gt.iter().map(|(t, p)| (*t, Pose::new(g.rotation * p.rotation, g.transform(&p.translation)))).collect();
        assert!(ate_rmse(&moved, &gt).unwrap().rmse < 1e-9);
    }

    #[test]
    fn ate_noise_level() {
        let gt = traj(1000);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = Normal::new(0.0, 0.01).unwrap();
        let noisy: Vec<(f64, Pose)> = gt
            .iter()
            .map(|(t, p)| {
                let d = Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng));
                (*t, Pose::new(p.rotation, p.translation + d))
            })
            .collect();
        let ate = ate_rmse(&noisy, &gt).unwrap();
        let expected = 0.01 * 3f64.sqrt();
        assert!((ate.rmse - expected).abs() < 0.15 * expected, "{}", ate.rmse);
    }

    #[test]
    fn ate_errors() {
        let gt = traj(10);
        assert_eq!(ate_rmse(&gt[..2], &gt), Err(MetricsError::TooFewPoses(2)));
        let mut shifted = gt.clone();
        shifted[3].0 += 1e-3;
        assert!(matches!(ate_rmse(&shifted, &gt), Err(MetricsError::TimestampMismatch(_))));
    }

    proptest! {
        #[test]
        fn rotation_error_matches_log_norm(a in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), b in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0)) {
            let (ra, rb) = (rot(a), rot(b));
            let e = err_rotation(&ra, &rb);
            prop_assert!((0.0..=std::f64::consts::PI).contains(&e));
            prop_assert!((e - log_rotation(&(ra.transpose() * rb)).angle()).abs() < 1e-7);
            prop_assert!((e - err_rotation(&rb, &ra)).abs() < 1e-12);
        }

        #[test]
        fn rotation_error_triangle(a in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), b in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), c in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0)) {
            let (ra, rb, rc) = (rot(a), rot(b), rot(c));
            prop_assert!(err_rotation(&ra, &rc) <= err_rotation(&ra, &rb) + err_rotation(&rb, &rc) + 1e-9);
        }

        #[test]
        fn ate_invariant_under_rigid_motion(r in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0), t in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), seed in 0u64..1000) {
            let gt = traj(30);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = Normal::new(0.0, 0.05).unwrap();
            let est: Vec<(f64, Pose)> = gt.iter().map(|(s, p)| (*s, Pose::new(p.rotation, p.translation + Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng))))).collect();
            let g = Pose::new(rot(r), Vec3::new(t.0, t.1, t.2));
            let moved: Vec<(f64, Pose)> = est.iter().map(|(s, p)| (*s, Pose::new(g.rotation * p.rotation, g.transform(&p.translation)))).collect();
            let a = ate_rmse(&est, &gt).unwrap().rmse;
            let b = ate_rmse(&moved, &gt).unwrap().rmse;
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}

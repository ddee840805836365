//! Robust pose refinement from event-to-line assignments.
//!
//! The cost is `C = sum w_i d_i^2`, with `d_i` the signed distance of event
//! `i` to the projection of its model line. Each outer iteration recomputes
//! residuals, the scale and the weights for the chosen estimator, then
//! takes one damped Gauss-Newton step on `C` with the weights frozen.

use nalgebra::{Matrix3x6, Matrix6, SymmetricEigen, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::EventCluster;
use crate::geometry::{skew, CameraIntrinsics, Mat3, Pose, Vec2, Vec3};
use crate::matching::{match_events, MatchConfig, MatchError, MatchSet};
use crate::model::ObjectModel;
use crate::robust::{
    mad_scale, s_scale_update, s_weight, tukey_weight, EstimatorKind, RobustError, C_M, C_S, SIGMA_FLOOR,
};
use crate::visibility::visible_lines;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum OptError {
    #[error("no event assignments to optimize over")]
    NoAssignments,
    #[error("{0} assignments, need at least {1}")]
    TooFewAssignments(usize, usize),
    #[error("normal matrix is singular or ill-conditioned (condition {0:.3e})")]
    SingularNormalMatrix(f64),
    #[error("a model line projects behind the camera")]
    BehindCamera,
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Robust(#[from] RobustError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    pub max_iterations: usize,
    /// Stop once the norm of the cost gradient falls below this (px^2).
    pub gradient_threshold: f64,
    /// Initial Levenberg damping, relative to the normal-matrix diagonal.
    pub initial_damping: f64,
    /// Damping increases tried per step before giving up.
    pub max_damping_tries: usize,
    pub c_m: f64,
    pub c_s: f64,
    /// Iteration cap of the S stage inside MM.
    pub mm_s_iterations: usize,
    /// Fewer assignments than this counts as a failed window.
    pub min_assignments: usize,
    /// Normal-matrix condition number above which a window fails.
    pub max_condition: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            gradient_threshold: 1e-6,
            initial_damping: 1e-4,
            max_damping_tries: 12,
            c_m: C_M,
            c_s: C_S,
            mm_s_iterations: 20,
            min_assignments: 30,
            max_condition: 1e10,
        }
    }
}

/// Fixed-point steps and relative tolerance for the S scale at one pose.
const S_SCALE_MAX_STEPS: usize = 200;
const S_SCALE_TOL: f64 = 1e-10;

/// Relative cost change treated as numerically zero.
const FLAT_COST_TOL: f64 = 1e-14;

/// One event with the model line it is attributed to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub event: Vec2,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustState {
    pub sigma: f64,
    pub weights: Vec<f64>,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub pose: Pose,
    pub state: RobustState,
    pub iterations: usize,
    /// Weighted cost at the returned pose under the final weights.
    pub cost: f64,
    pub gradient_norm: f64,
    /// Condition number of the final normal matrix.
    pub condition: f64,
}

/// Projected model line in homogeneous form `l = (K X1) x (K X2)` and its
/// derivative with respect to the left pose increment `[dw; dt]`.
struct LineJet {
    l: Vec3,
    dl: Matrix3x6<f64>,
}

fn line_jet(model_line: &crate::geometry::Line3D, pose: &Pose, kmat: &Mat3) -> Result<LineJet, OptError> {
    let x1 = pose.transform(&model_line.p1);
    let x2 = pose.transform(&model_line.p2);
    if x1.z <= 1e-9 || x2.z <= 1e-9 {
        return Err(OptError::BehindCamera);
    }
    let a = kmat * x1;
    let b = kmat * x2;
    let l = a.cross(&b);
    // dX/d[dw; dt] = [-[R P]x | I], and R P = X - T
    let dx = |x: &Vec3| {
        let mut m = Matrix3x6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&(x - pose.translation))));
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&Mat3::identity());
        m
    };
    let dl = -skew(&b) * kmat * dx(&x1) + skew(&a) * kmat * dx(&x2);
    Ok(LineJet { l, dl })
}

fn line_jets(model: &ObjectModel, pose: &Pose, k: &CameraIntrinsics, obs: &[Observation]) -> Result<Vec<Option<LineJet>>, OptError> {
    let kmat = k.matrix();
    let mut jets: Vec<Option<LineJet>> = (0..model.num_lines()).map(|_| None).collect();
    for o in obs {
        if jets[o.line].is_none() {
            jets[o.line] = Some(line_jet(&model.line(o.line), pose, &kmat)?);
        }
    }
    Ok(jets)
}

/// `d = e . l / |l_xy|` and its gradient with respect to the pose increment.
fn residual_and_row(e: &Vec2, jet: &LineJet) -> (f64, Vector6<f64>) {
    let eh = Vec3::new(e.x, e.y, 1.0);
    let nu2 = jet.l.x * jet.l.x + jet.l.y * jet.l.y;
    let nu = nu2.sqrt();
    let el = eh.dot(&jet.l);
    let dd_dl = eh / nu - Vec3::new(jet.l.x, jet.l.y, 0.0) * (el / (nu2 * nu));
    (el / nu, (dd_dl.transpose() * jet.dl).transpose())
}

pub fn residuals(obs: &[Observation], model: &ObjectModel, k: &CameraIntrinsics, pose: &Pose) -> Result<Vec<f64>, OptError> {
    let jets = line_jets(model, pose, k, obs)?;
    Ok(obs.iter().map(|o| residual_and_row(&o.event, jets[o.line].as_ref().unwrap()).0).collect())
}

/// Weighted cost, its gradient `2 J^T W d` and the Gauss-Newton matrix
/// `J^T W J`.
pub fn cost_gradient(
    obs: &[Observation],
    weights: &[f64],
    model: &ObjectModel,
    k: &CameraIntrinsics,
    pose: &Pose,
) -> Result<(f64, Vector6<f64>, Matrix6<f64>), OptError> {
    let jets = line_jets(model, pose, k, obs)?;
    let mut cost = 0.0;
    let mut g = Vector6::zeros();
    let mut h = Matrix6::zeros();
    for (o, &w) in obs.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let (d, row) = residual_and_row(&o.event, jets[o.line].as_ref().unwrap());
        cost += w * d * d;
        g += row * (2.0 * w * d);
        h += row * row.transpose() * w;
    }
    Ok((cost, g, h))
}

pub fn weighted_cost(obs: &[Observation], weights: &[f64], model: &ObjectModel, k: &CameraIntrinsics, pose: &Pose) -> Result<f64, OptError> {
    let r = residuals(obs, model, k, pose)?;
    Ok(r.iter().zip(weights).map(|(d, w)| w * d * d).sum())
}

fn condition_number(h: &Matrix6<f64>) -> f64 {
    let eig = SymmetricEigen::new(*h);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Scale and weights for one outer iteration.
struct Reweighter {
    kind: EstimatorKind,
    c_m: f64,
    c_s: f64,
    /// Scale carried between iterations (S) or frozen (MM, M stage).
    sigma: Option<f64>,
    prev_weights: Option<Vec<f64>>,
    mm_in_m_stage: bool,
}

impl Reweighter {
    fn new(kind: EstimatorKind, cfg: &OptConfig) -> Self {
        Self { kind, c_m: cfg.c_m, c_s: cfg.c_s, sigma: None, prev_weights: None, mm_in_m_stage: false }
    }

    fn s_stage(&mut self, d: &[f64]) -> Result<(f64, Vec<f64>), RobustError> {
        match (&self.sigma, &self.prev_weights) {
            (Some(_), Some(w)) => {
                // sum w d^2 with w = rho(u)/u^2 equals sigma^2 sum rho(u);
                // the recursion is run to its fixed point at the current pose
                let mut sigma = s_scale_update(w, d, d.len(), 1)?;
                let mut weights: Vec<f64> = d.iter().map(|r| s_weight(r / sigma, self.c_s)).collect();
                for _ in 0..S_SCALE_MAX_STEPS {
                    let next = s_scale_update(&weights, d, d.len(), 1)?;
                    weights = d.iter().map(|r| s_weight(r / next, self.c_s)).collect();
                    let change = (next - sigma).abs();
                    sigma = next;
                    if change <= S_SCALE_TOL * sigma {
                        break;
                    }
                }
                self.sigma = Some(sigma);
                self.prev_weights = Some(weights.clone());
                Ok((sigma, weights))
            }
            _ => {
                let sigma = mad_scale(d)?;
                let init: Vec<f64> = d.iter().map(|r| tukey_weight(r / sigma, self.c_s)).collect();
                // the scale recursion needs rho(u)/u^2 weights from here on
                let s_weights: Vec<f64> = d.iter().map(|r| s_weight(r / sigma, self.c_s)).collect();
                self.sigma = Some(sigma);
                self.prev_weights = Some(s_weights);
                Ok((sigma, init))
            }
        }
    }

    fn update(&mut self, d: &[f64]) -> Result<(f64, Vec<f64>), RobustError> {
        match self.kind {
            EstimatorKind::Ls => Ok((mad_scale(d)?, vec![1.0; d.len()])),
            EstimatorKind::M => {
                let sigma = mad_scale(d)?;
                Ok((sigma, d.iter().map(|r| tukey_weight(r / sigma, self.c_m)).collect()))
            }
            EstimatorKind::S => self.s_stage(d),
            EstimatorKind::Mm => {
                if self.mm_in_m_stage {
                    let sigma = self.sigma.unwrap_or(SIGMA_FLOOR);
                    Ok((sigma, d.iter().map(|r| tukey_weight(r / sigma, self.c_m)).collect()))
                } else {
                    self.s_stage(d)
                }
            }
        }
    }

    /// Freezes the S scale and switches MM to Tukey M iterations.
    fn enter_m_stage(&mut self) {
        self.mm_in_m_stage = true;
    }
}

/// Robust refinement over fixed event-to-line attributions.
pub fn refine_pose(
    obs: &[Observation],
    model: &ObjectModel,
    k: &CameraIntrinsics,
    pose0: &Pose,
    kind: EstimatorKind,
    cfg: &OptConfig,
) -> Result<Refinement, OptError> {
    if obs.is_empty() {
        return Err(OptError::NoAssignments);
    }
    let mut pose = *pose0;
    let mut rw = Reweighter::new(kind, cfg);
    let mut iterations = 0;
    let mut stage_iterations = 0;
    let mut lambda = cfg.initial_damping;
    let budget = cfg.max_iterations + if kind == EstimatorKind::Mm { cfg.mm_s_iterations } else { 0 };

    // a stage switch at an unchanged pose does not count as an iteration
    let mut restaged = false;
    loop {
        if !restaged {
            iterations += 1;
        }
        restaged = false;
        stage_iterations += 1;
        let d = residuals(obs, model, k, &pose)?;
        let (sigma, weights) = rw.update(&d)?;
        let (cost, g, h) = cost_gradient(obs, &weights, model, k, &pose)?;
        let gnorm = g.norm();
        let condition = condition_number(&h);
        let done = |pose: Pose, condition: f64| Refinement {
            pose,
            state: RobustState { sigma, weights: weights.clone(), residuals: d.clone() },
            iterations,
            cost,
            gradient_norm: gnorm,
            condition,
        };

        let in_s_stage = kind == EstimatorKind::Mm && !rw.mm_in_m_stage;
        if gnorm < cfg.gradient_threshold {
            if in_s_stage {
                rw.enter_m_stage();
                stage_iterations = 0;
                restaged = true;
                continue;
            }
            return Ok(done(pose, condition));
        }
        if in_s_stage && stage_iterations >= cfg.mm_s_iterations {
            rw.enter_m_stage();
            stage_iterations = 0;
        }
        if !(condition <= cfg.max_condition) {
            return Err(OptError::SingularNormalMatrix(condition));
        }
        if iterations >= budget {
            return Ok(done(pose, condition));
        }

        // damped step with the weights frozen
        let mut improved = false;
        for _ in 0..cfg.max_damping_tries {
            let mut damped = h;
            for i in 0..6 {
                damped[(i, i)] += lambda * h[(i, i)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-0.5 * g))) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = pose.perturbed(&[step[0], step[1], step[2], step[3], step[4], step[5]]);
            let accept = match weighted_cost(obs, &weights, model, k, &candidate) {
                Ok(c) if c < cost => true,
                // below the resolution of the cost itself, descend on the
                // gradient norm instead
                Ok(c) if c <= cost + FLAT_COST_TOL * cost.max(1.0) => cost_gradient(obs, &weights, model, k, &candidate)
                    .is_ok_and(|(_, g2, _)| g2.norm() < gnorm),
                _ => false,
            };
            if accept {
                pose = candidate;
                lambda = (lambda * 0.1).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no descent left at this weighting: a stationary point up to
            // floating-point resolution
            if in_s_stage {
                rw.enter_m_stage();
                stage_iterations = 0;
                lambda = cfg.initial_damping;
                restaged = true;
                continue;
            }
            return Ok(done(pose, condition));
        }
    }
}

/// Attributions of a match set as optimization observations.
pub fn observations(cluster: &EventCluster, matches: &MatchSet) -> Vec<Observation> {
    matches
        .assignments
        .iter()
        .map(|a| Observation { event: cluster.events[a.event].position(), line: a.line })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub refinement: Refinement,
    pub matches: MatchSet,
}

/// Matches the cluster against the lines visible from `pose0` and refines.
pub fn optimize_pose(
    cluster: &EventCluster,
    model: &ObjectModel,
    k: &CameraIntrinsics,
    pose0: &Pose,
    kind: EstimatorKind,
    mcfg: &MatchConfig,
    ocfg: &OptConfig,
) -> Result<WindowResult, OptError> {
    let visible = visible_lines(model, pose0, k);
    let mut matches = match_events(cluster, &visible, mcfg)?;
    matches.drop_sparse_lines(mcfg.min_line_events);
    let obs = observations(cluster, &matches);
    if obs.is_empty() {
        return Err(OptError::NoAssignments);
    }
    if obs.len() < ocfg.min_assignments {
        return Err(OptError::TooFewAssignments(obs.len(), ocfg.min_assignments));
    }
    let refinement = refine_pose(&obs, model, k, pose0, kind, ocfg)?;
    Ok(WindowResult { refinement, matches })
}

//! Correspondence-free initial pose.
//!
//! The rotation is found by a best-first branch-and-bound over the
//! axis-angle cube `[-pi, pi]^3`, maximizing the number of observed image
//! lines whose interpretation-plane normal is perpendicular (within
//! `epsilon_min`) to some rotated model line direction. For a cube branch
//! of side `s` centered at `r0`, the count at `R(r0)` is a lower bound and
//! the count at `R(r0)` with the threshold widened by
//! `mu = min(sqrt(3) s / 2, pi)` is an upper bound. Once the rotation and
//! the line correspondences are fixed, the translation follows linearly
//! from `n_j^T (R P_k + T) = 0`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    interpretation_plane_normal, line_distance, project_line, rodrigues, AxisAngle, CameraIntrinsics, Line2D, Pose,
    Rotation, Vec3,
};
use crate::model::ObjectModel;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum BnbError {
    #[error("branch queue exceeded {0} entries")]
    QueueOverflow(usize),
    #[error("no observed line is an inlier for any rotation")]
    NoInliers,
    #[error("need at least 3 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("translation system is rank deficient (condition {0:.3e})")]
    RankDeficient(f64),
    #[error("empty line set")]
    EmptySet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BnbConfig {
    /// Inlier threshold on `|angle(n, Rv) - pi/2|`, radians.
    pub epsilon_min: f64,
    /// Branches whose side is below this (radians) are not subdivided.
    pub min_branch_side: f64,
    pub max_queue: usize,
    /// Mean reprojection residual (pixels) above which an initial pose is
    /// flagged low-confidence.
    pub residual_gate: f64,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            epsilon_min: 0.5f64.to_radians(),
            min_branch_side: 0.25f64.to_radians(),
            max_queue: 2_000_000,
            residual_gate: 5.0,
        }
    }
}

/// Interpretation-plane normals of the observed lines together with the
/// direction and one point (the midpoint) of every model line.
#[derive(Debug, Clone, PartialEq)]
pub struct LinePairSet {
    pub normals: Vec<Vec3>,
    pub directions: Vec<Vec3>,
    pub points: Vec<Vec3>,
}

impl LinePairSet {
    pub fn new(normals: Vec<Vec3>, directions: Vec<Vec3>, points: Vec<Vec3>) -> Self {
        assert_eq!(directions.len(), points.len(), "one point per model line");
        Self { normals, directions, points }
    }

    pub fn from_observations(observed: &[Line2D], model: &ObjectModel, k: &CameraIntrinsics) -> Self {
        let normals = observed.iter().map(|l| interpretation_plane_normal(k, l)).collect();
        let segs = model.line_segments();
        Self::new(normals, segs.iter().map(|s| s.direction).collect(), segs.iter().map(|s| s.midpoint()).collect())
    }
}

/// Observed-line to model-line pairs `(j, k)`; each `j` appears once.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Correspondences {
    pub pairs: Vec<(usize, usize)>,
}

impl Correspondences {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationBranch {
    pub center: AxisAngle,
    pub half_side: f64,
    pub upper: usize,
    pub lower: usize,
}

impl RotationBranch {
    pub fn root() -> Self {
        Self { center: AxisAngle::zero(), half_side: PI, upper: 0, lower: 0 }
    }

    /// `min(sqrt(3) * side / 2, pi)`: bound on how far any rotation in the
    /// branch can move a unit vector away from the center rotation.
    pub fn angular_radius(&self) -> f64 {
        (3f64.sqrt() * self.half_side).min(PI)
    }
}

/// `|n . Rv| <= sin(eps)` is the perpendicularity test on unit vectors.
fn perpendicular_threshold(eps: f64) -> Option<f64> {
    if eps >= FRAC_PI_2 {
        None
    } else {
        Some(eps.sin())
    }
}

fn count_with_rotated(normals: &[Vec3], rotated: &[Vec3], eps: f64) -> usize {
    let Some(thr) = perpendicular_threshold(eps) else {
        return if rotated.is_empty() { 0 } else { normals.len() };
    };
    normals.iter().filter(|n| rotated.iter().any(|rv| n.dot(rv).abs() <= thr)).count()
}

/// Number of observed lines with at least one model direction that the
/// rotation makes perpendicular to its plane normal within `eps`.
pub fn inlier_count(rot: &Rotation, set: &LinePairSet, eps: f64) -> usize {
    let rotated: Vec<Vec3> = set.directions.iter().map(|v| rot * v).collect();
    count_with_rotated(&set.normals, &rotated, eps)
}

/// `(lower, upper)` for a branch.
pub fn branch_bounds(branch: &RotationBranch, set: &LinePairSet, eps: f64) -> (usize, usize) {
    let rot = rodrigues(&branch.center);
    let rotated: Vec<Vec3> = set.directions.iter().map(|v| rot * v).collect();
    let lower = count_with_rotated(&set.normals, &rotated, eps);
    let upper = count_with_rotated(&set.normals, &rotated, eps + branch.angular_radius());
    (lower, upper)
}

/// Pairs each inlier observed line with the model line closest to
/// perpendicular under `rot`.
pub fn assign_correspondences(rot: &Rotation, set: &LinePairSet, eps: f64) -> Correspondences {
    let rotated: Vec<Vec3> = set.directions.iter().map(|v| rot * v).collect();
    let thr = perpendicular_threshold(eps).unwrap_or(1.0);
    let mut pairs = Vec::new();
    for (j, n) in set.normals.iter().enumerate() {
        let best = rotated
            .iter()
            .enumerate()
            .map(|(k, rv)| (k, n.dot(rv).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((k, d)) = best {
            if d <= thr {
                pairs.push((j, k));
            }
        }
    }
    Correspondences { pairs }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationSearch {
    pub rotation: Rotation,
    pub correspondences: Correspondences,
    pub count: usize,
    /// Branches whose bounds were evaluated.
    pub explored: usize,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    center: Vec3,
    depth: u32,
    lower: usize,
    upper: usize,
}

impl Node {
    fn half_side(&self) -> f64 {
        PI / (1u64 << self.depth) as f64
    }
}

// Max-heap order: larger upper first, then smaller branch, then the
// lexicographically smaller center.
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.upper
            .cmp(&other.upper)
            .then(self.depth.cmp(&other.depth))
            .then_with(|| {
                for i in 0..3 {
                    match other.center[i].total_cmp(&self.center[i]) {
                        Ordering::Equal => continue,
                        o => return o,
                    }
                }
                Ordering::Equal
            })
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

#[derive(Debug, Default, Clone)]
pub(crate) struct SearchTrace {
    /// `(global upper, best lower)` after every expansion.
    pub bounds: Vec<(usize, usize)>,
    /// Every evaluated branch with its bounds.
    pub branches: Vec<RotationBranch>,
}

struct SearchOutcome {
    best: Node,
    explored: usize,
    /// Distinct centers attaining `best.lower`, in discovery order.
    ties: Vec<Vec3>,
}

fn evaluate(center: Vec3, depth: u32, set: &LinePairSet, eps: f64) -> Node {
    let branch = RotationBranch { center: AxisAngle(center), half_side: PI / (1u64 << depth) as f64, upper: 0, lower: 0 };
    let (lower, upper) = branch_bounds(&branch, set, eps);
    Node { center, depth, lower, upper }
}

/// Best-first search. With `tie_budget > 0` the search keeps expanding
/// branches that could still match the optimum, collecting distinct
/// optimal rotations until the budget of extra expansions is spent.
fn search(
    set: &LinePairSet,
    cfg: &BnbConfig,
    tie_budget: usize,
    mut trace: Option<&mut SearchTrace>,
) -> Result<SearchOutcome, BnbError> {
    let eps = cfg.epsilon_min;
    let root = evaluate(Vec3::zeros(), 0, set, eps);
    let mut best = root;
    let mut heap = BinaryHeap::new();
    heap.push(root);
    let mut explored = 1usize;
    let mut ties: Vec<Vec3> = vec![root.center];
    let mut converged_at: Option<usize> = None;

    if let Some(t) = trace.as_deref_mut() {
        t.branches.push(RotationBranch { center: AxisAngle(root.center), half_side: PI, upper: root.upper, lower: root.lower });
    }

    while let Some(node) = heap.pop() {
        if node.upper < best.lower || (node.upper == best.lower && converged_at.is_none() && tie_budget == 0) {
            break;
        }
        if node.upper == best.lower && converged_at.is_none() {
            converged_at = Some(explored);
        }
        if let Some(start) = converged_at {
            if explored - start > tie_budget {
                break;
            }
            if node.lower == best.lower && node.upper == best.lower {
                push_tie(&mut ties, node.center);
                continue;
            }
        }
        let side = 2.0 * node.half_side();
        if side < cfg.min_branch_side {
            continue;
        }
        let child_half = node.half_side() / 2.0;
        let half_diag = 3f64.sqrt() * child_half;
        for corner in 0..8u32 {
            let offset = Vec3::new(
                if corner & 1 == 0 { -child_half } else { child_half },
                if corner & 2 == 0 { -child_half } else { child_half },
                if corner & 4 == 0 { -child_half } else { child_half },
            );
            let center = node.center + offset;
            // fully outside the pi-ball: duplicates rotations inside it
            if center.norm() - half_diag > PI {
                continue;
            }
            let child = evaluate(center, node.depth + 1, set, eps);
            explored += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.branches.push(RotationBranch {
                    center: AxisAngle(center),
                    half_side: child_half,
                    upper: child.upper,
                    lower: child.lower,
                });
            }
            if child.lower > best.lower {
                best = child;
                ties.clear();
                ties.push(child.center);
                converged_at = None;
            } else if child.lower == best.lower && child.lower > 0 {
                push_tie(&mut ties, child.center);
            }
            if child.upper > best.lower || (tie_budget > 0 && child.upper == best.lower) {
                heap.push(child);
                if heap.len() > cfg.max_queue {
                    return Err(BnbError::QueueOverflow(cfg.max_queue));
                }
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            let global_upper = heap.peek().map_or(best.lower, |n| n.upper.max(best.lower));
            t.bounds.push((global_upper, best.lower));
        }
    }
    Ok(SearchOutcome { best, explored, ties })
}

fn push_tie(ties: &mut Vec<Vec3>, center: Vec3) {
    const MIN_SEPARATION: f64 = 0.087; // ~5 degrees
    let rot = rodrigues(&AxisAngle(center));
    let distinct = ties.iter().all(|c| (rodrigues(&AxisAngle(*c)).transpose() * rot).angle() > MIN_SEPARATION);
    if distinct {
        ties.push(center);
    }
}

/// Least-squares polish of a rotation over fixed line correspondences,
/// minimizing `sum (n_j . R v_k)^2`. Returns `None` if it does not keep
/// the inlier count.
fn polish_rotation(rot: &Rotation, corr: &Correspondences, set: &LinePairSet, eps: f64) -> Option<Rotation> {
    if corr.len() < 3 {
        return None;
    }
    let start = inlier_count(rot, set, eps);
    let mut r = *rot;
    for _ in 0..10 {
        let mut h = nalgebra::Matrix3::<f64>::zeros();
        let mut g = Vec3::zeros();
        for &(j, k) in &corr.pairs {
            let rv = r * set.directions[k];
            let n = set.normals[j];
            let res = n.dot(&rv);
            let jac = rv.cross(&n);
            h += jac * jac.transpose();
            g += jac * res;
        }
        let step = h.try_inverse()? * (-g);
        r = rodrigues(&AxisAngle(step)) * r;
        if step.norm() < 1e-14 {
            break;
        }
    }
    (inlier_count(&r, set, eps) >= start).then_some(r)
}

fn finish(set: &LinePairSet, cfg: &BnbConfig, center: Vec3) -> (Rotation, Correspondences, usize) {
    let eps = cfg.epsilon_min;
    let mut rot = rodrigues(&AxisAngle(center));
    let corr = assign_correspondences(&rot, set, eps);
    if let Some(p) = polish_rotation(&rot, &corr, set, eps) {
        rot = p;
    }
    let corr = assign_correspondences(&rot, set, eps);
    let count = inlier_count(&rot, set, eps);
    (rot, corr, count)
}

/// Globally optimal rotation (to `min_branch_side` resolution) for the
/// inlier-cardinality objective, with the induced correspondences.
pub fn bnb_rotation_search(set: &LinePairSet, cfg: &BnbConfig) -> Result<RotationSearch, BnbError> {
    if set.normals.is_empty() || set.directions.is_empty() {
        return Err(BnbError::EmptySet);
    }
    let out = search(set, cfg, SEARCH_TIE_BUDGET, None)?;
    if out.best.lower == 0 {
        return Err(BnbError::NoInliers);
    }
    // ties on the count are broken by the polished perpendicularity residual
    let mut best: Option<(RotationSearch, f64)> = None;
    for c in std::iter::once(out.best.center).chain(out.ties) {
        let (rotation, correspondences, count) = finish(set, cfg, c);
        let res = perpendicularity_residual(&rotation, &correspondences, set);
        let better = best.as_ref().is_none_or(|(b, r)| count > b.count || (count == b.count && res < *r));
        if better {
            best = Some((RotationSearch { rotation, correspondences, count, explored: out.explored }, res));
        }
    }
    Ok(best.expect("at least the best node").0)
}

/// Extra expansions allowed after convergence for collecting tied optima.
pub const SEARCH_TIE_BUDGET: usize = 2_000_000;

/// Root-mean-square of `n_j . R v_k` over the correspondences.
pub fn perpendicularity_residual(rot: &Rotation, corr: &Correspondences, set: &LinePairSet) -> f64 {
    if corr.is_empty() {
        return f64::INFINITY;
    }
    let sq: f64 = corr.pairs.iter().map(|&(j, k)| set.normals[j].dot(&(rot * set.directions[k])).powi(2)).sum();
    (sq / corr.len() as f64).sqrt()
}

/// Distinct rotations (at least ~5 degrees apart) attaining the optimal
/// count; symmetric models have several.
pub fn bnb_rotation_candidates(
    set: &LinePairSet,
    cfg: &BnbConfig,
    tie_budget: usize,
) -> Result<Vec<RotationSearch>, BnbError> {
    if set.normals.is_empty() || set.directions.is_empty() {
        return Err(BnbError::EmptySet);
    }
    let out = search(set, cfg, tie_budget, None)?;
    if out.best.lower == 0 {
        return Err(BnbError::NoInliers);
    }
    let mut found = Vec::new();
    for c in std::iter::once(out.best.center).chain(out.ties) {
        let (rotation, correspondences, count) = finish(set, cfg, c);
        let dup = found.iter().any(|f: &RotationSearch| (f.rotation.transpose() * rotation).angle() < 0.087);
        if !dup {
            found.push(RotationSearch { rotation, correspondences, count, explored: out.explored });
        }
    }
    Ok(found)
}

#[cfg(test)]
pub(crate) fn bnb_traced(set: &LinePairSet, cfg: &BnbConfig) -> Result<(RotationSearch, SearchTrace), BnbError> {
    let mut trace = SearchTrace::default();
    let out = search(set, cfg, 0, Some(&mut trace))?;
    let (rotation, correspondences, count) = finish(set, cfg, out.best.center);
    Ok((RotationSearch { rotation, correspondences, count, explored: out.explored }, trace))
}

/// Linear least-squares translation from `n_j^T (R P_k + T) = 0`.
pub fn solve_translation(rot: &Rotation, corr: &Correspondences, set: &LinePairSet) -> Result<Vec3, BnbError> {
    let rows: Vec<(Vec3, f64)> =
        corr.pairs.iter().map(|&(j, k)| (set.normals[j], -set.normals[j].dot(&(rot * set.points[k])))).collect();
    solve_plane_constraints(&rows)
}

/// Least-squares `T` for rows `n^T T = b`.
fn solve_plane_constraints(rows: &[(Vec3, f64)]) -> Result<Vec3, BnbError> {
    if rows.len() < 3 {
        return Err(BnbError::TooFewCorrespondences(rows.len()));
    }
    let a = DMatrix::from_fn(rows.len(), 3, |r, c| rows[r].0[c]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond < 1e8) {
        return Err(BnbError::RankDeficient(cond));
    }
    let x = svd.solve(&b, 0.0).map_err(|_| BnbError::RankDeficient(cond))?;
    Ok(Vec3::new(x[0], x[1], x[2]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialPose {
    pub pose: Pose,
    pub correspondences: Correspondences,
    /// Optimal inlier count of the rotation search.
    pub achieved_count: usize,
    /// Mean distance (pixels) of projected model-line endpoints to their
    /// matched observed lines.
    pub mean_residual: f64,
    pub low_confidence: bool,
}

/// Rotation by branch-and-bound, then line correspondences and translation.
///
/// Parallel model lines cannot be told apart by the rotation search, and
/// symmetric line sets admit several optimal rotations, so every optimal
/// rotation is tried and the model line behind each observed line is
/// chosen by translation consistency.
pub fn initial_pose(
    observed: &[Line2D],
    model: &ObjectModel,
    k: &CameraIntrinsics,
    cfg: &BnbConfig,
) -> Result<InitialPose, BnbError> {
    if observed.len() < 3 {
        return Err(BnbError::TooFewCorrespondences(observed.len()));
    }
    let set = LinePairSet::from_observations(observed, model, k);
    let candidates = bnb_rotation_candidates(&set, cfg, SEARCH_TIE_BUDGET)?;
    let segs = model.line_segments();
    // angular tolerance for "model line lies in the interpretation plane"
    let plane_tol = (3.0 / k.fx.min(k.fy)).max(cfg.epsilon_min.sin());

    let mut best: Option<InitialPose> = None;
    let mut last_err = BnbError::TooFewCorrespondences(0);
    for cand in &candidates {
        match translation_for_rotation(&cand.rotation, &set, &segs, cfg.epsilon_min, plane_tol) {
            Ok((rot, t, corr)) => {
                let pose = Pose::new(rot, t);
                let mean_residual = mean_reprojection_residual(observed, model, k, &pose, &corr);
                let better = match &best {
                    None => true,
                    Some(b) => {
                        corr.len() > b.correspondences.len()
                            || (corr.len() == b.correspondences.len() && mean_residual < b.mean_residual)
                    }
                };
                if better {
                    best = Some(InitialPose {
                        pose,
                        correspondences: corr,
                        achieved_count: cand.count,
                        mean_residual,
                        low_confidence: !(mean_residual <= cfg.residual_gate),
                    });
                }
            }
            Err(e) => last_err = e,
        }
    }
    best.ok_or(last_err)
}

/// Minimal triples tried per rotation when hypothesizing a translation.
const MAX_TRIPLES: usize = 3000;

/// Model lines whose rotated direction is compatible with each observed
/// line.
fn direction_options(rot: &Rotation, set: &LinePairSet, eps: f64) -> Vec<Vec<usize>> {
    let thr = perpendicular_threshold(eps).unwrap_or(1.0);
    let rotated: Vec<Vec3> = set.directions.iter().map(|v| rot * v).collect();
    set.normals
        .iter()
        .map(|n| (0..rotated.len()).filter(|&k| n.dot(&rotated[k]).abs() <= thr).collect())
        .collect()
}

/// Larger of the two endpoint residuals `|n . X| / |X|` (camera frame), or
/// `None` if an endpoint is behind the camera or either residual exceeds
/// `tol`.
fn plane_fit(n: &Vec3, seg: &crate::geometry::Line3D, rot: &Rotation, t: &Vec3, tol: f64) -> Option<f64> {
    let (a, b) = (rot * seg.p1 + t, rot * seg.p2 + t);
    if a.z <= 0.0 || b.z <= 0.0 {
        return None;
    }
    let r = (n.dot(&a) / a.norm()).abs().max((n.dot(&b) / b.norm()).abs());
    (r <= tol).then_some(r)
}

/// Per observed line, the best-fitting compatible model line under `(rot, t)`.
fn associate(
    rot: &Rotation,
    t: &Vec3,
    set: &LinePairSet,
    segs: &[crate::geometry::Line3D],
    eps: f64,
    tol: f64,
) -> Correspondences {
    let options = direction_options(rot, set, eps);
    let pairs = options
        .iter()
        .enumerate()
        .filter_map(|(j, opts)| {
            opts.iter()
                .filter_map(|&k| plane_fit(&set.normals[j], &segs[k], rot, t, tol).map(|r| (k, r)))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .map(|(k, _)| (j, k))
        })
        .collect();
    Correspondences { pairs }
}

/// Gauss-Newton on the normalized plane residuals of both endpoints of every
/// paired model line, over rotation and translation together.
fn refine_on_planes(
    rot: &Rotation,
    t: &Vec3,
    corr: &Correspondences,
    set: &LinePairSet,
    segs: &[crate::geometry::Line3D],
) -> (Rotation, Vec3) {
    let cost = |r: &Rotation, t: &Vec3| -> f64 {
        let mut c = 0.0;
        for &(j, k) in &corr.pairs {
            for x in [segs[k].p1, segs[k].p2] {
                let y = r * x + t;
                c += (set.normals[j].dot(&y) / y.norm()).powi(2);
            }
        }
        c
    };
    let (mut r, mut t) = (*rot, *t);
    let mut c = cost(&r, &t);
    for _ in 0..20 {
        let mut h = nalgebra::Matrix6::<f64>::zeros();
        let mut g = nalgebra::Vector6::<f64>::zeros();
        for &(j, k) in &corr.pairs {
            let n = set.normals[j];
            for x in [segs[k].p1, segs[k].p2] {
                let rx = r * x;
                let y = rx + t;
                let ny = y.norm();
                let res = n.dot(&y) / ny;
                let dy = n / ny - y * (n.dot(&y) / (ny * ny * ny));
                // dY = dw x RX + dt
                let jw = rx.cross(&dy);
                let jac = nalgebra::Vector6::new(jw.x, jw.y, jw.z, dy.x, dy.y, dy.z);
                h += jac * jac.transpose();
                g += jac * res;
            }
        }
        for i in 0..6 {
            h[(i, i)] += 1e-9 * h[(i, i)].max(1e-12);
        }
        let Some(step) = h.cholesky().map(|ch| ch.solve(&(-g))) else { break };
        let r2 = rodrigues(&AxisAngle(Vec3::new(step[0], step[1], step[2]))) * r;
        let t2 = t + Vec3::new(step[3], step[4], step[5]);
        let c2 = cost(&r2, &t2);
        if !(c2 < c) {
            break;
        }
        (r, t, c) = (r2, t2, c2);
        if step.norm() < 1e-12 {
            break;
        }
    }
    (r, t)
}

/// Picks, per observed line, which of its direction-compatible model lines
/// to use by hypothesize-and-verify on minimal triples, then alternates
/// re-association with a joint rotation and translation refinement over
/// the consistent pairs.
fn translation_for_rotation(
    rot: &Rotation,
    set: &LinePairSet,
    segs: &[crate::geometry::Line3D],
    eps: f64,
    plane_tol: f64,
) -> Result<(Rotation, Vec3, Correspondences), BnbError> {
    let options = direction_options(rot, set, eps);
    let mut inliers: Vec<usize> = (0..options.len()).filter(|&j| !options[j].is_empty()).collect();
    if inliers.len() < 3 {
        return Err(BnbError::TooFewCorrespondences(inliers.len()));
    }
    // a fixed shuffle keeps one bad observation from sitting in every
    // early triple
    inliers.shuffle(&mut ChaCha8Rng::seed_from_u64(0));

    let score = |t: &Vec3| -> (usize, f64) {
        let mut count = 0;
        let mut total = 0.0;
        for &j in &inliers {
            let fits = options[j].iter().filter_map(|&k| plane_fit(&set.normals[j], &segs[k], rot, t, plane_tol));
            if let Some(r) = fits.min_by(f64::total_cmp) {
                count += 1;
                total += r;
            }
        }
        (count, total)
    };

    let mut best: Option<(usize, f64, Vec3)> = None;
    let mut tried = 0usize;
    'outer: for a in 0..inliers.len() {
        for b in a + 1..inliers.len() {
            for c in b + 1..inliers.len() {
                let (ja, jb, jc) = (inliers[a], inliers[b], inliers[c]);
                let (na, nb, nc) = (set.normals[ja], set.normals[jb], set.normals[jc]);
                if na.cross(&nb).dot(&nc).abs() < 0.05 {
                    continue;
                }
                tried += 1;
                for &ka in &options[ja] {
                    for &kb in &options[jb] {
                        for &kc in &options[jc] {
                            let rows = [
                                (na, -na.dot(&(rot * set.points[ka]))),
                                (nb, -nb.dot(&(rot * set.points[kb]))),
                                (nc, -nc.dot(&(rot * set.points[kc]))),
                            ];
                            let Ok(t) = solve_plane_constraints(&rows) else { continue };
                            let (count, total) = score(&t);
                            let better = match &best {
                                None => true,
                                Some((bc, bt, _)) => count > *bc || (count == *bc && total < *bt),
                            };
                            if better {
                                best = Some((count, total, t));
                            }
                        }
                    }
                }
                if tried >= MAX_TRIPLES || best.as_ref().is_some_and(|b| b.0 == inliers.len()) {
                    break 'outer;
                }
            }
        }
    }
    let (_, _, mut t) = best.ok_or(BnbError::TooFewCorrespondences(0))?;

    for _ in 0..3 {
        t = solve_translation(rot, &associate(rot, &t, set, segs, eps, plane_tol), set)?;
    }
    let mut r = *rot;
    let mut corr = associate(&r, &t, set, segs, eps, plane_tol);
    for _ in 0..5 {
        if corr.len() < 3 {
            break;
        }
        let (r2, t2) = refine_on_planes(&r, &t, &corr, set, segs);
        let corr2 = associate(&r2, &t2, set, segs, eps, plane_tol);
        if corr2.len() < corr.len() || corr2 == corr && (r2.transpose() * r).angle() < 1e-12 {
            break;
        }
        (r, t, corr) = (r2, t2, corr2);
    }
    Ok((r, t, corr))
}

pub fn mean_reprojection_residual(
    observed: &[Line2D],
    model: &ObjectModel,
    k: &CameraIntrinsics,
    pose: &Pose,
    corr: &Correspondences,
) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for &(j, m) in &corr.pairs {
        match project_line(k, pose, &model.line(m)) {
            Ok(proj) => {
                for p in [proj.p1, proj.p2] {
                    total += line_distance(&p, &observed[j].coeffs).map_or(f64::INFINITY, f64::abs);
                    n += 1;
                }
            }
            Err(_) => return f64::INFINITY,
        }
    }
    if n == 0 {
        f64::INFINITY
    } else {
        total / n as f64
    }
}

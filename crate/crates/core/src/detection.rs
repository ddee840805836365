//! Line detection from a single event cluster.
//!
//! Events become points `(x, y, s)` with `s = time_scale (t - t_start)`.
//! A straight edge moving over a short window sweeps a nearly planar sheet
//! in that volume, so planes are extracted one after another by local
//! three-point sampling, refined by total least squares, and cut with the
//! `s = 0` and `s = s_end` planes to give the edge at the window start and
//! end.

use std::io::{Read, Write};

use nalgebra::SymmetricEigen;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::EventCluster;
use crate::geometry::{Line2D, Mat3, Vec2, Vec3};

#[derive(Error, Debug)]
pub enum DetectionError {
    #[error("need at least {need} events, got {got}")]
    TooFewEvents { got: usize, need: usize },
    #[error("plane is parallel to the image plane; it has no line trace")]
    DegeneratePlane,
    #[error("invalid detection config: {0}")]
    InvalidConfig(String),
    #[error("lines json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    /// Pixels per second along the time axis.
    pub time_scale: f64,
    /// Point-to-plane distance for inliers, pixels.
    pub plane_inlier_tol: f64,
    pub min_plane_events: usize,
    pub max_planes: usize,
    /// Radius (pixels) around the first sample in which the other two are
    /// drawn.
    pub sample_radius: f64,
    /// Fastest image-plane edge speed accepted, pixels per second.
    pub max_edge_speed: f64,
    /// Minimum supporting events per pixel of detected segment length.
    pub min_line_density: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            time_scale: 1000.0,
            plane_inlier_tol: 2.0,
            min_plane_events: 20,
            max_planes: 40,
            sample_radius: 20.0,
            max_edge_speed: 3000.0,
            min_line_density: 0.05,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        let positive = [
            ("time_scale", self.time_scale),
            ("plane_inlier_tol", self.plane_inlier_tol),
            ("sample_radius", self.sample_radius),
            ("max_edge_speed", self.max_edge_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DetectionError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.min_plane_events < 3 {
            return Err(DetectionError::InvalidConfig("min_plane_events must be at least 3".into()));
        }
        if self.max_planes == 0 {
            return Err(DetectionError::InvalidConfig("max_planes must be positive".into()));
        }
        if !(self.min_line_density >= 0.0) {
            return Err(DetectionError::InvalidConfig("min_line_density must be non-negative".into()));
        }
        Ok(())
    }

    /// Smallest accepted `|(nx, ny)|` of a unit plane normal.
    fn min_normal_xy(&self) -> f64 {
        let r = self.max_edge_speed / self.time_scale;
        1.0 / (1.0 + r * r).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimePoint {
    pub x: f64,
    pub y: f64,
    pub s: f64,
}

impl SpaceTimePoint {
    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.s)
    }
}

/// Plane `normal . (x, y, s) = offset` with the indices of its inliers in
/// the cloud it was extracted from.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedPlane {
    pub normal: Vec3,
    pub offset: f64,
    pub inliers: Vec<usize>,
}

impl FittedPlane {
    pub fn distance(&self, p: &SpaceTimePoint) -> f64 {
        (self.normal.dot(&p.vector()) - self.offset).abs()
    }
}

/// An end-of-window line with the number of events supporting it.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedLine {
    pub line: Line2D,
    /// The same edge at the start of the window.
    pub start_line: Line2D,
    pub support: usize,
}

pub fn to_spacetime_cloud(cluster: &EventCluster, cfg: &DetectionConfig) -> Vec<SpaceTimePoint> {
    cluster
        .events
        .iter()
        .map(|e| SpaceTimePoint { x: e.x, y: e.y, s: cfg.time_scale * (e.t - cluster.t_start) })
        .collect()
}

/// Total-least-squares plane through the given points.
fn fit_plane(cloud: &[SpaceTimePoint], idx: &[usize]) -> Option<(Vec3, f64)> {
    if idx.len() < 3 {
        return None;
    }
    let centroid: Vec3 = idx.iter().map(|&i| cloud[i].vector()).sum::<Vec3>() / idx.len() as f64;
    let mut cov = Mat3::zeros();
    for &i in idx {
        let d = cloud[i].vector() - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let (imin, _) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    let n = canonical_sign(eig.eigenvectors.column(imin).into_owned().normalize());
    Some((n, n.dot(&centroid)))
}

fn canonical_sign(n: Vec3) -> Vec3 {
    let key = if n.x.abs() > 1e-12 { n.x } else if n.y.abs() > 1e-12 { n.y } else { n.z };
    if key < 0.0 {
        -n
    } else {
        n
    }
}

fn plane_through(a: &SpaceTimePoint, b: &SpaceTimePoint, c: &SpaceTimePoint) -> Option<(Vec3, f64)> {
    let n = (b.vector() - a.vector()).cross(&(c.vector() - a.vector()));
    let norm = n.norm();
    if norm < 1e-9 {
        return None;
    }
    let n = canonical_sign(n / norm);
    Some((n, n.dot(&a.vector())))
}

/// Unit direction of the plane's trace in the image and the 1-D coordinate
/// of a point along it.
fn trace_axis(normal: &Vec3) -> Vec2 {
    Vec2::new(-normal.y, normal.x).normalize()
}

/// Inliers of `(n, d)` among `candidates`, restricted to the most populated
/// run along the trace direction with no gap wider than `max_gap`.
fn contiguous_inliers(cloud: &[SpaceTimePoint], candidates: &[usize], n: &Vec3, d: f64, tol: f64) -> Vec<usize> {
    let u = trace_axis(n);
    let mut hits: Vec<(f64, usize)> = candidates
        .iter()
        .filter(|&&i| (n.dot(&cloud[i].vector()) - d).abs() <= tol)
        .map(|&i| (u.dot(&Vec2::new(cloud[i].x, cloud[i].y)), i))
        .collect();
    if hits.len() < 2 {
        return hits.into_iter().map(|h| h.1).collect();
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let extent = hits[hits.len() - 1].0 - hits[0].0;
    let max_gap = (6.0 * extent / hits.len() as f64).max(30.0);
    let mut best = (0usize, 0usize);
    let mut start = 0usize;
    for i in 1..=hits.len() {
        if i == hits.len() || hits[i].0 - hits[i - 1].0 > max_gap {
            if i - start > best.1 - best.0 {
                best = (start, i);
            }
            start = i;
        }
    }
    let mut idx: Vec<usize> = hits[best.0..best.1].iter().map(|h| h.1).collect();
    idx.sort_unstable();
    idx
}

/// Total least squares alternated with inlier reselection until the inlier
/// set stops changing.
fn refine(cloud: &[SpaceTimePoint], candidates: &[usize], seed_plane: (Vec3, f64), tol: f64) -> Option<FittedPlane> {
    let mut inliers = contiguous_inliers(cloud, candidates, &seed_plane.0, seed_plane.1, tol);
    for _ in 0..50 {
        let (n, d) = fit_plane(cloud, &inliers)?;
        let next = contiguous_inliers(cloud, candidates, &n, d, tol);
        if next == inliers {
            return Some(FittedPlane { normal: n, offset: d, inliers });
        }
        inliers = next;
    }
    let (n, d) = fit_plane(cloud, &inliers)?;
    Some(FittedPlane { normal: n, offset: d, inliers })
}

/// Base hypothesis count: `ln(0.01) / ln(1 - 0.5^3)`.
const RANSAC_ITERATIONS: usize = 35;

/// Sequential plane extraction. Each round draws local three-point
/// hypotheses, keeps the one with the most inliers, refines it and removes
/// its inliers from the pool.
pub fn segment_planes(
    cloud: &[SpaceTimePoint],
    cfg: &DetectionConfig,
    seed: u64,
) -> Result<Vec<FittedPlane>, DetectionError> {
    cfg.validate()?;
    if cloud.len() < cfg.min_plane_events {
        return Err(DetectionError::TooFewEvents { got: cloud.len(), need: cfg.min_plane_events });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining: Vec<usize> = (0..cloud.len()).collect();
    let mut planes = Vec::new();
    let min_nxy = cfg.min_normal_xy();
    let r2 = cfg.sample_radius * cfg.sample_radius;
    let mut failures = 0;

    while planes.len() < cfg.max_planes && remaining.len() >= cfg.min_plane_events && failures < 3 {
        let mut best: Option<(usize, (Vec3, f64))> = None;
        for _ in 0..RANSAC_ITERATIONS {
            let a = remaining[rng.random_range(0..remaining.len())];
            let pa = cloud[a].vector();
            let near: Vec<usize> =
                remaining.iter().copied().filter(|&i| i != a && (cloud[i].vector() - pa).norm_squared() <= r2).collect();
            if near.len() < 2 {
                continue;
            }
            let pick: Vec<usize> = near.choose_multiple(&mut rng, 2).copied().collect();
            let Some((n, d)) = plane_through(&cloud[a], &cloud[pick[0]], &cloud[pick[1]]) else { continue };
            if n.xy().norm() < min_nxy {
                continue;
            }
            let count =
                remaining.iter().filter(|&&i| (n.dot(&cloud[i].vector()) - d).abs() <= cfg.plane_inlier_tol).count();
            if best.as_ref().is_none_or(|b| count > b.0) {
                best = Some((count, (n, d)));
            }
        }
        let Some((count, hyp)) = best else {
            failures += 1;
            continue;
        };
        if count < cfg.min_plane_events {
            failures += 1;
            continue;
        }
        let plane = match refine(cloud, &remaining, hyp, cfg.plane_inlier_tol) {
            Some(p) if p.inliers.len() >= cfg.min_plane_events && p.normal.xy().norm() >= min_nxy => p,
            _ => {
                failures += 1;
                continue;
            }
        };
        failures = 0;
        let taken: std::collections::HashSet<usize> = plane.inliers.iter().copied().collect();
        remaining.retain(|i| !taken.contains(i));
        planes.push(plane);
    }
    Ok(planes)
}

/// Traces of the plane at the window start and end, clipped to the extent
/// of the inliers' coordinates along the trace.
pub fn plane_to_lines(
    plane: &FittedPlane,
    cluster: &EventCluster,
    cfg: &DetectionConfig,
) -> Result<(Line2D, Line2D), DetectionError> {
    let cloud = to_spacetime_cloud(cluster, cfg);
    plane_to_lines_in(plane, &cloud, cfg.time_scale * cluster.duration())
}

fn plane_to_lines_in(plane: &FittedPlane, cloud: &[SpaceTimePoint], s_end: f64) -> Result<(Line2D, Line2D), DetectionError> {
    let n = plane.normal;
    let nxy = n.xy();
    if nxy.norm() < 1e-6 {
        return Err(DetectionError::DegeneratePlane);
    }
    let u = trace_axis(&n);
    let mut coords: Vec<f64> = plane.inliers.iter().map(|&i| u.dot(&Vec2::new(cloud[i].x, cloud[i].y))).collect();
    if coords.len() < 2 {
        return Err(DetectionError::TooFewEvents { got: coords.len(), need: 2 });
    }
    coords.sort_by(f64::total_cmp);
    // inliers are already one gap-free run, so its extremes are usable;
    // widen by one mean spacing for the unsampled ends
    let (lo, hi) = (coords[0], coords[coords.len() - 1]);
    let pad = (hi - lo) / (coords.len() - 1) as f64;
    let (c0, c1) = (lo - pad, hi + pad);
    let trace = |s: f64| -> Result<Line2D, DetectionError> {
        // n_x x + n_y y = offset - n_s s
        let foot = nxy * (plane.offset - n.z * s) / nxy.norm_squared();
        Line2D::from_points(foot + u * c0, foot + u * c1).map_err(|_| DetectionError::DegeneratePlane)
    };
    Ok((trace(0.0)?, trace(s_end)?))
}

fn segment_overlap(a: &Line2D, b: &Line2D) -> bool {
    let u = a.direction();
    let (a0, a1) = (u.dot(&a.p1), u.dot(&a.p2));
    let (b0, b1) = (u.dot(&b.p1), u.dot(&b.p2));
    a0.min(a1) <= b0.max(b1) && b0.min(b1) <= a0.max(a1)
}

/// Near-identical segments: under 2 degrees apart, each midpoint within
/// 3 px of the other line, and overlapping along the line.
pub fn is_duplicate(a: &Line2D, b: &Line2D) -> bool {
    let cos = a.direction().dot(&b.direction()).abs().min(1.0);
    if cos.acos() >= 2f64.to_radians() {
        return false;
    }
    let da = crate::geometry::event_line_distance(&a.midpoint(), b).map_or(f64::INFINITY, f64::abs);
    let db = crate::geometry::event_line_distance(&b.midpoint(), a).map_or(f64::INFINITY, f64::abs);
    da < 3.0 && db < 3.0 && segment_overlap(a, b)
}

/// End-of-window lines of a cluster, strongest support first.
pub fn detect_lines(cluster: &EventCluster, cfg: &DetectionConfig, seed: u64) -> Result<Vec<DetectedLine>, DetectionError> {
    if cluster.events.len() < cfg.min_plane_events {
        return Err(DetectionError::TooFewEvents { got: cluster.events.len(), need: cfg.min_plane_events });
    }
    let cloud = to_spacetime_cloud(cluster, cfg);
    let planes = segment_planes(&cloud, cfg, seed)?;
    let s_end = cfg.time_scale * cluster.duration();
    let mut found: Vec<DetectedLine> = Vec::new();
    for (pi, p) in planes.iter().enumerate() {
        // events where two edges meet fit both planes and went to whichever
        // was extracted first; for the extent, give each to the closer plane
        let u = trace_axis(&p.normal);
        let coord = |i: usize| u.dot(&Vec2::new(cloud[i].x, cloud[i].y));
        let (lo, hi) = p.inliers.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let c = coord(i);
            (lo.min(c), hi.max(c))
        });
        let margin = 4.0 * cfg.plane_inlier_tol;
        let own: Vec<usize> = (0..cloud.len())
            .filter(|&i| {
                let d = p.distance(&cloud[i]);
                let c = coord(i);
                d <= cfg.plane_inlier_tol
                    && c >= lo - margin
                    && c <= hi + margin
                    && planes.iter().enumerate().all(|(qi, q)| qi == pi || q.distance(&cloud[i]) >= d)
            })
            .collect();
        let trimmed = FittedPlane { inliers: own, ..p.clone() };
        let Ok((start_line, line)) = plane_to_lines_in(&trimmed, &cloud, s_end) else { continue };
        let support = p.inliers.len();
        if support < cfg.min_plane_events || (support as f64) < cfg.min_line_density * line.length() {
            continue;
        }
        found.push(DetectedLine { line, start_line, support });
    }
    found.sort_by_key(|d| std::cmp::Reverse(d.support));
    let mut kept: Vec<DetectedLine> = Vec::new();
    for cand in found {
        if !kept.iter().any(|k| is_duplicate(&k.line, &cand.line)) {
            kept.push(cand);
        }
    }
    snap_corners(&mut kept);
    Ok(kept)
}

/// Endpoints within this many pixels of the crossing of two detected lines
/// are moved onto it.
const CORNER_SNAP: f64 = 4.0;

/// Where two object edges meet, the events near the shared vertex fit
/// either plane and blur both endpoints; the crossing of the two fitted
/// lines is a better estimate of the vertex.
fn snap_corners(lines: &mut [DetectedLine]) {
    let n = lines.len();
    let mut moves: Vec<(usize, bool, Vec2)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&lines[i].line, &lines[j].line);
            if a.direction().dot(&b.direction()).abs() > 10f64.to_radians().cos() {
                continue;
            }
            let x = a.coeffs.cross(&b.coeffs);
            if x.z.abs() < 1e-12 {
                continue;
            }
            let corner = Vec2::new(x.x / x.z, x.y / x.z);
            let near = |l: &Line2D| {
                let (d1, d2) = ((l.p1 - corner).norm(), (l.p2 - corner).norm());
                if d1.min(d2) > CORNER_SNAP {
                    None
                } else {
                    Some(d1 <= d2)
                }
            };
            if let (Some(ea), Some(eb)) = (near(a), near(b)) {
                moves.push((i, ea, corner));
                moves.push((j, eb, corner));
            }
        }
    }
    for (i, first, corner) in moves {
        let l = &lines[i].line;
        let (p1, p2) = if first { (corner, l.p2) } else { (l.p1, corner) };
        if let Ok(snapped) = Line2D::from_points(p1, p2) {
            lines[i].line = snapped;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct LineRecord {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    support: usize,
}

/// Writes `[{x1, y1, x2, y2, support}, ...]`.
pub fn write_lines_json<W: Write>(writer: W, lines: &[DetectedLine]) -> Result<(), DetectionError> {
    let records: Vec<LineRecord> = lines
        .iter()
        .map(|l| LineRecord { x1: l.line.p1.x, y1: l.line.p1.y, x2: l.line.p2.x, y2: l.line.p2.y, support: l.support })
        .collect();
    serde_json::to_writer_pretty(writer, &records)?;
    Ok(())
}

/// Reads the format of [`write_lines_json`]; the start-of-window line is
/// not stored and is set equal to the end line.
pub fn read_lines_json<R: Read>(reader: R) -> Result<Vec<DetectedLine>, DetectionError> {
    let records: Vec<LineRecord> = serde_json::from_reader(reader)?;
    records
        .into_iter()
        .map(|r| {
            let line = Line2D::from_points(Vec2::new(r.x1, r.y1), Vec2::new(r.x2, r.y2))
                .map_err(|_| DetectionError::InvalidConfig(format!("degenerate line ({}, {})", r.x1, r.y1)))?;
            Ok(DetectedLine { line, start_line: line, support: r.support })
        })
        .collect()
}

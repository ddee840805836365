//! Which model lines can produce events under a given pose.

use crate::geometry::{project_line, CameraIntrinsics, Line2D, Line3D, Pose, Vec3};
use crate::model::ObjectModel;

/// Ray-face intersection tolerance, meters.
const OCCLUSION_TOL: f64 = 1e-6;
/// Interior samples tested on a line with one hidden endpoint.
const PARTIAL_SAMPLES: usize = 16;
/// Consecutive visible samples needed to keep a partially hidden line.
const MIN_VISIBLE_RUN: usize = 4;

/// A model line that passed the visibility test, with its projection and
/// the (possibly clipped) model-frame segment that is actually seen.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleLine {
    pub index: usize,
    pub line: Line2D,
    pub segment: Line3D,
}

/// Möller-Trumbore; returns the ray parameter of the hit, if any.
fn ray_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-12 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    Some(e2.dot(&q) * inv)
}

struct Scene<'a> {
    k: &'a CameraIntrinsics,
    pose: &'a Pose,
    /// Camera center in the model frame.
    center: Vec3,
    triangles: Vec<[Vec3; 3]>,
}

impl<'a> Scene<'a> {
    fn new(model: &ObjectModel, pose: &'a Pose, k: &'a CameraIntrinsics) -> Self {
        let center = pose.rotation.transpose() * (-pose.translation);
        Self { k, pose, center, triangles: model.face_triangles() }
    }

    /// Positive depth, inside the image and not hidden by a face.
    fn point_visible(&self, p: &Vec3) -> bool {
        let x = self.pose.transform(p);
        let Ok(px) = self.k.project(&x) else { return false };
        if !self.k.contains(&px) {
            return false;
        }
        let ray = p - self.center;
        let dist = ray.norm();
        let dir = ray / dist;
        !self.triangles.iter().any(|tri| {
            ray_triangle(&self.center, &dir, tri).is_some_and(|t| t > OCCLUSION_TOL && t < dist - OCCLUSION_TOL)
        })
    }
}

/// Visible model lines. A line is kept whole when both endpoints are
/// visible; with exactly one visible endpoint, 16 interior samples are
/// tested and the longest run of consecutive visible samples (at least 4)
/// becomes the clipped segment.
pub fn visible_lines(model: &ObjectModel, pose: &Pose, k: &CameraIntrinsics) -> Vec<VisibleLine> {
    let scene = Scene::new(model, pose, k);
    let mut out = Vec::new();
    for (index, seg) in model.line_segments().into_iter().enumerate() {
        let v1 = scene.point_visible(&seg.p1);
        let v2 = scene.point_visible(&seg.p2);
        let segment = match (v1, v2) {
            (true, true) => Some(seg),
            (true, false) | (false, true) => clip_partial(&scene, &seg, v1, v2),
            (false, false) => None,
        };
        if let Some(segment) = segment {
            if let Ok(line) = project_line(k, pose, &segment) {
                out.push(VisibleLine { index, line, segment });
            }
        }
    }
    out
}

fn clip_partial(scene: &Scene, seg: &Line3D, v1: bool, v2: bool) -> Option<Line3D> {
    let n = PARTIAL_SAMPLES + 1;
    // samples 0 and n are the endpoints
    let vis: Vec<bool> = (0..=n)
        .map(|i| match i {
            0 => v1,
            i if i == n => v2,
            i => scene.point_visible(&seg.point_at(i as f64 / n as f64)),
        })
        .collect();
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i <= n {
        if vis[i] {
            let start = i;
            while i < n && vis[i + 1] {
                i += 1;
            }
            let interior = (start..=i).filter(|&j| j != 0 && j != n).count();
            if interior >= MIN_VISIBLE_RUN && best.is_none_or(|(a, b)| i - start > b - a) {
                best = Some((start, i));
            }
        }
        i += 1;
    }
    let (a, b) = best?;
    Line3D::new(seg.point_at(a as f64 / n as f64), seg.point_at(b as f64 / n as f64)).ok()
}

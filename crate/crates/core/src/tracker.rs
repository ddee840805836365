//! Window-to-window pose tracking with a constant-velocity prior.

use thiserror::Error;

use crate::bnb::{initial_pose, InitialPose};
use crate::config::RunConfig;
use crate::detection::detect_lines;
use crate::events::{cluster_events, Event, EventCluster, WindowError};
use crate::geometry::{CameraIntrinsics, Line2D, Pose};
use crate::model::ObjectModel;
use crate::motion::{estimate_twist, predict_pose, Twist};
use crate::optimize::optimize_pose;
use crate::robust::EstimatorKind;
use crate::visibility::visible_lines;

/// Fewer visible model lines than this and the window coasts.
pub const MIN_VISIBLE_LINES: usize = 3;

#[derive(Error, Debug)]
pub enum TrackError {
    #[error("empty event stream")]
    EmptyStream,
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error("initialization failed: {0}")]
    InitializationFailed(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowLog {
    pub t_center: f64,
    pub n_events: usize,
    pub n_assigned: usize,
    pub n_rejected: usize,
    pub iterations: usize,
    /// NaN for coasting windows.
    pub cost: f64,
    pub coasting: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub poses: Vec<(f64, Pose)>,
    pub log: Vec<WindowLog>,
}

impl Track {
    pub fn coasting_windows(&self) -> usize {
        self.log.iter().filter(|l| l.coasting).count()
    }

    pub fn write_log_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_center,n_events,n_assigned,n_rejected,iterations,cost,coasting")?;
        for l in &self.log {
            writeln!(
                w,
                "{:.6},{},{},{},{},{},{}",
                l.t_center, l.n_events, l.n_assigned, l.n_rejected, l.iterations, l.cost, l.coasting as u8
            )?;
        }
        Ok(())
    }
}

/// Pose from the first cluster alone: line detection, then rotation search
/// and translation.
pub fn initialize(cluster: &EventCluster, model: &ObjectModel, k: &CameraIntrinsics, cfg: &RunConfig) -> Result<InitialPose, TrackError> {
    let fail = |e: &dyn std::fmt::Display| TrackError::InitializationFailed(e.to_string());
    let lines = detect_lines(cluster, &cfg.detection, cfg.seed).map_err(|e| fail(&e))?;
    let observed: Vec<Line2D> = lines.iter().map(|d| d.line).collect();
    initial_pose(&observed, model, k, &cfg.bnb).map_err(|e| fail(&e))
}

/// One pose per cluster. Without `start`, the first cluster is used for
/// initialization.
pub fn track(
    stream: &[Event],
    model: &ObjectModel,
    k: &CameraIntrinsics,
    kind: EstimatorKind,
    cfg: &RunConfig,
    start: Option<Pose>,
) -> Result<Track, TrackError> {
    if stream.is_empty() {
        return Err(TrackError::EmptyStream);
    }
    let clusters = cluster_events(stream, &cfg.window)?;
    let first = clusters.first().ok_or(TrackError::EmptyStream)?;
    let start = match start {
        Some(p) => p,
        None => initialize(first, model, k, cfg)?.pose,
    };

    let mut poses: Vec<(f64, Pose)> = Vec::with_capacity(clusters.len());
    let mut log = Vec::with_capacity(clusters.len());
    for cluster in &clusters {
        let predicted = match poses.len() {
            0 => start,
            n => {
                let (t1, p1) = poses[n - 1];
                let twist = if n >= 2 {
                    let (t0, p0) = poses[n - 2];
                    estimate_twist(&p0, &p1, t1 - t0)
                } else {
                    Twist::zero()
                };
                predict_pose(&p1, &twist, cluster.t_center - t1)
            }
        };
        let mut entry = WindowLog {
            t_center: cluster.t_center,
            n_events: cluster.len(),
            n_assigned: 0,
            n_rejected: 0,
            iterations: 0,
            cost: f64::NAN,
            coasting: true,
        };
        let mut pose = predicted;
        if visible_lines(model, &predicted, k).len() >= MIN_VISIBLE_LINES {
            if let Ok(r) = optimize_pose(cluster, model, k, &predicted, kind, &cfg.matching, &cfg.opt) {
                pose = r.refinement.pose;
                entry.n_assigned = r.matches.assignments.len();
                entry.n_rejected = r.matches.rejected.len();
                entry.iterations = r.refinement.iterations;
                entry.cost = r.refinement.cost;
                entry.coasting = false;
            }
        }
        poses.push((cluster.t_center, pose));
        log.push(entry);
    }
    Ok(Track { poses, log })
}

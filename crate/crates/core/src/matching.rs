//! Event-to-line assignment.
//!
//! An event is a candidate for a visible line when it lies within `d_t` of
//! the line and within `d_m = d_m_factor * length` of its midpoint. Among the
//! candidate lines, an event that is closer than `d_a` to two of them is
//! rejected as ambiguous; otherwise it goes to the nearest one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::EventCluster;
use crate::geometry::event_line_distance;
use crate::visibility::VisibleLine;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum MatchError {
    #[error("no visible model lines")]
    NoVisibleLines,
    #[error("invalid match config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    /// Line-distance gate, pixels.
    pub d_t: f64,
    /// Midpoint gate as a fraction of the projected line length.
    pub d_m_factor: f64,
    /// Ambiguity gate, pixels.
    pub d_a: f64,
    /// Lines with fewer assigned events are left out of the optimization.
    pub min_line_events: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { d_t: 8.0, d_m_factor: 0.5, d_a: 4.0, min_line_events: 10 }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        if !(self.d_t > 0.0 && self.d_m_factor > 0.0 && self.d_a > 0.0) {
            return Err(MatchError::InvalidConfig("d_t, d_m_factor and d_a must be positive".into()));
        }
        if self.d_a > self.d_t {
            return Err(MatchError::InvalidConfig("d_a must not exceed d_t".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    /// Index into the cluster's events.
    pub event: usize,
    /// Model line index.
    pub line: usize,
    /// Signed event-line distance, pixels.
    pub distance: f64,
}

/// Every event of the cluster ends up in exactly one of the three lists.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSet {
    pub assignments: Vec<Assignment>,
    pub rejected: Vec<usize>,
    pub unmatched: Vec<usize>,
}

impl MatchSet {
    pub fn total(&self) -> usize {
        self.assignments.len() + self.rejected.len() + self.unmatched.len()
    }

    /// Moves the events of lines with fewer than `min` assignments to
    /// `unmatched`.
    pub fn drop_sparse_lines(&mut self, min: usize) {
        let mut counts = std::collections::HashMap::new();
        for a in &self.assignments {
            *counts.entry(a.line).or_insert(0usize) += 1;
        }
        let (keep, drop): (Vec<Assignment>, Vec<Assignment>) =
            self.assignments.iter().partition(|a| counts[&a.line] >= min);
        if drop.is_empty() {
            return;
        }
        self.assignments = keep;
        self.unmatched.extend(drop.iter().map(|a| a.event));
        self.unmatched.sort_unstable();
    }

    /// Number of distinct model lines with at least one assignment.
    pub fn active_lines(&self) -> usize {
        let mut lines: Vec<usize> = self.assignments.iter().map(|a| a.line).collect();
        lines.sort_unstable();
        lines.dedup();
        lines.len()
    }
}

pub fn match_events(cluster: &EventCluster, visible: &[VisibleLine], cfg: &MatchConfig) -> Result<MatchSet, MatchError> {
    if visible.is_empty() {
        return Err(MatchError::NoVisibleLines);
    }
    let gates: Vec<(f64, nalgebra::Vector2<f64>)> =
        visible.iter().map(|v| (cfg.d_m_factor * v.line.length(), v.line.midpoint())).collect();
    let mut set = MatchSet::default();
    for (i, e) in cluster.events.iter().enumerate() {
        let p = e.position();
        let mut best: Option<(f64, f64, usize)> = None;
        let mut second = f64::INFINITY;
        for (v, (d_m, mid)) in visible.iter().zip(&gates) {
            if (p - mid).norm() >= *d_m {
                continue;
            }
            let Ok(d) = event_line_distance(&p, &v.line) else { continue };
            let ad = d.abs();
            match best {
                Some((b, _, _)) if ad >= b => second = second.min(ad),
                _ => {
                    if let Some((b, _, _)) = best {
                        second = b;
                    }
                    best = Some((ad, d, v.index));
                }
            }
        }
        match best {
            Some((ad, _, _)) if ad < cfg.d_a && second < cfg.d_a => set.rejected.push(i),
            Some((ad, d, line)) if ad < cfg.d_t => set.assignments.push(Assignment { event: i, line, distance: d }),
            _ => set.unmatched.push(i),
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Event;
    use crate::geometry::{Line2D, Line3D, Vec2, Vec3};
    use proptest::prelude::*;

    fn vis(index: usize, a: (f64, f64), b: (f64, f64)) -> VisibleLine {
        let line = Line2D::from_points(Vec2::new(a.0, a.1), Vec2::new(b.0, b.1)).unwrap();
        // the 3D segment is irrelevant to matching
        let segment = Line3D::new(Vec3::zeros(), Vec3::x()).unwrap();
        VisibleLine { index, line, segment }
    }

    fn cluster(points: &[(f64, f64)]) -> EventCluster {
        EventCluster {
            events: points.iter().enumerate().map(|(i, p)| Event::new(i as f64 * 1e-4, p.0, p.1, 1)).collect(),
            t_center: 0.0,
            t_start: 0.0,
            t_end: 0.01,
            undersized: false,
        }
    }

    #[test]
    fn far_from_midpoint_is_unmatched() {
        let lines = [vis(0, (0.0, 100.0), (400.0, 100.0))];
        let set = match_events(&cluster(&[(450.0, 101.0), (200.0, 101.0)]), &lines, &MatchConfig::default()).unwrap();
        assert_eq!(set.unmatched, vec![0]);
        assert_eq!(set.assignments.len(), 1);
        assert_eq!(set.assignments[0].event, 1);
        assert!((set.assignments[0].distance.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equidistant_event_is_rejected() {
        let lines = [vis(3, (0.0, 100.0), (200.0, 100.0)), vis(7, (0.0, 104.0), (200.0, 104.0))];
        let set = match_events(&cluster(&[(100.0, 102.0)]), &lines, &MatchConfig::default()).unwrap();
        assert_eq!(set.rejected, vec![0]);
    }

    #[test]
    fn nearest_line_wins_outside_ambiguity() {
        let lines = [vis(3, (0.0, 100.0), (200.0, 100.0)), vis(7, (0.0, 110.0), (200.0, 110.0))];
        let set = match_events(&cluster(&[(100.0, 103.0), (100.0, 120.0)]), &lines, &MatchConfig::default()).unwrap();
        assert_eq!(set.assignments.len(), 1);
        assert_eq!(set.assignments[0].line, 3);
        assert_eq!(set.unmatched, vec![1]);
    }

    #[test]
    fn no_visible_lines() {
        assert_eq!(match_events(&cluster(&[(1.0, 1.0)]), &[], &MatchConfig::default()), Err(MatchError::NoVisibleLines));
    }

    #[test]
    fn sparse_lines_dropped() {
        let lines = [vis(0, (0.0, 100.0), (200.0, 100.0)), vis(1, (0.0, 300.0), (200.0, 300.0))];
        let mut pts: Vec<(f64, f64)> = (0..12).map(|i| (50.0 + i as f64 * 5.0, 101.0)).collect();
        pts.extend((0..3).map(|i| (80.0 + i as f64, 299.0)));
        let mut set = match_events(&cluster(&pts), &lines, &MatchConfig::default()).unwrap();
        assert_eq!(set.active_lines(), 2);
        set.drop_sparse_lines(10);
        assert_eq!(set.active_lines(), 1);
        assert_eq!(set.unmatched, vec![12, 13, 14]);
        assert_eq!(set.total(), 15);
    }

    proptest! {
        #[test]
        fn match_set_partitions_cluster(
            pts in prop::collection::vec((0.0f64..640.0, 0.0f64..480.0), 1..200),
            segs in prop::collection::vec(((0.0f64..640.0, 0.0f64..480.0), (0.0f64..640.0, 0.0f64..480.0)), 1..8),
        ) {
            let lines: Vec<VisibleLine> = segs
                .iter()
                .enumerate()
                .filter(|(_, (a, b))| (a.0 - b.0).hypot(a.1 - b.1) > 1.0)
                .map(|(i, (a, b))| vis(i, *a, *b))
                .collect();
            prop_assume!(!lines.is_empty());
            let cfg = MatchConfig::default();
            let set = match_events(&cluster(&pts), &lines, &cfg).unwrap();
            let mut all: Vec<usize> = set.assignments.iter().map(|a| a.event).collect();
            all.extend(&set.rejected);
            all.extend(&set.unmatched);
            all.sort_unstable();
            prop_assert_eq!(all, (0..pts.len()).collect::<Vec<_>>());
            for a in &set.assignments {
                prop_assert!(a.distance.abs() <= cfg.d_t);
            }
        }
    }
}

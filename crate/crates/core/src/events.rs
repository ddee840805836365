//! Event stream representation and hybrid (count + time) windowing.
//!
//! Windows tile a global time grid of width `2 * dt_initial` anchored at
//! `t = 0`, so window centers are `(2i + 1) * dt_initial`. A window holding
//! fewer than `n_min` events swallows the following grid window and is
//! re-centered on the merged span; one holding more than `n_max` keeps only
//! the `n_max` events closest in time to its center.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

#[derive(Error, Debug)]
pub enum WindowError {
    #[error("event stream is not sorted by time (index {index})")]
    UnsortedStream { index: usize },
    #[error("invalid window config: {0}")]
    InvalidConfig(String),
    #[error("event csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("event csv row {row}: {msg}")]
    BadRow { row: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    #[serde(rename = "t_sec")]
    pub t: f64,
    #[serde(rename = "x_px")]
    pub x: f64,
    #[serde(rename = "y_px")]
    pub y: f64,
    pub polarity: i8,
}

impl Event {
    pub fn new(t: f64, x: f64, y: f64, polarity: i8) -> Self {
        Self { t, x, y, polarity }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventCluster {
    /// Sorted by time.
    pub events: Vec<Event>,
    pub t_center: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Emitted below `n_min` because the merge budget ran out or the stream
    /// ended.
    pub undersized: bool,
}

impl EventCluster {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub n_target: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// Seconds. Half-width of a nominal window.
    pub dt_initial: f64,
    /// Seconds. Upper bound on a merged window's span.
    pub dt_max: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { n_target: 500, n_min: 100, n_max: 2000, dt_initial: 0.01, dt_max: 0.08 }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), WindowError> {
        if !(self.n_min <= self.n_target && self.n_target <= self.n_max) {
            return Err(WindowError::InvalidConfig("require n_min <= n_target <= n_max".into()));
        }
        if self.n_max == 0 {
            return Err(WindowError::InvalidConfig("n_max must be positive".into()));
        }
        if !(self.dt_initial > 0.0 && self.dt_initial <= self.dt_max) {
            return Err(WindowError::InvalidConfig("require 0 < dt_initial <= dt_max".into()));
        }
        Ok(())
    }

    /// Width of one nominal grid window.
    pub fn window_width(&self) -> f64 {
        2.0 * self.dt_initial
    }

    /// `floor(log2(dt_max / dt_initial))`.
    pub fn max_merges(&self) -> usize {
        (self.dt_max / self.dt_initial).log2().floor().max(0.0) as usize
    }
}

/// Splits a time-sorted event stream into spatio-temporal clusters.
pub fn cluster_events(stream: &[Event], cfg: &WindowConfig) -> Result<Vec<EventCluster>, WindowError> {
    cfg.validate()?;
    for (i, pair) in stream.windows(2).enumerate() {
        if !(pair[1].t >= pair[0].t) {
            return Err(WindowError::UnsortedStream { index: i + 1 });
        }
    }
    if stream.iter().any(|e| !e.t.is_finite()) {
        return Err(WindowError::InvalidConfig("non-finite timestamp".into()));
    }

    let width = cfg.window_width();
    let boundary = |k: i64| k as f64 * width;
    let max_merges = cfg.max_merges();

    let mut out = Vec::new();
    let mut i = 0usize;
    let mut k = grid_index(stream.first().map_or(0.0, |e| e.t), width);

    while i < stream.len() {
        // skip empty grid windows
        k = k.max(grid_index(stream[i].t, width));
        let start = boundary(k);
        let mut merges = 0usize;
        let mut end = boundary(k + 1);
        let mut j = i + stream[i..].partition_point(|e| e.t < end);

        while j - i < cfg.n_min
            && j < stream.len()
            && merges < max_merges
            && boundary(k + 2 + merges as i64) - start <= cfg.dt_max + 1e-12
        {
            merges += 1;
            end = boundary(k + 1 + merges as i64);
            j = i + stream[i..].partition_point(|e| e.t < end);
        }

        let t_center = 0.5 * (start + end);
        let mut events = stream[i..j].to_vec();
        if events.len() > cfg.n_max {
            events = closest_in_time(events, t_center, cfg.n_max);
        }
        let undersized = events.len() < cfg.n_min;
        out.push(EventCluster { events, t_center, t_start: start, t_end: end, undersized });

        i = j;
        k += 1 + merges as i64;
    }
    Ok(out)
}

fn grid_index(t: f64, width: f64) -> i64 {
    let mut k = (t / width).floor() as i64;
    // guard against rounding at the boundaries
    while t >= (k + 1) as f64 * width {
        k += 1;
    }
    while t < k as f64 * width {
        k -= 1;
    }
    k
}

/// Keeps the `n` events nearest `t_center`; on equal distance the earlier
/// event wins. Output stays time-sorted.
fn closest_in_time(events: Vec<Event>, t_center: f64, n: usize) -> Vec<Event> {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| {
        let da = (events[a].t - t_center).abs();
        let db = (events[b].t - t_center).abs();
        da.total_cmp(&db).then(a.cmp(&b))
    });
    let mut keep: Vec<usize> = order.into_iter().take(n).collect();
    keep.sort_unstable();
    keep.into_iter().map(|idx| events[idx]).collect()
}

pub fn read_events_csv<R: Read>(reader: R) -> Result<Vec<Event>, WindowError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (row, rec) in rdr.deserialize::<Event>().enumerate() {
        let e = rec?;
        if e.polarity != 1 && e.polarity != -1 {
            return Err(WindowError::BadRow { row: row + 2, msg: format!("polarity {} not in {{-1, 1}}", e.polarity) });
        }
        out.push(e);
    }
    Ok(out)
}

pub fn write_events_csv<W: Write>(mut w: W, events: &[Event]) -> std::io::Result<()> {
    writeln!(w, "t_sec,x_px,y_px,polarity")?;
    for e in events {
        writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.polarity)?;
    }
    Ok(())
}

//! Top-level run configuration shared by the tracker, the CLI and the bench.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bnb::BnbConfig;
use crate::detection::DetectionConfig;
use crate::events::WindowConfig;
use crate::geometry::Vec3;
use crate::matching::MatchConfig;
use crate::optimize::OptConfig;
use crate::synth::SynthConfig;

#[derive(Error, Debug)]
pub enum ConfigError {
    #[error("config json (line {line}, column {column}): {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("config field `{field}`: {msg}")]
    Invalid { field: &'static str, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ground-truth motion for generated sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    /// Angular velocity, rad/s.
    pub w: Vec3,
    /// Linear velocity, m/s.
    pub v: Vec3,
    pub duration: f64,
    pub window_rate: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self { w: Vec3::new(0.1, 0.2, 0.2), v: Vec3::new(0.5, 0.3, 0.4), duration: 2.0, window_rate: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub window: WindowConfig,
    pub detection: DetectionConfig,
    pub bnb: BnbConfig,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub opt: OptConfig,
    pub synth: SynthConfig,
    pub motion: MotionConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json<R: Read>(reader: R) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_reader(reader)
            .map_err(|e| ConfigError::Parse { line: e.line(), column: e.column(), msg: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |field, msg: String| ConfigError::Invalid { field, msg };
        self.window.validate().map_err(|e| inv("window", e.to_string()))?;
        self.detection.validate().map_err(|e| inv("detection", e.to_string()))?;
        self.matching.validate().map_err(|e| inv("match", e.to_string()))?;
        self.synth.validate().map_err(|e| inv("synth", e.to_string()))?;
        let o = &self.opt;
        if o.max_iterations == 0 || !(o.gradient_threshold > 0.0) || !(o.c_m > 0.0) || !(o.c_s > 0.0) {
            return Err(inv("opt", "iterations, gradient_threshold, c_m and c_s must be positive".into()));
        }
        if !(o.initial_damping > 0.0 && o.max_condition > 1.0) {
            return Err(inv("opt", "initial_damping must be positive and max_condition above 1".into()));
        }
        let b = &self.bnb;
        if !(b.epsilon_min > 0.0 && b.min_branch_side > 0.0) || b.max_queue == 0 {
            return Err(inv("bnb", "epsilon_min, min_branch_side and max_queue must be positive".into()));
        }
        let m = &self.motion;
        if !(m.duration > 0.0 && m.window_rate > 0.0) {
            return Err(inv("motion", "duration and window_rate must be positive".into()));
        }
        Ok(())
    }
}

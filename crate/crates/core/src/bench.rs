//! Seeded accuracy sweeps over noise, outlier rate and line count.
//!
//! Each trial is one static window with known event-to-line attributions.
//! In the outlier sweep, outliers corrupt those attributions: an outlier
//! event is attributed to a random wrong line. The noise and line sweeps use
//! uniform image clutter instead, each clutter event attributed to the
//! nearest projected line at the true pose. All estimators start from
//! the same perturbed pose. Trial `i` uses the same scene at every sweep
//! value.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{event_line_distance, project_line, CameraIntrinsics, Line2D, Pose, Vec2};
use crate::metrics::{err_rotation, err_translation};
use crate::optimize::{refine_pose, Observation, OptConfig};
use crate::robust::{median, EstimatorKind};
use crate::model::ObjectModel;
use crate::synth::{
    corrupt_correspondences, derive_seed, generate_events, generate_scene, perturb_pose, LabeledEvent, SynthConfig,
    TrajectorySpec,
};

#[derive(Error, Debug)]
pub enum BenchError {
    #[error("invalid sweep spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    /// Event noise sigma, pixels.
    Noise,
    /// Fraction of corrupted attributions.
    Outliers,
    /// Number of model lines.
    Lines,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::Noise => "noise",
            SweepParameter::Outliers => "outliers",
            SweepParameter::Lines => "lines",
        }
    }
}

impl FromStr for SweepParameter {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "noise" => Ok(SweepParameter::Noise),
            "outliers" => Ok(SweepParameter::Outliers),
            "lines" => Ok(SweepParameter::Lines),
            _ => Err(BenchError::InvalidSpec(format!("unknown sweep parameter {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub trials: usize,
    pub n_lines: usize,
    pub noise_sigma: f64,
    pub outlier_rate: f64,
    pub events_per_line: usize,
    /// When set, events per line become `total_events / n_lines`.
    pub total_events: Option<usize>,
    pub perturb_rotation_deg: f64,
    pub perturb_translation: f64,
    pub estimators: Vec<EstimatorKind>,
    pub image: CameraIntrinsics,
    pub seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self::noise()
    }
}

impl SweepSpec {
    fn base(parameter: SweepParameter, values: Vec<f64>) -> Self {
        Self {
            parameter,
            values,
            trials: 200,
            n_lines: 25,
            noise_sigma: 2.0,
            outlier_rate: 0.02,
            events_per_line: 40,
            total_events: None,
            perturb_rotation_deg: 5.0,
            perturb_translation: 0.05,
            estimators: EstimatorKind::ALL.to_vec(),
            image: CameraIntrinsics::default(),
            seed: 0,
        }
    }

    /// sigma in {0, 2, ..., 10} px, 25 lines, 2% outliers.
    pub fn noise() -> Self {
        Self::base(SweepParameter::Noise, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0])
    }

    /// Outlier rate 0 to 50% in steps of 10%, sigma = 2 px, 25 lines.
    pub fn outliers() -> Self {
        Self::base(SweepParameter::Outliers, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    }

    /// 4 to 40 lines, sigma = 2 px, 2% outliers, 1000 events per window.
    pub fn lines() -> Self {
        Self {
            total_events: Some(1000),
            ..Self::base(SweepParameter::Lines, vec![4.0, 8.0, 12.0, 16.0, 20.0, 25.0, 30.0, 35.0, 40.0])
        }
    }

    pub fn preset(parameter: SweepParameter) -> Self {
        match parameter {
            SweepParameter::Noise => Self::noise(),
            SweepParameter::Outliers => Self::outliers(),
            SweepParameter::Lines => Self::lines(),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::InvalidSpec(m));
        if self.values.is_empty() || self.trials == 0 || self.estimators.is_empty() {
            return bad("values, trials and estimators must be non-empty".into());
        }
        for &v in &self.values {
            let ok = match self.parameter {
                SweepParameter::Noise => v >= 0.0,
                SweepParameter::Outliers => (0.0..=1.0).contains(&v),
                SweepParameter::Lines => v >= 3.0 && v.fract() == 0.0,
            };
            if !ok {
                return bad(format!("value {v} is out of range for a {} sweep", self.parameter.name()));
            }
        }
        if !(self.perturb_rotation_deg >= 0.0 && self.perturb_translation >= 0.0) {
            return bad("perturbation magnitudes must be non-negative".into());
        }
        Ok(())
    }

    fn point(&self, value: f64) -> (usize, f64, f64, usize) {
        let (mut n, mut sigma, mut rate) = (self.n_lines, self.noise_sigma, self.outlier_rate);
        match self.parameter {
            SweepParameter::Noise => sigma = value,
            SweepParameter::Outliers => rate = value,
            SweepParameter::Lines => n = value as usize,
        }
        let per_line = self.total_events.map_or(self.events_per_line, |t| (t / n).max(1));
        (n, sigma, rate, per_line)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialError {
    pub err_r: f64,
    pub err_t: f64,
}

/// Errors of every estimator (in `spec.estimators` order) on one trial.
pub fn run_trial(spec: &SweepSpec, value: f64, trial: usize, opt: &OptConfig) -> Vec<TrialError> {
    let (n, sigma, rate, per_line) = spec.point(value);
    let scene_seed = derive_seed(spec.seed, &[trial as u64]);
    let clutter = spec.parameter != SweepParameter::Outliers;
    let synth = SynthConfig {
        n_lines: n,
        image: spec.image,
        noise_sigma: sigma,
        outlier_rate: if clutter { rate } else { 0.0 },
        events_per_line: per_line,
        seed: scene_seed,
        ..Default::default()
    };
    let (model, truth) = generate_scene(&synth).expect("sweep spec validated");
    let one_window = TrajectorySpec::fixed(truth, 0.02, 50.0);
    let events = generate_events(&model, &one_window, &spec.image, &synth).expect("sweep spec validated");
    let start = perturb_pose(&truth, spec.perturb_rotation_deg.to_radians(), spec.perturb_translation, derive_seed(scene_seed, &[2]));
    let pairs = if clutter {
        nearest_line_attribution(&events, &model, &spec.image, &start)
    } else {
        corrupt_correspondences(&events, n, rate, derive_seed(scene_seed, &[1]))
    };
    let obs: Vec<Observation> = pairs.into_iter().map(|(event, line)| Observation { event, line }).collect();
    spec.estimators
        .iter()
        .map(|&kind| {
            // a failed refinement scores its starting pose
            let pose = refine_pose(&obs, &model, &spec.image, &start, kind, opt).map_or(start, |r| r.pose);
            TrialError {
                err_r: err_rotation(&pose.rotation, &truth.rotation),
                err_t: err_translation(&pose.translation, &truth.translation).unwrap_or(f64::NAN),
            }
        })
        .collect()
}

/// Labeled events keep their line; unlabeled ones go to the closest
/// projected model line under `pose`.
fn nearest_line_attribution(events: &[LabeledEvent], model: &ObjectModel, k: &CameraIntrinsics, pose: &Pose) -> Vec<(Vec2, usize)> {
    let projected: Vec<(usize, Line2D)> = model
        .line_segments()
        .iter()
        .enumerate()
        .filter_map(|(i, l)| project_line(k, pose, l).ok().map(|p| (i, p)))
        .collect();
    events
        .iter()
        .filter_map(|le| {
            let p = le.event.position();
            let line = le.true_line.or_else(|| {
                projected
                    .iter()
                    .filter_map(|(i, l)| event_line_distance(&p, l).ok().map(|d| (*i, d.abs())))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| i)
            })?;
            Some((p, line))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub parameter: SweepParameter,
    pub value: f64,
    pub estimator: EstimatorKind,
    pub median_err_r: f64,
    pub mean_err_r: f64,
    pub median_err_t: f64,
    pub mean_err_t: f64,
}

/// Runs the sweep on up to `threads` worker threads. Per-trial seeds make
/// the rows independent of the thread count.
pub fn run_sweep(spec: &SweepSpec, opt: &OptConfig, threads: usize) -> Result<Vec<SweepRow>, BenchError> {
    spec.validate()?;
    let threads = threads.clamp(1, spec.trials);
    let mut rows = Vec::new();
    for &value in &spec.values {
        let mut results: Vec<Vec<TrialError>> = vec![Vec::new(); spec.trials];
        std::thread::scope(|s| {
            for (w, chunk) in results.chunks_mut(spec.trials.div_ceil(threads)).enumerate() {
                let base = w * spec.trials.div_ceil(threads);
                s.spawn(move || {
                    for (j, slot) in chunk.iter_mut().enumerate() {
                        *slot = run_trial(spec, value, base + j, opt);
                    }
                });
            }
        });
        for (e, &kind) in spec.estimators.iter().enumerate() {
            let mut r: Vec<f64> = results.iter().map(|t| t[e].err_r).collect();
            let mut t: Vec<f64> = results.iter().map(|t| t[e].err_t).collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            rows.push(SweepRow {
                parameter: spec.parameter,
                value,
                estimator: kind,
                mean_err_r: mean(&r),
                mean_err_t: mean(&t),
                median_err_r: median(&mut r),
                median_err_t: median(&mut t),
            });
        }
    }
    Ok(rows)
}

pub fn write_report_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "parameter,value,estimator,median_err_r,mean_err_r,median_err_t,mean_err_t")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:e},{:e},{:e},{:e}",
            r.parameter.name(),
            r.value,
            r.estimator.name(),
            r.median_err_r,
            r.mean_err_r,
            r.median_err_t,
            r.mean_err_t
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(mut spec: SweepSpec) -> SweepSpec {
        spec.trials = 3;
        spec
    }

    #[test]
    fn presets_have_expected_shape() {
        let rows = run_sweep(&quick(SweepSpec::noise()), &OptConfig::default(), 1).unwrap();
        assert_eq!(rows.len(), 6 * 4);
        let rows = run_sweep(&quick(SweepSpec::outliers()), &OptConfig::default(), 1).unwrap();
        assert_eq!(rows.len(), 6 * 4);
        assert_eq!(rows[0].estimator, EstimatorKind::Ls);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let spec = SweepSpec { values: vec![2.0], trials: 5, ..SweepSpec::noise() };
        let a = run_sweep(&spec, &OptConfig::default(), 1).unwrap();
        let b = run_sweep(&spec, &OptConfig::default(), 3).unwrap();
        assert_eq!(a, b);
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        write_report_csv(&mut ca, &a).unwrap();
        write_report_csv(&mut cb, &b).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn line_sweep_keeps_event_budget() {
        let spec = SweepSpec::lines();
        assert_eq!(spec.point(4.0).3, 250);
        assert_eq!(spec.point(40.0).3, 25);
    }

    #[test]
    fn invalid_specs() {
        let spec = SweepSpec { values: vec![1.5], ..SweepSpec::outliers() };
        assert!(spec.validate().is_err());
        let spec = SweepSpec { values: vec![2.5], ..SweepSpec::lines() };
        assert!(spec.validate().is_err());
        let spec = SweepSpec { trials: 0, ..SweepSpec::noise() };
        assert!(spec.validate().is_err());
    }
}

//! Synthetic scenes, event streams and ground-truth trajectories.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::Event;
use crate::geometry::{rodrigues, AxisAngle, CameraIntrinsics, Pose, Vec2, Vec3};
use crate::model::ObjectModel;
use crate::motion::{predict_pose, Twist};
use crate::visibility::visible_lines;

/// Shortest projected segment accepted by [`generate_scene`], pixels.
const MIN_PROJECTED_LENGTH: f64 = 40.0;

#[derive(Error, Debug)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("labeled csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_lines: usize,
    /// Camera-frame depth range of generated line endpoints, meters.
    pub depth_range: (f64, f64),
    pub image: CameraIntrinsics,
    /// Perpendicular Gaussian offset of events from their line, pixels.
    pub noise_sigma: f64,
    pub outlier_rate: f64,
    /// Events per visible line per window.
    pub events_per_line: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_lines: 25,
            depth_range: (5.0, 10.0),
            image: CameraIntrinsics::default(),
            noise_sigma: 1.0,
            outlier_rate: 0.0,
            events_per_line: 40,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.into()));
        if self.n_lines == 0 {
            return bad("n_lines must be at least 1");
        }
        if !(self.depth_range.0 > 0.0 && self.depth_range.1 >= self.depth_range.0) {
            return bad("depth_range must satisfy 0 < min <= max");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return bad("outlier_rate must lie in [0, 1]");
        }
        self.image.validate().map_err(|e| SynthError::InvalidConfig(e.to_string()))
    }
}

/// Constant-twist ground-truth motion sampled by windows of `1 / window_rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySpec {
    pub pose0: Pose,
    pub twist: Twist,
    pub duration: f64,
    pub window_rate: f64,
}

impl TrajectorySpec {
    pub fn fixed(pose: Pose, duration: f64, window_rate: f64) -> Self {
        Self { pose0: pose, twist: Twist::zero(), duration, window_rate }
    }

    pub fn pose_at(&self, t: f64) -> Pose {
        predict_pose(&self.pose0, &self.twist, t)
    }

    pub fn num_windows(&self) -> usize {
        (self.duration * self.window_rate + 1e-9).floor() as usize
    }

    pub fn window_bounds(&self, i: usize) -> (f64, f64) {
        let w = 1.0 / self.window_rate;
        (i as f64 * w, (i + 1) as f64 * w)
    }

    /// Poses at the window centers.
    pub fn truth_trajectory(&self) -> Vec<(f64, Pose)> {
        (0..self.num_windows())
            .map(|i| {
                let (a, b) = self.window_bounds(i);
                let t = 0.5 * (a + b);
                (t, self.pose_at(t))
            })
            .collect()
    }
}

/// `None` marks an outlier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledEvent {
    pub event: Event,
    pub true_line: Option<usize>,
}

/// SplitMix64 mix of a base seed with stream indices, for per-trial and
/// per-window seeds that do not depend on execution order.
pub fn derive_seed(base: u64, indices: &[u64]) -> u64 {
    let mut z = base;
    for &i in indices {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(i.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

fn random_axis(rng: &mut ChaCha8Rng) -> Vec3 {
    let a: [f64; 3] = UnitSphere.sample(rng);
    Vec3::from(a)
}

/// Random line segments in front of the camera and a random object pose;
/// the segments are returned in the object frame.
pub fn generate_scene(cfg: &SynthConfig) -> Result<(ObjectModel, Pose), SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = &cfg.image;
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    let rotation = rodrigues(&AxisAngle(random_axis(&mut rng) * angle));
    let translation = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(6.0..9.0));
    let pose = Pose::new(rotation, translation);

    let (w, h) = (k.width as f64, k.height as f64);
    let (zmin, zmax) = cfg.depth_range;
    let sample = |rng: &mut ChaCha8Rng| {
        let px = Vec2::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
        let z = if zmax > zmin { rng.random_range(zmin..zmax) } else { zmin };
        (px, k.back_project(&px) * z)
    };
    let to_model = |x: Vec3| pose.rotation.transpose() * (x - pose.translation);
    let mut segments = Vec::with_capacity(cfg.n_lines);
    while segments.len() < cfg.n_lines {
        let (pa, a) = sample(&mut rng);
        let (pb, b) = sample(&mut rng);
        if (pa - pb).norm() < MIN_PROJECTED_LENGTH {
            continue;
        }
        segments.push((to_model(a), to_model(b)));
    }
    let model = ObjectModel::from_segments(&segments).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    Ok((model, pose))
}

/// Events along the lines visible in each window. Each event is placed on
/// the projection of its line under the pose at its own timestamp.
pub fn generate_events(
    model: &ObjectModel,
    traj: &TrajectorySpec,
    k: &CameraIntrinsics,
    cfg: &SynthConfig,
) -> Result<Vec<LabeledEvent>, SynthError> {
    cfg.validate()?;
    if !(traj.duration > 0.0 && traj.window_rate > 0.0) {
        return Err(SynthError::InvalidConfig("trajectory duration and window rate must be positive".into()));
    }
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut out = Vec::new();
    for wi in 0..traj.num_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[wi as u64]));
        let (t0, t1) = traj.window_bounds(wi);
        let center_pose = traj.pose_at(0.5 * (t0 + t1));
        for vis in visible_lines(model, &center_pose, k) {
            for _ in 0..cfg.events_per_line {
                let t = rng.random_range(t0..t1);
                let s: f64 = rng.random_range(0.0..1.0);
                let off = if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                let polarity = if rng.random_bool(0.5) { 1 } else { -1 };
                let outlier = rng.random_bool(cfg.outlier_rate);
                let (ox, oy) = (rng.random_range(0.0..k.width as f64), rng.random_range(0.0..k.height as f64));
                if outlier {
                    out.push(LabeledEvent { event: Event::new(t, ox, oy, polarity), true_line: None });
                    continue;
                }
                let pose = traj.pose_at(t);
                let (Ok(a), Ok(b)) = (k.project(&pose.transform(&vis.segment.p1)), k.project(&pose.transform(&vis.segment.p2)))
                else {
                    continue;
                };
                let d = b - a;
                let len = d.norm();
                if len < 1e-9 {
                    continue;
                }
                let normal = Vec2::new(-d.y, d.x) / len;
                let p = a + d * s + normal * off;
                out.push(LabeledEvent { event: Event::new(t, p.x, p.y, polarity), true_line: Some(vis.index) });
            }
        }
    }
    out.sort_by(|a, b| a.event.t.total_cmp(&b.event.t));
    Ok(out)
}

/// Reassigns each labeled line event, with probability `rate`, to a
/// uniformly chosen different line. The result pairs each event with the
/// line it is attributed to.
pub fn corrupt_correspondences(events: &[LabeledEvent], n_lines: usize, rate: f64, seed: u64) -> Vec<(Vec2, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    events
        .iter()
        .filter_map(|le| le.true_line.map(|l| (le.event.position(), l)))
        .map(|(p, l)| {
            if n_lines > 1 && rng.random_bool(rate) {
                let other = (l + 1 + rng.random_range(0..n_lines - 1)) % n_lines;
                (p, other)
            } else {
                (p, l)
            }
        })
        .collect()
}

/// Left-composes a rotation of exactly `rot_mag` about a random axis and
/// offsets the translation by `trans_mag * |T|` in a random direction.
pub fn perturb_pose(pose: &Pose, rot_mag: f64, trans_mag: f64, seed: u64) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = random_axis(&mut rng);
    let dir = random_axis(&mut rng);
    Pose::new(
        rodrigues(&AxisAngle(axis * rot_mag)) * pose.rotation,
        pose.translation + dir * (trans_mag * pose.translation.norm()),
    )
}

pub fn write_labeled_csv<W: Write>(mut w: W, events: &[LabeledEvent]) -> std::io::Result<()> {
    writeln!(w, "t_sec,x_px,y_px,polarity,true_line")?;
    for le in events {
        let e = &le.event;
        let label = le.true_line.map_or(-1, |l| l as i64);
        writeln!(w, "{},{},{},{},{}", e.t, e.x, e.y, e.polarity, label)?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct LabeledRow {
    t_sec: f64,
    x_px: f64,
    y_px: f64,
    polarity: i8,
    true_line: i64,
}

pub fn read_labeled_csv<R: Read>(reader: R) -> Result<Vec<LabeledEvent>, SynthError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<LabeledRow>()
        .map(|r| {
            let r = r?;
            Ok(LabeledEvent {
                event: Event::new(r.t_sec, r.x_px, r.y_px, r.polarity),
                true_line: usize::try_from(r.true_line).ok(),
            })
        })
        .collect()
}

pub fn unlabeled(events: &[LabeledEvent]) -> Vec<Event> {
    events.iter().map(|le| le.event).collect()
}

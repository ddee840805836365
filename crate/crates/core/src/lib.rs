//! Model-based 6-DoF object pose estimation and tracking from event streams.
//!
//! Pipeline: events are grouped into windows ([`events`]), line segments are
//! extracted from each window ([`detection`]), an initial pose comes from a
//! globally optimal rotation search plus a linear translation solve
//! ([`bnb`]), and poses are then refined and tracked with robust estimators
//! ([`optimize`], [`tracker`]).

pub mod bench;
pub mod bnb;
pub mod config;
pub mod detection;
pub mod events;
pub mod geometry;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod motion;
pub mod optimize;
pub mod robust;
pub mod synth;
pub mod tracker;
pub mod trajectory;
pub mod visibility;

pub use bnb::{initial_pose, BnbConfig, BnbError, InitialPose};
pub use config::{ConfigError, MotionConfig, RunConfig};
pub use detection::{detect_lines, DetectedLine, DetectionConfig, DetectionError};
pub use events::{cluster_events, Event, EventCluster, WindowConfig, WindowError};
pub use geometry::{CameraIntrinsics, Line2D, Line3D, Pose, Rotation, Vec2, Vec3};
pub use matching::{match_events, MatchConfig, MatchError, MatchSet};
pub use metrics::{ate_rmse, err_rotation, err_translation, Ate, MetricsError};
pub use model::{ModelError, ObjectModel};
pub use motion::{estimate_twist, predict_pose, Twist};
pub use optimize::{optimize_pose, refine_pose, OptConfig, OptError, RobustState};
pub use robust::EstimatorKind;
pub use synth::{LabeledEvent, SynthConfig, TrajectorySpec};
pub use tracker::{track, Track, TrackError};

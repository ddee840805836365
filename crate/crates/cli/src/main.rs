//! `evpose`: synthetic data generation, line detection, pose initialization,
//! tracking, evaluation and benchmark sweeps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use evpose_core::bench::{run_sweep, write_report_csv, SweepParameter, SweepSpec};
use evpose_core::detection::{read_lines_json, write_lines_json};
use evpose_core::events::{read_events_csv, write_events_csv};
use evpose_core::synth::{generate_events, generate_scene, unlabeled, write_labeled_csv};
use evpose_core::trajectory::{read_tum, write_tum};
use evpose_core::{
    ate_rmse, cluster_events, detect_lines, err_rotation, err_translation, initial_pose, track, CameraIntrinsics,
    EstimatorKind, Line2D, ObjectModel, Pose, Rotation, RunConfig, TrajectorySpec, Twist, Vec3,
};

#[derive(Parser, Debug)]
#[command(name = "evpose", version, about = "Line-based object pose estimation and tracking from event streams")]
struct Cli {
    /// Run configuration (JSON). Missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppresses the summary on standard error.
    #[arg(long, global = true)]
    quiet: bool,
    /// Prints the effective configuration as JSON and exits.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generates a random line model, a constant-twist trajectory and its events.
    Synth {
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Detects line segments in the first event window.
    Detect {
        #[arg(long)]
        events: PathBuf,
        /// Detected lines (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Initial pose from detected lines and the model.
    Init {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        lines: PathBuf,
        #[arg(long)]
        intrinsics: PathBuf,
        /// Pose JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Tracks the object through the event stream.
    Track {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        intrinsics: PathBuf,
        #[arg(long, default_value = "mm")]
        estimator: EstimatorKind,
        /// Trajectory (TUM format).
        #[arg(long)]
        out: PathBuf,
        /// Per-window log CSV; defaults to `<out>.windows.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Starting pose JSON (as written by `init`); without it the first
        /// window is used for initialization.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Compares an estimated trajectory with ground truth.
    Eval {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Accuracy sweep over noise, outlier rate or line count.
    Bench {
        /// Preset sweep: noise, outliers or lines.
        #[arg(long, default_value = "noise")]
        sweep: SweepParameter,
        /// Sweep spec JSON; replaces the preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Restricts the estimators.
        #[arg(long, value_delimiter = ',')]
        estimator: Vec<EstimatorKind>,
        /// Report CSV; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Error, Debug)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Estimation(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Estimation(_) => 3,
        }
    }
}

fn input<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(input(path))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(input(path))
}

/// Pose file written by `init` and read by `track --init`.
#[derive(Serialize, Deserialize, Debug)]
struct PoseRecord {
    /// Row-major rotation matrix.
    rotation: [f64; 9],
    translation: [f64; 3],
    #[serde(default)]
    correspondences: Vec<(usize, usize)>,
    #[serde(default)]
    achieved_count: usize,
}

impl PoseRecord {
    fn pose(&self) -> Pose {
        let [x, y, z] = self.translation;
        Pose::new(Rotation::from_matrix_orthonormalized(*Rotation::from_row_major(&self.rotation).matrix()), Vec3::new(x, y, z))
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_json(open(p)?).map_err(input(p))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.synth.seed = seed;
    }
    Ok(cfg)
}

fn threads() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    std::env::var("EVPOSE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0).unwrap_or(available)
}

fn load_model(path: &Path) -> Result<ObjectModel, CliError> {
    ObjectModel::from_json(open(path)?).map_err(input(path))
}

fn load_intrinsics(path: &Path) -> Result<CameraIntrinsics, CliError> {
    serde_json::from_reader(open(path)?).map_err(input(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(input(path))?;
    writeln!(w).and_then(|_| w.flush()).map_err(input(path))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    if cli.print_config {
        println!("{}", cfg.to_json_pretty());
        return Ok(());
    }
    let say = |msg: String| {
        if !cli.quiet {
            eprintln!("{msg}");
        }
    };
    let Some(command) = &cli.command else {
        return Err(CliError::Input("no subcommand given (see --help)".into()));
    };
    match command {
        Command::Synth { out } => {
            std::fs::create_dir_all(out).map_err(input(out))?;
            let (model, pose0) = generate_scene(&cfg.synth).map_err(|e| CliError::Input(e.to_string()))?;
            let m = &cfg.motion;
            let traj = TrajectorySpec { pose0, twist: Twist::new(m.w, m.v), duration: m.duration, window_rate: m.window_rate };
            let k = cfg.synth.image;
            let events = generate_events(&model, &traj, &k, &cfg.synth).map_err(|e| CliError::Input(e.to_string()))?;

            let path = out.join("model.json");
            let mut w = create(&path)?;
            model.to_json(&mut w).map_err(input(&path))?;
            w.flush().map_err(input(&path))?;
            write_json(&out.join("intrinsics.json"), &k)?;
            let path = out.join("events.csv");
            let mut w = create(&path)?;
            write_events_csv(&mut w, &unlabeled(&events)).and_then(|_| w.flush()).map_err(input(&path))?;
            let path = out.join("events_labeled.csv");
            let mut w = create(&path)?;
            write_labeled_csv(&mut w, &events).and_then(|_| w.flush()).map_err(input(&path))?;
            let truth = traj.truth_trajectory();
            // ground truth at the first window center, for `track --init`
            let first = truth.first().map_or(pose0, |(_, p)| *p);
            let t = first.translation;
            let record = PoseRecord {
                rotation: first.rotation.to_row_major(),
                translation: [t.x, t.y, t.z],
                correspondences: Vec::new(),
                achieved_count: 0,
            };
            write_json(&out.join("pose0.json"), &record)?;
            let path = out.join("truth.txt");
            let mut w = create(&path)?;
            write_tum(&mut w, &truth).and_then(|_| w.flush()).map_err(input(&path))?;
            say(format!(
                "synth: {} lines, {} events, {} windows -> {}",
                model.num_lines(),
                events.len(),
                traj.num_windows(),
                out.display()
            ));
        }
        Command::Detect { events, out } => {
            let stream = read_events_csv(open(events)?).map_err(input(events))?;
            let clusters = cluster_events(&stream, &cfg.window).map_err(input(events))?;
            let first = clusters.first().ok_or_else(|| CliError::Input(format!("{}: no events", events.display())))?;
            let lines = detect_lines(first, &cfg.detection, cfg.seed).map_err(|e| CliError::Estimation(e.to_string()))?;
            let mut w = create(out)?;
            write_lines_json(&mut w, &lines).map_err(input(out))?;
            w.flush().map_err(input(out))?;
            say(format!("detect: {} lines from {} events", lines.len(), first.len()));
        }
        Command::Init { model, lines, intrinsics, out } => {
            let model = load_model(model)?;
            let k = load_intrinsics(intrinsics)?;
            let detected = read_lines_json(open(lines)?).map_err(input(lines))?;
            let observed: Vec<Line2D> = detected.iter().map(|d| d.line).collect();
            let init = initial_pose(&observed, &model, &k, &cfg.bnb).map_err(|e| CliError::Estimation(e.to_string()))?;
            let t = init.pose.translation;
            let record = PoseRecord {
                rotation: init.pose.rotation.to_row_major(),
                translation: [t.x, t.y, t.z],
                correspondences: init.correspondences.pairs.clone(),
                achieved_count: init.achieved_count,
            };
            write_json(out, &record)?;
            say(format!(
                "init: {} of {} lines are rotation inliers, {} pairs fix the translation, mean residual {:.2} px{}",
                init.achieved_count,
                observed.len(),
                init.correspondences.len(),
                init.mean_residual,
                if init.low_confidence { " (low confidence)" } else { "" }
            ));
        }
        Command::Track { events, model, intrinsics, estimator, out, log, init } => {
            let stream = read_events_csv(open(events)?).map_err(input(events))?;
            let model = load_model(model)?;
            let k = load_intrinsics(intrinsics)?;
            let start = match init {
                Some(p) => Some(serde_json::from_reader::<_, PoseRecord>(open(p)?).map_err(input(p))?.pose()),
                None => None,
            };
            let tr = track(&stream, &model, &k, *estimator, &cfg, start).map_err(|e| match e {
                evpose_core::TrackError::InitializationFailed(_) => CliError::Estimation(e.to_string()),
                other => CliError::Input(format!("{}: {other}", events.display())),
            })?;
            let mut w = create(out)?;
            write_tum(&mut w, &tr.poses).and_then(|_| w.flush()).map_err(input(out))?;
            let log_path = log.clone().unwrap_or_else(|| {
                let mut s = out.clone().into_os_string();
                s.push(".windows.csv");
                PathBuf::from(s)
            });
            let mut w = create(&log_path)?;
            tr.write_log_csv(&mut w).and_then(|_| w.flush()).map_err(input(&log_path))?;
            say(format!("track ({estimator}): {} windows, {} coasting", tr.poses.len(), tr.coasting_windows()));
        }
        Command::Eval { estimate, truth } => {
            let est = read_tum(open(estimate)?).map_err(input(estimate))?;
            let gt = read_tum(open(truth)?).map_err(input(truth))?;
            let ate = ate_rmse(&est, &gt).map_err(|e| CliError::Input(e.to_string()))?;
            let (mut sum_r, mut sum_t) = (0.0, 0.0);
            for ((_, e), (_, g)) in est.iter().zip(&gt) {
                sum_r += err_rotation(&e.rotation, &g.rotation);
                sum_t += err_translation(&e.translation, &g.translation).map_err(|e| CliError::Input(e.to_string()))?;
            }
            let n = est.len() as f64;
            println!("poses,ate_rmse,extent,ate_normalized,mean_err_r_deg,mean_err_t");
            println!("{},{:e},{:e},{:e},{:e},{:e}", ate.poses, ate.rmse, ate.extent, ate.normalized, (sum_r / n).to_degrees(), sum_t / n);
        }
        Command::Bench { sweep, spec, trials, estimator, out } => {
            let mut s = match spec {
                Some(p) => serde_json::from_reader::<_, SweepSpec>(open(p)?).map_err(input(p))?,
                None => SweepSpec { seed: cfg.seed, ..SweepSpec::preset(*sweep) },
            };
            if let Some(n) = trials {
                s.trials = *n;
            }
            if let Some(seed) = cli.seed {
                s.seed = seed;
            }
            if !estimator.is_empty() {
                s.estimators = estimator.clone();
            }
            let rows = run_sweep(&s, &cfg.opt, threads()).map_err(|e| CliError::Input(e.to_string()))?;
            match out {
                Some(p) => {
                    let mut w = create(p)?;
                    write_report_csv(&mut w, &rows).and_then(|_| w.flush()).map_err(input(p))?;
                }
                None => write_report_csv(std::io::stdout().lock(), &rows).map_err(|e| CliError::Input(e.to_string()))?,
            }
            say(format!("bench: {} sweep, {} values x {} trials", s.parameter.name(), s.values.len(), s.trials));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("evpose: {e}");
            ExitCode::from(e.code())
        }
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use tempfile::TempDir;

fn evpose(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evpose"))
        .args(args)
        .current_dir(dir)
        .env("EVPOSE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "status {:?}\nstderr: {}", out.status, String::from_utf8_lossy(&out.stderr));
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

/// Rows of a TUM file as numbers.
fn tum(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().map(|x| x.parse().unwrap()).collect())
        .collect()
}

fn ate(dir: &Path, est: &str, truth: &str) -> f64 {
    let out = evpose(&["eval", "--estimate", est, "--truth", truth], dir);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().nth(1).unwrap();
    row.split(',').nth(1).unwrap().parse().unwrap()
}

const SHORT: &str = r#"{"motion": {"duration": 0.3}}"#;

#[test]
fn synth_writes_all_files_reproducibly() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", SHORT);
    ok(&evpose(&["synth", "--config", &cfg, "--seed", "5", "--out", "a", "--quiet"], dir.path()));
    ok(&evpose(&["synth", "--config", &cfg, "--seed", "5", "--out", "b", "--quiet"], dir.path()));
    for f in ["events.csv", "events_labeled.csv", "model.json", "intrinsics.json", "truth.txt", "pose0.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(!a.is_empty(), "{f}");
        assert_eq!(a, b, "{f} differs between identical runs");
    }
    let events = fs::read_to_string(dir.path().join("a/events.csv")).unwrap();
    let mut lines = events.lines();
    assert_eq!(lines.next(), Some("t_sec,x_px,y_px,polarity"));
    let ts: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(ts.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(tum(&dir.path().join("a/truth.txt")).len(), 15);

    ok(&evpose(&["synth", "--config", &cfg, "--seed", "6", "--out", "c", "--quiet"], dir.path()));
    assert_ne!(fs::read(dir.path().join("a/events.csv")).unwrap(), fs::read(dir.path().join("c/events.csv")).unwrap());
}

#[test]
fn malformed_config_exits_2_with_location() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.json", "{\n  \"opt\": {\"max_iteratons\": 3}\n}");
    let out = evpose(&["synth", "--config", &cfg, "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("max_iteratons"), "{err}");

    let cfg = write(dir.path(), "invalid.json", r#"{"match": {"d_a": 50.0}}"#);
    let out = evpose(&["synth", "--config", &cfg, "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("match"));
}

#[test]
fn print_config_fills_defaults() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"seed": 11, "opt": {"max_iterations": 7}}"#);
    let out = evpose(&["--print-config", "--config", &cfg], dir.path());
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seed"], 11);
    assert_eq!(v["opt"]["max_iterations"], 7);
    assert_eq!(v["opt"]["gradient_threshold"], 1e-6);
    assert!(v["match"].is_object() && v["window"].is_object() && v["bnb"].is_object());
}

#[test]
fn missing_inputs_exit_2() {
    let dir = TempDir::new().unwrap();
    ok(&evpose(&["synth", "--config", &write(dir.path(), "c.json", SHORT), "--out", "s", "--quiet"], dir.path()));
    let out = evpose(
        &["track", "--events", "s/events.csv", "--model", "nope.json", "--intrinsics", "s/intrinsics.json", "--out", "t.txt"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));
    let out = evpose(&["detect", "--events", "missing.csv", "--out", "l.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = evpose(&["bench", "--sweep", "sideways"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn initialization_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("t_sec,x_px,y_px,polarity\n");
    for i in 0..400 {
        csv += &format!("{},{},{},1\n", i as f64 * 5e-5, (i * 7 % 640) as f64, (i * 13 % 480) as f64);
    }
    write(dir.path(), "noise.csv", &csv);
    ok(&evpose(&["synth", "--config", &write(dir.path(), "c.json", SHORT), "--out", "s", "--quiet"], dir.path()));
    let out = evpose(
        &["track", "--events", "noise.csv", "--model", "s/model.json", "--intrinsics", "s/intrinsics.json", "--out", "t.txt"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn static_scene_gives_constant_trajectory() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"motion": {"w": [0, 0, 0], "v": [0, 0, 0], "duration": 0.2}, "synth": {"noise_sigma": 0.0}}"#,
    );
    ok(&evpose(&["synth", "--config", &cfg, "--seed", "2", "--out", "s", "--quiet"], dir.path()));
    ok(&evpose(
        &[
            "track", "--config", &cfg, "--events", "s/events.csv", "--model", "s/model.json", "--intrinsics",
            "s/intrinsics.json", "--init", "s/pose0.json", "--out", "est.txt", "--quiet",
        ],
        dir.path(),
    ));
    let est = tum(&dir.path().join("est.txt"));
    let truth = tum(&dir.path().join("s/truth.txt"));
    assert_eq!(est.len(), 10);
    for row in &est {
        for c in 1..8 {
            assert!((row[c] - truth[0][c]).abs() < 1e-6, "{row:?} vs {:?}", truth[0]);
        }
    }
    let log = fs::read_to_string(dir.path().join("est.txt.windows.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("t_center,n_events,n_assigned,n_rejected,iterations,cost,coasting"));
    assert_eq!(log.lines().count(), 11);
    assert!(log.lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn mm_tracks_outlier_input_at_least_as_well_as_ls() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"motion": {"duration": 0.4}, "synth": {"outlier_rate": 0.3}}"#);
    ok(&evpose(&["synth", "--config", &cfg, "--seed", "8", "--out", "s", "--quiet"], dir.path()));
    for est in ["ls", "mm"] {
        let out = format!("{est}.txt");
        ok(&evpose(
            &[
                "track", "--config", &cfg, "--estimator", est, "--events", "s/events.csv", "--model", "s/model.json",
                "--intrinsics", "s/intrinsics.json", "--init", "s/pose0.json", "--out", &out, "--quiet",
            ],
            dir.path(),
        ));
    }
    let (ls, mm) = (ate(dir.path(), "ls.txt", "s/truth.txt"), ate(dir.path(), "mm.txt", "s/truth.txt"));
    assert!(mm <= ls, "mm {mm} ls {ls}");
}

#[test]
fn detect_init_track_pipeline() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"motion": {"duration": 0.4}}"#);
    ok(&evpose(&["synth", "--config", &cfg, "--seed", "1", "--out", "s", "--quiet"], dir.path()));
    ok(&evpose(&["detect", "--config", &cfg, "--events", "s/events.csv", "--out", "lines.json", "--quiet"], dir.path()));
    let lines: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("lines.json")).unwrap()).unwrap();
    assert!(lines.as_array().unwrap().len() >= 10);
    assert!(lines[0]["support"].as_u64().unwrap() > 0);
    ok(&evpose(
        &["init", "--config", &cfg, "--model", "s/model.json", "--lines", "lines.json", "--intrinsics", "s/intrinsics.json", "--out", "pose.json", "--quiet"],
        dir.path(),
    ));
    let pose: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("pose.json")).unwrap()).unwrap();
    assert_eq!(pose["rotation"].as_array().unwrap().len(), 9);
    assert!(pose["achieved_count"].as_u64().unwrap() >= 10);
    ok(&evpose(
        &[
            "track", "--config", &cfg, "--events", "s/events.csv", "--model", "s/model.json", "--intrinsics",
            "s/intrinsics.json", "--init", "pose.json", "--out", "est.txt", "--log", "log.csv", "--quiet",
        ],
        dir.path(),
    ));
    let log = fs::read_to_string(dir.path().join("log.csv")).unwrap();
    assert!(log.lines().skip(1).all(|l| l.ends_with(",0")), "{log}");
    let out = evpose(&["eval", "--estimate", "est.txt", "--truth", "s/truth.txt"], dir.path());
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let normalized: f64 = text.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!(normalized < 0.01, "{text}");
}

#[test]
fn quick_bench_is_fast_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let start = Instant::now();
    ok(&evpose(&["bench", "--sweep", "noise", "--trials", "1", "--seed", "3", "--out", "a.csv", "--quiet"], dir.path()));
    assert!(start.elapsed().as_secs_f64() < 10.0, "{:?}", start.elapsed());
    let report = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("parameter,value,estimator,median_err_r,mean_err_r,median_err_t,mean_err_t"));
    assert_eq!(lines.count(), 6 * 4);

    ok(&evpose(&["bench", "--sweep", "outliers", "--trials", "3", "--seed", "3", "--out", "b.csv", "--quiet"], dir.path()));
    let threaded = Command::new(env!("CARGO_BIN_EXE_evpose"))
        .args(["bench", "--sweep", "outliers", "--trials", "3", "--seed", "3", "--out", "c.csv", "--quiet"])
        .current_dir(dir.path())
        .env("EVPOSE_THREADS", "3")
        .output()
        .unwrap();
    ok(&threaded);
    let b = fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(b, fs::read(dir.path().join("c.csv")).unwrap());
    assert_eq!(String::from_utf8(b).unwrap().lines().count(), 1 + 6 * 4);

    let out = evpose(&["bench", "--sweep", "lines", "--trials", "1", "--estimator", "ls,mm"], dir.path());
    ok(&out);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1 + 9 * 2);
}

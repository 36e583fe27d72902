use std::path::Path;
use std::process::{Command, Output};

fn robust_bo(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robust-bo"))
        .args(args)
        .env("ROBUST_BO_CACHE", cache)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_names_exit_with_config_status_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = robust_bo(&["run", "--objective", "nope", "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gmm_2d"));
    assert!(!out.exists());

    let o = robust_bo(
        &["run", "--objective", "sin_linear", "--acquisition", "pi", "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nes-ep"));
    assert!(!out.exists());
}

#[test]
fn bad_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "iterations = 2\nrepetitions = 0\n[objective]\nname = \"sin_linear\"\n").unwrap();
    let o = robust_bo(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let missing = robust_bo(&["run", "--config", "/definitely/not/here.toml"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn unsupported_ground_truth_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = robust_bo(&["ground-truth", "--objective", "hartmann_6d"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn ground_truth_is_cached() {
    let dir = tempfile::tempdir().unwrap();
    let first = robust_bo(&["ground-truth", "--objective", "sin_linear"], dir.path());
    assert!(first.status.success(), "{}", stderr(&first));
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 1);
    let before = std::fs::metadata(&files[0]).unwrap().modified().unwrap();
    let second = robust_bo(&["ground-truth", "--objective", "sin_linear"], dir.path());
    assert!(second.status.success());
    assert_eq!(std::fs::metadata(&files[0]).unwrap().modified().unwrap(), before);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn repetitions_write_traces_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let o = robust_bo(
        &[
            "run", "--objective", "sin_linear", "--acquisition", "ei", "--iters", "3", "--reps", "4", "--seed", "11",
            "--out", out.to_str().unwrap(),
        ],
        &dir.path().join("cache"),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for rep in 0..4 {
        let text = std::fs::read_to_string(out.join(format!("trace_{rep:03}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("iter,x_1,y,inc_1,regret,distance,wall_ms,g_inc\n"));
    }
    assert!(!out.join("trace_004.csv").exists());
    let summary = std::fs::read_to_string(out.join("summary.toml")).unwrap();
    assert!(summary.contains("completed = 4"));

    let again = dir.path().join("again.csv");
    let o = robust_bo(&["aggregate", out.to_str().unwrap(), "--out", again.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read_to_string(out.join("aggregate.csv")).unwrap(),
        std::fs::read_to_string(again).unwrap()
    );
}

#[test]
fn gravity_subcommand_reports_objective() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("path.csv");
    let o = robust_bo(&["gravity", "--alpha", "17.5", "--speed", "4.55", "--trajectory", path.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("objective = "));
    assert!(std::fs::read_to_string(path).unwrap().starts_with("t,x,y\n"));
    let outside = robust_bo(&["gravity", "--alpha", "90", "--speed", "4.55"], dir.path());
    assert_eq!(outside.status.code(), Some(2));
}

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn yule(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_yule")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("yule-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn simulate_writes_segment_csv_deterministically() {
    let a = stdout(&yule(&["simulate", "--rate", "2", "--horizon", "1", "--dim", "3", "--seed", "9"]));
    let b = stdout(&yule(&["simulate", "--rate", "2", "--horizon", "1", "--dim", "3", "--seed", "9"]));
    assert_eq!(a, b);
    assert!(a.starts_with("segment_id,parent_id,birth_time,x0,x1,x2,y0,y1,y2\n0,-1,0,0,0,0,"));
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = scratch("config");
    let cfg = dir.join("sim.conf");
    fs::write(&cfg, "# one branch\ndim = 3\nrate = 4\nseed = 5\n").unwrap();
    let from_file = stdout(&yule(&["branch", "--config", cfg.to_str().unwrap()]));
    assert!(from_file.starts_with("turn_index,time,x0,x1,x2\n0,0,0,0,0\n"));
    let overridden = stdout(&yule(&["branch", "--config", cfg.to_str().unwrap(), "--dim", "1"]));
    assert!(overridden.starts_with("turn_index,time,x0\n"));
    fs::write(&cfg, "colour = red\n").unwrap();
    assert_eq!(yule(&["branch", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn radius_survey_covers_the_grid() {
    let out = stdout(&yule(&["radius-survey", "--rates", "0.5,2", "--horizons", "1,2", "--trials", "10"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "rate,horizon,trial,seed,radius,total_length,leaf_count,branch_points");
    assert_eq!(lines.len(), 1 + 4 * 10);
    assert!(lines.iter().skip(1).all(|l| l.split(',').count() == 8));
}

#[test]
fn connect_mc_writes_hit_column() {
    let out = stdout(&yule(&["connect-mc", "--d", "0", "--r", "0.1", "--trials", "20"]));
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].ends_with(",hit_0"));
    assert!(lines[1..].iter().all(|l| l.ends_with(",1")));
}

#[test]
fn solve_fe_writes_metadata_and_grid() {
    let dir = scratch("fe");
    let file = dir.join("q.csv");
    let o = yule(&[
        "solve-fe",
        "--rate",
        "1",
        "--r",
        "0.3",
        "--tmax",
        "0.5",
        "--dt",
        "0.05",
        "--nalpha",
        "16",
        "--ns",
        "16",
        "--out",
        file.to_str().unwrap(),
    ]);
    stdout(&o);
    let text = fs::read_to_string(&file).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "# rate=1 r=0.3 tmax=0.5 dmax=0.8 dt=0.05 dd=0.05 nalpha=16 ns=16");
    assert_eq!(lines.next().unwrap(), "t,d,q");
    assert_eq!(lines.count(), 11 * 17);
    let bad = yule(&["solve-fe", "--rate", "1", "--r", "0.33", "--tmax", "0.5", "--dt", "0.05"]);
    assert_eq!(bad.status.code(), Some(2));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn check_runs_selected_criteria() {
    let dir = scratch("check");
    let out = stdout(&yule(&["check", "--criteria", "1,7", "--out", dir.to_str().unwrap()]));
    assert!(out.contains("criterion  1 [PASS]"));
    assert!(out.contains("criterion  7 [PASS]"));
    assert!(!out.contains("criterion  2"));
    assert!(dir.join("bounds.csv").exists());
    assert!(dir.join("criterion_07_bounds.csv").exists());
    assert_eq!(yule(&["check", "--criteria", "11"]).status.code(), Some(2));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn run_reproduces_csv_byte_for_byte() {
    let dir = scratch("run");
    let cfg = dir.join("exp.conf");
    fs::write(&cfg, "kind = scaling\ntrials = 300\nseed = 4\nhorizon = 2\ns = 2\n").unwrap();
    let (a, b) = (dir.join("a"), dir.join("b"));
    for d in [&a, &b] {
        stdout(&yule(&["run", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]));
    }
    for f in ["scaling_samples.csv", "scaling_summary.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let o = yule(&["run", "--config", cfg.to_str().unwrap(), "--set", "rates=1"]);
    assert_eq!(o.status.code(), Some(2));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn thread_cap_is_accepted() {
    let o = Command::new(env!("CARGO_BIN_EXE_yule"))
        .env("YULE_THREADS", "1")
        .args(["radius-survey", "--trials", "5"])
        .output()
        .unwrap();
    assert!(o.status.success());
}

#[test]
fn budget_warning_is_printed() {
    let o = yule(&["radius-survey", "--rate", "3", "--trials", "3", "--max-segments", "10"]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("warning: rate 3"), "{err}");
}

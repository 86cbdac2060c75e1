use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybridssr"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn worked_example_statistic() {
    let d = data("worked_example.csv");
    let e = data("worked_example_e.csv");
    let out = run(&[
        "test",
        "--data",
        d.to_str().unwrap(),
        "--propensities",
        e.to_str().unwrap(),
        "--unadjusted",
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let mut lines = stdout.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,theta1_hat,theta0_hat,sigma_star_sq,statistic,p_value,reject,n_used,df"
    );
    let ipw: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&ipw[..5], ["ipw", "11.00000", "7.27778", "6.37533", "3.29637"]);
    assert_eq!(ipw[6], "true");
    let t: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(t[0], "t_test");
    assert_eq!(t[8], "3");
}

#[test]
fn tau0_accepts_negative_values() {
    let d = data("worked_example.csv");
    let e = data("worked_example_e.csv");
    let out = run(&[
        "test",
        "--data",
        d.to_str().unwrap(),
        "--propensities",
        e.to_str().unwrap(),
        "--tau0",
        "-1",
        "--format",
        "markdown",
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).starts_with("| method |"));
}

fn blinded_file(dir: &Path) -> PathBuf {
    let mut s = String::from("id,study,arm,y,x1\n");
    for i in 0..30 {
        s.push_str(&format!("c{i},1,,,{}\n", 70 + (i * 7) % 11));
    }
    for i in 0..20 {
        s.push_str(&format!("h{i},0,0,,{}\n", 68 + (i * 5) % 13));
    }
    let p = dir.join("blinded.csv");
    std::fs::write(&p, s).unwrap();
    p
}

#[test]
fn strategy2_runs_without_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let p = blinded_file(dir.path());
    let out = run(&["ssr", "--data", p.to_str().unwrap(), "--strategy", "2"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert_eq!(stdout.lines().count(), 2);
    assert!(stdout.lines().nth(1).unwrap().starts_with("2,"));

    // Strategy 1 needs outcomes and says so.
    let out = run(&["ssr", "--data", p.to_str().unwrap(), "--strategy", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).starts_with("E:"));
}

#[test]
fn summarize_masked() {
    let dir = tempfile::tempdir().unwrap();
    let p = blinded_file(dir.path());
    let out = run(&["summarize", "--data", p.to_str().unwrap(), "--masked"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let s = text(&out.stdout);
    assert!(s.starts_with("group,n,x1_mean,x1_sd,y_mean,y_sd\n"), "{s}");
    assert!(!s.contains("treated"), "{s}");
}

#[test]
fn weights_writes_per_subject_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = blinded_file(dir.path());
    let w = dir.path().join("w.csv");
    let out = run(&["weights", "--data", p.to_str().unwrap(), "--out", w.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let written = std::fs::read_to_string(&w).unwrap();
    assert_eq!(written.lines().count(), 51);
    assert!(written.starts_with("id,study,e,w_r1,w_r0\n"));
    assert!(text(&out.stdout).starts_with("quantity,study,n,min,q1,median,q3,max\n"));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"scenario.ids": [1, 4], "sim.reps": 5}"#).unwrap();
    let mut files = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let f = dir.path().join(format!("m{i}.csv"));
        let out = bin()
            .env("HYBRIDSSR_THREADS", threads)
            .args([
                "simulate",
                "--config",
                cfg.to_str().unwrap(),
                "--seed",
                "99",
                "--out",
                f.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", text(&out.stderr));
        files.push(std::fs::read(&f).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(text(&files[0]).lines().count(), 3);
}

#[test]
fn exit_codes() {
    let out = run(&["simulate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).starts_with("E:usage:"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "id,study,arm,y\na,2,1,1\n").unwrap();
    let out = run(&["summarize", "--data", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).starts_with("E:parse:"), "{}", text(&out.stderr));

    // All outcomes equal: the IPW variance is zero, a numerical failure.
    let flat = dir.path().join("flat.csv");
    std::fs::write(&flat, "id,study,arm,y\nt,1,1,5\nc,1,0,5\nh,0,0,5\n").unwrap();
    let e = dir.path().join("e.csv");
    std::fs::write(&e, "id,e\nt,0.5\nc,0.5\nh,0.5\n").unwrap();
    let out = run(&[
        "test",
        "--data",
        flat.to_str().unwrap(),
        "--propensities",
        e.to_str().unwrap(),
        "--normalize",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));
    assert!(text(&out.stderr).starts_with("E:"));
}

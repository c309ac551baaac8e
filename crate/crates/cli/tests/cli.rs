use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn qprecond(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qprecond"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn run_writes_artifacts_and_reaches_target() {
    let dir = tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = qprecond(&["run", "--algo", "qpgd", "--eps", "1e-6", "--out", out]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let summary = read(dir.path(), "summary.txt");
    assert!(summary.contains("converged = true"));
    assert!(summary.contains("gd32_bits = "));
    let trace = read(dir.path(), "trace.csv");
    assert!(trace.starts_with("t,err,fgap,bound,"));
    assert!(read(dir.path(), "ledger.csv").starts_with("round,tag,direction,node,bits,overhead_bits"));
}

#[test]
fn identical_runs_give_identical_files() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    for d in [&a, &b] {
        let res = qprecond(&[
            "run",
            "--algo",
            "qsgd",
            "--seed",
            "3",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&res), 0);
    }
    for f in ["trace.csv", "ledger.csv", "summary.txt"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
}

#[test]
fn compare_writes_table() {
    let dir = tempdir().unwrap();
    let res = qprecond(&["compare", "--algos", "qpgd,gd", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&res), 0);
    let table = read(dir.path(), "compare.csv");
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "algorithm,rounds_to_eps,total_bits,ratio_vs_gd");
    assert!(lines[1].starts_with("qpgd,"));
    assert!(lines[2].starts_with("gd,") && lines[2].ends_with(",1.000000"));
    assert!(dir.path().join("qpgd").join("trace.csv").exists());
}

#[test]
fn sweep_reports_largest_stable_step() {
    let dir = tempdir().unwrap();
    let res = qprecond(&["sweep", "--algo", "gd", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&res), 0);
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("largest converged eta = "));
    assert!(read(dir.path(), "sweep.csv").contains("diverged"));
}

#[test]
fn config_file_then_flags() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    let out = dir.path().join("o");
    fs::write(
        &cfg,
        format!(
            "# logistic desk problem\nloss = logistic\nrho = 1\nnodes = 3\nalgo = gd\nout = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let res = qprecond(&["run", "--config", cfg.to_str().unwrap(), "--algo", "qpgd"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let summary = read(&out, "summary.txt");
    assert!(summary.contains("algorithm = qpgd"));
    assert!(summary.contains("nodes = 3"));
}

#[test]
fn bad_config_line_is_an_input_error() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "nodes = 4\nwidth = 3\n").unwrap();
    let res = qprecond(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&res), 3);
    assert!(String::from_utf8_lossy(&res.stderr).contains(":2:"));
}

#[test]
fn input_errors_exit_3() {
    assert_eq!(code(&qprecond(&["run", "--nodes", "0"])), 3);
    assert_eq!(code(&qprecond(&["run", "--dataset", "/definitely/missing.svm"])), 3);
    assert_eq!(code(&qprecond(&["run", "--set", "eps"])), 3);
    assert_eq!(code(&qprecond(&["frobnicate"])), 3);
    // a quadratic has no Hessian-Lipschitz constant to build a Newton ball from
    let dir = tempdir().unwrap();
    assert_eq!(
        code(&qprecond(&[
            "run",
            "--algo",
            "qnewton",
            "--out",
            dir.path().to_str().unwrap()
        ])),
        3
    );
}

#[test]
fn divergence_exits_2() {
    let dir = tempdir().unwrap();
    let res = qprecond(&[
        "run",
        "--algo",
        "gd",
        "--set",
        "eta=5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("diverged"));
}

#[test]
fn libsvm_dataset() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("data.svm");
    let mut text = String::new();
    for r in 0..80u32 {
        let f = |k: u32| (((r * 37 + k * 11) % 23) as f64 - 11.0) / 7.0;
        let (a, b, c) = (f(1), f(2), f(3));
        let label = 2.0 * a - b + 0.5 * c + 0.01 * f(4);
        text.push_str(&format!("{label} 1:{a} 2:{b} 3:{c}\n"));
    }
    fs::write(&path, text).unwrap();
    let out = dir.path().join("o");
    let res = qprecond(&[
        "run",
        "--dataset",
        path.to_str().unwrap(),
        "--nodes",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(read(&out, "summary.txt").contains("dim = 3"));
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use listrep::TabularMdp;

fn listrep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_listrep"))
        .args(args)
        .env_remove("LISTREP_OUT")
        .output()
        .expect("spawn listrep")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn chain_file_has_the_advertised_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.json");
    let out = listrep(&["gen-env", "chain", "--h", "8", "--delta", "0.02", "-o", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m = TabularMdp::load(&path).unwrap();
    assert_eq!(m.num_actions(), 2);
    assert_eq!(m.prob(0, 0, 0, 1), 0.52);
    assert_eq!(m.prob(0, 0, 1, 1), 0.48);
}

#[test]
fn gen_env_is_deterministic_and_validates() {
    let a = listrep(&["gen-env", "random", "--s", "4", "--a", "2", "--h", "3", "--seed", "7"]);
    let b = listrep(&["gen-env", "random", "--s", "4", "--a", "2", "--h", "3", "--seed", "7"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);

    let bad = listrep(&["gen-env", "chain", "--delta", "0.7"]);
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains("delta"));

    let short = listrep(&["gen-env", "bandit", "--z", "1", "--m", "2", "--n", "2", "--means", "0.1,0.2"]);
    assert_eq!(code(&short), 2);
}

#[test]
fn paper_constants_hit_the_budget() {
    let out = listrep(&["run", "--algo", "strong", "--mode", "paper", "--s", "5", "--a", "2", "--h", "4"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("W ="), "{}", stderr(&out));
}

fn read_dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn only_subdir(root: &Path) -> std::path::PathBuf {
    let dirs: Vec<_> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    dirs[0].clone()
}

#[test]
fn reruns_write_identical_reports_under_the_output_root() {
    let roots = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut outputs = Vec::new();
    for root in &roots {
        let out = Command::new(env!("CARGO_BIN_EXE_listrep"))
            .args(["run", "--algo", "robust-plan", "--env", "chain", "--r-action", "0"])
            .args(["--runs", "100", "--seed", "1"])
            .env("LISTREP_OUT", root.path())
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let dir = only_subdir(root.path());
        assert!(dir.file_name().unwrap().to_string_lossy().ends_with("-seed1"));
        outputs.push(read_dir_files(&dir));
    }
    let names: Vec<_> = outputs[0].iter().map(|f| f.0.as_str()).collect();
    assert_eq!(names, ["chart.svg", "manifest.json", "report.csv", "report.json"]);
    assert_eq!(outputs[0], outputs[1]);

    let csv = String::from_utf8(outputs[0][2].1.clone()).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r_value,runs,distinct_policies,distinct_traces,k50,k90,top1"));
    assert!(lines.next().unwrap().starts_with("0,100,"));
}

#[test]
fn config_files_are_strict_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "algo = \"greedy\"\nrunz = 3\n").unwrap();
    let out = listrep(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("runz"));

    let good = dir.path().join("good.toml");
    fs::write(&good, "algo = \"greedy\"\nenv = \"chain\"\nh = 3\nruns = 50\n").unwrap();
    let target = dir.path().join("out");
    let out = listrep(&[
        "run",
        "--config",
        good.to_str().unwrap(),
        "--runs",
        "7",
        "--output-dir",
        target.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(target.join("report.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("0,7,"));
}

#[test]
fn mismatched_options_are_rejected() {
    for args in [
        &["run", "--algo", "greedy", "--r-action", "0.1"][..],
        &["run", "--algo", "robust-plan", "--env", "chain", "--adv", "0.1"],
        &["run", "--algo", "robust-plan", "--eps0", "0.1"],
        &["run", "--algo", "strong", "--mode", "paper", "--w", "10"],
        &["run", "--algo", "robust-plan", "--runs", "0"],
    ] {
        let out = listrep(args);
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn plan_reports_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    assert_eq!(code(&listrep(&["gen-env", "chain", "--h", "3", "-o", path.to_str().unwrap()])), 0);
    let out = listrep(&["plan", "--mdp", path.to_str().unwrap(), "--r-action", "0"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["policy_value"], v["optimal_value"]);
    assert_eq!(v["policy"][0][0], 0);
}

#[test]
fn verify_subsets_and_negative_control() {
    let out = listrep(&["verify", "--only", "profile-monotone,crit-bounds", "--instances", "5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 2);

    let broken = listrep(&[
        "verify",
        "--only",
        "suboptimality-bound",
        "--instances",
        "60",
        "--inject-fault",
        "flipped-tolerance",
    ]);
    assert_eq!(code(&broken), 4);

    assert_eq!(code(&listrep(&["verify", "--only", "no-such-check"])), 2);
}

#[test]
fn help_lists_the_run_flags() {
    let out = listrep(&["run", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in ["--algo", "--r-values", "--mode", "--canonical", "--jobs", "--samples", "--config", "--out"] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
}

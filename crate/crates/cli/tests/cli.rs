use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_compet-ctl"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{report}"))
        .trim()
        .parse()
        .unwrap()
}

/// Row `label` of a summary table as `[frob, opnorm, regret, cr]`.
fn row(table: &str, label: &str) -> Vec<f64> {
    table
        .lines()
        .find(|l| l.split_whitespace().next() == Some(label))
        .unwrap_or_else(|| panic!("no row {label} in\n{table}"))
        .split_whitespace()
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect()
}

const INVALID: &str = "A = [0.5]\nB_u = [1]\nB_w = [1]\nQ = [-1]\nR = [1]\n";

#[test]
fn check_bundled_scalar_passes() {
    let o = run(&["check", "--system", data("scalar.sys").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 6);
    assert!(out.lines().all(|l| l.starts_with("[PASS]")));
}

#[test]
fn check_invalid_system_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.sys");
    std::fs::write(&p, INVALID).unwrap();
    let o = run(&["check", "--system", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("[FAIL] Q positive definite"));
    let o = run(&["synth", "--system", p.to_str().unwrap(), "--method", "cr"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn parse_error_reports_line_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.sys");
    std::fs::write(&p, "A = [0.5]\nB_u = [1 x]\n").unwrap();
    let o = run(&["check", "--system", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn synth_cr_scalar_ratio() {
    let o = run(&["synth", "--system", data("scalar.sys").to_str().unwrap(), "--method", "cr"]);
    assert_eq!(o.status.code(), Some(0));
    let ratio = value(&stdout(&o), "ratio");
    assert!((ratio - 2.2831956).abs() < 5e-8, "{ratio}");
}

#[test]
fn synth_noncausal_exits_3() {
    let o = run(&["synth", "--system", data("scalar.sys").to_str().unwrap(), "--method", "noncausal"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn table_noncausal_row() {
    let o = run(&[
        "table",
        "--system",
        data("scalar.sys").to_str().unwrap(),
        data("three_state.sys").to_str().unwrap(),
        "--grid",
        "256",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let blocks: Vec<&str> = out.split("# ").filter(|b| !b.is_empty()).collect();
    assert_eq!(blocks.len(), 2);
    for b in blocks {
        let nc = row(b, "noncausal");
        assert_eq!(nc[2], 0.0);
        assert_eq!(nc[3], 1.0);
    }
}

#[test]
fn sweep_cr_matches_synth_certificate() {
    let sys = data("three_state.sys");
    let s = run(&["synth", "--system", sys.to_str().unwrap(), "--method", "cr"]);
    let ratio = value(&stdout(&s), "ratio");
    let o = run(&["sweep", "--system", sys.to_str().unwrap(), "--method", "cr"]);
    assert_eq!(o.status.code(), Some(0));
    let cr = row(&stdout(&o), "cr")[3];
    assert!((cr - ratio).abs() / ratio < 1e-6, "{cr} vs {ratio}");
}

#[test]
fn sweep_csv_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let sys = data("three_state.sys");
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "4", "1"].iter().enumerate() {
        let p = dir.path().join(format!("m{i}.csv"));
        let o = bin()
            .env("COMPET_CTL_THREADS", threads)
            .args(["sweep", "--system", sys.to_str().unwrap(), "--grid", "128", "--out", p.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        outputs.push(std::fs::read(&p).unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(text.starts_with("omega,controller,frob_density,opnorm,regret,cr\n"));
    assert_eq!(text.lines().count(), 1 + 128 * 5);
}

#[test]
fn sim_is_deterministic_and_reads_controller_files() {
    let dir = tempfile::tempdir().unwrap();
    let sys = data("three_state.sys");
    let ctrl = dir.path().join("cr.ctl");
    let o = run(&["synth", "--system", sys.to_str().unwrap(), "--method", "cr", "--out", ctrl.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let args = ["sim", "--system", sys.to_str().unwrap(), "--steps", "2000", "--trials", "3", "--seed", "9"];
    let a = run(&[&args[..], &["--controller", ctrl.to_str().unwrap()]].concat());
    let b = run(&[&args[..], &["--method", "cr"]].concat());
    assert_eq!(a.status.code(), Some(0));
    let (sa, sb) = (stdout(&a), stdout(&b));
    assert!(sa.starts_with("controller,disturbance,mean,stderr,T,trials\n"));
    let strip = |s: &str| s.lines().nth(1).unwrap().split_once(',').unwrap().1.to_string();
    assert_eq!(strip(&sa), strip(&sb));
    assert_eq!(stdout(&run(&[&args[..], &["--method", "cr"]].concat())), sb);
}

#[test]
fn unstable_controller_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let ctrl = dir.path().join("bad.ctl");
    std::fs::write(&ctrl, "kind = feedback\nstates = 0\noutputs = 1\nAc = []\nBc = []\nCc = []\nDx = [1.5]\n").unwrap();
    let o = run(&["sim", "--system", data("scalar.sys").to_str().unwrap(), "--controller", ctrl.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(data("scalar.sys"), dir.path().join("plant.sys")).unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "system = plant.sys\nmethod = h2\ngrid = 64\n").unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "sweep"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("h2 ")) && !out.lines().any(|l| l.starts_with("regret ")));
    let o = run(&["--config", cfg.to_str().unwrap(), "sweep", "--method", "cr,noncausal"]);
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("cr ")) && !out.lines().any(|l| l.starts_with("h2 ")));
}

#[test]
fn sine_disturbance_cost_matches_quarter_period_response() {
    let o = run(&[
        "sim",
        "--system",
        data("scalar.sys").to_str().unwrap(),
        "--method",
        "h2",
        "--disturbance",
        "sine",
        "--omega",
        "1.5707963267948966",
        "--steps",
        "4000",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o).lines().nth(1).unwrap().to_string();
    let mean: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
    // closed loop x⁺ = a x + w with a = 0.5 − k; |T|² at ω = π/2 is (1 + k²)/(1 + a²)
    let p = (0.25 + (4.0625f64).sqrt()) / 2.0;
    let k = 0.5 * p / (1.0 + p);
    let a = 0.5 - k;
    let expect = 0.5 * (1.0 + k * k) / (1.0 + a * a);
    assert!((mean - expect).abs() / expect < 1e-3, "{mean} vs {expect}");
}

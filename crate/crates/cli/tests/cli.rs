use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn privform(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privform"))
        .args(args)
        .output()
        .expect("spawn privform")
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    privform(&args)
}

fn config_in(dir: &Path, name: &str, body: &str) -> PathBuf {
    let data = workspace().join("data");
    let body = body.replace("@DATA@", data.to_str().unwrap());
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn analyze_two_node_matches_closed_form() {
    let tmp = TempDir::new().unwrap();
    let o = run("analyze", &workspace().join("configs/two_node_analyze.toml"), tmp.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("analysis.json")).unwrap()).unwrap();
    let e = v["e_ss_exact"].as_f64().unwrap();
    assert!((e - 1.0 / 24.0).abs() < 1e-12, "{e}");
}

#[test]
fn simulate_writes_trajectory_and_comparison() {
    let tmp = TempDir::new().unwrap();
    let cfg = workspace().join("configs/two_node_simulate.toml");
    let o = run("simulate", &cfg, tmp.path(), &["--trials", "4", "--horizon", "5000", "--seed", "9"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("comparison.json")).unwrap()).unwrap();
    assert_eq!(v["trials"], 4);
    assert_eq!(v["horizon"], 5000);
    assert_eq!(v["seed"], 9);
    let csv = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), ["k", "agent", "dim", "x", "xbar", "e"]);
    // 5001 states for two agents in one dimension.
    assert_eq!(reader.records().count(), 2 * 5001);
}

#[test]
fn unstable_step_size_exits_4() {
    let tmp = TempDir::new().unwrap();
    let cfg = config_in(
        tmp.path(),
        "c.toml",
        "[scenario]\ngraph = \"@DATA@/two_node.json\"\ngamma = 1.5\nprivacy_sigmas = 1.0\n",
    );
    let o = run("analyze", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 4);
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
}

#[test]
fn bad_config_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = config_in(tmp.path(), "c.toml", "[scenario]\ngraph = \"@DATA@/two_node.json\"\ngama = 0.2\n");
    assert_eq!(code(&run("analyze", &cfg, tmp.path(), &[])), 2);
    let missing = tmp.path().join("absent.toml");
    assert_eq!(code(&run("analyze", &missing, tmp.path(), &[])), 2);
    let cfg = config_in(
        tmp.path(),
        "d.toml",
        "[scenario]\ngraph = \"@DATA@/nope.json\"\ngamma = 0.2\nprivacy_sigmas = 1.0\n",
    );
    assert_eq!(code(&run("analyze", &cfg, tmp.path(), &[])), 2);
}

const CODESIGN: &str = r#"
seed = 5

[codesign]
graph = "@DATA@/ten_node.json"
gamma = 0.05
dimension = 2
eps_max = [0.4, 0.9, 0.55, 0.35, 0.8, 0.45, 0.7, 0.5, 0.52, 0.58]
deltas = 0.05
adjacency_bounds = 1.0
process_sigmas = @S@
e_r = @ER@
lambda2_min = 0.2
vartheta = 10.0

[solver]
multistarts = 2
"#;

#[test]
fn error_budget_below_process_floor_exits_3() {
    let tmp = TempDir::new().unwrap();
    // With s_i = 1 and d = 2 the noise-free floor alone exceeds this budget.
    let body = CODESIGN.replace("@S@", "1.0").replace("@ER@", "0.5");
    let cfg = config_in(tmp.path(), "c.toml", &body);
    let o = run("codesign", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn codesign_outputs_are_deterministic_and_reparse() {
    let tmp = TempDir::new().unwrap();
    let body = CODESIGN.replace("@S@", "0.0").replace("@ER@", "8.0");
    let cfg = config_in(tmp.path(), "c.toml", &body);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = run("codesign", &cfg, out, &[]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["problem.json", "solution.json", "solution.dot", "solution_validation.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    let sol: privform_core::io::SolutionFile =
        serde_json::from_str(&fs::read_to_string(a.join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol.epsilons.len(), 10);
    let problem: privform_core::io::ProblemFile =
        serde_json::from_str(&fs::read_to_string(a.join("problem.json")).unwrap()).unwrap();
    assert_eq!(problem.problem().unwrap().e_r, 8.0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("solution_validation.json")).unwrap()).unwrap();
    assert_eq!(report["feasible"], true);
    // The written graph reads back through the graph loader.
    let g = privform_core::io::parse_graph_json(&serde_json::to_string(&sol.graph).unwrap()).unwrap();
    assert_eq!(g.n, 10);
}

#[test]
fn error_budget_sweep_relaxes_privacy() {
    let tmp = TempDir::new().unwrap();
    let body = CODESIGN.replace("@S@", "0.0").replace("@ER@", "2.0")
        + "\n[sweep]\nparameter = \"e_R\"\nvalues = [2.0, 16.0, 64.0]\n";
    let cfg = config_in(tmp.path(), "c.toml", &body);
    let out = tmp.path().join("out");
    let o = run("sweep", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = privform_core::io::parse_sweep_csv(&fs::read_to_string(out.join("sweep.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 3 * 10);
    for agent in 1..=10 {
        let eps: Vec<f64> = rows.iter().filter(|r| r.agent == agent).map(|r| r.epsilon.unwrap()).collect();
        assert_eq!(eps.len(), 3);
        assert!(eps.windows(2).all(|p| p[1] <= p[0] + 1e-6), "agent {agent}: {eps:?}");
    }
    for k in 0..3 {
        assert!(out.join(format!("sweep_{k:02}.json")).exists());
        assert!(out.join(format!("sweep_{k:02}.dot")).exists());
    }
}

#[test]
fn unknown_sweep_parameter_exits_2() {
    let tmp = TempDir::new().unwrap();
    let body = CODESIGN.replace("@S@", "0.0").replace("@ER@", "2.0")
        + "\n[sweep]\nparameter = \"gamma\"\nvalues = [0.1]\n";
    let cfg = config_in(tmp.path(), "c.toml", &body);
    assert_eq!(code(&run("sweep", &cfg, tmp.path(), &[])), 2);
}

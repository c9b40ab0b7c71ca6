use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const EXAMPLE: &str = include_str!("../../../configs/example.toml");

/// The shipped example, shrunk so each run takes a fraction of a second.
fn small_config(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let text = EXAMPLE
        .replace("embed_dim = 384", "embed_dim = 48")
        .replace("train_queries = 200", "train_queries = 24");
    let path = dir.join("run.toml");
    std::fs::write(&path, edit(text)).unwrap();
    path
}

fn agentroute(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agentroute"))
        .args(args)
        .output()
        .unwrap()
}

fn text(out: &Output) -> (String, String) {
    (
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn ok(args: &[&str]) -> String {
    let out = agentroute(args);
    let (stdout, stderr) = text(&out);
    assert!(out.status.success(), "{args:?} failed\n{stdout}\n{stderr}");
    stdout
}

fn fails(args: &[&str]) -> String {
    let out = agentroute(args);
    let (stdout, stderr) = text(&out);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded\n{stdout}");
    stderr
}

#[test]
fn example_config_loads() {
    let cfg =
        agentroute_cli::load_config(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml")).unwrap();
    assert_eq!((cfg.router.pool_size, cfg.router.max_route), (8, 4));
    assert_eq!(cfg.router.temperature, 0.1);
    assert_eq!(cfg.training.lr, 1e-3);
    assert_eq!((cfg.training.batch_size, cfg.training.epochs), (8, 3));
    cfg.runtime().unwrap();
}

#[test]
fn missing_pool_entry_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), |t| t.replace("pool_size = 8", "pool_size = 9"));
    let err = fails(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(err.contains("pool_size is 9 but 8 [[pool]] entries"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), |t| t.replace("temperature = 0.1", "temprature = 0.1"));
    let err = fails(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(err.contains("temprature"), "{err}");
}

#[test]
fn invalid_router_values_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), |t| t.replace("max_route = 4", "max_route = 0"));
    let err = fails(&["infer", "--config", cfg.to_str().unwrap(), "--query", "x"]);
    assert!(err.contains("invalid config"), "{err}");
}

#[test]
fn train_then_infer() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), |t| t);
    let cfg = cfg.to_str().unwrap();
    let out = ok(&["train", "--config", cfg]);
    assert!(out.contains("optimizer steps: 9"), "{out}");
    let csv = std::fs::read_to_string(dir.path().join("out/loss.csv")).unwrap();
    assert!(csv.starts_with("epoch,batch,loss\n"));
    assert_eq!(csv.lines().count(), 1 + 9 + 1);

    let out = ok(&["infer", "--config", cfg, "--query", "[A] asum arate value 3"]);
    assert!(out.contains("answer: [agents "), "{out}");
    assert!(out.contains("total: agent calls"), "{out}");
    assert!(!out.contains("fresh init"), "{out}");
    let trace = std::fs::read_to_string(dir.path().join("out/trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert_eq!(v["query"], "[A] asum arate value 3");
    assert_eq!(v["terminated_by"], "Summarizer");
}

#[test]
fn runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), |t| t);
    let cfg = cfg.to_str().unwrap();
    let queries = dir.path().join("q.txt");
    std::fs::write(&queries, "[A] asum value 1\n\n[C] cgene show 2\n[D] dloop total 3\n").unwrap();
    let artifacts = || {
        ok(&["train", "--config", cfg]);
        ok(&["infer", "--config", cfg, "--queries", queries.to_str().unwrap()]);
        ["out/params.txt", "out/loss.csv", "out/trace.jsonl"].map(|f| std::fs::read(dir.path().join(f)).unwrap())
    };
    let first = artifacts();
    let second = artifacts();
    assert_eq!(first, second);
    assert_eq!(String::from_utf8_lossy(&first[2]).lines().count(), 3);
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), |t| t);
    let cfg = cfg.to_str().unwrap();
    ok(&["train", "--config", cfg]);
    let a = std::fs::read(dir.path().join("out/params.txt")).unwrap();
    ok(&["train", "--config", cfg, "--seed", "8"]);
    let b = std::fs::read(dir.path().join("out/params.txt")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn infer_rejects_params_of_another_shape() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), |t| t);
    ok(&["train", "--config", cfg.to_str().unwrap()]);
    let other = small_config(dir.path(), |t| t.replace("embed_dim = 48", "embed_dim = 32"));
    let err = fails(&["infer", "--config", other.to_str().unwrap(), "--query", "x"]);
    assert!(err.contains("d=48"), "{err}");
}

#[test]
fn unwritable_output_names_the_path() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "a file, not a directory").unwrap();
    let cfg = small_config(dir.path(), |t| t.replace("\"out/loss.csv\"", "\"blocker/loss.csv\""));
    let err = fails(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(err.contains("blocker"), "{err}");
}

#[test]
fn ttt_bounds_and_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), |t| t.replace("params_in = \"out/params.txt\"\n", ""));
    let cfg = cfg.to_str().unwrap();
    let stream = dir.path().join("stream.txt");
    let lines: Vec<String> = (0..12).map(|i| format!("[E] equery {i}")).collect();
    std::fs::write(&stream, lines.join("\n")).unwrap();
    let s = stream.to_str().unwrap();

    let err = fails(&["ttt", "--config", cfg, "--queries", s, "--t-dense", "0"]);
    assert!(err.contains("1..=30"), "{err}");
    fails(&["ttt", "--config", cfg, "--queries", s, "--t-dense", "31"]);

    let out = agentroute(&["ttt", "--config", cfg, "--queries", s, "--t-dense", "5"]);
    let (stdout, stderr) = text(&out);
    assert!(out.status.success(), "{stderr}");
    assert!(stderr.contains("warning: only 5 dense queries"), "{stderr}");
    assert!(stdout.contains("dense phase: agent calls"), "{stdout}");
    let trace = std::fs::read_to_string(dir.path().join("out/trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 12);
}

#[test]
fn gradcheck_passes_and_detects_corruption() {
    let out = ok(&["gradcheck", "--seed", "1"]);
    assert!(out.contains("PASS"), "{out}");
    let bad = agentroute(&["gradcheck", "--seed", "1", "--corrupt-gradient"]);
    assert!(!bad.status.success());
    assert!(text(&bad).0.contains("FAIL"));
}

#[test]
fn simulate_every_topology() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), |t| t);
    let cfg = cfg.to_str().unwrap();
    for topo in ["chain", "star", "complete", "moa"] {
        let out = ok(&["simulate", "--config", cfg, "--topology", topo, "--steps", "4"]);
        assert!(out.contains(&format!("{topo}: structure verified")), "{out}");
        let trace = std::fs::read_to_string(dir.path().join("out/trace.jsonl")).unwrap();
        let v: serde_json::Value = serde_json::from_str(trace.trim()).unwrap();
        assert_eq!(v["steps"].as_array().unwrap().len(), 4);
    }
    let err = fails(&["simulate", "--config", cfg, "--topology", "ring"]);
    assert!(err.contains("ring"), "{err}");
}

#[test]
fn parse_errors_carry_line_numbers() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), |t| t.replace("[embedder]", "[embedder"));
    let err = fails(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(err.contains("line 13"), "{err}");
    let cfg = small_config(dir.path(), |t| t.replace("seed = 7", "seed = 7\nfoo = 1"));
    let err = fails(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(err.contains("unknown field `foo`") && err.contains("line 12"), "{err}");
}

#[test]
fn infer_query_file_of_ten() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), |t| t.replace("params_in = \"out/params.txt\"\n", ""));
    let queries = dir.path().join("q.txt");
    let lines: Vec<String> = (0..10)
        .map(|i| format!("[{}] query number {i}", ["A", "B", "C", "D"][i % 4]))
        .collect();
    std::fs::write(&queries, lines.join("\n")).unwrap();
    let out = ok(&[
        "infer",
        "--config",
        cfg.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
    ]);
    assert!(out.contains("fresh init"), "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("answer: ")).count(), 10);
    assert!(out.contains("[9] steps 2 k=["), "{out}");
    let trace = std::fs::read_to_string(dir.path().join("out/trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 10);
}

#[test]
fn route_cap_equal_to_pool_reaches_dense() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), |t| t.replace("max_route = 4", "max_route = 8"));
    // A zero head makes every logit equal, so all N agents clear the threshold.
    std::fs::create_dir_all(dir.path().join("out")).unwrap();
    agentroute_core::RouterParams::zeros(48, 8)
        .save(&dir.path().join("out/params.txt"))
        .unwrap();
    let out = ok(&["infer", "--config", cfg.to_str().unwrap(), "--query", "[A] x"]);
    assert!(out.contains("k=[8,8]"), "{out}");
    assert!(out.contains("ratio 1.000"), "{out}");
}

#[test]
fn gradcheck_is_repeatable() {
    let a = ok(&["gradcheck", "--seed", "3"]);
    let b = ok(&["gradcheck", "--seed", "3"]);
    assert_eq!(a, b);
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), |t| t);
    let from_config = ok(&["gradcheck", "--config", cfg.to_str().unwrap()]);
    assert!(from_config.starts_with("gradcheck seed 7:"), "{from_config}");
}

#[test]
fn chain_over_four_agents() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), |t| {
        let mut parts: Vec<&str> = t.split("\n[[pool]]\n").collect();
        parts.truncate(5);
        parts.join("\n[[pool]]\n").replace("pool_size = 8", "pool_size = 4")
    });
    let cfg = cfg.to_str().unwrap();
    let out = ok(&["simulate", "--config", cfg, "--topology", "chain", "--steps", "4"]);
    for (step, agent) in [(1, 0), (2, 1), (3, 2), (4, 3)] {
        assert!(out.contains(&format!("step {step}: agents [{agent}]")), "{out}");
    }
    let out = ok(&["simulate", "--config", cfg, "--topology", "complete", "--steps", "3"]);
    assert_eq!(out.matches("agents [0, 1, 2, 3]").count(), 3, "{out}");
}

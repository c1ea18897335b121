use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn effchan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_effchan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TASKS: &str = r#"{"id":"q1","question":"2+2?","answer":"4"}
{"id":"q2","question":"Pick red","choices":["red","blue","green"],"answer":"A"}
{"id":"q3","question":"10*3?","answer":"30"}
"#;

fn config(layers: &str, workflow: &str, n_list: &str, extra: &str) -> String {
    format!(
        r#"dataset_path = "tasks.jsonl"
dataset_name = "toy"
workflow = {workflow}
layer = {layers}
n_agents_list = {n_list}
rounds = 2
model_pool = ["m1", "m2", "m3"]
persona_catalog_path = "personas.toml"
seed = 11
output_dir = "out"
concurrency_limit = 3
{extra}
"#
    )
}

const PERSONAS: &str = r#"[[persona]]
id = "a"
text = "You are A."
[[persona]]
id = "b"
text = "You are B."
"#;

fn setup(cfg: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "tasks.jsonl", TASKS);
    write(dir.path(), "personas.toml", PERSONAS);
    let c = write(dir.path(), "exp.toml", cfg);
    (dir, c)
}

fn lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn kstar_orthonormal_and_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let ortho = write(dir.path(), "o.jsonl", "[1,0,0]\n[0,1,0]\n[0,0,1]\n");
    let o = effchan(&["kstar", p(&ortho)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!((json(&o)["k_star"].as_f64().unwrap() - 3.0).abs() < 1e-12);

    let dup = write(
        dir.path(),
        "d.jsonl",
        "{\"id\":\"a\",\"vector\":[0.3,0.4]}\n{\"id\":\"b\",\"vector\":[0.6,0.8]}\n",
    );
    let o = effchan(&["kstar", p(&dup)]);
    assert!((json(&o)["k_star"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let mask = write(dir.path(), "m.json", "{\"a\": true, \"b\": false}");
    let o = effchan(&["kstar", p(&dup), "--mask", p(&mask)]);
    let v = json(&o);
    assert_eq!(v["conditioned"]["k_star_c"].as_f64(), Some(1.0));
    assert_eq!(v["conditioned"]["k_star_w"].as_f64(), Some(1.0));
}

#[test]
fn kstar_malformed_row_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.jsonl", "[1,0]\n[0,1]\n[0,oops]\n");
    let o = effchan(&["kstar", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));

    let ragged = write(dir.path(), "r.jsonl", "[1,0]\n[0,1,0]\n");
    let o = effchan(&["kstar", p(&ragged)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":2:"));
}

#[test]
fn simulate_csv_is_deterministic() {
    let args = ["simulate", "--alpha", "0.3", "--k-max", "8", "--trials", "100000", "--seed", "7"];
    let a = effchan(&args);
    let b = effchan(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 10);
    assert_eq!(rows[0], "k,mean_residual_fraction,stderr,geo_bound,exp_bound");
    assert!(rows[1].starts_with("0,1.0,0.0,1.0,1.0"), "{}", rows[1]);

    let o = effchan(&["simulate", "--alpha", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_to_file_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.json");
    let o = effchan(&[
        "simulate", "--alpha", "0.5", "--k-max", "3", "--trials", "2000", "--format", "json",
        "--output", p(&out),
    ]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["k_values"].as_array().unwrap().len(), 4);
}

#[test]
fn run_vote_call_accounting() {
    let (dir, cfg) = setup(&config("\"L1\"", "\"vote\"", "[2, 4]", ""));
    let o = effchan(&["run", p(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    for n in [2usize, 4] {
        let ts = lines(&out.join(format!("toy_L1_vote_N{n}.jsonl")));
        assert_eq!(ts.len(), 3);
        for t in &ts {
            assert_eq!(t["schema"], 1);
            assert_eq!(t["calls"].as_array().unwrap().len(), n);
            assert_eq!(t["call_budget"], n);
        }
        let emb = lines(&out.join(format!("toy_L1_vote_N{n}.embeddings.jsonl")));
        assert_eq!(emb.len(), 3 * n);
    }
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["files"].as_array().unwrap().len(), 2);
}

#[test]
fn run_debate_budget_and_determinism() {
    let cfg = config("[\"L3\", \"L4\"]", "\"debate\"", "[3]", "");
    let (dir_a, cfg_a) = setup(&cfg);
    let (dir_b, cfg_b) = setup(&cfg);
    assert!(effchan(&["run", p(&cfg_a)]).status.success());
    assert!(effchan(&["run", p(&cfg_b)]).status.success());
    for name in [
        "toy_L3_debate_N3.jsonl",
        "toy_L4_debate_N3.jsonl",
        "toy_L4_debate_N3.embeddings.jsonl",
    ] {
        let a = fs::read(dir_a.path().join("out").join(name)).unwrap();
        let b = fs::read(dir_b.path().join("out").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    for t in lines(&dir_a.path().join("out/toy_L3_debate_N3.jsonl")) {
        assert_eq!(t["calls"].as_array().unwrap().len(), 6);
        assert_eq!(t["rounds"], 2);
    }
}

#[test]
fn run_rejects_invalid_layer_and_small_pool() {
    let (_d, cfg) = setup(&config("\"L7\"", "\"vote\"", "[2]", ""));
    let o = effchan(&["run", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("L7"));

    let (d, _) = setup("");
    write(d.path(), "personas.toml", "[[persona]]\nid = \"only\"\ntext = \"x\"\n");
    let cfg = write(d.path(), "exp.toml", &config("\"L2\"", "\"vote\"", "[2]", ""));
    let o = effchan(&["run", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("insufficient pool"), "{}", stderr(&o));
}

#[test]
fn run_resumes_by_task_id() {
    let (dir, cfg) = setup(&config("\"L1\"", "\"vote\"", "[2]", ""));
    // simulate an interrupted run: only q1 was written
    write(dir.path(), "tasks_full.jsonl", TASKS);
    write(dir.path(), "tasks.jsonl", TASKS.lines().next().unwrap());
    let first = effchan(&["run", p(&cfg)]);
    assert!(first.status.success(), "{}", stderr(&first));
    // same config file contents, dataset file grows
    fs::copy(dir.path().join("tasks_full.jsonl"), dir.path().join("tasks.jsonl")).unwrap();
    let second = effchan(&["run", p(&cfg)]);
    assert!(second.status.success(), "{}", stderr(&second));
    let m = json(&second);
    assert_eq!(m["files"][0]["tasks_skipped"], 1);
    assert_eq!(m["files"][0]["tasks_written"], 2);
    let ids: Vec<String> = lines(&dir.path().join("out/toy_L1_vote_N2.jsonl"))
        .iter()
        .map(|t| t["task_id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(ids, ["q1", "q2", "q3"]);

    // a changed config must not append to the same store
    write(dir.path(), "exp.toml", &config("\"L1\"", "\"vote\"", "[2]", "[mock]\naccuracy = 0.9\n"));
    let third = effchan(&["run", p(&cfg)]);
    assert_eq!(third.status.code(), Some(2));
    assert!(stderr(&third).contains("different config"));
}

#[test]
fn run_unreachable_backend_exits_3() {
    let extra = r#"embed = false
[backend]
kind = "openai"
chat_url = "http://127.0.0.1:9/v1"
max_retries = 1
retry_base_ms = 1
timeout_s = 2
"#;
    let (dir, cfg) = setup(&config("\"L1\"", "\"vote\"", "[2]", extra));
    let o = effchan(&["run", p(&cfg)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(!dir.path().join("out/toy_L1_vote_N2.jsonl").exists());
}

#[test]
fn run_missing_secret_exits_3() {
    let extra = r#"[backend]
kind = "openai"
chat_url = "http://127.0.0.1:9/v1"
chat_api_key_env = "EFFCHAN_TEST_SURELY_UNSET_KEY"
embed_model = "e"
"#;
    let (_d, cfg) = setup(&config("\"L1\"", "\"vote\"", "[2]", extra));
    let o = effchan(&["run", p(&cfg)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn analyze_bundle_from_mock_run() {
    let (dir, cfg) = setup(&config(
        "[\"L1\", \"L2\", \"L3\", \"L4\"]",
        "[\"vote\", \"debate\"]",
        "[2, 4]",
        "",
    ));
    assert!(effchan(&["run", p(&cfg)]).status.success());
    let store = dir.path().join("out");
    let o = effchan(&["analyze", p(&store), "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = store.join("report");
    let headers = [
        ("summaries.csv", "dataset,layer,workflow,n_agents,rounds,task_count,correct_count,invalid_count,accuracy,k_star,k_star_c,k_star_w,mean_cosine,kstar_mode"),
        ("accuracy_vs_n.csv", "dataset,layer,workflow,n_agents,accuracy"),
        ("marginal_gains.csv", "dataset,layer,workflow,n_agents,delta_per_agent"),
        ("agents_to_match.csv", "dataset,workflow,layer,baseline_n,baseline_accuracy,n_match,accuracy_at_match"),
        ("boundary.csv", "dataset,layer,workflow,n_agents,k_star_c,k_star_w,side,tie"),
        ("kstar_vs_accuracy.csv", "dataset,layer,workflow,n_agents,k_star,accuracy"),
    ];
    for (name, header) in headers {
        let text = fs::read_to_string(report.join(name)).unwrap();
        assert_eq!(text.lines().next(), Some(header), "{name}");
    }
    let summaries = fs::read_to_string(report.join("summaries.csv")).unwrap();
    assert_eq!(summaries.lines().count(), 1 + 16);
    for name in ["permutation.json", "regression.json", "report.json"] {
        let v: Value = serde_json::from_str(&fs::read_to_string(report.join(name)).unwrap()).unwrap();
        assert!(!v.is_null() || name == "permutation.json");
    }
}

#[test]
fn analyze_without_embeddings_degrades() {
    let (dir, cfg) = setup(&config("[\"L1\", \"L3\"]", "\"vote\"", "[2, 4]", "embed = false"));
    assert!(effchan(&["run", p(&cfg)]).status.success());
    let store = dir.path().join("out");
    let o = effchan(&["analyze", p(&store)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let receipt = json(&o);
    assert!(!receipt["warnings"].as_array().unwrap().is_empty());
    assert!(stderr(&o).contains("no embeddings file"));
    let text = fs::read_to_string(store.join("report/summaries.csv")).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row.len(), 14);
    assert!(row[8].parse::<f64>().is_ok());
    assert!(row[9].is_empty() && row[10].is_empty() && row[11].is_empty());
}

#[test]
fn analyze_merges_stores_by_recounting() {
    let (dir_a, cfg_a) = setup(&config("\"L1\"", "\"vote\"", "[2]", "[mock]\naccuracy = 1.0\n"));
    let (dir_b, _) = setup("");
    write(dir_b.path(), "tasks.jsonl", TASKS.lines().next().unwrap());
    let cfg_b = write(
        dir_b.path(),
        "exp.toml",
        &config("\"L1\"", "\"vote\"", "[2]", "[mock]\naccuracy = 0.0\n"),
    );
    assert!(effchan(&["run", p(&cfg_a)]).status.success());
    assert!(effchan(&["run", p(&cfg_b)]).status.success());
    let out = dir_a.path().join("merged");
    let o = effchan(&[
        "analyze",
        p(&dir_a.path().join("out")),
        p(&dir_b.path().join("out")),
        "--output",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let s = &report["summaries"][0];
    assert_eq!(s["task_count"], 4);
    assert_eq!(s["correct_count"], 3);
    // recomputed 3/4, not the mean of 1.0 and 0.0
    assert_eq!(s["accuracy"].as_f64(), Some(0.75));
}

#[test]
fn analyze_empty_store_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = effchan(&["analyze", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bounds_on_binary_channel() {
    // X trivial, Y uniform bit, Z = Y through a BSC(0.1)
    let joint = r#"{"alphabets":[1,2,2],"probs":[0.45,0.05,0.05,0.45]}"#;
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "j.json", joint);
    let o = effchan(&["bounds", p(&path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&o);
    assert!((v["h_y_given_x"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((v["i_mas"].as_f64().unwrap() - 0.5310044064107188).abs() < 1e-12);

    let bad = write(dir.path(), "bad.json", r#"{"alphabets":[1,2,2],"probs":[0.5,0.5]}"#);
    assert_eq!(effchan(&["bounds", p(&bad)]).status.code(), Some(2));
}

#[test]
fn fit_alpha_recovers_planted_value() {
    let mut csv = String::from("k,recovered_fraction\n");
    for k in 0..=10 {
        csv.push_str(&format!("{k},{}\n", 1.0 - (-0.2 * k as f64).exp()));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "c.csv", &csv);
    let o = effchan(&["fit-alpha", p(&path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&o);
    assert!((v["alpha_hat"].as_f64().unwrap() - 0.2).abs() < 1e-6);
    assert_eq!(v["label"], "model fit");

    let bad = write(dir.path(), "b.csv", "k,recovered_fraction\n1,abc\n");
    let o = effchan(&["fit-alpha", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":2:"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(effchan(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(effchan(&["simulate"]).status.code(), Some(2));
    assert_eq!(effchan(&["--help"]).status.code(), Some(0));
}

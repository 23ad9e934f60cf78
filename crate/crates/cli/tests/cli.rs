use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scenemem::oracle::oracle_scores;
use scenemem::vsf::encode_stream;
use scenemem::{Dims, RecallResultJson, TieredStore};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scenemem"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn scenemem")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Generates a 300-frame planted stream with three probe queries and ingests
/// it with default hyperparameters.
fn ingested(dir: &Path) -> PathBuf {
    let gen = run(
        &[
            "generate",
            "--out",
            "s.vsf",
            "--truth",
            "truth.json",
            "--queries",
            "q.jsonl",
            "--query-count",
            "3",
            "--frames",
            "300",
        ],
        dir,
    );
    assert_eq!(code(&gen), 0, "{gen:?}");
    let ing = run(
        &[
            "ingest",
            "--input",
            "s.vsf",
            "--store",
            "st",
            "--tau",
            "0.8",
            "--max-scene-len",
            "8",
            "--overlap",
            "1",
            "--window-a",
            "2",
        ],
        dir,
    );
    assert_eq!(code(&ing), 0, "{ing:?}");
    dir.join("st")
}

fn read_results(path: &Path) -> Vec<RecallResultJson> {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn ingest_happy_path_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let st = ingested(dir.path());
    assert!(st.join("manifest.json").exists());
    assert!(st.join("cold.vsc").exists());
    assert!(st.join("engine.json").exists());
}

#[test]
fn ingest_summary_reports_bytes() {
    let dir = tempfile::tempdir().unwrap();
    run(
        &["generate", "--out", "s.vsf", "--frames", "50"],
        dir.path(),
    );
    let out = run(&["ingest", "--input", "s.vsf", "--store", "st"], dir.path());
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("ingested 50 frames"), "{text}");
    assert!(text.contains("hot bytes"), "{text}");
    assert!(text.contains("cold bytes"), "{text}");
}

#[test]
fn missing_input_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["ingest", "--input", "absent.vsf", "--store", "st"],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn out_of_range_tau_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    run(
        &["generate", "--out", "s.vsf", "--frames", "20"],
        dir.path(),
    );
    let out = run(
        &[
            "ingest", "--input", "s.vsf", "--store", "st", "--tau", "1.5",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("st").exists());
}

#[test]
fn config_file_values_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    run(
        &["generate", "--out", "s.vsf", "--frames", "20"],
        dir.path(),
    );
    fs::write(dir.path().join("cfg.json"), r#"{"tau": 1.5}"#).unwrap();
    let bad = run(
        &[
            "ingest", "--input", "s.vsf", "--store", "a", "--config", "cfg.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&bad), 2);
    let ok = run(
        &[
            "ingest", "--input", "s.vsf", "--store", "b", "--config", "cfg.json", "--tau", "0.7",
        ],
        dir.path(),
    );
    assert_eq!(code(&ok), 0, "{ok:?}");
    let engine: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("b/engine.json")).unwrap())
            .unwrap();
    assert_eq!(engine["config"]["tau"], 0.7);
}

#[test]
fn probe_query_selects_its_scene_with_oracle_scores() {
    let dir = tempfile::tempdir().unwrap();
    let st = ingested(dir.path());
    let out = run(
        &[
            "query",
            "--store",
            "st",
            "--queries",
            "q.jsonl",
            "--top-k",
            "3",
            "--out",
            "r.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{out:?}");
    let results = read_results(&dir.path().join("r.json"));
    assert_eq!(results.len(), 3);

    let store = TieredStore::open(&st, false).unwrap();
    let tokens: Vec<Vec<f32>> = store
        .manifest()
        .scenes
        .iter()
        .map(|e| e.token.clone())
        .collect();
    let queries: Vec<serde_json::Value> = fs::read_to_string(dir.path().join("q.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    for (r, q) in results.iter().zip(&queries) {
        let label = r.label.as_deref().unwrap();
        let scene: u64 = label.strip_prefix("scene ").unwrap().parse().unwrap();
        assert!(r.selected.contains(&scene), "{label}: {:?}", r.selected);
        assert!(r.selected.len() <= 3);

        // every stored scene is visible at the final timestamp except the flushed one
        let v: Vec<f32> = serde_json::from_value(q["embedding"].clone()).unwrap();
        let expected = oracle_scores(&v, &tokens[..r.scores.len()]);
        assert_eq!(r.scores.len(), tokens.len() - 1);
        for ((id, s), e) in r.scores.iter().zip(&expected) {
            assert!(
                (s - e).abs() <= 1e-9 * e.abs().max(1.0),
                "scene {id}: {s} vs {e}"
            );
        }
        assert!(r.latency_ms.is_some());
    }
}

#[test]
fn empty_queries_file_gives_empty_array() {
    let dir = tempfile::tempdir().unwrap();
    ingested(dir.path());
    fs::write(dir.path().join("none.jsonl"), "").unwrap();
    let out = run(
        &[
            "query",
            "--store",
            "st",
            "--queries",
            "none.jsonl",
            "--out",
            "r.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    assert!(read_results(&dir.path().join("r.json")).is_empty());
}

#[test]
fn query_with_other_dimension_is_data_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    ingested(dir.path());
    let good = fs::read_to_string(dir.path().join("q.jsonl")).unwrap();
    let first = good.lines().next().unwrap();
    let wrong = r#"{"query_time": 1.0, "embedding": [1, 0, 0, 0, 0, 0, 0, 0]}"#;
    fs::write(
        dir.path().join("mixed.jsonl"),
        format!("{first}\n{wrong}\n"),
    )
    .unwrap();
    let out = run(
        &["query", "--store", "st", "--queries", "mixed.jsonl"],
        dir.path(),
    );
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("query 1"), "{err}");
}

#[test]
fn at_ingest_matches_post_stream_answers() {
    let dir = tempfile::tempdir().unwrap();
    ingested(dir.path());
    // probes at a spread of times, out of order, including a duplicate and
    // times exactly on frame timestamps
    let center: serde_json::Value = serde_json::from_str(
        fs::read_to_string(dir.path().join("q.jsonl"))
            .unwrap()
            .lines()
            .nth(1)
            .unwrap(),
    )
    .unwrap();
    let mut lines = String::new();
    for t in [5.0, 0.0, 0.04, 2.5, 11.96, 5.0, 100.0, 1.28, 7.77] {
        lines.push_str(&format!(
            "{{\"query_time\": {t}, \"embedding\": {}}}\n",
            center["embedding"]
        ));
    }
    fs::write(dir.path().join("times.jsonl"), lines).unwrap();
    let post = run(
        &[
            "query",
            "--store",
            "st",
            "--queries",
            "times.jsonl",
            "--no-timing",
            "--out",
            "post.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&post), 0, "{post:?}");
    let live = run(
        &[
            "query",
            "--store",
            "st",
            "--queries",
            "times.jsonl",
            "--no-timing",
            "--at-ingest",
            "--input",
            "s.vsf",
            "--out",
            "live.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&live), 0, "{live:?}");
    let post = fs::read(dir.path().join("post.json")).unwrap();
    assert_eq!(post, fs::read(dir.path().join("live.json")).unwrap());
    let parsed: Vec<RecallResultJson> = serde_json::from_slice(&post).unwrap();
    assert_eq!(parsed.len(), 9);
    assert_eq!(parsed[0], parsed[5]);
    assert!(parsed.iter().all(|r| r.latency_ms.is_none()));
}

#[test]
fn query_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ingested(dir.path());
    let args = [
        "query",
        "--store",
        "st",
        "--queries",
        "q.jsonl",
        "--no-timing",
    ];
    let a = run(&args, dir.path());
    let b = run(&args, dir.path());
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn inspect_valid_and_verified() {
    let dir = tempfile::tempdir().unwrap();
    ingested(dir.path());
    let out = run(&["inspect", "--store", "st", "--verify"], dir.path());
    assert_eq!(code(&out), 0, "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("scenes"), "{text}");
    assert!(text.contains("token norm"), "{text}");
    assert!(text.contains("verified"), "{text}");
}

#[test]
fn corrupted_cold_byte_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let st = ingested(dir.path());
    let cold = st.join("cold.vsc");
    let mut bytes = fs::read(&cold).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(&cold, bytes).unwrap();

    let plain = run(&["inspect", "--store", "st"], dir.path());
    assert_eq!(code(&plain), 0);
    let out = run(&["inspect", "--store", "st", "--verify"], dir.path());
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("integrity"));
}

#[test]
fn empty_store_reports_zero_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let dims = Dims::new(16, 2, 2).unwrap();
    fs::write(
        dir.path().join("empty.vsf"),
        encode_stream(dims, &[]).unwrap(),
    )
    .unwrap();
    let ing = run(
        &["ingest", "--input", "empty.vsf", "--store", "st"],
        dir.path(),
    );
    assert_eq!(code(&ing), 0, "{ing:?}");
    let out = run(&["inspect", "--store", "st", "--verify"], dir.path());
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("0 scenes"), "{}", stdout(&out));
}

#[test]
fn bench_emits_one_row_per_mode_and_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "bench",
            "--frames",
            "1000,2000,4000,8000",
            "--mode",
            "scene,full",
            "--queries",
            "5",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{out:?}");
    let text = stdout(&out);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);

    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let hot = |mode: &str, frames: &str| -> u64 {
        rows.iter()
            .find(|r| r[col("mode")] == mode && r[col("frames")] == frames)
            .unwrap()[col("hot_bytes")]
        .parse()
        .unwrap()
    };
    // full keeps every frame of 256 B; scene keeps at most 8 frames plus tokens
    assert_eq!(hot("full", "1000"), 64 + 1000 * 256);
    assert!(hot("scene", "8000") < hot("full", "1000"));
}

#[test]
fn bench_uniform_is_full_over_stride() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "bench",
            "--frames",
            "800",
            "--mode",
            "full,uniform:4",
            "--queries",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{out:?}");
    let text = stdout(&out);
    let hot: Vec<u64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(hot[1] - 64, (hot[0] - 64) / 4);
}

#[test]
fn unknown_bench_mode_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["bench", "--frames", "10", "--mode", "sparse"], dir.path());
    assert_eq!(code(&out), 2);
}

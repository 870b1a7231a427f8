//! End-to-end tests of the `empref` binary: exit codes, file outputs,
//! determinism, and the report renderers.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn empref() -> Command {
    Command::new(env!("CARGO_BIN_EXE_empref"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    empref()
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

const HEADER: &str = "conv_id,utterance_idx,context,prompt,speaker_idx,utterance,selfeval,tags";

/// Writes a raw corpus with 4 mutually opposite emotions, `n` dialogues
/// each, into `<dir>/raw/<split>.csv`.
fn write_raw_split(dir: &Path, split: &str, n: usize) {
    let emotions = ["afraid", "angry", "sad", "joyful"];
    let mut csv = String::from(HEADER);
    csv.push('\n');
    for emotion in emotions {
        for i in 0..n {
            let id = format!("{split}:{emotion}:{i}");
            csv.push_str(&format!(
                "{id},1,{emotion},situation {i},10,I am {emotion} about event {i} in {split},,\n"
            ));
            csv.push_str(&format!(
                "{id},2,{emotion},situation {i},11,That event {i} sounds very {emotion} to hear about,,\n"
            ));
        }
    }
    let raw = dir.join("raw");
    fs::create_dir_all(&raw).unwrap();
    fs::write(raw.join(format!("{split}.csv")), csv).unwrap();
}

fn import_corpus(dir: &Path) -> PathBuf {
    write_raw_split(dir, "train", 5);
    write_raw_split(dir, "test", 3);
    let corpus = dir.join("corpus.jsonl");
    let out = run(
        &[
            "corpus",
            "import",
            "--raw-dir",
            "raw",
            "--out",
            corpus.to_str().unwrap(),
        ],
        dir,
    );
    assert_eq!(code(&out), 0, "import failed: {}", stderr(&out));
    corpus
}

fn write_lexicons(dir: &Path) -> (PathBuf, PathBuf) {
    let vad = dir.join("vad.tsv");
    fs::write(
        &vad,
        "word\tvalence\tarousal\tdominance\n\
         afraid\t0.10\t0.82\t0.25\nangry\t0.12\t0.89\t0.71\n\
         sad\t0.05\t0.29\t0.16\njoyful\t0.98\t0.62\t0.71\n\
         event\t0.50\t0.40\t0.50\nhear\t0.55\t0.35\t0.50\n",
    )
    .unwrap();
    let intensity = dir.join("intensity.tsv");
    fs::write(
        &intensity,
        "word\temotion\tscore\nafraid\tfear\t0.91\nangry\tanger\t0.90\n\
         sad\tsadness\t0.84\njoyful\tjoy\t0.95\nevent\tanticipation\t0.30\n",
    )
    .unwrap();
    (vad, intensity)
}

#[test]
fn corpus_import_writes_canonical_file() {
    let tmp = TempDir::new().unwrap();
    let corpus = import_corpus(tmp.path());
    let text = fs::read_to_string(&corpus).unwrap();
    assert_eq!(text.lines().count(), 4 * 5 + 4 * 3);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["split"], "train");
    assert_eq!(first["turns"][0]["role"], "speaker");
}

#[test]
fn corpus_import_missing_args_is_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["corpus", "import", "--out", "x.jsonl"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--raw-dir"));
}

#[test]
fn corpus_import_corrupt_csv_names_file_and_line() {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("raw");
    fs::create_dir_all(&raw).unwrap();
    // header missing the required emotion column
    fs::write(
        raw.join("train.csv"),
        "conv_id,utterance_idx,prompt,utterance\nc1,1,s,hello\n",
    )
    .unwrap();
    let out = run(
        &["corpus", "import", "--raw-dir", "raw", "--out", "c.jsonl"],
        tmp.path(),
    );
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("train.csv"), "{err}");
    assert!(err.contains(":1"), "should name the line: {err}");
}

#[test]
fn prefs_build_is_deterministic_and_counts_match() {
    let tmp = TempDir::new().unwrap();
    let corpus = import_corpus(tmp.path());
    let args = |out: &str| {
        vec![
            "prefs".to_string(),
            "build".to_string(),
            "--corpus".to_string(),
            corpus.display().to_string(),
            "--split".to_string(),
            "train".to_string(),
            "--epochs".to_string(),
            "3".to_string(),
            "--seed".to_string(),
            "42".to_string(),
            "--out".to_string(),
            out.to_string(),
        ]
    };
    let run1 = empref()
        .args(args("p1"))
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&run1), 0, "{}", stderr(&run1));
    let run2 = empref()
        .args(args("p2"))
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&run2), 0);
    for epoch in 0..3 {
        let f1 = fs::read(tmp.path().join(format!("p1/prefs_train_epoch{epoch}.jsonl"))).unwrap();
        let f2 = fs::read(tmp.path().join(format!("p2/prefs_train_epoch{epoch}.jsonl"))).unwrap();
        assert_eq!(f1, f2, "epoch {epoch} differs between identical runs");
        // one example per admitted train dialogue
        let lines = String::from_utf8(f1).unwrap().lines().count();
        assert_eq!(lines, 20);
    }
}

#[test]
fn prefs_build_unknown_split_is_usage_error() {
    let tmp = TempDir::new().unwrap();
    let corpus = import_corpus(tmp.path());
    let out = run(
        &[
            "prefs",
            "build",
            "--corpus",
            corpus.to_str().unwrap(),
            "--split",
            "nosuch",
            "--out",
            "p",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_ground_truth_writes_report_and_verifies() {
    let tmp = TempDir::new().unwrap();
    let corpus = import_corpus(tmp.path());
    let (vad, intensity) = write_lexicons(tmp.path());
    let out = run(
        &[
            "eval",
            "--ground-truth",
            "--corpus",
            corpus.to_str().unwrap(),
            "--split",
            "test",
            "--vad",
            vad.to_str().unwrap(),
            "--intensity",
            intensity.to_str().unwrap(),
            "--out",
            "eval_out",
            "--model-label",
            "human",
            "--paper-table",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report_path = tmp.path().join("eval_out/report.json");
    assert!(report_path.exists());
    assert!(tmp.path().join("eval_out/per_example.jsonl").exists());
    let tables = fs::read_to_string(tmp.path().join("eval_out/tables.md")).unwrap();
    assert!(tables.contains("# Templates"));

    let verify = run(
        &["verify", "--report", report_path.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(code(&verify), 0, "{}", stderr(&verify));
    assert!(stdout(&verify).contains("verify ok"));
}

#[test]
fn eval_metrics_length_only_limits_report() {
    let tmp = TempDir::new().unwrap();
    let corpus = import_corpus(tmp.path());
    let out = run(
        &[
            "eval",
            "--ground-truth",
            "--corpus",
            corpus.to_str().unwrap(),
            "--split",
            "test",
            "--metrics",
            "length",
            "--out",
            "len_out",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("len_out/report.json")).unwrap(),
    )
    .unwrap();
    assert!(report["aggregates"]["length"].is_object());
    assert!(report["aggregates"]["feature"].is_null());
    assert!(report["aggregates"]["diversity"].is_null());
}

#[test]
fn eval_empty_generations_is_data_error() {
    let tmp = TempDir::new().unwrap();
    let corpus = import_corpus(tmp.path());
    fs::write(tmp.path().join("empty.jsonl"), "").unwrap();
    let out = run(
        &[
            "eval",
            "--generations",
            "empty.jsonl",
            "--corpus",
            corpus.to_str().unwrap(),
            "--metrics",
            "length",
            "--out",
            "x",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn eval_unknown_metric_is_usage_error() {
    let tmp = TempDir::new().unwrap();
    let corpus = import_corpus(tmp.path());
    let out = run(
        &[
            "eval",
            "--ground-truth",
            "--corpus",
            corpus.to_str().unwrap(),
            "--metrics",
            "nidf,bogus",
            "--out",
            "x",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_unknown_ids_exit_1_and_list_them() {
    let tmp = TempDir::new().unwrap();
    let corpus = import_corpus(tmp.path());
    fs::write(
        tmp.path().join("gen.jsonl"),
        "{\"dialogue_id\":\"missing:id:1\",\"response\":\"hello there\"}\n",
    )
    .unwrap();
    let out = run(
        &[
            "eval",
            "--generations",
            "gen.jsonl",
            "--corpus",
            corpus.to_str().unwrap(),
            "--metrics",
            "length",
            "--out",
            "x",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("missing:id:1"));
}

#[test]
fn eval_rerun_with_same_inputs_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let corpus = import_corpus(tmp.path());
    for out_dir in ["same_out", "same_out"] {
        let out = run(
            &[
                "eval",
                "--ground-truth",
                "--corpus",
                corpus.to_str().unwrap(),
                "--split",
                "test",
                "--metrics",
                "diversity,length",
                "--out",
                out_dir,
            ],
            tmp.path(),
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    // both runs wrote the same path; a third into a fresh dir must match too
    let first = fs::read(tmp.path().join("same_out/report.json")).unwrap();
    let out = run(
        &[
            "eval",
            "--ground-truth",
            "--corpus",
            corpus.to_str().unwrap(),
            "--split",
            "test",
            "--metrics",
            "diversity,length",
            "--out",
            "same_out",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0);
    let second = fs::read(tmp.path().join("same_out/report.json")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn stats_permutation_exact_fixture() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("a.txt"), "1\n2\n").unwrap();
    fs::write(tmp.path().join("b.txt"), "3\n4\n").unwrap();
    let out = run(
        &[
            "stats",
            "--test",
            "permutation",
            "--exact",
            "--a",
            "a.txt",
            "--b",
            "b.txt",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let result: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let p = result["p_value"].as_f64().unwrap();
    assert!((p - 1.0 / 3.0).abs() < 1e-12, "p = {p}");
}

#[test]
fn stats_identical_files_give_high_p() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("a.txt"), "1\n2\n3\n").unwrap();
    fs::write(tmp.path().join("b.txt"), "1\n2\n3\n").unwrap();
    let out = run(
        &[
            "stats",
            "--test",
            "permutation",
            "--a",
            "a.txt",
            "--b",
            "b.txt",
            "--resamples",
            "999",
            "--seed",
            "3",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0);
    let result: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(result["p_value"].as_f64().unwrap() > 0.5);
}

#[test]
fn stats_unknown_test_is_usage_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("a.txt"), "1\n").unwrap();
    let out = run(
        &[
            "stats",
            "--test",
            "nosuch",
            "--a",
            "a.txt",
            "--b",
            "a.txt",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn stats_malformed_vector_is_data_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("a.txt"), "1\nnot-a-number\n").unwrap();
    fs::write(tmp.path().join("b.txt"), "1\n2\n").unwrap();
    let out = run(
        &["stats", "--test", "welch", "--a", "a.txt", "--b", "b.txt"],
        tmp.path(),
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("not-a-number"));
}

#[test]
fn report_markdown_is_deterministic_golden_output() {
    let tmp = TempDir::new().unwrap();
    let report_json = r#"{
  "version": "0.1.0",
  "config": {
    "model_label": "demo",
    "tokenizer": "v1",
    "prompt_mode": "all-context"
  },
  "per_example_path": "per_example.jsonl",
  "aggregates": {
    "n_examples": 3,
    "length": {
      "mean_chars": 10.0,
      "median_chars": 9.0,
      "mean_tokens": 2.5,
      "n": 3
    },
    "diversity": {
      "n_responses": 3,
      "n_empty_token_responses": 0,
      "templates": 3,
      "templates_pct": 100.0,
      "unique_token_sequences": 3,
      "total_nodes_unfolded": 6,
      "folded_nodes_total": 4,
      "span_nodes_folded": 2,
      "span_node_pct": 33.333333333333336,
      "root_children_folded": 2,
      "root_children_pct": 66.66666666666666,
      "compression_pct": 33.33333333333333,
      "unique_start_words": 2
    }
  }
}"#;
    fs::write(tmp.path().join("report.json"), report_json).unwrap();
    let golden = "\
# Evaluation report: demo

- tool version: 0.1.0
- examples: 3
- tokenizer: v1
- prompt mode: all-context

## Diversity (response-trie)

| Model | # Templates | # Span Nodes / Total # Nodes | # Children From Root | Compression Ratio | # Unique Start Words |
|---|---|---|---|---|---|
| demo | 3 (100.0%) | 2 / 6 (33.3%) | 2 (66.7%) | 33.33% | 2 |

## Length

| Model | Mean chars | Median chars | Mean tokens | n |
|---|---|---|---|---|
| demo | 10.0 | 9.0 | 2.5 | 3 |

";
    for _ in 0..2 {
        let out = run(
            &["report", "--in", "report.json", "--format", "md"],
            tmp.path(),
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert_eq!(stdout(&out), golden);
    }
}

#[test]
fn report_csv_has_five_metric_columns() {
    let tmp = TempDir::new().unwrap();
    let corpus = import_corpus(tmp.path());
    let out = run(
        &[
            "eval",
            "--ground-truth",
            "--corpus",
            corpus.to_str().unwrap(),
            "--split",
            "test",
            "--metrics",
            "diversity",
            "--out",
            "d_out",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = run(
        &["report", "--in", "d_out/report.json", "--format", "csv"],
        tmp.path(),
    );
    assert_eq!(code(&csv), 0);
    let text = stdout(&csv);
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(
        header,
        vec![
            "model",
            "# Templates",
            "# Span Nodes / Total # Nodes",
            "# Children From Root",
            "Compression Ratio",
            "# Unique Start Words"
        ]
    );
}

#[test]
fn report_plotdata_row_count_matches_defined_entries() {
    let tmp = TempDir::new().unwrap();
    let corpus = import_corpus(tmp.path());
    let (vad, intensity) = write_lexicons(tmp.path());
    let out = run(
        &[
            "eval",
            "--ground-truth",
            "--corpus",
            corpus.to_str().unwrap(),
            "--split",
            "test",
            "--vad",
            vad.to_str().unwrap(),
            "--intensity",
            intensity.to_str().unwrap(),
            "--out",
            "p_out",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let plot = run(
        &[
            "report",
            "--in",
            "p_out/report.json",
            "--format",
            "plotdata",
        ],
        tmp.path(),
    );
    assert_eq!(code(&plot), 0);
    let text = stdout(&plot);
    let per_example = fs::read_to_string(tmp.path().join("p_out/per_example.jsonl")).unwrap();
    let mut defined = 0usize;
    for line in per_example.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        if v["nidf"].is_number() {
            defined += 1;
        }
        for triple in ["iva_signed", "iva_distance"] {
            if let Some(t) = v[triple].as_object() {
                defined += ["intensity", "valence", "arousal"]
                    .iter()
                    .filter(|k| t[**k].is_number())
                    .count();
            }
        }
    }
    assert_eq!(text.lines().count() - 1, defined);
}

#[test]
fn verify_detects_tampered_report() {
    let tmp = TempDir::new().unwrap();
    let corpus = import_corpus(tmp.path());
    let out = run(
        &[
            "eval",
            "--ground-truth",
            "--corpus",
            corpus.to_str().unwrap(),
            "--split",
            "test",
            "--metrics",
            "length",
            "--out",
            "v_out",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0);
    let report_path = tmp.path().join("v_out/report.json");
    let mut report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    report["aggregates"]["length"]["mean_chars"] = serde_json::json!(1.0);
    fs::write(&report_path, serde_json::to_string_pretty(&report).unwrap()).unwrap();
    let verify = run(
        &["verify", "--report", report_path.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(code(&verify), 1);
    assert!(stderr(&verify).contains("length"));
}

#[test]
fn eval_resolves_lexicons_from_env_dir() {
    let tmp = TempDir::new().unwrap();
    let corpus = import_corpus(tmp.path());
    let lexdir = tmp.path().join("lexicons");
    fs::create_dir_all(&lexdir).unwrap();
    fs::write(
        lexdir.join("NRC-VAD-Lexicon.txt"),
        "afraid\t0.1\t0.8\t0.2\nangry\t0.1\t0.9\t0.7\n",
    )
    .unwrap();
    fs::write(
        lexdir.join("NRC-Emotion-Intensity-Lexicon-v1.txt"),
        "afraid\tfear\t0.9\nangry\tanger\t0.9\n",
    )
    .unwrap();
    let out = empref()
        .args([
            "eval",
            "--ground-truth",
            "--corpus",
            corpus.to_str().unwrap(),
            "--split",
            "test",
            "--metrics",
            "iva",
            "--out",
            "env_out",
        ])
        .env("EMPREF_LEXICON_DIR", &lexdir)
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("env_out/report.json")).unwrap(),
    )
    .unwrap();
    assert!(report["aggregates"]["feature"]["iva_distance_valence"].is_object());
}

#[test]
fn corpus_import_selected_splits_only() {
    let tmp = TempDir::new().unwrap();
    write_raw_split(tmp.path(), "train", 2);
    write_raw_split(tmp.path(), "test", 2);
    let out = run(
        &[
            "corpus",
            "import",
            "--raw-dir",
            "raw",
            "--splits",
            "test",
            "--out",
            "only_test.jsonl",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(tmp.path().join("only_test.jsonl")).unwrap();
    assert!(text.lines().all(|l| l.contains("\"split\":\"test\"")));
    // explicitly requested split without a file is a data error
    let missing = run(
        &[
            "corpus",
            "import",
            "--raw-dir",
            "raw",
            "--splits",
            "valid",
            "--out",
            "x.jsonl",
        ],
        tmp.path(),
    );
    assert_eq!(code(&missing), 1);
}

#[test]
fn stats_out_flag_writes_result_file() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("a.txt"), "1\n2\n3\n").unwrap();
    fs::write(tmp.path().join("b.txt"), "4\n5\n6\n").unwrap();
    let out = run(
        &[
            "stats",
            "--test",
            "welch",
            "--a",
            "a.txt",
            "--b",
            "b.txt",
            "--out",
            "result.json",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(tmp.path().join("result.json")).unwrap();
    let file: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(file["method"], "welch-t");
    assert_eq!(stdout(&out).trim(), text);
}

#[test]
fn stats_rejects_non_finite_values() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("a.txt"), "1\nNaN\n").unwrap();
    fs::write(tmp.path().join("b.txt"), "1\n2\n").unwrap();
    let out = run(
        &["stats", "--test", "welch", "--a", "a.txt", "--b", "b.txt"],
        tmp.path(),
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("non-finite"));
}

#[test]
fn human_eval_aggregates_and_compares() {
    let tmp = TempDir::new().unwrap();
    let mut csv = String::from("sample_id,model_id,annotator_id,dimension,rating,consistency_fluency\n");
    for (sample, base) in [("s1", 40.0), ("s2", 60.0)] {
        for (model, offset) in [("human", 0.0), ("dpo", 7.0)] {
            for dim in [
                "emotion_understanding",
                "situational_appropriateness",
                "contextual_naturalness",
                "conversational_engagingness",
            ] {
                for (annotator, jitter) in [("a1", -2.0), ("a2", 2.0), ("a3", 3.0)] {
                    csv.push_str(&format!(
                        "{sample},{model},{annotator},{dim},{},true\n",
                        base + offset + jitter
                    ));
                }
            }
        }
    }
    fs::write(tmp.path().join("ann.csv"), csv).unwrap();
    let out = run(
        &[
            "human-eval",
            "--records",
            "ann.csv",
            "--compare",
            "dpo,human",
            "--dimension",
            "emotion_understanding",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let human =
        v["summary"]["model_dimension_means"]["human"]["emotion_understanding"].as_f64().unwrap();
    let dpo =
        v["summary"]["model_dimension_means"]["dpo"]["emotion_understanding"].as_f64().unwrap();
    assert!((human - 51.0).abs() < 1e-9);
    assert!((dpo - 58.0).abs() < 1e-9);
    assert_eq!(v["comparisons"].as_array().unwrap().len(), 1);
}

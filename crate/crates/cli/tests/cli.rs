use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn adaqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaqa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, content: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, content).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let out = adaqa(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Usage"));
}

#[test]
fn unknown_subcommand_exits_2() {
    assert_eq!(adaqa(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn count_params_reference_model() {
    let out = adaqa(&["count-params"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["trainable"], 6_343_680);
    assert_eq!(v["percent"], 1.56);
    assert!(stderr(&out).contains("6,343,680 (1.56%)"));
}

#[test]
fn count_params_with_ablation_and_dims() {
    let dir = TempDir::new().unwrap();
    let abl = write(
        &dir,
        "a.json",
        r#"{"removed_encoder":[0,1,2],"removed_decoder":[12,13,14]}"#,
    );
    let out = adaqa(&["count-params", "--ablation", &abl]);
    assert_eq!(stdout_json(&out)["trainable"], 4_757_760);
    assert!(stderr(&out).contains("4,757,760 (1.17%)"));

    let bad = write(&dir, "b.json", r#"{"removed_encoder":[3]}"#);
    let out = adaqa(&["count-params", "--ablation", &bad]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(err["error"], "InvalidAblation");

    let dims = write(
        &dir,
        "d.json",
        r#"{"d_model":8,"bottleneck":2,"n_encoder_layers":2,"n_decoder_layers":2,"adapters_per_layer":2,"base_total_params":1000}"#,
    );
    let out = adaqa(&["count-params", "--config", &dims]);
    assert_eq!(stdout_json(&out)["trainable"], 4 * 2 * (2 * 8 * 2 + 2 + 8));
}

#[test]
fn plan_ablation_is_deterministic_jsonl() {
    let grid = adaqa(&["plan-ablation", "--mode", "grid"]);
    assert_eq!(grid.status.code(), Some(0));
    let text = String::from_utf8(grid.stdout.clone()).unwrap();
    assert_eq!(text.lines().count(), 36);
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["label"], "(0–6, 12–18)");
    assert_eq!(
        adaqa(&["plan-ablation", "--mode", "grid"]).stdout,
        grid.stdout
    );

    let dir = TempDir::new().unwrap();
    let path = dir.path().join("u.jsonl");
    let out = adaqa(&[
        "plan-ablation",
        "--mode",
        "uniform",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.stdout.is_empty());
    assert_eq!(fs::read_to_string(path).unwrap().lines().count(), 12);
}

const FIGURE_TABLE: &str = r#"{"header_rows":[[{"text":"a","colspan":2},{"text":"b","rowspan":2},{"text":"e"}],
    [{"text":"d","colspan":2},{"text":"f"}]],"body_rows":[[{"text":"1"},{"text":"2"},{"text":"3"},{"text":"4"}]]}"#;

#[test]
fn linearize_figure_table() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "t.json", FIGURE_TABLE);
    let v = stdout_json(&adaqa(&["linearize", "--in", &t]));
    assert_eq!(
        v["header"],
        serde_json::json!(["a(d)", "a(d)", "b", "e(f)"])
    );
    assert_eq!(v["text"], "a(d): 1, a(d): 2, b: 3, e(f): 4");
    assert_eq!(v["pair_count"], 4);
}

#[test]
fn linearize_validation_error_is_json_on_stderr() {
    let dir = TempDir::new().unwrap();
    let t = write(
        &dir,
        "t.json",
        r#"{"header_rows":[[{"text":"a"},{"text":"b"}]],"body_rows":[[{"text":"x","colspan":2,"rowspan":2}],[{"text":"y"}]]}"#,
    );
    let out = adaqa(&["linearize", "--in", &t]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let err: Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(err["error"], "SpanOutOfBounds");

    let garbage = write(&dir, "g.json", "{");
    assert_eq!(
        adaqa(&["linearize", "--in", &garbage]).status.code(),
        Some(2)
    );
    assert_eq!(
        adaqa(&["linearize", "--in", "/nonexistent/t.json"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn assemble_single_and_batch() {
    let dir = TempDir::new().unwrap();
    let ctx = write(&dir, "c.txt", "one two three four");
    let v = stdout_json(&adaqa(&[
        "assemble",
        "--question",
        "why",
        "--title",
        "T",
        "--context-file",
        &ctx,
        "--max-tokens",
        "7",
    ]));
    assert_eq!(v["input"], "<question> why <title> T <context> one two");
    assert_eq!(v["tokens"], 7);

    let out = adaqa(&["assemble", "--question", "a <title> b"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ReservedMarker"));

    let batch = write(
        &dir,
        "b.jsonl",
        "{\"question\":\"q1\",\"title\":\"t\",\"context\":\"c c\"}\n{\"question\":\"q2\",\"context\":\"d\"}\n",
    );
    let out = adaqa(&["assemble", "--batch", &batch]);
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1]["input"], "<question> q2 <title> <context> d");
}

#[test]
fn eval_reports_metrics_and_jobs_do_not_change_output() {
    let dir = TempDir::new().unwrap();
    let refs = "the cat sat on the mat\na quick brown fox\nhello world again\n";
    let r = write(&dir, "ref.txt", refs);
    let same = adaqa(&["eval", "--pred", &r, "--ref", &r]);
    let v = stdout_json(&same);
    assert_eq!(v["bleu"], 100.0);
    assert_eq!(v["rougeL"]["f"], 1.0);
    assert_eq!(v["n"], 3);

    let p = write(
        &dir,
        "pred.txt",
        "the cat sat on a mat\na slow brown fox\nhello there\n",
    );
    let one = adaqa(&["eval", "--pred", &p, "--ref", &r, "--jobs", "1"]);
    let three = adaqa(&["eval", "--pred", &p, "--ref", &r, "--jobs", "3"]);
    assert_eq!(one.stdout, three.stdout);
    let bleu = stdout_json(&one)["bleu"].as_f64().unwrap();
    assert!(bleu > 0.0 && bleu < 100.0);

    let short = write(&dir, "short.txt", "only one line\n");
    let out = adaqa(&["eval", "--pred", &short, "--ref", &r]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("LengthMismatch"));
}

fn dataset(dir: &TempDir) -> String {
    let recs = [
        r#"{"id":"1","question":"who won the race","title":"results","context":{"table":{"header_rows":[[{"text":"name"},{"text":"time"}]],"body_rows":[[{"text":"ann"},{"text":"10"}],[{"text":"bo"},{"text":"12"}]]}},"answers":["ann won with a time of 10"],"split":"train"}"#,
        r#"{"id":"2","question":"slowest","title":"results","context":{"table":{"header_rows":[[{"text":"name"},{"text":"time"}]],"body_rows":[[{"text":"cy"},{"text":"14"}]]}},"answers":["cy", "cy was slowest"],"split":"test"}"#,
    ];
    write(dir, "data.jsonl", &(recs.join("\n") + "\n"))
}

#[test]
fn stats_and_prepare() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir);
    let out = adaqa(&["stats", "--in", &data, "--modality", "table"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["splits"]["train"]["max_question_tokens"], 4);
    assert_eq!(v["splits"]["train"]["max_table_rows"], 2);
    assert_eq!(v["splits"]["test"]["max_target_tokens"], 3);

    let wrong = adaqa(&["stats", "--in", &data, "--modality", "text"]);
    assert_eq!(wrong.status.code(), Some(2));
    assert!(stderr(&wrong).contains("SchemaError"));

    let a = adaqa(&[
        "prepare",
        "--in",
        &data,
        "--max-input-tokens",
        "12",
        "--max-target-tokens",
        "3",
    ]);
    let b = adaqa(&[
        "prepare",
        "--in",
        &data,
        "--max-input-tokens",
        "12",
        "--max-target-tokens",
        "3",
        "--jobs",
        "2",
    ]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let lines: Vec<Value> = String::from_utf8(a.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["target"], "ann won with");
    assert_eq!(
        lines[0]["input"],
        "<question> who won the race <title> results <context> name: ann, time: 10"
    );
    assert_eq!(lines[1]["target"], "cy");

    let out = adaqa(&["prepare", "--in", &data, "--max-input-tokens", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("BudgetTooSmall"));
}

fn tiny_toy(dir: &TempDir) -> String {
    write(
        dir,
        "toy.json",
        r#"{"vocab_size":12,"d_model":8,"n_heads":2,"d_ff":16,"bottleneck":4,"n_encoder_layers":1,"n_decoder_layers":1,"max_len":8}"#,
    )
}

#[test]
fn gradcheck_on_a_small_model() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_toy(&dir);
    let out = adaqa(&["gradcheck", "--config", &cfg, "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = stdout_json(&out);
    assert_eq!(v["passed"], true);
    assert_eq!(v["report"]["frozen_grad_max_abs"], 0.0);
    assert!(v["report"]["max_rel_error"].as_f64().unwrap() < 1e-4);

    let bad = write(&dir, "bad.json", r#"{"d_model":10,"n_heads":3}"#);
    assert_eq!(
        adaqa(&["gradcheck", "--config", &bad]).status.code(),
        Some(2)
    );
}

#[test]
fn train_toy_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_toy(&dir);
    let args = [
        "train-toy",
        "--task",
        "copy",
        "--steps",
        "20",
        "--examples",
        "8",
        "--length",
        "4",
        "--config",
        &cfg,
    ];
    let a = adaqa(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(adaqa(&args).stdout, a.stdout);
    let v = stdout_json(&a);
    assert_eq!(v["frozen_unchanged"], true);
    assert_eq!(v["log"]["step_losses"].as_array().unwrap().len(), 20);

    let single = adaqa(&[
        "--precision",
        "single",
        "train-toy",
        "--steps",
        "5",
        "--config",
        &cfg,
        "--length",
        "4",
    ]);
    assert_eq!(single.status.code(), Some(0), "{}", stderr(&single));

    let too_long = adaqa(&["train-toy", "--config", &cfg, "--length", "9"]);
    assert_eq!(too_long.status.code(), Some(2));
}

#[test]
fn out_flag_writes_file_instead_of_stdout() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "t.json", FIGURE_TABLE);
    let out_path = dir.path().join("o.json");
    let out = adaqa(&["linearize", "--in", &t, "--out", out_path.to_str().unwrap()]);
    assert!(out.stdout.is_empty());
    assert!(Path::new(&out_path).exists());
}

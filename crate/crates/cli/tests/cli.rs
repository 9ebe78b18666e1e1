use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lrsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrsa"))
        .args(args)
        .current_dir(data_dir())
        .output()
        .expect("binary runs")
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Numeric cells of the row labelled `label` in the table headed `layer`.
fn table_row(text: &str, layer: &str, label: &str) -> Vec<f64> {
    let mut in_layer = false;
    for line in text.lines() {
        let mut cells = line.split_whitespace();
        let first = cells.next();
        if first == Some(layer) {
            in_layer = true;
        } else if line.trim().is_empty() {
            in_layer = false;
        } else if in_layer && first == Some(label) {
            return cells.map(|c| c.parse().unwrap()).collect();
        }
    }
    panic!("no row {label} in {layer}:\n{text}");
}

#[test]
fn demo_prints_pragmatic_speaker_row() {
    let o = lrsa(&["demo", "glasses_tie.jsonl"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("# config {"));
    let row = table_row(&text, "s1", "r2");
    assert_eq!(row, vec![0.0, 0.6, 0.4]);
}

#[test]
fn demo_listener_first_uniform_over_glasses_free_messages() {
    let o = lrsa(&["demo", "toy_test.jsonl", "--direction", "listener-first"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("\nl0 "));
    let r4 = table_row(&text, "s1", "r4");
    let r1 = table_row(&text, "s1", "r1");
    // Columns: ∅, b, bg, bgp, bp, g, gp, p.
    let glasses = [false, false, true, true, false, true, true, false];
    for ((p4, p1), g) in r4.iter().zip(&r1).zip(glasses) {
        let (want4, want1) = if g { (0.0, 1.0 / 6.0) } else { (0.25, 1.0 / 12.0) };
        assert!((p4 - want4).abs() < 1e-6 && (p1 - want1).abs() < 1e-6, "{r4:?} {r1:?}");
    }
}

#[test]
fn demo_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cells.json");
    let o = lrsa(&["demo", "glasses_tie.jsonl", "--records", path_str(&out)]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["config"]["command"], "demo");
    let cells = v["trials"][0]["cells"].as_array().unwrap();
    assert!(cells
        .iter()
        .any(|c| c["layer"] == "s1" && c["entity"] == "r2" && c["message"] == "hasGlasses:1" && c["prob"] == 0.6));
}

#[test]
fn malformed_context_exits_with_parse_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\": 3,\n").unwrap();
    let o = lrsa(&["demo", path_str(&bad)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!o.stderr.is_empty());
    let missing = lrsa(&["demo", "no-such-file.jsonl"]);
    assert_eq!(missing.status.code(), Some(6));
    let usage = lrsa(&["demo", "glasses_tie.jsonl", "--cost", "cubic"]);
    assert_eq!(usage.status.code(), Some(2));
    let invalid = lrsa(&["demo", "glasses_tie.jsonl", "--lambda=-1"]);
    assert_eq!(invalid.status.code(), Some(4));
}

fn train(dir: &Path, name: &str, extra: &[&str]) -> (Output, PathBuf) {
    let model = dir.join(name);
    let mut args = vec!["train", "toy_train.jsonl", "--seed", "0", "--out", path_str(&model)];
    args.extend_from_slice(extra);
    (lrsa(&args), model)
}

#[test]
fn retraining_with_the_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let flags = ["--epochs", "3", "--report", path_str(&report)];
    let (a, model) = train(dir.path(), "toy.model", &flags);
    assert!(a.status.success());
    let (first_model, first_report) = (fs::read_to_string(&model).unwrap(), fs::read_to_string(&report).unwrap());
    let (b, _) = train(dir.path(), "toy.model", &flags);
    assert!(b.status.success());
    assert!(fs::read_to_string(&model).unwrap() == first_model);
    assert!(fs::read_to_string(&report).unwrap() == first_report);
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_str(&first_report).unwrap();
    assert_eq!(v["config"]["args"]["seed"], 0);
}

#[test]
fn zero_epochs_give_zero_weights() {
    let dir = tempfile::tempdir().unwrap();
    let (o, model) = train(dir.path(), "zero.model", &["--epochs", "0"]);
    assert!(o.status.success());
    let text = fs::read_to_string(model).unwrap();
    let theta: Vec<f64> = text
        .lines()
        .skip_while(|l| !l.starts_with("theta\t"))
        .skip(1)
        .map(|l| l.parse().unwrap())
        .collect();
    assert!(!theta.is_empty());
    assert!(theta.iter().all(|w| *w == 0.0));
    assert!(text.lines().nth(2).unwrap().starts_with("config\t{"));
}

#[test]
fn learned_model_tables_render() {
    let dir = tempfile::tempdir().unwrap();
    let (o, model) = train(
        dir.path(),
        "toy.model",
        &["--features", "basic", "--cross-value", "count", "--alpha", "1", "--l2", "0", "--epochs", "1", "--order", "in-order"],
    );
    assert!(o.status.success());
    let d = lrsa(&["demo", "toy_test.jsonl", "--model", path_str(&model)]);
    assert!(d.status.success());
    let text = stdout(&d);
    for layer in ["S0", "L1", "S1"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{layer} "))), "{text}");
    }
    let r1 = table_row(&text, "S1", "r1");
    assert!((r1.iter().sum::<f64>() - 1.0).abs() < 1e-5);
}

#[test]
fn divergence_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = train(dir.path(), "d.model", &["--alpha", "1e9", "--l2", "0", "--epochs", "5"]);
    assert_eq!(o.status.code(), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn forced_prediction_corpus_scores_dice_one() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("forced.jsonl");
    // One entity and one single-attribute description: every model must say it.
    let lines: Vec<String> = (0..10)
        .map(|i| {
            format!(
                "{{\"id\":\"f{i}\",\"domain\":\"d\",\"entities\":[{{\"id\":\"x\",\"attributes\":[\"colour:red\"],\"target\":true}}],\"description\":[\"colour:red\"],\"messages\":[[\"colour:red\"]]}}"
            )
        })
        .collect();
    fs::write(&corpus, lines.join("\n")).unwrap();
    let out = dir.path().join("report.json");
    let o = lrsa(&[
        "evaluate",
        path_str(&corpus),
        "--agent",
        "s1",
        "--agent",
        "S1",
        "--direction",
        "speaker-first",
        "--folds",
        "2",
        "--seed",
        "4",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    for report in v["reports"].as_array().unwrap() {
        assert_eq!(report["pooled"]["dice"], 1.0);
        assert_eq!(report["rows"].as_array().unwrap().len(), 10);
    }
}

#[test]
fn evaluate_is_deterministic_and_honours_config_files() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("syn.jsonl");
    let s = lrsa(&["synth", "--seed", "3", "--trials", "40", "--out", path_str(&corpus)]);
    assert!(s.status.success());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "agent = [\"S1\", \"s1\"]\ndirection = \"speaker-first\"\nfolds = 2\nseed = 11\nepochs = 2\n").unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = lrsa(&["evaluate", path_str(&corpus), "--config", path_str(&cfg), "--out", path_str(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (fs::read(&out).unwrap(), stdout(&o))
    };
    let (a, text) = run("a.json");
    let (b, _) = run("b.json");
    let strip = |bytes: &[u8]| {
        let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
        v["config"]["args"]["out"] = serde_json::Value::Null;
        v
    };
    assert_eq!(strip(&a), strip(&b));
    assert!(text.contains("Learned S1"));
    let v = strip(&a);
    assert_eq!(v["config"]["args"]["seed"], 11);
    assert_eq!(v["config"]["args"]["train"]["epochs"], 2);

    // An explicit flag beats the config file.
    let out = dir.path().join("c.json");
    let o = lrsa(&["evaluate", path_str(&corpus), "--config", path_str(&cfg), "--seed", "12", "--out", path_str(&out)]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["config"]["args"]["seed"], 12);

    // Unknown keys are usage errors.
    fs::write(&cfg, "lamda = 2\n").unwrap();
    let o = lrsa(&["evaluate", path_str(&corpus), "--config", path_str(&cfg), "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_requires_a_seed_and_direction() {
    let o = lrsa(&["evaluate", "toy_train.jsonl", "--agent", "s1", "--out", "/dev/null"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_and_catches_a_corrupted_gradient() {
    let good = lrsa(&["gradcheck", "--seed", "7"]);
    assert!(good.status.success(), "{}", stdout(&good));
    let text = stdout(&good);
    assert!(text.contains("result\tPASS"));
    let worst: f64 = text
        .lines()
        .filter(|l| l.starts_with("max_rel_error"))
        .map(|l| l.split('\t').nth(1).unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6);
    let again = lrsa(&["gradcheck", "--seed", "7"]);
    assert_eq!(again.stdout, good.stdout);

    let bad = lrsa(&["gradcheck", "--seed", "7", "--instances", "10", "--corrupt-gradient", "0.05"]);
    assert_eq!(bad.status.code(), Some(7));
    assert!(stdout(&bad).contains("result\tFAIL"));
}

#[test]
fn synth_output_loads_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    assert!(lrsa(&["synth", "--seed", "5", "--trials", "12", "--out", path_str(&a)]).status.success());
    assert!(lrsa(&["synth", "--seed", "5", "--trials", "12", "--out", path_str(&b)]).status.success());
    let (ta, tb) = (fs::read_to_string(&a).unwrap(), fs::read_to_string(&b).unwrap());
    assert_eq!(ta.lines().skip(1).collect::<Vec<_>>(), tb.lines().skip(1).collect::<Vec<_>>());
    assert_eq!(ta.lines().filter(|l| !l.starts_with('#')).count(), 12);
    let d = lrsa(&["demo", path_str(&a)]);
    assert!(d.status.success());
}

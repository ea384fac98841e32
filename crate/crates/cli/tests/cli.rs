//! End-to-end tests of the `opal` binary: exit codes, file outputs, and
//! cross-command consistency.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn opal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opal"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).unwrap();
}

fn synth_fixture(dir: &Path, args: &[&str]) -> (PathBuf, PathBuf, PathBuf) {
    let mut full = vec!["synth"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--out-prefix", "prob"]);
    let out = opal(dir, &full);
    assert_exit(&out, 0);
    (dir.join("prob.a.vec"), dir.join("prob.b.vec"), dir.join("prob.json"))
}

#[test]
fn help_screens_document_defaults() {
    let dir = TempDir::new().unwrap();
    for sub in ["refine", "eval", "analyze", "synth"] {
        let out = opal(dir.path(), &[sub, "--help"]);
        assert_exit(&out, 0);
    }
    let help = String::from_utf8(opal(dir.path(), &["refine", "--help"]).stdout).unwrap();
    for needle in ["1e8", "1e-5", "1e-6", "5e-3", "10", "--alpha", "--epsilon", "--dt", "--budget"] {
        assert!(help.contains(needle), "refine --help missing {needle:?}:\n{help}");
    }
    let top = String::from_utf8(opal(dir.path(), &["--help"]).stdout).unwrap();
    for sub in ["refine", "eval", "analyze", "synth"] {
        assert!(top.contains(sub));
    }
}

#[test]
fn missing_required_flag_exits_2() {
    let dir = TempDir::new().unwrap();
    let out = opal(dir.path(), &["refine", "--src", "a.vec"]);
    assert_exit(&out, 2);
}

#[test]
fn missing_input_file_exits_2() {
    let dir = TempDir::new().unwrap();
    let out = opal(
        dir.path(),
        &["refine", "--src", "nope.vec", "--tgt", "nope.vec", "--out", "o.vec", "--report", "r.json"],
    );
    assert_exit(&out, 2);
    let out = opal(
        dir.path(),
        &[
            "analyze", "--src", "nope.vec", "--tgt", "nope.vec", "--map-before", "m.txt",
            "--map-after", "m.txt", "--dict", "missing.txt", "--out-csv", "d.csv",
        ],
    );
    assert_exit(&out, 2);
}

#[test]
fn dimension_mismatch_exits_3_naming_both_dims() {
    let dir = TempDir::new().unwrap();
    write(&dir.path().join("a.vec"), "2 3\nx 1 0 0\ny 0 1 0\n");
    write(&dir.path().join("b.vec"), "2 2\nx 1 0\ny 0 1\n");
    let out = opal(
        dir.path(),
        &["refine", "--src", "a.vec", "--tgt", "b.vec", "--out", "o.vec", "--report", "r.json"],
    );
    assert_exit(&out, 3);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains('3') && err.contains('2'), "{err}");
}

#[test]
fn refine_defaults_on_synthetic_fixture() {
    let dir = TempDir::new().unwrap();
    let (a, b, _) = synth_fixture(dir.path(), &["--n", "40", "--d", "4", "--seed", "5"]);
    let out = opal(
        dir.path(),
        &[
            "refine", "--src", a.to_str().unwrap(), "--tgt", b.to_str().unwrap(),
            "--out", "refined.vec", "--report", "report.json",
        ],
    );
    assert_exit(&out, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let reason = report["stop_reason"].as_str().unwrap();
    assert!(["loss_increased", "ortho_drift", "budget_exhausted"].contains(&reason), "{reason}");
    assert!(report["final_ortho_error"].as_f64().unwrap() <= 1e-5);
    // default: no timings recorded, so reruns are byte-identical
    assert_eq!(report["wall_time_s"].as_f64().unwrap(), 0.0);
}

#[test]
fn refine_swap_moves_target_space() {
    let dir = TempDir::new().unwrap();
    let (a, b, _) = synth_fixture(dir.path(), &["--n", "30", "--d", "4", "--seed", "8"]);
    let out = opal(
        dir.path(),
        &[
            "refine", "--src", a.to_str().unwrap(), "--tgt", b.to_str().unwrap(), "--swap",
            "--dt", "1e-4", "--budget", "1e-3",
            "--out", "refined.vec", "--report", "report.json",
        ],
    );
    assert_exit(&out, 0);
    // swapped: the refined space has B's tokens (same synthetic tokens) and
    // is close to B rather than A for a tiny budget
    let refined = opal_core::load_embeddings(&dir.path().join("refined.vec"), None).unwrap();
    let b_loaded = opal_core::load_embeddings(&b, None).unwrap();
    let difference = &refined.vectors().to_owned() - &b_loaded.vectors();
    let max = difference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max < 0.2, "swapped refinement strayed too far from the target side: {max}");
}

#[test]
fn eval_gold_fully_oov_exits_3() {
    let dir = TempDir::new().unwrap();
    write(&dir.path().join("s.vec"), "2 2\na 1 0\nb 0 1\n");
    write(&dir.path().join("t.vec"), "2 2\nx 1 0\ny 0 1\n");
    write(&dir.path().join("gold.txt"), "unknown x\n");
    let out = opal(
        dir.path(),
        &["eval", "--src", "s.vec", "--tgt", "t.vec", "--gold", "gold.txt", "--metric", "acc"],
    );
    assert_exit(&out, 3);
}

#[test]
fn eval_perfect_toy_alignment_scores_one() {
    let dir = TempDir::new().unwrap();
    write(&dir.path().join("s.vec"), "2 2\na 1 0\nb 0 1\n");
    write(&dir.path().join("t.vec"), "2 2\nx 1 0\ny 0 1\n");
    write(&dir.path().join("gold.txt"), "a x\nb y\n");
    let out = opal(
        dir.path(),
        &["eval", "--src", "s.vec", "--tgt", "t.vec", "--gold", "gold.txt", "--metric", "acc", "--k", "1"],
    );
    assert_exit(&out, 0);
    let result: serde_json::Value =
        serde_json::from_str(String::from_utf8(out.stdout).unwrap().trim()).unwrap();
    assert_eq!(result["value"].as_f64().unwrap(), 1.0);
    assert_eq!(result["metric"], "acc");
}

#[test]
fn acc_equals_mrr_at_rank_one_across_commands() {
    let dir = TempDir::new().unwrap();
    let (a, b, _) = synth_fixture(dir.path(), &["--n", "25", "--d", "4", "--seed", "11"]);
    let gold: String = (0..25).map(|i| format!("w{i:06} w{i:06}\n")).collect();
    write(&dir.path().join("gold.txt"), &gold);
    let run = |metric: &str, extra: &[&str]| -> serde_json::Value {
        let mut args = vec![
            "eval", "--src", a.to_str().unwrap(), "--tgt", b.to_str().unwrap(),
            "--gold", "gold.txt", "--metric", metric, "--k", "3",
        ];
        args.extend_from_slice(extra);
        let out = opal(dir.path(), &args);
        assert_exit(&out, 0);
        serde_json::from_str(String::from_utf8(out.stdout).unwrap().trim()).unwrap()
    };
    let acc = run("acc", &[]);
    let mrr = run("mrr", &["--max-rank", "1"]);
    assert_eq!(acc["value"], mrr["value"]);
}

#[test]
fn analyze_identical_maps_zero_deltas_and_missing_dict_exits_2() {
    let dir = TempDir::new().unwrap();
    let (a, b, _) = synth_fixture(dir.path(), &["--n", "20", "--d", "3", "--seed", "13"]);
    write(&dir.path().join("eye.txt"), "3\n1 0 0\n0 1 0\n0 0 1\n");
    let dict: String = (0..20).map(|i| format!("w{i:06} w{i:06}\n")).collect();
    write(&dir.path().join("dict.txt"), &dict);
    let out = opal(
        dir.path(),
        &[
            "analyze", "--src", a.to_str().unwrap(), "--tgt", b.to_str().unwrap(),
            "--map-before", "eye.txt", "--map-after", "eye.txt",
            "--dict", "dict.txt", "--out-csv", "deltas.csv",
        ],
    );
    assert_exit(&out, 0);
    let csv = std::fs::read_to_string(dir.path().join("deltas.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("pair_id,original,refined,delta"));
    for line in lines {
        assert!(line.ends_with(",0"), "expected zero delta: {line}");
    }

    let out = opal(
        dir.path(),
        &[
            "analyze", "--src", a.to_str().unwrap(), "--tgt", b.to_str().unwrap(),
            "--map-before", "eye.txt", "--map-after", "eye.txt",
            "--dict", "no-such-dict.txt", "--out-csv", "x.csv",
        ],
    );
    assert_exit(&out, 2);
}

#[test]
fn analyze_iqr_flags_planted_outliers() {
    let dir = TempDir::new().unwrap();
    let (a, b, sidecar) = synth_fixture(
        dir.path(),
        &["--n", "60", "--d", "5", "--sigma", "0.01", "--outlier-frac", "0.1", "--outlier-scale", "1.5", "--seed", "17"],
    );
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sidecar).unwrap()).unwrap();
    let planted: Vec<usize> = meta["outlier_indices"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap() as usize)
        .collect();

    // fit the reference-space map on the identity dictionary, write it out
    let ea = opal_core::load_embeddings(&a, None).unwrap();
    let eb = opal_core::load_embeddings(&b, None).unwrap();
    let pairs = opal_core::compose_pair_matrices(
        &opal_core::BilingualDictionary::identity(60),
        &ea,
        &eb,
    )
    .unwrap();
    let map = opal_core::l2_opa(&pairs).unwrap();
    let mut text = String::from("5\n");
    for row in map.matrix().outer_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    write(&dir.path().join("map.txt"), &text);

    let dict: String = (0..60).map(|i| format!("w{i:06} w{i:06}\n")).collect();
    write(&dir.path().join("dict.txt"), &dict);

    let out = opal(
        dir.path(),
        &[
            "analyze", "--src", a.to_str().unwrap(), "--tgt", b.to_str().unwrap(),
            "--map-before", "map.txt", "--map-after", "map.txt",
            "--dict", "dict.txt", "--out-csv", "deltas.csv", "--iqr",
        ],
    );
    assert_exit(&out, 0);
    let flagged: Vec<usize> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| l.trim().parse().unwrap())
        .collect();
    assert_eq!(flagged, planted);
}

#[test]
fn synth_determinism_and_outlier_count() {
    let dir = TempDir::new().unwrap();
    for prefix in ["one", "two"] {
        let out = opal(
            dir.path(),
            &["synth", "--n", "10", "--d", "3", "--outlier-frac", "0.5", "--seed", "1", "--out-prefix", prefix],
        );
        assert_exit(&out, 0);
    }
    for suffix in [".a.vec", ".b.vec", ".json"] {
        let one = std::fs::read(dir.path().join(format!("one{suffix}"))).unwrap();
        let two = std::fs::read(dir.path().join(format!("two{suffix}"))).unwrap();
        assert_eq!(one, two, "synth output {suffix} not byte-identical");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("one.json")).unwrap()).unwrap();
    assert_eq!(meta["outlier_indices"].as_array().unwrap().len(), 5);
}

#[test]
fn synth_bad_parameters_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = opal(dir.path(), &["synth", "--n", "3", "--d", "8", "--out-prefix", "p"]);
    assert_exit(&out, 2);
    let out = opal(dir.path(), &["synth", "--outlier-frac", "1.5", "--out-prefix", "p"]);
    assert_exit(&out, 2);
}

#[test]
fn config_file_merges_under_flags() {
    let dir = TempDir::new().unwrap();
    let (a, b, _) = synth_fixture(dir.path(), &["--n", "30", "--d", "4", "--seed", "19"]);
    write(&dir.path().join("cfg.json"), r#"{"dt": 1e-4, "budget": 2e-3, "retrieval": "nn"}"#);
    // flag --budget overrides config; config dt/retrieval apply
    let out = opal(
        dir.path(),
        &[
            "refine", "--src", a.to_str().unwrap(), "--tgt", b.to_str().unwrap(),
            "--config", "cfg.json", "--budget", "1e-3",
            "--out", "r.vec", "--report", "rep.json",
        ],
    );
    assert_exit(&out, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rep.json")).unwrap()).unwrap();
    // dt 1e-4 (config) with budget 1e-3 (flag) -> at most 10 steps
    assert!(report["steps_taken"].as_u64().unwrap() <= 10);

    let out = opal(
        dir.path(),
        &[
            "refine", "--src", a.to_str().unwrap(), "--tgt", b.to_str().unwrap(),
            "--config", "bad.json", "--out", "r.vec", "--report", "rep.json",
        ],
    );
    assert_exit(&out, 2);
}

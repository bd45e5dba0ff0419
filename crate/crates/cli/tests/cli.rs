//! End-to-end checks of the `uncord` binary: exit-code discipline, seeded
//! determinism of generation, and the answer/eval surfaces.

use std::path::Path;
use std::process::{Command, Output};

fn uncord(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uncord"))
        .args(args)
        .current_dir(dir)
        .env_remove("UNCORD_SEED")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, content: &str) {
    std::fs::write(dir.join(name), content).expect("fixture written");
}

const SCENE: &str = r#"{"objects": [
  {"shape": "sphere", "color": "cyan", "material": "rubber", "size": "small", "3d_coords": [0.0, 0.0, 0.0]},
  {"shape": "cube", "color": "yellow", "material": "metal", "size": "large", "3d_coords": [1.0, 0.0, 0.0]},
  {"shape": "sphere", "color": "red", "material": "metal", "size": "small", "3d_coords": [2.0, 0.0, 0.0]}
]}"#;

#[test]
fn answer_reports_short_answer_and_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "scene.json", SCENE);
    write(
        dir.path(),
        "q.json",
        r#"[{"function":"scene","inputs":[],"value_inputs":[]},
            {"function":"filter_color","inputs":[0],"value_inputs":["yellow"]},
            {"function":"unique","inputs":[1],"value_inputs":[]},
            {"function":"query_size","inputs":[2],"value_inputs":[]}]"#,
    );
    let out = uncord(
        &["answer", "--scene", "scene.json", "--question", "q.json"],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "large");
}

#[test]
fn unknown_relation_sets_limitation_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "scene.json", SCENE);
    write(
        dir.path(),
        "q.json",
        r#"{"nodes": [{"id": 0, "class": "sphere"}, {"id": 1, "class": "cube"}],
            "edges": [{"from": 0, "to": 1, "relation": {"kind": "spatial", "name": "in between"}}]}"#,
    );
    let out = uncord(
        &["answer", "--scene", "scene.json", "--question", "q.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(
        String::from_utf8_lossy(&out.stderr).trim(),
        "Unknown relation 'in between'"
    );
}

#[test]
fn not_grounded_exit_code_and_alternative() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "scene.json", SCENE);
    // "What is the color of the cylinder?" over a cylinder-free scene.
    write(
        dir.path(),
        "q.json",
        r#"{"nodes": [{"id": 0, "class": "cylinder", "f": "color"}]}"#,
    );
    let out = uncord(
        &[
            "answer",
            "--scene",
            "scene.json",
            "--question",
            "q.json",
            "--full",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("no cylinder"), "{stdout}");
}

#[test]
fn zero_noise_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "scene.json", SCENE);
    write(dir.path(), "q.txt", "<NewNode> <c> sphere <p> red\n");
    write(
        dir.path(),
        "zero.json",
        r#"{"detect_miss": 0.0, "property_flip": {}, "default_property_flip": 0.0, "relation_flip": 0.0}"#,
    );
    let plain = uncord(
        &[
            "answer",
            "--scene",
            "scene.json",
            "--question",
            "q.txt",
            "--full",
            "--trace",
        ],
        dir.path(),
    );
    let zeroed = uncord(
        &[
            "answer",
            "--scene",
            "scene.json",
            "--question",
            "q.txt",
            "--full",
            "--trace",
            "--noise",
            "zero.json",
            "--seed",
            "9",
        ],
        dir.path(),
    );
    assert!(plain.status.success());
    assert_eq!(plain.stdout, zeroed.stdout);
}

#[test]
fn generation_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.json", "b.json"] {
        let run = uncord(
            &["gen", "scenes", "--n", "100", "--seed", "7", "--out", out],
            dir.path(),
        );
        assert!(run.status.success(), "{run:?}");
    }
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn generated_questions_cover_all_families_and_eval_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let run = uncord(
        &[
            "gen",
            "scenes",
            "--n",
            "40",
            "--seed",
            "3",
            "--out",
            "scenes.json",
        ],
        dir.path(),
    );
    assert!(run.status.success());
    let run = uncord(
        &[
            "gen",
            "questions",
            "--scenes",
            "scenes.json",
            "--per-scene",
            "5",
            "--seed",
            "3",
            "--out",
            "questions.json",
            "--families",
            "all",
        ],
        dir.path(),
    );
    assert!(run.status.success(), "{run:?}");
    let questions: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("questions.json")).unwrap())
            .unwrap();
    let families: std::collections::BTreeSet<&str> = questions["questions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|q| q["family"].as_str().unwrap())
        .collect();
    for family in [
        "exist",
        "count",
        "compare_numbers",
        "query_attribute",
        "compare_attribute",
    ] {
        assert!(families.contains(family), "missing {family}");
    }

    let run = uncord(
        &[
            "eval",
            "--scenes",
            "scenes.json",
            "--questions",
            "questions.json",
            "--report",
            "report.json",
            "--log",
            "log.jsonl",
        ],
        dir.path(),
    );
    assert!(run.status.success(), "{run:?}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["overall"].as_f64().unwrap(), 1.0);
    // Report arithmetic recomputes from the per-question log.
    let log = std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    let total = log.lines().count();
    let correct = log
        .lines()
        .filter(|l| l.contains("\"correct\":true"))
        .count();
    assert_eq!(total as u64, report["total"].as_u64().unwrap());
    assert_eq!(correct as u64, report["correct"].as_u64().unwrap());
}

#[test]
fn empty_corpus_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "scenes.json", r#"{"scenes": []}"#);
    write(dir.path(), "questions.json", r#"{"questions": []}"#);
    let out = uncord(
        &[
            "eval",
            "--scenes",
            "scenes.json",
            "--questions",
            "questions.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pair_generation_manifest_reports_enhancement() {
    let dir = tempfile::tempdir().unwrap();
    let run = uncord(
        &[
            "gen",
            "pairs",
            "--n",
            "60",
            "--seed",
            "5",
            "--mode",
            "minimal",
            "--enhance",
            "--out",
            "pairs",
        ],
        dir.path(),
    );
    assert!(run.status.success(), "{run:?}");
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("pairs/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["base_count"].as_u64(), Some(60));
    assert_eq!(manifest["total_count"].as_u64(), Some(120));
    assert_eq!(manifest["mode"].as_str(), Some("minimal"));
    let questions = std::fs::read_to_string(dir.path().join("pairs/questions.txt")).unwrap();
    let graphs = std::fs::read_to_string(dir.path().join("pairs/graphs.txt")).unwrap();
    assert_eq!(questions.lines().count(), 120);
    assert_eq!(graphs.lines().count(), 120);
}

#[test]
fn official_format_files_evaluate_directly() {
    // Scene/question files in the official layout: scenes keyed by
    // "scenes", questions carrying "program" steps (with "type" keys),
    // "image_index" and "answer".
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "val_scenes.json",
        r#"{"info": {"split": "val"}, "scenes": [
            {"image_index": 0, "objects": [
              {"shape": "cube", "color": "red", "material": "rubber", "size": "small",
               "3d_coords": [0.0, 0.0, 0.0], "pixel_coords": [10, 20, 3], "rotation": 100.0},
              {"shape": "sphere", "color": "blue", "material": "metal", "size": "large",
               "3d_coords": [2.0, 1.0, 0.5], "pixel_coords": [40, 60, 5], "rotation": 10.0}
            ]}
        ]}"#,
    );
    write(
        dir.path(),
        "val_questions.json",
        r#"{"info": {"split": "val"}, "questions": [
            {"image_index": 0, "answer": "1",
             "program": [
               {"type": "scene", "inputs": []},
               {"type": "filter_shape", "inputs": [0], "side_inputs": ["cube"]},
               {"type": "count", "inputs": [1]}
             ]},
            {"image_index": 0, "answer": "yes",
             "program": [
               {"type": "scene", "inputs": []},
               {"type": "filter_color", "inputs": [0], "side_inputs": ["blue"]},
               {"type": "unique", "inputs": [1]},
               {"type": "relate", "inputs": [2], "side_inputs": ["left"]},
               {"type": "filter_shape", "inputs": [3], "side_inputs": ["cube"]},
               {"type": "exist", "inputs": [4]}
             ]}
        ]}"#,
    );
    let out = uncord(
        &[
            "eval",
            "--clevr",
            "--scenes",
            "val_scenes.json",
            "--questions",
            "val_questions.json",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let table = String::from_utf8_lossy(&out.stdout);
    let overall = table
        .lines()
        .find(|l| l.starts_with("Overall"))
        .unwrap_or_else(|| panic!("no overall row in {table}"));
    assert!(overall.contains("1.0000"), "{table}");
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use sparsegan::train::TrainConfig;

const BIN: &str = env!("CARGO_BIN_EXE_sparsegan");

/// Model flags small enough for quick runs.
const SMALL: &[&str] = &[
    "--hidden", "8", "--critic-channels", "4", "--critic-widths", "3", "--batch", "4", "--max-len", "16",
    "--sparse-iters", "3",
];

fn sparsegan(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env("SPARSEGAN_LOG", "warn")
        .output()
        .expect("binary runs")
}

#[track_caller]
fn ok(dir: &Path, args: &[&str]) {
    let out = sparsegan(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Toy data plus a quickly pretrained auto-encoder, shared by several tests.
fn dae_fixture() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = scratch("fixture");
        ok(&dir, &["synth-data", "--out", "data", "--seed", "1", "--n", "60", "--heldout", "20"]);
        let mut args = vec!["pretrain-dae", "--out", "dae", "--corpus", "data/train.txt", "--dae-steps", "20"];
        args.extend(SMALL);
        ok(&dir, &args);
        dir
    })
}

fn flag_of(key: &str) -> String {
    match key {
        "encoder_kind" => "--encoder".into(),
        k => format!("--{}", k.replace('_', "-")),
    }
}

fn default_matches(shown: &str, expected: &Value) -> bool {
    match expected {
        Value::Null => shown == "none",
        Value::Bool(b) => shown == b.to_string(),
        Value::Number(n) => shown.parse::<f64>().ok() == n.as_f64(),
        Value::String(s) => shown == s,
        Value::Array(items) => {
            let parts: Vec<&str> = shown.split(',').collect();
            parts.len() == items.len() && parts.iter().zip(items).all(|(p, v)| default_matches(p, v))
        }
        Value::Object(_) => false,
    }
}

#[test]
fn help_lists_every_training_setting_with_its_default() {
    let Value::Object(defaults) = serde_json::to_value(TrainConfig::default()).unwrap() else {
        panic!("config is an object")
    };
    let tmp = tempfile::tempdir().unwrap();
    for cmd in ["pretrain-dae", "pretrain-gen", "train", "generate", "encode"] {
        let out = sparsegan(tmp.path(), &[cmd, "--help"]);
        assert!(out.status.success());
        let help = String::from_utf8(out.stdout).unwrap();
        let lines: Vec<&str> = help.lines().collect();
        for (key, value) in &defaults {
            if key == "seed" && cmd == "encode" {
                // Encoding draws no random numbers.
                assert!(!help.contains("--seed"));
                continue;
            }
            let flag = flag_of(key);
            let at = lines
                .iter()
                .position(|l| l.trim_start().starts_with(&format!("{flag} ")))
                .unwrap_or_else(|| panic!("{cmd} --help lacks {flag}"));
            let text = format!("{} {}", lines[at], lines.get(at + 1).unwrap_or(&""));
            if key == "seed" && matches!(cmd, "train" | "generate") {
                assert!(help.contains("--seed <SEED>") && !text.contains("[default:"), "{cmd}: seed must be required");
                continue;
            }
            let shown = text
                .split("[default: ")
                .nth(1)
                .and_then(|s| s.split(']').next())
                .unwrap_or_else(|| panic!("{cmd} {flag}: no default in {text:?}"));
            assert!(default_matches(shown, value), "{cmd} {flag}: help says {shown}, default is {value}");
        }
    }
}

#[test]
fn seed_is_required_for_train_and_generate() {
    let dir = dae_fixture();
    for args in [
        &["train", "--out", "x", "--corpus", "data/train.txt", "--init", "dae/dae.ckpt"][..],
        &["generate", "--out", "x", "--checkpoint", "dae/dae.ckpt"][..],
    ] {
        let out = sparsegan(dir, args);
        assert!(!out.status.success());
        assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
        assert!(!dir.join("x").exists());
    }
}

#[test]
fn encode_one_word_with_ten_rounds_gives_one_record() {
    let dir = dae_fixture();
    ok(dir, &["encode", "--out", "enc", "--checkpoint", "dae/dae.ckpt", "--sentence", "dog", "--sparse-iters", "10"]);
    let text = fs::read_to_string(dir.join("enc/codes.jsonl")).unwrap();
    let records: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert_eq!(r["step"], 0);
    let n = r["indices"].as_array().unwrap().len();
    assert!((1..=10).contains(&n));
    assert_eq!(r["coeffs"].as_array().unwrap().len(), n);
    assert_eq!(r["residual_norm_history"].as_array().unwrap().len(), n + 1);
}

#[test]
fn encode_emits_one_record_per_word() {
    let dir = dae_fixture();
    ok(dir, &["encode", "--out", "enc3", "--checkpoint", "dae/dae.ckpt", "--sentence", "the dog sees"]);
    let text = fs::read_to_string(dir.join("enc3/codes.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn eval_of_references_against_themselves_is_one() {
    let dir = scratch("eval");
    let refs = "a big dog sees the cat\nthe man likes every red car near a tree\nevery bird finds a house\n";
    fs::write(dir.join("refs.txt"), refs).unwrap();
    ok(&dir, &["eval", "--out", "ev", "--candidates", "refs.txt", "--references", "refs.txt"]);
    let report = json(&dir.join("ev/eval.json"));
    assert_eq!(report["bleu"]["2"], 1.0);
    assert_eq!(report["bleu"]["5"], 1.0);
    assert_eq!(report["n_candidates"], 3);
    assert_eq!(report["n_references"], 3);
    assert!(report["self_bleu"]["2"].as_f64().unwrap() < 1.0);
    assert!(dir.join("ev/manifest.json").exists());
}

#[test]
fn unknown_flag_and_missing_file_fail_cleanly() {
    let dir = scratch("errors");
    let out = sparsegan(&dir, &["eval", "--out", "ev", "--candidates", "c.txt", "--references", "r.txt", "--bogus"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    let out = sparsegan(&dir, &["eval", "--out", "ev", "--candidates", "missing.txt", "--references", "missing.txt"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.txt"));
    assert!(!dir.join("ev").exists());

    let out = sparsegan(&dir, &["no-such-command"]);
    assert!(!out.status.success());
}

#[test]
fn failed_training_leaves_no_partial_outputs() {
    let dir = dae_fixture();
    // Diverges within the first critic update.
    let args = [
        "train", "--out", "diverged", "--corpus", "data/train.txt", "--init", "dae/dae.ckpt", "--seed", "1",
        "--max-iters", "20", "--lr-adv", "1e200", "--lambda", "1e200",
    ];
    let out = sparsegan(dir, &args);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
    assert!(!dir.join("diverged").exists());

    // In a directory that already existed only this command's files go.
    let existing = dir.join("existing");
    fs::create_dir_all(&existing).unwrap();
    fs::write(existing.join("notes.txt"), "keep").unwrap();
    let mut args = args.to_vec();
    args[2] = "existing";
    assert!(!sparsegan(dir, &args).status.success());
    let left: Vec<_> = fs::read_dir(&existing).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, ["notes.txt"]);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = dae_fixture();
    fs::write(dir.join("c.toml"), "dae_steps = 3\nhidden = 8\nlambda = 2.5\n").unwrap();
    let args = [
        "pretrain-dae", "--out", "dae_cfg", "--corpus", "data/train.txt", "--config", "c.toml", "--hidden", "6",
        "--critic-channels", "4", "--critic-widths", "3", "--batch", "4", "--seed", "9",
    ];
    ok(dir, &args);
    let m = json(&dir.join("dae_cfg/manifest.json"));
    let t = &m["config"]["train"];
    assert_eq!(t["hidden"], 6);
    assert_eq!(t["dae_steps"], 3);
    assert_eq!(t["lambda"], 2.5);
    assert_eq!(t["seed"], 9);
    assert_eq!(json(&dir.join("dae_cfg/dae_report.json"))["losses"].as_array().unwrap().len(), 3);
    let roles: Vec<&str> = m["inputs"].as_array().unwrap().iter().map(|i| i["role"].as_str().unwrap()).collect();
    assert_eq!(roles, ["corpus", "config"]);

    let out = sparsegan(dir, &["pretrain-dae", "--out", "bad_cfg", "--corpus", "data/train.txt", "--lambda", "-1"]);
    assert!(!out.status.success());
    fs::write(dir.join("typo.toml"), "lamda = 1.0\n").unwrap();
    let out = sparsegan(dir, &["pretrain-dae", "--out", "bad_cfg", "--corpus", "data/train.txt", "--config", "typo.toml"]);
    assert!(!out.status.success());
}

#[test]
fn model_shape_cannot_change_after_pretraining() {
    let dir = dae_fixture();
    let out = sparsegan(
        dir,
        &["pretrain-gen", "--out", "g", "--corpus", "data/train.txt", "--init", "dae/dae.ckpt", "--hidden", "16"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("must match"));
}

/// The same commands in two directories, with relative paths, so that
/// every file including the manifests can be compared byte for byte.
fn short_pipeline(dir: &Path) {
    ok(dir, &["synth-data", "--out", "data", "--seed", "2", "--n", "40", "--heldout", "10"]);
    let mut args = vec!["pretrain-dae", "--out", "dae", "--corpus", "data/train.txt", "--dae-steps", "10"];
    args.extend(SMALL);
    ok(dir, &args);
    ok(dir, &["pretrain-gen", "--out", "gen", "--corpus", "data/train.txt", "--init", "dae/dae.ckpt", "--gen-steps", "10"]);
    ok(
        dir,
        &[
            "train", "--out", "adv", "--corpus", "data/train.txt", "--init", "gen/gen.ckpt", "--seed", "5",
            "--max-iters", "6", "--checkpoint-every", "3", "--log-wallclock", "false",
        ],
    );
    ok(dir, &["generate", "--out", "samples", "--checkpoint", "adv/checkpoints/ckpt_000006.bin", "--seed", "8", "--n", "20"]);
    ok(dir, &["eval", "--out", "ev", "--candidates", "samples/samples.txt", "--references", "data/heldout.txt"]);
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn reruns_are_byte_identical() {
    let a = scratch("rerun_a");
    let b = scratch("rerun_b");
    short_pipeline(&a);
    short_pipeline(&b);
    let files = files_under(&a);
    assert_eq!(files, files_under(&b));
    assert!(files.len() >= 17, "{files:?}");
    for f in &files {
        assert!(fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap(), "{} differs", f.display());
    }
}

#[test]
fn resumed_training_matches_one_long_run() {
    let dir = scratch("resume");
    short_pipeline(&dir);
    let train = |out: &str, init: &str, iters: &str| {
        ok(
            &dir,
            &[
                "train", "--out", out, "--corpus", "data/train.txt", "--init", init, "--seed", "5", "--max-iters", iters,
                "--checkpoint-every", "3", "--log-wallclock", "false",
            ],
        );
    };
    train("long", "gen/gen.ckpt", "10");
    train("resumed", "adv/checkpoints/ckpt_000006.bin", "10");
    for f in ["metrics.jsonl", "checkpoints/ckpt_000010.bin"] {
        let same = fs::read(dir.join("long").join(f)).unwrap() == fs::read(dir.join("resumed").join(f)).unwrap();
        assert!(same, "{f} differs");
    }
}

/// synth-data, pretrain-dae, pretrain-gen, 200 adversarial iterations,
/// generate and eval at the toy model size. Pretraining is shortened to
/// keep the test quick, so the numbers are not quality claims.
#[test]
fn full_toy_pipeline_emits_every_artifact() {
    let dir = scratch("toy");
    ok(&dir, &["synth-data", "--out", "data", "--seed", "0"]);
    let toy = [
        "--hidden", "32", "--critic-channels", "32", "--sparse-iters", "4", "--batch", "16", "--max-len", "16",
        "--n-critic", "5", "--lr-pretrain", "3e-3",
    ];
    let mut args = vec!["pretrain-dae", "--out", "dae", "--corpus", "data/train.txt", "--dae-steps", "150"];
    args.extend(toy);
    ok(&dir, &args);
    ok(&dir, &["pretrain-gen", "--out", "gen", "--corpus", "data/train.txt", "--init", "dae/dae.ckpt", "--gen-steps", "150"]);
    ok(
        &dir,
        &[
            "train", "--out", "adv", "--corpus", "data/train.txt", "--init", "gen/gen.ckpt", "--seed", "0",
            "--max-iters", "200", "--checkpoint-every", "100",
        ],
    );
    ok(&dir, &["generate", "--out", "samples", "--checkpoint", "adv/checkpoints/ckpt_000200.bin", "--seed", "7"]);
    ok(&dir, &["eval", "--out", "ev", "--candidates", "samples/samples.txt", "--references", "data/heldout.txt"]);

    for (run, files) in [
        ("data", &["train.txt", "heldout.txt", "grammar.json"][..]),
        ("dae", &["dae.ckpt", "dae_report.json"][..]),
        ("gen", &["gen.ckpt", "gen_report.json"][..]),
        ("adv", &["checkpoints/ckpt_000000.bin", "checkpoints/ckpt_000100.bin", "checkpoints/ckpt_000200.bin", "metrics.jsonl"][..]),
        ("samples", &["samples.txt"][..]),
        ("ev", &["eval.json"][..]),
    ] {
        let m = json(&dir.join(run).join("manifest.json"));
        let listed: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|o| o.as_str().unwrap()).collect();
        assert_eq!(listed, files, "{run}");
        for f in files {
            assert!(dir.join(run).join(f).is_file(), "{run}/{f}");
        }
        assert_eq!(m["input_hash"].as_str().unwrap().len(), 64);
    }
    assert_eq!(fs::read_to_string(dir.join("data/train.txt")).unwrap().lines().count(), 500);
    assert_eq!(fs::read_to_string(dir.join("samples/samples.txt")).unwrap().lines().count(), 200);
    let metrics = fs::read_to_string(dir.join("adv/metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 200);
    for line in metrics.lines() {
        let r: Value = serde_json::from_str(line).unwrap();
        assert!(r["critic_loss"].as_f64().unwrap().is_finite() && r["gen_loss"].as_f64().unwrap().is_finite());
    }
    let report = json(&dir.join("ev/eval.json"));
    for key in ["bleu", "self_bleu"] {
        for n in ["2", "5"] {
            let v = report[key][n].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&v), "{key} {n}: {v}");
        }
    }
    assert_eq!(report["n_candidates"], 200);
    assert_eq!(report["n_references"], 200);
}

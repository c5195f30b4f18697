use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
corpus.preset = toy
corpus.per_domain = 40
corpus.test_per_domain = 20
model.layers = 1
model.heads = 2
model.dim = 16
model.ffn = 32
dc.max_epochs = 1
icner.max_epochs = 1
icner.workers = 2
";

fn run(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    Command::new(env!("CARGO_BIN_EXE_nbest-slu"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let o = run(dir, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn corpus_generation_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["gen-corpus", "--seed", "5"]);
    ok(b.path(), &["gen-corpus", "--seed", "5"]);
    for stem in ["train", "validation", "test_full", "test_mismatched"] {
        let f = format!("out/{stem}.nbest.jsonl");
        assert_eq!(
            fs::read(a.path().join(&f)).unwrap(),
            fs::read(b.path().join(&f)).unwrap(),
            "{stem}"
        );
    }
    assert_eq!(
        fs::read(a.path().join("out/gen-corpus.manifest")).unwrap(),
        fs::read(b.path().join("out/gen-corpus.manifest")).unwrap()
    );
}

#[test]
fn missing_inputs_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["oppcost"]);
    assert_eq!(o.status.code(), Some(2));
    ok(d.path(), &["gen-corpus"]);
    let o = run(d.path(), &["eval-dc"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Baseline.ckpt"));
    assert!(!d.path().join("out/eval-dc.json").exists());
    let o = run(d.path(), &["report"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(d.path(), &["train-icner", "--domain", "Cooking"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(d.path(), &["gen-corpus", "--set", "noise.subs=0.1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn full_pipeline_produces_one_row_per_model_and_split() {
    let d = tempfile::tempdir().unwrap();
    for stage in ["gen-corpus", "oppcost", "train-dc", "eval-dc", "detect-mismatch"] {
        ok(d.path(), &[stage]);
    }
    ok(d.path(), &["train-icner", "--domain", "Music"]);
    ok(
        d.path(),
        &[
            "eval-icner",
            "--domain",
            "Music",
            "--decode-mode",
            "beam",
            "--beam-width",
            "2",
        ],
    );
    ok(d.path(), &["report"]);
    let out = d.path().join("out");
    for f in [
        "dc/Baseline.ckpt",
        "dc/BSumExt.ckpt",
        "dc/BSumExtAbs.ckpt",
        "dc/BSumExtAbs.pretrain.manifest",
        "train-dc.timing",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(out.join("eval-dc.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    let mut keys: Vec<(&str, &str)> = rows
        .iter()
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap(), f.next().unwrap())
        })
        .collect();
    let n = keys.len();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), n);
    let scored = rows
        .iter()
        .filter(|l| l.split(',').nth(6).is_some_and(|c| !c.is_empty()))
        .count();
    assert!(scored <= 4);
    assert_eq!(n, 6);
    let manifest = fs::read_to_string(out.join("dc/BSumExt.manifest")).unwrap();
    assert!(manifest.contains("epoch.1.validation="));
    assert!(!manifest.contains("seconds"));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("Domain classification"));
    assert!(report.contains("Overall"));
    let icner = fs::read_to_string(out.join("eval-icner.txt")).unwrap();
    assert!(icner.contains("beam width 2"));
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use apl_core::data::{load_cohort, CohortManifest};
use apl_core::model::{AplModel, Checkpoint};
use apl_core::survival::c_index;

fn apl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apl"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn apl")
}

fn ok(args: &[&str]) -> String {
    let out = apl(args);
    assert!(
        out.status.success(),
        "apl {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn status(args: &[&str]) -> i32 {
    apl(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn oracle(stdout: &str) -> f64 {
    let line = stdout.lines().find(|l| l.starts_with("oracle C-index:")).expect("oracle line");
    line.split_whitespace().nth(2).unwrap().parse().unwrap()
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn small_cohort(dir: &Path) -> PathBuf {
    let out = dir.join("cohort");
    ok(&[
        "synth-data", "--out", s(&out), "--cases", "40", "--seed", "5", "--signal", "2",
        "--min-patches", "4", "--max-patches", "8", "--d-in", "8",
    ]);
    out.join("manifest.csv")
}

fn write_config(dir: &Path, manifest: &Path, lr: f64) -> PathBuf {
    let cfg = serde_json::json!({
        "manifest": manifest,
        "model": {"d_in": 8, "d_model": 8, "snn_hidden": 8, "n_hist_queries": 4, "n_gene_queries": 4},
        "train": {"epochs": 2, "batch_size": 8, "folds": 2, "lr": lr},
    });
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn synth_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = |out: &Path| -> Vec<String> {
        ["synth-data", "--out", s(out), "--cases", "10", "--seed", "7"].map(String::from).to_vec()
    };
    ok(&args(&a).iter().map(String::as_str).collect::<Vec<_>>());
    ok(&args(&b).iter().map(String::as_str).collect::<Vec<_>>());
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.contains_key(Path::new("manifest.csv")));
    assert_eq!(ta, tb);
}

#[test]
fn synth_oracle_tracks_signal() {
    let dir = tempfile::tempdir().unwrap();
    let null = ok(&["synth-data", "--out", s(&dir.path().join("null")), "--cases", "400", "--signal", "0", "--seed", "1"]);
    let c = oracle(&null);
    assert!((c - 0.5).abs() < 0.05, "null oracle {c}");
    let planted = ok(&["synth-data", "--out", s(&dir.path().join("planted")), "--cases", "400", "--signal", "2", "--seed", "1"]);
    let c = oracle(&planted);
    assert!(c >= 0.95, "planted oracle {c}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(status(&["synth-data", "--bogus"]), 2);
    assert_eq!(status(&["synth-data", "--out", s(&dir.path().join("x")), "--censor-rate", "1.5"]), 2);
    assert!(!dir.path().join("x").exists(), "invalid args must not touch the filesystem");

    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\n  \"manifest\": \"m.csv\",\n  \"extra\": 1\n}").unwrap();
    let out = apl(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json:3:") && err.contains("extra"), "{err}");

    let manifest = dir.path().join("m.csv");
    assert_eq!(status(&["eval", "--checkpoint", s(&dir.path().join("none.aplc")), "--manifest", s(&manifest)]), 2);

    let corrupt = dir.path().join("corrupt.aplc");
    fs::write(&corrupt, b"APLC garbage").unwrap();
    fs::write(&manifest, "case_id,embedding_path,survival_months,event\n").unwrap();
    assert_eq!(status(&["eval", "--checkpoint", s(&corrupt), "--manifest", s(&manifest)]), 1);

    let busy = dir.path().join("busy");
    fs::create_dir(&busy).unwrap();
    fs::write(busy.join("keep"), "x").unwrap();
    assert_eq!(status(&["synth-data", "--out", s(&busy), "--cases", "4"]), 2);
    assert_eq!(fs::read_to_string(busy.join("keep")).unwrap(), "x");
}

#[test]
fn train_eval_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_cohort(dir.path());
    let cfg = write_config(dir.path(), &manifest, 5e-4);
    let run = dir.path().join("run");
    ok(&["train", "--config", s(&cfg), "--out", s(&run)]);
    for f in ["fold_report.json", "fold_report.csv", "timing.csv", "run_config.json", "fold_1/model.aplc"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    // a second train into the same directory is refused
    assert_eq!(status(&["train", "--config", s(&cfg), "--out", s(&run)]), 2);

    let ckpt = run.join("fold_0/model.aplc");
    let report: serde_json::Value = serde_json::from_str(&ok(&["eval", "--checkpoint", s(&ckpt), "--manifest", s(&manifest)])).unwrap();
    let c = report["c_index"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&c));
    assert!(report["comparable_pairs"].as_u64().unwrap() > 0);

    let case_id = CohortManifest::read(&manifest).unwrap().entries[0].case_id.clone();
    let attn = dir.path().join("attn");
    ok(&["export-attn", "--checkpoint", s(&ckpt), "--manifest", s(&manifest), "--case", &case_id, "--out", s(&attn)]);

    let top_count = |path: &Path| -> (usize, f64) {
        let mut rdr = csv::Reader::from_path(path).unwrap();
        let mut top = 0;
        let mut sum = 0.0;
        for rec in rdr.records() {
            let rec = rec.unwrap();
            sum += rec[3].parse::<f64>().unwrap();
            top += (&rec[4] == "1") as usize;
        }
        (top, sum)
    };
    let hist: Vec<_> = (0..4).map(|i| attn.join(format!("hist_prototype_{i:03}.csv"))).collect();
    let gene: Vec<_> = (0..4).map(|i| attn.join(format!("gene_prototype_{i:03}.csv"))).collect();
    for p in &hist {
        let (top, sum) = top_count(p);
        assert_eq!(top, 3, "{}", p.display());
        assert!((sum - 1.0).abs() < 1e-9);
    }
    for p in &gene {
        let (top, sum) = top_count(p);
        assert_eq!(top, 6, "{}", p.display());
        assert!((sum - 1.0).abs() < 1e-9);
    }
    assert!(attn.join("summary.csv").exists());

    assert_eq!(
        status(&["export-attn", "--checkpoint", s(&ckpt), "--manifest", s(&manifest), "--case", "nobody", "--out", s(&dir.path().join("x"))]),
        2
    );
}

#[test]
fn frozen_training_matches_fresh_model() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_cohort(dir.path());
    let cfg = write_config(dir.path(), &manifest, 0.0);
    let run = dir.path().join("run");
    ok(&["train", "--config", s(&cfg), "--out", s(&run), "--fold", "0"]);
    assert!(!run.join("fold_1").exists());

    let ckpt_path = run.join("fold_0/model.aplc");
    let preds = dir.path().join("preds.csv");
    let report: serde_json::Value = serde_json::from_str(&ok(&[
        "eval", "--checkpoint", s(&ckpt_path), "--manifest", s(&manifest), "--predictions", s(&preds),
    ]))
    .unwrap();

    let ckpt = Checkpoint::load(&ckpt_path).unwrap();
    let fresh = AplModel::new(ckpt.model.config.clone(), ckpt.model.pathways.clone()).unwrap();
    let cases = ckpt.prepare_cases(&load_cohort(&manifest).unwrap()).unwrap();
    let risks = fresh.predict_risks(&cases).unwrap();
    let times: Vec<f64> = cases.iter().map(|c| c.survival_months).collect();
    let events: Vec<bool> = cases.iter().map(|c| c.event).collect();
    let expected = c_index(&risks, &times, &events).unwrap();
    assert_eq!(report["c_index"].as_f64().unwrap(), expected.c_index);

    let mut rdr = csv::Reader::from_path(&preds).unwrap();
    let dumped: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(dumped, risks);
}

#[test]
fn ablate_writes_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_cohort(dir.path());
    let cfg = write_config(dir.path(), &manifest, 5e-4);
    let out = dir.path().join("ablation");
    let stdout = ok(&["ablate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(stdout.starts_with("hist,geno,self_attn,cohort_mean,cohort_std,avg"));
    let csv = fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(out.join("row_3/fold_report.json").exists());
}

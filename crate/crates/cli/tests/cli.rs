use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn cadseq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cadseq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let o = cadseq(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn code(args: &[&str]) -> i32 {
    cadseq(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

const TINY: &str = r#"{
  "model": {"d_model": 16, "layers": 1, "heads": 2, "d_ff": 16, "seq_len": 24},
  "train": {"batch_size": 16, "epochs": 1, "warmup_steps": 10},
  "gan": {"noise_dim": 4, "hidden_dim": 16, "batch": 8, "iterations": 5},
  "synth": {"max_pairs": 2}
}"#;

struct Env {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    data: PathBuf,
}

fn env(n: usize) -> Env {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("run.json");
    fs::write(&config, TINY).unwrap();
    let data = root.join("data.json");
    ok(&["synth", "--count", &n.to_string(), "--config", s(&config), "--out", s(&data)]);
    Env {
        _dir: dir,
        root,
        config,
        data,
    }
}

#[test]
fn synth_is_deterministic_and_valid() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let c = dir.path().join("c.json");
    ok(&["synth", "--count", "20", "--seed", "3", "--out", s(&a)]);
    ok(&["synth", "--count", "20", "--seed", "3", "--out", s(&b)]);
    ok(&["synth", "--count", "20", "--seed", "4", "--out", s(&c)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    ok(&["synth", "--count", "1", "--out", s(&c)]);
    assert_eq!(json(&c).as_array().unwrap().len(), 1);
    let sum = dir.path().join("sum.json");
    ok(&["ingest", s(&a), "--out", s(&sum)]);
    assert_eq!(json(&sum)["valid"], 20);
}

#[test]
fn synth_proportions_recounted_by_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.json");
    let sum = dir.path().join("s.json");
    ok(&["synth", "--count", "1000", "--out", s(&data)]);
    ok(&["ingest", s(&data), "--out", s(&sum)]);
    let v = json(&sum);
    assert_eq!(v["valid"], 1000);

    let records = json(&data);
    let has = |rec: &Value, cmd: i64| rec["vec"].as_array().unwrap().iter().any(|r| r[0] == cmd);
    let share = |cmd: i64| records.as_array().unwrap().iter().filter(|r| has(r, cmd)).count() as f64 / 1000.0;
    let (line, arc) = (share(0), share(1));
    assert_eq!(v["stats"]["with_line"].as_f64().unwrap(), line);
    assert_eq!(v["stats"]["with_arc"].as_f64().unwrap(), arc);
    assert!((line - 0.78).abs() <= 0.03, "line share {line}");
    assert!((arc - 0.20).abs() <= 0.03, "arc share {arc}");
    let split = &v["split"];
    let total = split["train"].as_u64().unwrap() + split["validation"].as_u64().unwrap() + split["test"].as_u64().unwrap();
    assert_eq!(total, 1000);
    assert!((split["train"].as_f64().unwrap() / 1000.0 - 0.9).abs() < 0.03);

    let again = dir.path().join("s2.json");
    ok(&["ingest", s(&data), "--out", s(&again)]);
    assert_eq!(fs::read(&sum).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn validation_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    fs::write(&empty, "[]").unwrap();
    assert_eq!(code(&["ingest", s(&empty)]), 2);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"[{"id": "x", "vec": [[9, -1]]}]"#).unwrap();
    assert_eq!(code(&["ingest", s(&bad)]), 2);
    assert_eq!(code(&["synth", "--count", "0", "--out", s(&bad)]), 2);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"rre": {"p_line": 1.5}}"#).unwrap();
    assert_eq!(code(&["synth", "--config", s(&cfg)]), 2);
    assert_eq!(code(&["ingest", "/nonexistent/data.json"]), 2);
    assert_eq!(code(&["no-such-command"]), 2);
    assert_eq!(code(&["train-ae", "--rre-offline", "--dataset", s(&empty)]), 2);
}

#[test]
fn augment_is_seeded() {
    let e = env(30);
    let a = e.root.join("a.json");
    let b = e.root.join("b.json");
    ok(&["augment", s(&e.data), "--config", s(&e.config), "--seed", "9", "--out", s(&a)]);
    ok(&["augment", s(&e.data), "--config", s(&e.config), "--seed", "9", "--out", s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let sum = e.root.join("sum.json");
    ok(&["ingest", s(&a), "--config", s(&e.config), "--out", s(&sum)]);
    assert_eq!(json(&sum)["valid"], 30);
}

#[test]
fn training_log_resume_and_contrastive_column() {
    let e = env(60);
    let run = e.root.join("run");
    ok(&["train-ae", "--dataset", s(&e.data), "--config", s(&e.config), "--out", s(&run)]);
    let log = fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,step,l_rec,l_cont,"));
    assert_eq!(log.lines().count(), 2);
    let steps: u64 = log.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();

    let cfg2 = e.root.join("run2.json");
    fs::write(&cfg2, TINY.replace("\"epochs\": 1", "\"epochs\": 2")).unwrap();
    let ck = run.join("ae.json");
    ok(&["train-ae", "--dataset", s(&e.data), "--config", s(&cfg2), "--out", s(&run), "--resume", s(&ck)]);
    let log = fs::read_to_string(run.join("train_log.csv")).unwrap();
    let rows: Vec<&str> = log.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[2].starts_with(&format!("1,{},", 2 * steps)));
    assert_eq!(
        code(&["train-ae", "--dataset", s(&e.data), "--config", s(&cfg2), "--out", s(&run), "--resume", s(&ck), "--no-contrastive"]),
        2
    );

    let base = e.root.join("base");
    ok(&["train-ae", "--dataset", s(&e.data), "--config", s(&e.config), "--out", s(&base), "--no-contrastive", "--rre"]);
    let log = fs::read_to_string(base.join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,step,l_rec,val_acc_cmd,val_acc_param\n"));
    assert!(!log.contains("l_cont"));
}

#[test]
fn evaluation_pipeline() {
    let e = env(60);
    let run = e.root.join("run");
    let c = s(&e.config);
    ok(&["train-ae", "--dataset", s(&e.data), "--config", c, "--out", s(&run)]);
    let ck = run.join("ae.json");

    let z = e.root.join("z.json");
    ok(&["encode", "--checkpoint", s(&ck), s(&e.data), "--config", c, "--out", s(&z)]);
    let zs = json(&z);
    assert_eq!(zs.as_array().unwrap().len(), 60);
    assert_eq!(zs[0]["z"].as_array().unwrap().len(), 16);
    let dec = e.root.join("dec.json");
    ok(&["decode", "--checkpoint", s(&ck), s(&z), "--config", c, "--out", s(&dec)]);
    assert_eq!(json(&dec).as_array().unwrap().len(), 60);

    let rep = e.root.join("rep");
    ok(&["eval-recon", "--checkpoint", s(&ck), s(&e.data), "--split", "all", "--config", c, "--out", s(&rep)]);
    let r = json(&rep.join("recon_report.json"));
    for key in ["acc_cmd", "acc_param", "invalid_rate", "median_cd", "n_cd_invalid", "per_length"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    let csv = fs::read_to_string(rep.join("per_length.csv")).unwrap();
    assert!(csv.starts_with("length,acc_cmd,acc_param,median_cd,count\n"));
    let rep2 = e.root.join("rep2");
    ok(&["eval-recon", "--checkpoint", s(&ck), s(&e.data), "--split", "all", "--config", c, "--out", s(&rep2)]);
    assert_eq!(
        fs::read(rep.join("recon_report.json")).unwrap(),
        fs::read(rep2.join("recon_report.json")).unwrap()
    );

    let cl = e.root.join("cluster.csv");
    ok(&["cluster", "--checkpoint", s(&ck), s(&e.data), "--split", "all", "--config", c, "--out", s(&cl)]);
    let cl = fs::read_to_string(&cl).unwrap();
    assert!(cl.starts_with("ratio,k,sc,sse\n"));
    assert_eq!(cl.lines().count(), 11);

    let perm = e.root.join("perm.json");
    ok(&["perm-test", "--checkpoint", s(&ck), s(&e.data), "--split", "all", "--config", c, "--out", s(&perm)]);
    for row in json(&perm).as_array().unwrap() {
        let sim = row["mean_sim"].as_f64().unwrap();
        assert!((-1.0..=1.0).contains(&sim));
        assert!(row["mean_ed"].as_f64().unwrap() >= 0.0);
    }

    ok(&["train-gan", "--checkpoint", s(&ck), "--dataset", s(&e.data), "--config", c, "--out", s(&run)]);
    assert_eq!(fs::read_to_string(run.join("gan_log.csv")).unwrap().lines().count(), 6);
    let gen = e.root.join("gen.json");
    let gan = run.join("gan.json");
    ok(&["generate", "--checkpoint", s(&ck), "--gan", s(&gan), "--count", "7", "--config", c, "--out", s(&gen)]);
    assert_eq!(json(&gen).as_array().unwrap().len(), 7);
    let gr = e.root.join("gen_report.json");
    let o = cadseq(&[
        "eval-gen", "--checkpoint", s(&ck), "--gan", s(&gan), "--count", "7", s(&e.data), "--split", "all", "--config", c,
        "--out", s(&gr),
    ]);
    // an untrained decoder may produce no valid sample at all
    if o.status.success() {
        let g = &json(&gr)["generation"];
        assert!((0.0..=1.0).contains(&g["validity"].as_f64().unwrap()));
    }
    assert_eq!(
        code(&["generate", "--checkpoint", s(&gan), "--gan", s(&gan), "--config", c, "--out", s(&gen)]),
        2
    );
}

#[test]
fn perm_test_without_patterns_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, TINY).unwrap();
    // one pair whose sketch is a single three-line loop
    let data = dir.path().join("tri.json");
    fs::write(
        &data,
        r#"[{"id": "t", "vec": [[4,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1],
        [0,200,128,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1],
        [0,128,200,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1],
        [0,128,128,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1],
        [5,-1,-1,-1,-1,-1,128,128,128,128,128,128,200,40,0,0,0]]}]"#,
    )
    .unwrap();
    let run = dir.path().join("run");
    ok(&["train-ae", "--dataset", s(&data), "--config", s(&cfg), "--out", s(&run)]);
    let ck = run.join("ae.json");
    assert_eq!(
        code(&["perm-test", "--checkpoint", s(&ck), s(&data), "--split", "all", "--config", s(&cfg)]),
        2
    );
}

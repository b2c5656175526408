use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path) -> std::path::PathBuf {
    let corpus = dir.join("corpus");
    let o = dmm(&[
        "synth",
        "--out",
        p(&corpus),
        "--transcripts-per-group",
        "3",
        "--utterances-per-transcript",
        "12",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = dir.join("run.toml");
    fs::write(
        &cfg,
        "condition = \"original_augmented\"\n\
         [paths]\ncorpus = \"corpus\"\nembeddings = \"corpus/embeddings.bin\"\n\
         lexicon = \"corpus/lexicon.tsv\"\noutput = \"out\"\n\
         [split]\nn_runs = 2\n[train]\nepochs = 3\npatience = 2\n",
    )
    .unwrap();
    cfg
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&dmm(&["frobnicate"])), 1);
    assert_eq!(code(&dmm(&["train"])), 1);
    assert_eq!(code(&dmm(&["--help"])), 0);
}

#[test]
fn config_errors_exit_one_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path());
    let o = dmm(&["prepare", "--config", p(&cfg), "--models", "text,video"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("audio_text_time"));

    let o = dmm(&["train", "--config", p(&cfg), "--epochs", "2"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("train.patience"));

    let missing = dir.path().join("nope.toml");
    assert_eq!(code(&dmm(&["prepare", "--config", p(&missing)])), 1);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path());
    let cha = fs::read_dir(dir.path().join("corpus/transcripts"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    fs::write(&cha, "@UTF8\n*PAR:\thello .\n").unwrap();
    let o = dmm(&["prepare", "--config", p(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "fpr,tpr\n0,0\n1,x\n").unwrap();
    let o = dmm(&["plot", "--out", p(&dir.path().join("x.svg")), p(&bad)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn prepare_conserves_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path());
    let o = dmm(&["prepare", "--config", p(&cfg), "--condition", "original"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("corpus/synth_summary.json")).unwrap())
            .unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("out/counts.csv")).unwrap();
    let mut by_label = [0u64; 2];
    for r in rdr.records() {
        let r = r.unwrap();
        assert_eq!(&r[0], "original");
        let n: u64 = r[3].parse().unwrap();
        if &r[2] == "augmented" {
            assert_eq!(n, 0);
        }
        by_label[(&r[1] == "dementia") as usize] += n;
    }
    assert_eq!(by_label[0], summary["control_sentences"].as_u64().unwrap());
    assert_eq!(by_label[1], summary["dementia_sentences"].as_u64().unwrap());

    let manifest = fs::read_to_string(dir.path().join("out/manifest.csv")).unwrap();
    let rows = manifest.lines().count() - 1;
    let total = summary["sentences"].as_u64().unwrap() as usize;
    // one row per record per run, and the config asks for two runs
    assert_eq!(rows, total * 2);
}

#[test]
fn train_report_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path());
    let o = dmm(&["train", "--config", p(&cfg), "--models", "text"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in [
        "metrics.csv",
        "table_test.csv",
        "table_validation.csv",
        "errors_text.csv",
        "augmentation.csv",
        "roc_text_0.csv",
        "epochs_text_1.csv",
        "checkpoints/text_1.ckpt",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }

    let o = dmm(&["report", "--dir", p(&out)]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("| Text |"), "{text}");
    assert!(text.contains('±'));

    let o = dmm(&[
        "evaluate",
        "--config",
        p(&cfg),
        "--checkpoint",
        p(&out.join("checkpoints/text_1.ckpt")),
        "--run",
        "1",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    // the checkpoint is the restored best model, so evaluation repeats the logged test row
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let row = metrics
        .lines()
        .find(|l| l.starts_with("test,text,1,"))
        .unwrap();
    let acc: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
    assert!((m["accuracy"].as_f64().unwrap() - acc).abs() < 1e-6);
}

#[test]
fn shipped_configs_parse() {
    use dmm_cli::config::RunConfig;
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let cfg = RunConfig::load(&root.join("synth.toml")).unwrap();
    assert_eq!(cfg.models.len(), 6);
    assert_eq!(cfg.train, dementia_mm::train_eval::TrainConfig::default());
    assert_eq!(cfg.split, dementia_mm::dataset::SplitPlan::default());
    RunConfig::load(&root.join("corpus.toml")).unwrap();
}

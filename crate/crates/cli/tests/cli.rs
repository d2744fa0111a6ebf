use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use latent_eeg::data::{read_container, write_container, EegRecording, TrialInfo};
use latent_eeg::Tensor;

const SMALL: &str = r#"
dataset = "synthetic"

[autoencoder]
epochs = 1
batch_size = 8

[classifier]
block1_filters = 4
block2_filters = 8
block2_out_filters = 8
dense = 8

[classifier_train]
epochs = 2
batch_size = 8
"#;

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latent-eeg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    ok(&bin(&["make-synthetic", "-c", "run.toml", "-o", "data"], dir.path()));
    dir
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn synthetic_corpus_shapes_and_balance() {
    let dir = setup();
    let data = dir.path().join("data");
    for s in 1..=4 {
        let rec = read_container(data.join(format!("subject{s:02}.eegc"))).unwrap();
        assert_eq!(rec.samples.shape(), &[512, 32]);
        let ones = rec.trials.iter().filter(|t| t.label.as_deref() == Some("1")).count();
        assert!(ones.abs_diff(rec.trials.len() - ones) <= 1);
    }
    let manifest = json(&data.join("manifest.json"));
    assert!(manifest["artifacts"].as_array().unwrap().len() >= 9);
}

#[test]
fn loso_report_has_one_fold_per_subject() {
    let dir = setup();
    ok(&bin(&["loso", "-c", "run.toml", "-d", "data", "-o", "out"], dir.path()));
    let report = json(&dir.path().join("out/loso_report.json"));
    assert_eq!(report["summary"]["folds"].as_array().unwrap().len(), 4);
    assert_eq!(report["std_kind"], "population");
    let csv = std::fs::read_to_string(dir.path().join("out/loso_folds.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn train_ae_is_deterministic() {
    let dir = setup();
    ok(&bin(&["train-ae", "-c", "run.toml", "-d", "data", "-o", "a"], dir.path()));
    ok(&bin(&["train-ae", "-c", "run.toml", "-d", "data", "-o", "b"], dir.path()));
    let a = std::fs::read(dir.path().join("a/autoencoder.eawt")).unwrap();
    let b = std::fs::read(dir.path().join("b/autoencoder.eawt")).unwrap();
    assert_eq!(a, b);
    // reports embed the output dir, so compare model artifacts only
    let ma = json(&dir.path().join("a/manifest.json"));
    let mb = json(&dir.path().join("b/manifest.json"));
    let hash = |m: &serde_json::Value, p: &str| {
        m["artifacts"]
            .as_array()
            .unwrap()
            .iter()
            .find(|e| e["path"] == p)
            .unwrap()["sha256"]
            .clone()
    };
    assert_eq!(hash(&ma, "autoencoder.eawt"), hash(&mb, "autoencoder.eawt"));
    assert_eq!(hash(&ma, "encoder.json"), hash(&mb, "encoder.json"));
}

#[test]
fn manifest_hashes_match_files() {
    use sha2::{Digest, Sha256};
    let dir = setup();
    ok(&bin(&["train-ae", "-c", "run.toml", "-d", "data", "-o", "out"], dir.path()));
    ok(&bin(&["train-clf", "-c", "run.toml", "-d", "data", "-o", "out"], dir.path()));
    let out = dir.path().join("out");
    let manifest = json(&out.join("manifest.json"));
    let entries = manifest["artifacts"].as_array().unwrap();
    assert!(entries.iter().any(|e| e["command"] == "train-ae"));
    assert!(entries.iter().any(|e| e["command"] == "train-clf"));
    for e in entries {
        let bytes = std::fs::read(out.join(e["path"].as_str().unwrap())).unwrap();
        assert_eq!(e["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn analysis_commands_write_artifacts() {
    let dir = setup();
    for cmd in ["train-ae", "train-clf", "dump-attention", "latent-analysis"] {
        ok(&bin(&[cmd, "-c", "run.toml", "-d", "data", "-o", "out", "--set", "analysis.max_windows=2"], dir.path()));
    }
    let out = dir.path().join("out");
    let trace = latent_eeg::analysis::read_attention(out.join("attention/subject01_000.json")).unwrap();
    assert_eq!(trace.post_attention.shape(), &[16, 6]);
    assert_eq!(trace.pre_attention.shape(), &[16, 12]);
    // 64 samples at 128 Hz over 16 steps
    assert!((trace.seconds_per_step - 0.03125).abs() < 1e-12);
    let analysis = json(&out.join("latent_analysis.json"));
    assert_eq!(analysis["windows"], 8);
    assert_eq!(analysis["top_channel_per_latent"].as_array().unwrap().len(), 8);
    let proj = std::fs::read_to_string(out.join("projection.csv")).unwrap();
    assert_eq!(proj.lines().next().unwrap(), "subject,window,step,x,y");
    assert_eq!(proj.lines().count(), 1 + 8 * 64);
}

#[test]
fn encode_deap_shaped_container() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("deap");
    std::fs::create_dir_all(&data).unwrap();
    for (s, rating) in [("s01", 3.0), ("s02", 7.0)] {
        let x = Tensor::from_fn(&[8064, 32], |i| ((i * 37 % 101) as f32 / 50.0 - 1.0) * if s == "s01" { 1.0 } else { 0.5 });
        let mut rec = EegRecording::new(s, 128.0, (0..32).map(|c| format!("e{c}")).collect(), x).unwrap();
        rec.trials = vec![TrialInfo {
            index: 0,
            start_sample: 0,
            n_samples: 8064,
            ratings: BTreeMap::from([("valence".to_string(), rating), ("arousal".to_string(), rating)]),
            ..TrialInfo::default()
        }];
        write_container(&rec, data.join(format!("{s}.eegc"))).unwrap();
    }
    let args = [
        "-d",
        "deap",
        "-o",
        "out",
        "--set",
        "dataset=\"deap\"",
        "--set",
        "autoencoder.epochs=1",
        "--set",
        "autoencoder.batch_size=2",
    ];
    let mut train = vec!["train-ae"];
    train.extend_from_slice(&args);
    ok(&bin(&train, dir.path()));
    let mut enc = vec!["encode", "deap/s01.eegc"];
    enc.extend_from_slice(&args);
    ok(&bin(&enc, dir.path()));
    let latent = read_container(dir.path().join("out/latents/s01.eegc")).unwrap();
    assert_eq!(latent.samples.shape(), &[8064, 8]);
    assert_eq!(latent.channel_names.len(), 8);
}

#[test]
fn config_errors_exit_2_with_json() {
    let dir = setup();
    let out = bin(&["loso", "-c", "run.toml", "--set", "classifier.bogus=3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("bogus"));

    let out = bin(&["loso", "-c", "run.toml", "--set", "classifier.block2_out_filters=7"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().starts_with("classifier:"));

    let out = bin(&["loso", "-c", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_exits_3() {
    let dir = setup();
    let out = bin(&["loso", "-c", "run.toml", "-d", "nowhere"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "missing-data");
    let out = bin(&["encode", "-c", "run.toml", "-d", "data", "-o", "fresh"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

/// Sliding-window energy detector over the emitted labelled source.
fn detect_burst(source: &[f32], len: usize) -> usize {
    (0..=source.len() - len)
        .max_by(|&a, &b| {
            let e = |s: usize| source[s..s + len].iter().map(|v| (*v as f64).powi(2)).sum::<f64>();
            e(a).total_cmp(&e(b)).then(b.cmp(&a))
        })
        .unwrap()
}

#[test]
fn burst_truth_matches_energy_detector() {
    let dir = tempfile::tempdir().unwrap();
    ok(&bin(
        &["make-synthetic", "-o", "data", "--set", "synthetic.task=\"burst\"", "--seed", "3"],
        dir.path(),
    ));
    let truth = json(&dir.path().join("data/truth/truth.json"));
    let len = truth["config"]["window_len"].as_u64().unwrap() as usize;
    let mut checked = 0;
    for subj in truth["subjects"].as_array().unwrap() {
        let name = subj["subject"].as_str().unwrap();
        let src = read_container(dir.path().join(format!("data/truth/{name}.sources.eegc"))).unwrap();
        let s0 = src.samples.column(0);
        for w in subj["windows"].as_array().unwrap() {
            let start = w["start_sample"].as_u64().unwrap() as usize;
            let b = w["burst"].as_array().unwrap();
            let (b0, blen) = (b[0].as_u64().unwrap() as usize, b[1].as_u64().unwrap() as usize);
            assert_eq!(detect_burst(&s0[start..start + len], blen), b0, "{name} window at {start}");
            checked += 1;
        }
    }
    assert_eq!(checked, 32);
}

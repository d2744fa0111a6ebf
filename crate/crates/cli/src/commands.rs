use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use latent_eeg::analysis::{
    dump_attention, latent_channel_similarity, project_latents_2d, write_projection_csv, write_similarity_csv,
};
use latent_eeg::classifier::{train_classifier, ClassifierConfig, ClassifierHistory, ClassifierModel, ClassifierTrainConfig};
use latent_eeg::data::{
    load_chbmit, load_deap, load_seed, load_windows_dir, read_container, write_container, DatasetKind, EegRecording,
    SubjectWindows, ZScore, CONTAINER_EXT,
};
use latent_eeg::encoder::{train_autoencoder, AutoencoderConfig, AutoencoderModel, AutoencoderTrainConfig, PcaModel};
use latent_eeg::eval::{
    run_loso, seed_session_average, write_csv_report, EncoderKind, FittedEncoder, LatentPipeline, LosoOptions, RunSummary,
};
use latent_eeg::synthetic::{make_synthetic, write_synthetic, SyntheticConfig};
use latent_eeg::tensor::{read_checkpoint, write_checkpoint};
use latent_eeg::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::{CliError, Command};

type Result<T> = std::result::Result<T, CliError>;

/// Tracks files written under the output directory for the manifest.
struct Outputs {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(p)
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.path(rel)?;
        std::fs::write(&p, bytes)?;
        self.written.push(p.clone());
        Ok(p)
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    fn record(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    /// Updates `manifest.json`, keyed by relative path, with every artifact
    /// this command wrote and its SHA-256.
    fn finish(self, command: &str) -> Result<()> {
        let path = self.root.join(MANIFEST);
        let mut entries: BTreeMap<String, ManifestEntry> = match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice::<Manifest>(&bytes)
                .map(|m| m.artifacts.into_iter().map(|a| (a.path.clone(), a)).collect())
                .unwrap_or_default(),
            Err(_) => BTreeMap::new(),
        };
        for p in &self.written {
            let bytes = std::fs::read(p)?;
            let rel = p.strip_prefix(&self.root).unwrap_or(p).to_string_lossy().replace('\\', "/");
            entries.insert(
                rel.clone(),
                ManifestEntry {
                    path: rel,
                    sha256: hex::encode(Sha256::digest(&bytes)),
                    bytes: bytes.len(),
                    command: command.to_string(),
                },
            );
        }
        let doc = Manifest {
            artifacts: entries.into_values().collect(),
        };
        std::fs::write(path, serde_json::to_vec_pretty(&doc)?)?;
        Ok(())
    }
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    artifacts: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
    bytes: usize,
    /// Subcommand that last wrote the file.
    command: String,
}

struct Context<'a> {
    cfg: &'a RunConfig,
    command: &'static str,
    metadata: serde_json::Value,
}

pub fn run(command: Command, cfg: &RunConfig, config_path: Option<&Path>, overrides: &[(String, String)]) -> Result<()> {
    let name = command.name();
    let ctx = Context {
        cfg,
        command: name,
        metadata: serde_json::json!({
            "tool": "latent-eeg",
            "version": env!("CARGO_PKG_VERSION"),
            "command": name,
            "config_file": config_path.map(|p| p.to_string_lossy().into_owned()),
            "overrides": overrides,
            "config": cfg,
        }),
    };
    let mut out = Outputs::new(&cfg.output_dir)?;
    log::info!("{name}: writing under {}", cfg.output_dir.display());
    match command {
        Command::TrainAe => train_ae(&ctx, &mut out)?,
        Command::Encode { inputs, model_dir } => encode(&ctx, &mut out, &inputs, model_dir.as_deref())?,
        Command::TrainClf { model_dir } => train_clf(&ctx, &mut out, model_dir.as_deref())?,
        Command::Loso => loso(&ctx, &mut out)?,
        Command::DumpAttention { model_dir } => attention(&ctx, &mut out, model_dir.as_deref())?,
        Command::LatentAnalysis { model_dir } => latent_analysis(&ctx, &mut out, model_dir.as_deref())?,
        Command::MakeSynthetic => synthetic(&ctx, &mut out)?,
    }
    out.finish(name)
}

fn load_windows(cfg: &RunConfig, session: Option<u32>) -> Result<SubjectWindows> {
    let dir = &cfg.data_dir;
    if !dir.is_dir() {
        return Err(CliError::MissingData(format!("data directory {} not found", dir.display())));
    }
    let windows = match cfg.dataset {
        DatasetKind::Deap => load_deap(dir, cfg.task())?,
        DatasetKind::Seed => load_seed(dir, session)?,
        DatasetKind::Chbmit => load_chbmit(dir, &cfg.patients, cfg.task(), &cfg.chbmit)?,
        DatasetKind::Synthetic => load_windows_dir(dir, cfg.task())?,
    };
    if windows.values().all(|w| w.is_empty()) {
        return Err(CliError::MissingData(format!("no labelled windows found in {}", dir.display())));
    }
    Ok(windows)
}

fn all_samples(windows: &SubjectWindows) -> Vec<&Tensor<f32>> {
    windows.values().flatten().map(|w| &w.samples).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct EncoderFile {
    kind: EncoderKind,
    autoencoder: Option<AutoencoderConfig>,
    pca: Option<PcaModel>,
    zscore: Option<ZScore>,
    losses: Vec<f64>,
}

const ENCODER_JSON: &str = "encoder.json";
const ENCODER_WEIGHTS: &str = "autoencoder.eawt";
const CLASSIFIER_JSON: &str = "classifier.json";
const CLASSIFIER_WEIGHTS: &str = "classifier.eawt";

struct LoadedEncoder {
    encoder: FittedEncoder,
    zscore: Option<ZScore>,
}

impl LoadedEncoder {
    fn latents(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let x = match &self.zscore {
            Some(z) => z.apply(x)?,
            None => x.clone(),
        };
        Ok(self.encoder.encode(&x)?)
    }

    /// Latents of a whole recording. An autoencoder with a per-step bias
    /// only accepts its training length, so longer recordings are encoded
    /// window by window when the length divides evenly.
    fn latents_long(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let t = x.shape()[0];
        let window = match &self.encoder {
            FittedEncoder::Autoencoder(m) if m.config.time_bias && m.config.timesteps != t => m.config.timesteps,
            _ => return self.latents(x),
        };
        if !t.is_multiple_of(window) {
            return Err(CliError::Core(latent_eeg::Error::Shape(format!(
                "recording of {t} samples is not a multiple of the {window}-sample encoder window"
            ))));
        }
        let parts: Vec<Tensor<f32>> = (0..t / window)
            .map(|i| self.latents(&x.slice_rows(i * window, window)?))
            .collect::<Result<_>>()?;
        stack_rows(&parts)
    }
}

fn model_file(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if !p.is_file() {
        return Err(CliError::MissingData(format!("{} not found; run train-ae / train-clf first", p.display())));
    }
    Ok(p)
}

fn load_encoder(dir: &Path) -> Result<LoadedEncoder> {
    let meta: EncoderFile = serde_json::from_slice(&std::fs::read(model_file(dir, ENCODER_JSON)?)?)?;
    let encoder = match meta.kind {
        EncoderKind::Autoencoder => {
            let cfg = meta
                .autoencoder
                .ok_or_else(|| CliError::Config(format!("{ENCODER_JSON}: autoencoder config missing")))?;
            let ckpt = read_checkpoint(model_file(dir, ENCODER_WEIGHTS)?)?;
            FittedEncoder::Autoencoder(Arc::new(AutoencoderModel::from_checkpoint(cfg, &ckpt)?))
        }
        EncoderKind::Pca => FittedEncoder::Pca(Arc::new(
            meta.pca
                .ok_or_else(|| CliError::Config(format!("{ENCODER_JSON}: PCA model missing")))?,
        )),
    };
    Ok(LoadedEncoder {
        encoder,
        zscore: meta.zscore,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassifierFile {
    config: ClassifierConfig,
    train: ClassifierTrainConfig,
    history: ClassifierHistory,
}

fn load_classifier(dir: &Path) -> Result<ClassifierModel<f32>> {
    let meta: ClassifierFile = serde_json::from_slice(&std::fs::read(model_file(dir, CLASSIFIER_JSON)?)?)?;
    let ckpt = read_checkpoint(model_file(dir, CLASSIFIER_WEIGHTS)?)?;
    Ok(ClassifierModel::from_checkpoint(meta.config, &ckpt)?)
}

fn train_ae(ctx: &Context, out: &mut Outputs) -> Result<()> {
    let cfg = ctx.cfg;
    let windows = load_windows(cfg, None)?;
    let raw = all_samples(&windows);
    let zscore = if cfg.normalize { Some(ZScore::fit(raw.iter().copied())?) } else { None };
    let train: Vec<Tensor<f32>> = match &zscore {
        Some(z) => raw.iter().map(|x| z.apply(x)).collect::<latent_eeg::Result<_>>()?,
        None => raw.iter().map(|x| (*x).clone()).collect(),
    };
    let (t, c) = train[0].dims2()?;
    let file = match cfg.encoder {
        EncoderKind::Autoencoder => {
            let ae_cfg = AutoencoderConfig {
                time_bias: cfg.time_bias,
                ..AutoencoderConfig::new(c, cfg.latent_dims(), t)
            };
            let train_cfg = AutoencoderTrainConfig {
                seed: cfg.seed,
                ..cfg.autoencoder
            };
            let (model, history) = train_autoencoder(&train, ae_cfg, &train_cfg)?;
            let p = out.path(ENCODER_WEIGHTS)?;
            write_checkpoint(&p, &model.to_checkpoint())?;
            out.record(p);
            EncoderFile {
                kind: EncoderKind::Autoencoder,
                autoencoder: Some(ae_cfg),
                pca: None,
                zscore,
                losses: history.epoch_losses,
            }
        }
        EncoderKind::Pca => EncoderFile {
            kind: EncoderKind::Pca,
            autoencoder: None,
            pca: Some(PcaModel::fit(&train, cfg.latent_dims())?),
            zscore,
            losses: Vec::new(),
        },
    };
    out.write_json(ENCODER_JSON, &file)?;
    out.write_json(
        "train_ae_report.json",
        &serde_json::json!({ "metadata": ctx.metadata, "windows": train.len(), "losses": file.losses }),
    )?;
    Ok(())
}

fn encode(ctx: &Context, out: &mut Outputs, inputs: &[PathBuf], model_dir: Option<&Path>) -> Result<()> {
    let cfg = ctx.cfg;
    let enc = load_encoder(model_dir.unwrap_or(&cfg.output_dir))?;
    let inputs: Vec<PathBuf> = if inputs.is_empty() {
        if !cfg.data_dir.is_dir() {
            return Err(CliError::MissingData(format!("data directory {} not found", cfg.data_dir.display())));
        }
        let mut v: Vec<PathBuf> = std::fs::read_dir(&cfg.data_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == CONTAINER_EXT))
            .collect();
        v.sort();
        v
    } else {
        inputs.to_vec()
    };
    if inputs.is_empty() {
        return Err(CliError::MissingData(format!("no containers in {}", cfg.data_dir.display())));
    }
    let mut encoded = Vec::new();
    for path in &inputs {
        if !path.is_file() {
            return Err(CliError::MissingData(format!("{} not found", path.display())));
        }
        let rec = read_container(path)?;
        let z = enc.latents_long(&rec.samples)?;
        let l = z.shape()[1];
        let mut latent = EegRecording::new(
            rec.subject.clone(),
            rec.sample_rate_hz,
            (0..l).map(|i| format!("latent{:02}", i + 1)).collect(),
            z,
        )?;
        latent.annotations = rec.annotations.clone();
        latent.trials = rec.trials.clone();
        let name = path.file_name().expect("file path").to_string_lossy().into_owned();
        let dest = out.path(&format!("latents/{name}"))?;
        write_container(&latent, &dest)?;
        out.record(dest);
        encoded.push(serde_json::json!({ "input": path.to_string_lossy(), "output": format!("latents/{name}") }));
    }
    out.write_json("encode_report.json", &serde_json::json!({ "metadata": ctx.metadata, "files": encoded }))?;
    Ok(())
}

fn train_clf(ctx: &Context, out: &mut Outputs, model_dir: Option<&Path>) -> Result<()> {
    let cfg = ctx.cfg;
    let enc = load_encoder(model_dir.unwrap_or(&cfg.output_dir))?;
    let windows = load_windows(cfg, None)?;
    let data: Vec<(Tensor<f32>, usize)> = windows
        .values()
        .flatten()
        .map(|w| Ok((enc.latents(&w.samples)?, w.label)))
        .collect::<Result<_>>()?;
    let (t, l) = data[0].0.dims2()?;
    let clf_cfg = cfg.classifier_for(t, l);
    let train = ClassifierTrainConfig {
        seed: cfg.seed,
        ..cfg.classifier_train
    };
    let (model, history) = train_classifier(&data, clf_cfg, &train)?;
    let p = out.path(CLASSIFIER_WEIGHTS)?;
    write_checkpoint(&p, &model.to_checkpoint())?;
    out.record(p);
    out.write_json(
        CLASSIFIER_JSON,
        &ClassifierFile {
            config: clf_cfg,
            train,
            history: history.clone(),
        },
    )?;
    out.write_json(
        "train_clf_report.json",
        &serde_json::json!({ "metadata": ctx.metadata, "windows": data.len(), "history": history }),
    )?;
    Ok(())
}

fn loso(ctx: &Context, out: &mut Outputs) -> Result<()> {
    let cfg = ctx.cfg;
    let pipeline = LatentPipeline::new(cfg.pipeline());
    let opts = LosoOptions {
        task: cfg.task().name().to_string(),
        seed: cfg.seed,
        parallel: cfg.parallel,
        classes: 2,
    };
    let (summary, sessions): (RunSummary, Vec<RunSummary>) = if cfg.dataset == DatasetKind::Seed && !cfg.sessions.is_empty()
    {
        let runs = cfg
            .sessions
            .iter()
            .map(|&s| {
                log::info!("session {s}");
                Ok(run_loso(&load_windows(cfg, Some(s))?, &pipeline, &opts)?)
            })
            .collect::<Result<Vec<_>>>()?;
        (seed_session_average(&runs)?, runs)
    } else {
        (run_loso(&load_windows(cfg, None)?, &pipeline, &opts)?, Vec::new())
    };
    log::info!("{}: {:.4} +- {:.4}", summary.task, summary.mean, summary.std);
    out.write_json(
        "loso_report.json",
        &serde_json::json!({
            "metadata": ctx.metadata,
            "std_kind": "population",
            "summary": summary,
            "sessions": sessions,
        }),
    )?;
    let csv = out.path("loso_folds.csv")?;
    write_csv_report(&summary, &csv)?;
    out.record(csv);
    println!("{}", serde_json::json!({ "task": summary.task, "folds": summary.folds.len(), "mean": summary.mean, "std": summary.std }));
    Ok(())
}

/// Windows of the configured subject, capped at `analysis.max_windows`.
fn analysis_windows(cfg: &RunConfig, windows: &SubjectWindows) -> Result<(String, Vec<Tensor<f32>>)> {
    let subject = match &cfg.analysis.subject {
        Some(s) => s.clone(),
        None => windows.keys().next().cloned().expect("non-empty windows"),
    };
    let ws = windows
        .get(&subject)
        .ok_or_else(|| CliError::MissingData(format!("subject {subject} has no windows")))?;
    let cap = if cfg.analysis.max_windows == 0 { ws.len() } else { cfg.analysis.max_windows };
    Ok((subject, ws.iter().take(cap).map(|w| w.samples.clone()).collect()))
}

fn attention(ctx: &Context, out: &mut Outputs, model_dir: Option<&Path>) -> Result<()> {
    let cfg = ctx.cfg;
    let dir = model_dir.unwrap_or(&cfg.output_dir);
    let enc = load_encoder(dir)?;
    let model = load_classifier(dir)?;
    let windows = load_windows(cfg, None)?;
    let (subject, ws) = analysis_windows(cfg, &windows)?;
    let (_, rate) = cfg.window_shape();
    let mut traces = Vec::new();
    for (i, x) in ws.iter().enumerate() {
        let id = format!("{subject}_{i:03}");
        let z = enc.latents(x)?;
        let (trace, files) = dump_attention(&model, &z, &id, &subject, rate, out.path("attention")?)?;
        for p in [files.sidecar.clone(), files.pre_attention, files.post_attention, files.weights] {
            out.record(p);
        }
        traces.push(serde_json::json!({
            "sample_id": id,
            "predicted": trace.predicted,
            "sidecar": format!("attention/{}", files.sidecar.file_name().unwrap().to_string_lossy()),
        }));
    }
    out.write_json("attention/index.json", &serde_json::json!({ "metadata": ctx.metadata, "traces": traces }))?;
    Ok(())
}

/// Channel names of the first container in the data directory, when it
/// matches the window width.
fn channel_names(cfg: &RunConfig, channels: usize) -> Vec<String> {
    let first = std::fs::read_dir(&cfg.data_dir).ok().and_then(|rd| {
        let mut v: Vec<PathBuf> = rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == CONTAINER_EXT))
            .collect();
        v.sort();
        v.into_iter().next()
    });
    first
        .and_then(|p| read_container(p).ok())
        .map(|r| r.channel_names)
        .filter(|n| n.len() == channels)
        .unwrap_or_default()
}

fn stack_rows(ms: &[Tensor<f32>]) -> Result<Tensor<f32>> {
    let c = ms[0].dims2()?.1;
    let data: Vec<f32> = ms.iter().flat_map(|m| m.data().iter().copied()).collect();
    Ok(Tensor::new(vec![data.len() / c, c], data)?)
}

fn latent_analysis(ctx: &Context, out: &mut Outputs, model_dir: Option<&Path>) -> Result<()> {
    let cfg = ctx.cfg;
    let enc = load_encoder(model_dir.unwrap_or(&cfg.output_dir))?;
    let windows = load_windows(cfg, None)?;
    let cap = if cfg.analysis.max_windows == 0 { usize::MAX } else { cfg.analysis.max_windows };
    let mut raw = Vec::new();
    let mut latent = Vec::new();
    for (subject, ws) in &windows {
        for w in ws.iter().take(cap) {
            let x = match &enc.zscore {
                Some(z) => z.apply(&w.samples)?,
                None => w.samples.clone(),
            };
            latent.push((subject.clone(), enc.encoder.encode(&x)?));
            raw.push((subject.clone(), x));
        }
    }

    let lat: Vec<Tensor<f32>> = latent.iter().map(|(_, z)| z.clone()).collect();
    let xs: Vec<Tensor<f32>> = raw.iter().map(|(_, x)| x.clone()).collect();
    let names = channel_names(cfg, xs[0].shape()[1]);
    let table = latent_channel_similarity(&stack_rows(&lat)?, &stack_rows(&xs)?, &names)?;
    let p = out.path("similarity.csv")?;
    write_similarity_csv(&table, &p)?;
    out.record(p);

    let projection = project_latents_2d(&latent)?;
    let p = out.path("projection.csv")?;
    write_projection_csv(&projection, &p)?;
    out.record(p);

    // same diagnostic for a PCA encoder of matching width
    let pca = PcaModel::fit(&xs, cfg.latent_dims().min(xs[0].shape()[1]))?;
    let pca_latent: Vec<(String, Tensor<f32>)> = raw
        .iter()
        .map(|(s, x)| Ok((s.clone(), pca.transform(x)?)))
        .collect::<Result<_>>()?;
    let pca_projection = project_latents_2d(&pca_latent)?;
    let p = out.path("projection_pca.csv")?;
    write_projection_csv(&pca_projection, &p)?;
    out.record(p);

    let flagged: Vec<_> = table
        .flagged()
        .map(|(l, s)| serde_json::json!({ "latent": l, "channel": s.channel }))
        .collect();
    let top: Vec<_> = table
        .ranked
        .iter()
        .map(|row| row.first().map(|s| serde_json::json!({ "channel": s.name, "cosine": s.cosine })))
        .collect();
    out.write_json(
        "latent_analysis.json",
        &serde_json::json!({
            "metadata": ctx.metadata,
            "windows": latent.len(),
            "dispersion": { "encoder": projection.dispersion, "pca": pca_projection.dispersion },
            "top_channel_per_latent": top,
            "zero_norm_pairs": flagged,
        }),
    )?;
    Ok(())
}

fn synthetic(ctx: &Context, out: &mut Outputs) -> Result<()> {
    let cfg = SyntheticConfig {
        seed: ctx.cfg.seed,
        ..ctx.cfg.synthetic
    };
    let corpus = make_synthetic(&cfg)?;
    for p in write_synthetic(&corpus, &out.root)? {
        out.record(p);
    }
    out.write_json(
        "make_synthetic_report.json",
        &serde_json::json!({ "metadata": ctx.metadata, "subjects": corpus.recordings.len(), "config": cfg }),
    )?;
    log::info!("{}: {} subjects", ctx.command, corpus.recordings.len());
    Ok(())
}

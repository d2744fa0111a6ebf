//! Acceptance suite. Each test prints one `PASS`/`FAIL` line straight to
//! stdout (bypassing the harness capture) and then asserts.

use std::io::Write;
use std::time::Instant;

use latent_eeg::analysis::{cosine, mass_inside_span, trace_activations};
use latent_eeg::classifier::{ClassifierConfig, ClassifierModel, ClassifierTrainConfig};
use latent_eeg::data::{
    decode_container, encode_container, label_deap, parse_edf, seed_central_crop, segment_chb, Annotation, ChbConfig,
    EegRecording, LabeledWindow, SubjectWindows, TaskTag, TrialInfo, CHB_CHANNELS_18, CHB_CHANNELS_22,
};
use latent_eeg::encoder::{train_autoencoder, AutoencoderConfig, AutoencoderModel, AutoencoderTrainConfig, PcaModel};
use latent_eeg::eval::{
    leakage_check, run_loso, EncoderKind, LatentPipeline, LosoOptions, OracleStub, PipelineConfig, RandomStub,
};
use latent_eeg::nn::init::uniform;
use latent_eeg::nn::{
    attention_context, channel_attention, instance_norm, split_time_attention, Attention, Conv1d, Dense, Highway, Lstm,
    Prelu, INSTANCE_NORM_EPS,
};
use latent_eeg::synthetic::{make_synthetic, BurstLabel, SyntheticConfig, SyntheticTask};
use latent_eeg::tensor::{gradcheck, AdamConfig, AdamState, Graph, ParamSet};
use latent_eeg::{derive_seed, seeded_rng, Error, FormatError, Rng, Tensor};
use rand::Rng as _;

fn report(name: &str, pass: bool, detail: &str) {
    let line = format!("{} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(pass, "{name}: {detail}");
}

// ---------------------------------------------------------------- gradients

fn probe_loss(g: &mut Graph<f64>, out: latent_eeg::tensor::Var, rng: &mut Rng) -> latent_eeg::Result<latent_eeg::tensor::Var> {
    let shape = g.shape(out).to_vec();
    let p = g.input(uniform(&shape, 1.0, rng));
    let m = g.mul(out, p)?;
    Ok(g.sum(m))
}

/// Worst relative error over `instances` random instances of one layer.
fn grad_layer(
    instances: u64,
    build: impl Fn(&mut ParamSet<f64>, &mut Rng) -> Box<dyn Fn(&mut Graph<f64>, &latent_eeg::tensor::Bound) -> latent_eeg::Result<latent_eeg::tensor::Var>>,
) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let mut rng = seeded_rng(1000 + i);
        let mut ps = ParamSet::<f64>::new();
        let f = build(&mut ps, &mut rng);
        let probe_seed = rng.random::<u64>();
        let rep = gradcheck::check(&ps, 1e-5, |g, b| {
            let out = f(g, b)?;
            probe_loss(g, out, &mut seeded_rng(probe_seed))
        })
        .unwrap();
        worst = worst.max(rep.max_rel_error);
    }
    worst
}

#[test]
fn gradient_suite() {
    let t0 = Instant::now();
    let n = 6;
    let dims = |rng: &mut Rng, lo: usize, hi: usize| rng.random_range(lo..=hi);
    let mut results: Vec<(&str, f64)> = Vec::new();

    results.push((
        "lstm",
        grad_layer(n, |ps, rng| {
            let (t, d, h) = (dims(rng, 2, 5), dims(rng, 1, 4), dims(rng, 1, 4));
            let layer = Lstm::new(ps, "l", d, h, rng);
            let x = ps.add("x", uniform(&[t, d], 1.0, rng));
            Box::new(move |g, b| layer.forward(g, b, b.get(x)))
        }),
    ));
    results.push((
        "channel attention",
        grad_layer(n, |ps, rng| {
            let (t, d) = (dims(rng, 2, 6), dims(rng, 2, 5));
            let att = Attention::new(ps, "a", d, Some(t), rng);
            let bias = att.bias.unwrap();
            *ps.get_mut(bias) = uniform(&[t], 0.5, rng);
            let x = ps.add("x", uniform(&[t, d], 1.5, rng));
            Box::new(move |g, b| Ok(att.channel(g, b, b.get(x))?.output))
        }),
    ));
    results.push((
        "context attention",
        grad_layer(n, |ps, rng| {
            let (t, d) = (dims(rng, 2, 6), dims(rng, 2, 5));
            let att = Attention::new(ps, "a", d, Some(t), rng);
            let bias = att.bias.unwrap();
            *ps.get_mut(bias) = uniform(&[t], 0.5, rng);
            let x = ps.add("x", uniform(&[t, d], 1.5, rng));
            Box::new(move |g, b| Ok(att.context(g, b, b.get(x))?.output))
        }),
    ));
    results.push((
        "split-time attention",
        grad_layer(n, |ps, rng| {
            let (t, d) = (dims(rng, 2, 6), 2 * dims(rng, 1, 3));
            let x = ps.add("x", uniform(&[t, d], 1.5, rng));
            Box::new(move |g, b| Ok(split_time_attention(g, b.get(x))?.output))
        }),
    ));
    results.push((
        "conv1d",
        grad_layer(n, |ps, rng| {
            let (t, ci, co) = (dims(rng, 3, 7), dims(rng, 1, 3), dims(rng, 1, 3));
            let k = 2 * dims(rng, 0, 2) + 1;
            let conv = Conv1d::new(ps, "c", ci, co, k, rng).unwrap();
            *ps.get_mut(conv.bias) = uniform(&[co], 0.5, rng);
            let x = ps.add("x", uniform(&[t, ci], 1.0, rng));
            Box::new(move |g, b| conv.forward(g, b, b.get(x)))
        }),
    ));
    results.push((
        "instance norm",
        grad_layer(n, |ps, rng| {
            let (t, d) = (dims(rng, 3, 7), dims(rng, 1, 4));
            let x = ps.add("x", uniform(&[t, d], 2.0, rng));
            Box::new(move |g, b| instance_norm(g, b.get(x), INSTANCE_NORM_EPS))
        }),
    ));
    results.push((
        "prelu",
        grad_layer(n, |ps, rng| {
            let (t, d) = (dims(rng, 2, 6), dims(rng, 1, 4));
            let act = Prelu::new(ps, "p");
            *ps.get_mut(act.eta) = Tensor::scalar(rng.random_range(0.05..0.9));
            // keep inputs away from the kink so central differences are valid
            let x = ps.add(
                "x",
                Tensor::from_fn(&[t, d], |_| {
                    let v: f64 = rng.random_range(0.05..1.0);
                    if rng.random::<bool>() { v } else { -v }
                }),
            );
            Box::new(move |g, b| act.forward(g, b, b.get(x)))
        }),
    ));
    results.push((
        "highway",
        grad_layer(n, |ps, rng| {
            let (t, d) = (dims(rng, 2, 5), dims(rng, 1, 4));
            let hw = Highway::new(ps, "h", d, rng);
            let x = ps.add("x", uniform(&[t, d], 1.0, rng));
            Box::new(move |g, b| hw.forward(g, b, b.get(x)))
        }),
    ));
    results.push((
        "dense",
        grad_layer(n, |ps, rng| {
            let (t, i, o) = (dims(rng, 1, 5), dims(rng, 1, 5), dims(rng, 1, 5));
            let dense = Dense::new(ps, "d", i, o, rng);
            let x = ps.add("x", uniform(&[t, i], 1.0, rng));
            Box::new(move |g, b| dense.forward(g, b, b.get(x)))
        }),
    ));

    let secs = t0.elapsed().as_secs_f64();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let detail = results.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    report(
        "gradient suite",
        worst < 1e-4 && secs < 60.0,
        &format!("{n} instances per layer, worst rel err {worst:.1e} in {secs:.1}s ({detail})"),
    );
}

// ------------------------------------------------------------------- shapes

fn rows(table: &[(&'static str, &[usize])]) -> Vec<(&'static str, Vec<usize>)> {
    table.iter().map(|(n, s)| (*n, s.to_vec())).collect()
}

fn within(actual: usize, target: f64, tol: f64) -> bool {
    ((actual as f64 - target) / target).abs() <= tol
}

#[test]
fn shape_conformance() {
    let t0 = Instant::now();
    let deap_rows = rows(&[
        ("input", &[8064, 8]),
        ("block1", &[4032, 128]),
        ("block2_conv1", &[4032, 256]),
        ("block2_conv2", &[4032, 512]),
        ("concat", &[4032, 640]),
        ("highway", &[2016, 640]),
        ("attention", &[2016, 320]),
        ("dense", &[2016, 256]),
        ("flatten", &[516_096]),
        ("logits", &[2]),
    ]);
    let seed_rows = rows(&[
        ("input", &[30000, 16]),
        ("block1", &[15000, 128]),
        ("block2_conv1", &[15000, 256]),
        ("block2_conv2", &[15000, 512]),
        ("concat", &[15000, 640]),
        ("highway", &[7500, 640]),
        ("attention", &[7500, 320]),
        ("dense", &[7500, 256]),
        ("flatten", &[1_920_000]),
        ("logits", &[2]),
    ]);
    let mut failures = Vec::new();

    // DEAP: actual forward passes
    let clf = ClassifierModel::<f32>::new(ClassifierConfig::deap(), &mut seeded_rng(0)).unwrap();
    let mut g = Graph::new();
    let p = clf.params().bind_frozen(&mut g);
    let x = g.input(Tensor::from_fn(&[8064, 8], |i| ((i * 31 % 17) as f32 / 17.0) - 0.5));
    let out = clf.forward(&mut g, &p, x, None).unwrap();
    if out.trace != deap_rows {
        failures.push(format!("DEAP classifier trace {:?}", out.trace));
    }
    drop(g);
    let ae = AutoencoderModel::<f32>::new(AutoencoderConfig::deap(), &mut seeded_rng(0)).unwrap();
    let (z, r) = ae.run(&Tensor::from_fn(&[8064, 32], |i| ((i * 13 % 29) as f32 / 29.0) - 0.5)).unwrap();
    if z.shape() != [8064, 8] || r.shape() != [8064, 32] {
        failures.push(format!("DEAP autoencoder {:?} {:?}", z.shape(), r.shape()));
    }

    // SEED: symbolic trace, plus the (cheap) autoencoder forward
    if ClassifierConfig::seed().shape_trace() != seed_rows {
        failures.push(format!("SEED classifier trace {:?}", ClassifierConfig::seed().shape_trace()));
    }
    let ae_seed = AutoencoderModel::<f32>::new(AutoencoderConfig::seed(), &mut seeded_rng(0)).unwrap();
    let (z, r) = ae_seed.run(&Tensor::from_fn(&[30000, 62], |i| ((i * 7 % 23) as f32 / 23.0) - 0.5)).unwrap();
    if z.shape() != [30000, 16] || r.shape() != [30000, 62] {
        failures.push(format!("SEED autoencoder {:?} {:?}", z.shape(), r.shape()));
    }

    let counts = [
        ("DEAP autoencoder", ae.num_params(), 14e3),
        ("DEAP classifier", clf.num_params(), 3.36e6),
        ("SEED autoencoder", ae_seed.num_params(), 54e3),
        ("SEED classifier", ClassifierConfig::seed().param_count(), 6.2e6),
    ];
    for (name, n, target) in counts {
        if !within(n, target, 0.05) {
            failures.push(format!("{name} has {n} params, target {target}"));
        }
    }
    if clf.num_params() != ClassifierConfig::deap().param_count() {
        failures.push("built DEAP classifier disagrees with the config count".into());
    }
    let detail = counts
        .iter()
        .map(|(n, c, t)| format!("{n} {c} ({:+.1}%)", 100.0 * (*c as f64 - t) / t))
        .collect::<Vec<_>>()
        .join(", ");
    report(
        "shape conformance",
        failures.is_empty(),
        &format!("{detail}; {:.1}s{}", t0.elapsed().as_secs_f64(), if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }),
    );
}

// ------------------------------------------------------ attention weighting

#[test]
fn attention_normalization() {
    let mut rng = seeded_rng(77);
    let mut worst = [0.0f64; 4];
    for _ in 0..100 {
        let t = rng.random_range(1..=20);
        let d = 2 * rng.random_range(1..=8);
        let scale = [0.1, 1.0, 10.0, 50.0][rng.random_range(0..4)];
        let h = uniform::<f64>(&[t, d], scale, &mut rng);
        let w = uniform::<f64>(&[d], scale, &mut rng);
        let bias = uniform::<f64>(&[t], scale, &mut rng);
        let mut g = Graph::new();
        let (hv, wv, bv) = (g.input(h), g.input(w), g.input(bias));

        let ctx = attention_context(&mut g, hv, wv, Some(bv)).unwrap();
        let s: f64 = g.value(ctx.weights).iter().sum();
        worst[0] = worst[0].max((s - 1.0).abs());

        let ch = channel_attention(&mut g, hv, wv, Some(bv)).unwrap();
        let wt = g.tensor(ch.weights);
        for r in 0..t {
            worst[1] = worst[1].max((wt.row(r).iter().sum::<f64>() - 1.0).abs());
        }

        let sp = split_time_attention(&mut g, hv).unwrap();
        let wt = g.tensor(sp.weights);
        for c in 0..d / 2 {
            worst[2] = worst[2].max((wt.column(c).iter().sum::<f64>() - 1.0).abs());
        }
    }
    // the classifier's captured weights, as used by the trace export
    let cfg = ClassifierConfig {
        timesteps: 64,
        features: 8,
        block1_filters: 4,
        block2_filters: 8,
        block2_out_filters: 8,
        dense: 8,
        ..ClassifierConfig::default()
    };
    let model = ClassifierModel::<f32>::new(cfg, &mut seeded_rng(5)).unwrap();
    for i in 0..100 {
        let x = uniform::<f32>(&[64, 8], 3.0, &mut seeded_rng(i));
        let (_, cap) = model.infer(&x, true).unwrap();
        let wt = cap.unwrap().weights;
        for c in 0..wt.shape()[1] {
            worst[3] = worst[3].max((wt.column(c).iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs());
        }
    }
    let pass = worst.iter().all(|&e| e < 1e-6);
    report(
        "attention normalization",
        pass,
        &format!(
            "max |sum - 1| over 100 inputs: context {:.1e}, channel {:.1e}, split-time {:.1e}, classifier capture (f32) {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    );
}

// ---------------------------------------------------------------- oracles

fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64]) -> Vec<f64> {
    let (t, ci) = (x.shape()[0], x.shape()[1]);
    let (k, co) = (w.shape()[0], w.shape()[2]);
    let half = (k / 2) as isize;
    let mut out = vec![0.0; t * co];
    for s in 0..t {
        for o in 0..co {
            let mut acc = b[o];
            for j in 0..k {
                let src = s as isize + j as isize - half;
                if src < 0 || src >= t as isize {
                    continue;
                }
                for c in 0..ci {
                    acc += x.data()[src as usize * ci + c] * w.data()[(j * ci + c) * co + o];
                }
            }
            out[s * co + o] = acc;
        }
    }
    out
}

#[test]
fn oracle_equivalence() {
    let mut rng = seeded_rng(91);
    let mut worst = [0.0f64; 4];

    for _ in 0..10 {
        let (t, ci, co) = (rng.random_range(1..12), rng.random_range(1..5), rng.random_range(1..5));
        let k = 2 * rng.random_range(0..4) + 1;
        let (x, w, b) = (
            uniform::<f64>(&[t, ci], 1.0, &mut rng),
            uniform::<f64>(&[k, ci, co], 1.0, &mut rng),
            uniform::<f64>(&[co], 1.0, &mut rng),
        );
        let want = conv_oracle(&x, &w, b.data());
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.input(x), g.input(w), g.input(b));
        let y = g.conv1d(xv, wv, bv).unwrap();
        for (a, e) in g.value(y).iter().zip(&want) {
            worst[0] = worst[0].max((a - e).abs());
        }
    }

    for _ in 0..5 {
        let c = rng.random_range(2..10);
        let windows: Vec<Tensor<f64>> = (0..3).map(|_| uniform(&[40, c], 1.0, &mut rng)).collect();
        let dims = rng.random_range(1..=c);
        let pca = PcaModel::fit(&windows, dims).unwrap();
        let n = 120.0;
        let mean: Vec<f64> = (0..c).map(|j| windows.iter().flat_map(|w| w.column(j)).sum::<f64>() / n).collect();
        let mut cov = nalgebra::DMatrix::<f64>::zeros(c, c);
        for w in &windows {
            for r in 0..40 {
                let v = nalgebra::DVector::from_iterator(c, w.row(r).iter().zip(&mean).map(|(x, m)| x - m));
                cov += &v * v.transpose();
            }
        }
        cov /= n - 1.0;
        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for j in 0..dims {
            let want = eig.eigenvectors.column(order[j]);
            worst[1] = worst[1].max((pca.eigenvalues[j] - eig.eigenvalues[order[j]]).abs());
            let dot: f64 = pca.components[j].iter().zip(want.iter()).map(|(a, b)| a * b).sum();
            let sign = dot.signum();
            for (a, b) in pca.components[j].iter().zip(want.iter()) {
                worst[1] = worst[1].max((a - sign * b).abs());
            }
        }
    }

    for _ in 0..100 {
        let n = rng.random_range(1..50);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst[2] = worst[2].max((cosine(&a, &b).unwrap() - dot / (na * nb)).abs());
    }

    for _ in 0..20 {
        let cfg = AdamConfig {
            lr: rng.random_range(1e-4..1e-1),
            ..AdamConfig::default()
        };
        let n = rng.random_range(1..20);
        let w0 = uniform::<f64>(&[n], 1.0, &mut rng);
        let grad: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut ps = ParamSet::new();
        let id = ps.add("w", w0.clone());
        ps.get_mut(id).set_grad(grad.clone()).unwrap();
        let mut adam = AdamState::new(&ps, cfg).unwrap();
        adam.step(&mut ps).unwrap();
        for i in 0..n {
            // m = (1 - b1) g, v = (1 - b2) g^2, both bias corrections divide them back out
            let m = (1.0 - cfg.beta1) * grad[i] / (1.0 - cfg.beta1);
            let v = (1.0 - cfg.beta2) * grad[i] * grad[i] / (1.0 - cfg.beta2);
            let want = w0.data()[i] - cfg.lr * m / (v.sqrt() + cfg.eps);
            worst[3] = worst[3].max((ps.get(id).data()[i] - want).abs());
        }
    }

    report(
        "oracle equivalence",
        worst.iter().all(|&e| e < 1e-5),
        &format!(
            "max abs diff: conv1d {:.1e}, PCA {:.1e}, cosine {:.1e}, Adam first step {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    );
}

// --------------------------------------------------------------- denoising

#[test]
fn denoising_learning() {
    let t0 = Instant::now();
    let corpus = make_synthetic(&SyntheticConfig::default()).unwrap();
    let (win, stride) = (64, 4);
    let windows: Vec<Tensor<f32>> = corpus
        .recordings
        .iter()
        .flat_map(|r| {
            (0..=(r.n_samples() - win) / stride).map(move |i| r.samples.slice_rows(i * stride, win).unwrap())
        })
        .collect();
    let train = AutoencoderTrainConfig {
        epochs: 20,
        batch_size: 1,
        seed: 1,
        ..AutoencoderTrainConfig::default()
    };
    let (_, hist) = train_autoencoder(&windows, AutoencoderConfig::new(32, 8, win), &train).unwrap();
    let first = hist.epoch_losses[0];
    let last = *hist.epoch_losses.last().unwrap();
    let secs = t0.elapsed().as_secs_f64();
    report(
        "denoising learning",
        last <= 0.5 * first && secs < 600.0,
        &format!(
            "MSE {first:.4} -> {last:.4} ({:.0}% of epoch 0) over 20 epochs on {} windows, {secs:.1}s",
            100.0 * last / first,
            windows.len()
        ),
    );
}

// ---------------------------------------------------------- end-to-end LOSO

fn reduced_classifier(dropout_permille: u32) -> ClassifierConfig {
    ClassifierConfig {
        block1_filters: 8,
        block2_filters: 16,
        block2_out_filters: 16,
        dense: 16,
        dropout_permille,
        ..ClassifierConfig::default()
    }
}

#[test]
fn end_to_end_loso() {
    let t0 = Instant::now();
    let corpus = make_synthetic(&SyntheticConfig {
        samples: 64 * 100,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let windows = corpus.windows().unwrap();
    let pipeline = LatentPipeline::new(PipelineConfig {
        autoencoder: AutoencoderTrainConfig {
            epochs: 3,
            batch_size: 1,
            ..AutoencoderTrainConfig::default()
        },
        classifier: reduced_classifier(200),
        classifier_train: ClassifierTrainConfig {
            epochs: 15,
            batch_size: 8,
            patience: 0,
            ..ClassifierTrainConfig::default()
        },
        ..PipelineConfig::default()
    });
    let opts = LosoOptions::default();
    let real = run_loso(&windows, &pipeline, &opts).unwrap();
    let oracle = run_loso(&windows, &OracleStub, &opts).unwrap();

    let big = make_synthetic(&SyntheticConfig {
        samples: 64 * 500,
        ..SyntheticConfig::default()
    })
    .unwrap()
    .windows()
    .unwrap();
    let random = run_loso(&big, &RandomStub { classes: 2 }, &opts).unwrap();

    let per_subject = real.accuracies().iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(" ");
    let pass = real.mean >= 0.90
        && real.folds.len() == 4
        && oracle.mean == 1.0
        && oracle.std == 0.0
        && (random.mean - 0.5).abs() <= 0.05;
    report(
        "end-to-end LOSO",
        pass,
        &format!(
            "pipeline {:.1}% +/- {:.1} [{per_subject}]; oracle {:.1}% +/- {:.1}; random {:.1}% +/- {:.1} (500 windows/fold); {:.1}s",
            100.0 * real.mean,
            100.0 * real.std,
            100.0 * oracle.mean,
            100.0 * oracle.std,
            100.0 * random.mean,
            100.0 * random.std,
            t0.elapsed().as_secs_f64()
        ),
    );
}

// ------------------------------------------------------- time localization

#[test]
fn burst_time_localization() {
    let t0 = Instant::now();
    let corpus = make_synthetic(&SyntheticConfig {
        samples: 64 * 100,
        task: SyntheticTask::Burst,
        burst_label: BurstLabel::Position,
        background: 0.0,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let windows = corpus.windows().unwrap();
    let pipeline = LatentPipeline::new(PipelineConfig {
        encoder: EncoderKind::Pca,
        classifier: reduced_classifier(200),
        classifier_train: ClassifierTrainConfig {
            epochs: 15,
            batch_size: 8,
            patience: 0,
            ..ClassifierTrainConfig::default()
        },
        ..PipelineConfig::default()
    });
    let subjects: Vec<String> = windows.keys().cloned().collect();
    let mut masses = Vec::new();
    let mut per_fold = Vec::new();
    let mut hits = 0usize;
    for (i, s) in subjects.iter().enumerate() {
        let train: Vec<&LabeledWindow> = subjects.iter().filter(|x| *x != s).flat_map(|x| windows[x].iter()).collect();
        let fitted = pipeline.fit(i, s, &train, derive_seed(0, i as u64)).unwrap();
        let truth = corpus.truth.iter().find(|t| &t.subject == s).unwrap();
        let before = masses.len();
        for (w, wt) in windows[s].iter().zip(&truth.windows) {
            let z = fitted.latents(&w.samples).unwrap();
            let tr = trace_activations(&fitted.classifier, &z, "w", s, 128.0).unwrap();
            hits += usize::from(tr.predicted == w.label);
            let span = wt.burst.unwrap();
            masses.push(mass_inside_span(&tr.post_attention, 64 / tr.post_attention.shape()[0], span).unwrap());
        }
        let fold = &masses[before..];
        per_fold.push(fold.iter().sum::<f64>() / fold.len() as f64);
    }
    let mean = masses.iter().sum::<f64>() / masses.len() as f64;
    report(
        "burst time localization",
        mean >= 0.40,
        &format!(
            "mean post-attention mass inside burst {:.1}% (uniform 10%), per fold [{}], accuracy {:.1}%, {} held-out windows, {:.1}s",
            100.0 * mean,
            per_fold.iter().map(|m| format!("{:.1}", 100.0 * m)).collect::<Vec<_>>().join(" "),
            100.0 * hits as f64 / masses.len() as f64,
            masses.len(),
            t0.elapsed().as_secs_f64()
        ),
    );
}

// ----------------------------------------------------------------- leakage

#[test]
fn leakage_check_passes() {
    let corpus = make_synthetic(&SyntheticConfig {
        samples: 64 * 8,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let windows = corpus.windows().unwrap();
    let pipeline = LatentPipeline::new(PipelineConfig {
        autoencoder: AutoencoderTrainConfig {
            epochs: 1,
            batch_size: 4,
            ..AutoencoderTrainConfig::default()
        },
        classifier: reduced_classifier(200),
        classifier_train: ClassifierTrainConfig {
            epochs: 2,
            batch_size: 8,
            ..ClassifierTrainConfig::default()
        },
        ..PipelineConfig::default()
    });
    let perturb = |w: &LabeledWindow| {
        let mut out = w.clone();
        out.samples = w.samples.map(|v| v * 3.0 + 1.0);
        out.label = 1 - w.label;
        out
    };
    let mut lines = Vec::new();
    let mut clean = true;
    for fold in [0, 3] {
        let rep = leakage_check(&windows, &pipeline, 0, fold, perturb).unwrap();
        clean &= rep.clean() && rep.artifacts.len() == 3;
        lines.push(format!("fold {} ({}): {} artifacts, changed {:?}", fold, rep.test_subject, rep.artifacts.len(), rep.changed));
    }

    // control: the same perturbation applied to a training subject must show up
    let subjects: Vec<String> = windows.keys().cloned().collect();
    let train = |w: &SubjectWindows| -> Vec<LabeledWindow> {
        subjects[1..].iter().flat_map(|s| w[s].iter().cloned()).collect()
    };
    let base = train(&windows);
    let mut shifted = windows.clone();
    let victim = shifted.get_mut(&subjects[1]).unwrap();
    *victim = victim.iter().map(perturb).collect();
    let moved = train(&shifted);
    let fit = |ws: &[LabeledWindow]| {
        let refs: Vec<&LabeledWindow> = ws.iter().collect();
        pipeline.fit(99, &subjects[0], &refs, derive_seed(0, 0)).unwrap().artifacts().unwrap()
    };
    let sensitive = fit(&base) != fit(&moved);
    report(
        "leakage check",
        clean && sensitive,
        &format!("{}; training-subject control changes artifacts: {sensitive}", lines.join("; ")),
    );
}

// ------------------------------------------------------------------ formats

/// Hand-assembled EDF: header fields written byte by byte.
fn golden_edf(digital: &[i16], declared_records: &str, dmin: &str, dmax: &str, header_byte: Option<(usize, u8)>) -> Vec<u8> {
    let mut h = String::new();
    let pad = |s: &str, n: usize| format!("{s:<n$}");
    h += &pad("0", 8);
    h += &pad("X", 80);
    h += &pad("golden", 80);
    h += "01.01.00";
    h += "00.00.00";
    h += &pad("512", 8);
    h += &pad("", 44);
    h += &pad(declared_records, 8);
    h += &pad("1", 8);
    h += &pad("1", 4);
    h += &pad("Fz", 16);
    h += &pad("", 80);
    h += &pad("uV", 8);
    h += &pad("-100", 8);
    h += &pad("100", 8);
    h += &pad(dmin, 8);
    h += &pad(dmax, 8);
    h += &pad("", 80);
    h += &pad("10", 8);
    h += &pad("", 32);
    let mut bytes = h.into_bytes();
    assert_eq!(bytes.len(), 512);
    if let Some((at, b)) = header_byte {
        bytes[at] = b;
    }
    for d in digital {
        bytes.push((*d as u16 & 0xff) as u8);
        bytes.push((*d as u16 >> 8) as u8);
    }
    bytes
}

#[test]
fn format_suite() {
    let mut failures = Vec::new();

    // container
    let specials = [0.0f32, -0.0, 1e-40, -3.3e38, f32::MIN_POSITIVE, 1.0 / 3.0, -7.25];
    let mut rec = EegRecording::new(
        "s01",
        128.0,
        vec!["Fp1".into(), "Cz".into(), "O2".into()],
        Tensor::from_fn(&[7, 3], |i| specials[i % 7] * if i % 2 == 0 { 1.0 } else { -1.0 }),
    )
    .unwrap();
    rec.annotations.push(Annotation {
        label: "seizure".into(),
        start_s: 0.0,
        end_s: 0.02,
    });
    rec.trials.push(TrialInfo {
        index: 0,
        ratings: [("valence".to_string(), 4.9)].into(),
        ..TrialInfo::default()
    });
    let bytes = encode_container(&rec).unwrap();
    let back = decode_container(&bytes).unwrap();
    let bit_exact = back.samples.data().iter().zip(rec.samples.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    if !(bit_exact && back == rec && encode_container(&back).unwrap() == bytes) {
        failures.push("container round trip is not bit-exact".to_string());
    }
    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"XXXX");
    let e1 = decode_container(&bad).unwrap_err();
    let e2 = decode_container(&bytes[..bytes.len() - 4]).unwrap_err();
    let e3 = decode_container(&bytes[..10]).unwrap_err();
    let container_errors = [
        matches!(e1, Error::Format(FormatError::BadMagic { .. })),
        matches!(e2, Error::Format(FormatError::SizeMismatch { .. })),
        matches!(e3, Error::Format(FormatError::Truncated { .. })),
    ];
    if container_errors.contains(&false) {
        failures.push(format!("container errors: {e1} / {e2} / {e3}"));
    }

    // EDF golden values: physical = (d - dmin) * (pmax - pmin) / (dmax - dmin) + pmin
    let digital: [i16; 10] = [0, 1, -1, 32767, -32768, 100, -100, 16384, -16384, 2];
    let golden: [f64; 10] = [
        0.001_525_902_189_669_642,
        0.004_577_706_569_008_926,
        -0.001_525_902_189_669_642,
        100.0,
        -100.0,
        0.306_706_340_123_598,
        -0.303_654_535_744_258,
        50.002_288_853_284_51,
        -49.999_237_048_905_165,
        0.007_629_510_948_348_21,
    ];
    let (header, edf) = parse_edf(&golden_edf(&digital, "1", "-32768", "32767", None), "golden").unwrap();
    let mut edf_err: f64 = 0.0;
    for (got, want) in edf.samples.data().iter().zip(golden) {
        edf_err = edf_err.max((*got as f64 - want).abs() / want.abs().max(1.0));
    }
    if edf.samples.shape() != [10, 1] || edf.sample_rate_hz != 10.0 || header.n_records != 1 || edf_err > 1e-6 {
        failures.push(format!("EDF golden decode off by {edf_err:e}, shape {:?}", edf.samples.shape()));
    }

    let edf_errors = [
        (
            "non-ASCII",
            matches!(
                parse_edf(&golden_edf(&digital, "1", "-32768", "32767", Some((10, 0xE9))), "x"),
                Err(Error::Format(FormatError::NonAscii { .. }))
            ),
        ),
        (
            "record count",
            matches!(
                parse_edf(&golden_edf(&digital, "2", "-32768", "32767", None), "x"),
                Err(Error::Format(FormatError::RecordCount { declared: 2, actual: 1 }))
            ),
        ),
        (
            "zero digital range",
            matches!(
                parse_edf(&golden_edf(&digital, "1", "5", "5", None), "x"),
                Err(Error::Format(FormatError::ZeroDigitalRange { .. }))
            ),
        ),
        (
            "truncated record",
            matches!(
                parse_edf(&golden_edf(&digital[..7], "1", "-32768", "32767", None), "x"),
                Err(Error::Format(FormatError::TruncatedRecord { .. }))
            ),
        ),
    ];
    for (name, ok) in edf_errors {
        if !ok {
            failures.push(format!("EDF {name} error not raised"));
        }
    }
    report(
        "format suite",
        failures.is_empty(),
        &if failures.is_empty() {
            format!("container bit-exact; 3 container + 4 EDF malformed cases distinct; EDF golden max rel err {edf_err:.1e}")
        } else {
            failures.join("; ")
        },
    );
}

// ----------------------------------------------------------------- labeling

#[test]
fn labeling_rules() {
    let mut failures = Vec::new();
    if label_deap(4.9).unwrap() != 0 || label_deap(5.0).unwrap() != 1 {
        failures.push("DEAP threshold".to_string());
    }

    // SEED: a 220 s trial at 200 Hz keeps the central 150 s
    let t = 220 * 200;
    let seed_rec = EegRecording::new(
        "seed",
        200.0,
        (0..62).map(|c| format!("c{c}")).collect(),
        Tensor::from_fn(&[t, 62], |i| (i / 62) as f32),
    )
    .unwrap();
    let crop = seed_central_crop(&seed_rec).unwrap();
    let start = (t - 30000) / 2;
    if crop.samples.shape() != [30000, 62] || crop.samples.at2(0, 0) != start as f32 {
        failures.push(format!("SEED crop {:?} starting at {}", crop.samples.shape(), crop.samples.at2(0, 0)));
    }

    // CHB-MIT: 23-channel 256 Hz fixture, one hour, seizure at 2400-2480 s
    let mut names: Vec<String> = CHB_CHANNELS_22.iter().map(|s| s.to_string()).collect();
    names.push("ECG".into());
    let n = 3600 * 256;
    let mut chb = EegRecording::new("chb01", 256.0, names, Tensor::from_fn(&[n, 23], |i| (i % 23) as f32)).unwrap();
    chb.annotations.push(Annotation {
        label: "seizure".into(),
        start_s: 2400.0,
        end_s: 2480.0,
    });
    let cfg = ChbConfig {
        interictal_gap_s: 600.0,
        ..ChbConfig::default()
    };
    let mut counts = Vec::new();
    for (task, want_c) in [
        (TaskTag::IctalPreictal, 22),
        (TaskTag::IctalInterictal, 18),
        (TaskTag::PreictalInterictal, 18),
    ] {
        let seg = segment_chb(&chb, task, &cfg, &[]).unwrap();
        let shapes_ok = seg.windows.iter().all(|w| w.samples.shape() == [5120, want_c]);
        let per_class = [0, 1].map(|c| seg.windows.iter().filter(|w| w.label == c).count());
        counts.push(format!("{task}: {per_class:?}"));
        if !shapes_ok || per_class.contains(&0) {
            failures.push(format!("CHB {task}: {per_class:?}, shapes ok {shapes_ok}"));
        }
        if task == TaskTag::IctalPreictal && per_class != [4, 90] {
            // 80 s of seizure = 4 windows; 1800 s before onset = 90 windows
            failures.push(format!("CHB ictal/pre-ictal counts {per_class:?}"));
        }
    }
    if CHB_CHANNELS_18.len() != 18 {
        failures.push("18-channel montage".into());
    }
    report(
        "labeling rules",
        failures.is_empty(),
        &if failures.is_empty() {
            format!("DEAP 4.9->0 5.0->1; SEED crop 30000x62 from offset {start}; CHB 5120-sample windows {}", counts.join(", "))
        } else {
            failures.join("; ")
        },
    );
}

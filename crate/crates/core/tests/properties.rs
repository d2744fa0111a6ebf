use latent_eeg::analysis::{cosine, latent_channel_similarity, mass_inside_span};
use latent_eeg::data::{decode_container, encode_container, split_windows, Annotation, EegRecording, TrialInfo, ZScore};
use latent_eeg::eval::{loso_split, mean_std};
use latent_eeg::tensor::{decode_checkpoint, encode_checkpoint};
use latent_eeg::Tensor;
use proptest::prelude::*;

fn vec_pair(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..max).prop_flat_map(|n| (prop::collection::vec(-10.0..10.0f64, n), prop::collection::vec(-10.0..10.0f64, n)))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn cosine_is_symmetric_and_bounded((a, b) in vec_pair(40)) {
        prop_assume!(norm(&a) > 1e-6 && norm(&b) > 1e-6);
        let ab = cosine(&a, &b).unwrap();
        let ba = cosine(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn cosine_ignores_positive_scale((a, b) in vec_pair(40), k in 0.01..100.0f64) {
        prop_assume!(norm(&a) > 1e-6 && norm(&b) > 1e-6);
        let scaled: Vec<f64> = a.iter().map(|x| x * k).collect();
        prop_assert!((cosine(&a, &b).unwrap() - cosine(&scaled, &b).unwrap()).abs() < 1e-9);
        let flipped: Vec<f64> = a.iter().map(|x| -x).collect();
        prop_assert!((cosine(&a, &b).unwrap() + cosine(&flipped, &b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn container_round_trip(
        t in 1..40usize,
        c in 1..6usize,
        seed in any::<u64>(),
        rate in 1.0..1000.0f64,
    ) {
        let bits = |i: usize| (seed.wrapping_mul(6364136223846793005).wrapping_add((i as u64).wrapping_mul(1442695040888963407)) >> 33) as u32;
        let samples = Tensor::from_fn(&[t, c], |i| {
            let v = f32::from_bits(bits(i));
            if v.is_finite() { v } else { i as f32 }
        });
        let mut rec = EegRecording::new("p", rate, (0..c).map(|i| format!("ch{i}")).collect(), samples).unwrap();
        rec.annotations.push(Annotation { label: "mark".into(), start_s: 0.0, end_s: (t as f64 / rate) * 0.5 });
        rec.trials.push(TrialInfo { index: 3, start_sample: 0, n_samples: t, label: Some("1".into()), ..TrialInfo::default() });
        let bytes = encode_container(&rec).unwrap();
        let back = decode_container(&bytes).unwrap();
        prop_assert!(back.samples.data().iter().zip(rec.samples.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(&back, &rec);
        prop_assert_eq!(encode_container(&back).unwrap(), bytes);
    }

    #[test]
    fn checkpoint_round_trip(shapes in prop::collection::vec(prop::collection::vec(1..5usize, 1..3), 1..5)) {
        let entries: Vec<(String, Tensor<f32>)> = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("p{i}.w"), Tensor::from_fn(s, |j| (i * 100 + j) as f32 * 0.37 - 3.0)))
            .collect();
        let bytes = encode_checkpoint(&entries).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(back, entries);
    }

    #[test]
    fn loso_folds_partition_subjects(n in 2..12usize) {
        let subjects: Vec<String> = (0..n).map(|i| format!("s{i:02}")).collect();
        let folds = loso_split(&subjects).unwrap();
        prop_assert_eq!(folds.len(), n);
        for (i, f) in folds.iter().enumerate() {
            prop_assert_eq!(&f.test, &subjects[i]);
            prop_assert_eq!(f.train.len(), n - 1);
            prop_assert!(!f.train.contains(&f.test));
        }
    }

    #[test]
    fn population_std_matches_definition(v in prop::collection::vec(0.0..1.0f64, 1..20)) {
        let (m, s) = mean_std(&v);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        prop_assert!((m - mean).abs() < 1e-12);
        prop_assert!((s - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn windows_tile_without_overlap(t in 1..300usize, len in 1..64usize) {
        let x = Tensor::from_fn(&[t, 2], |i| i as f32);
        let ws = split_windows(&x, len).unwrap();
        prop_assert_eq!(ws.len(), t / len);
        for (k, w) in ws.iter().enumerate() {
            prop_assert_eq!(w.shape(), &[len, 2]);
            prop_assert_eq!(w.at2(0, 0), (k * len * 2) as f32);
        }
    }

    #[test]
    fn uniform_activation_mass_is_span_fraction(steps in 1..40usize, comp in 1..8usize, a in 0..1000usize, b in 0..1000usize) {
        let total = steps * comp;
        let start = a % total;
        let len = 1 + b % (total - start);
        let post = Tensor::full(&[steps, 3], -2.0f32);
        let m = mass_inside_span(&post, comp, (start, len)).unwrap();
        prop_assert!((m - len as f64 / total as f64).abs() < 1e-9);
    }

    #[test]
    fn zscore_standardises_its_own_data(rows in 4..40usize, shift in -5.0..5.0f32, scale in 0.1..10.0f32) {
        let x = Tensor::from_fn(&[rows, 2], |i| ((i * 7919 % 13) as f32 - 6.0) * scale + shift + (i % 2) as f32);
        let z = ZScore::fit([&x]).unwrap().apply(&x).unwrap();
        for c in 0..2 {
            let col = z.column(c);
            let mean = col.iter().map(|&v| v as f64).sum::<f64>() / rows as f64;
            prop_assert!(mean.abs() < 1e-4);
        }
    }
}

#[test]
fn similarity_ranks_the_copied_channel_first() {
    let raw = Tensor::from_fn(&[50, 4], |i| ((i * 31 % 17) as f32 - 8.0) * (1.0 + (i % 4) as f32));
    let latent = Tensor::from_fn(&[50, 2], |i| {
        let (t, l) = (i / 2, i % 2);
        raw.at2(t, if l == 0 { 2 } else { 0 }) * 0.5
    });
    let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
    let table = latent_channel_similarity(&latent, &raw, &names).unwrap();
    assert_eq!(table.ranked[0][0].name, "c");
    assert!((table.ranked[0][0].cosine - 1.0).abs() < 1e-6);
    assert_eq!(table.ranked[1][0].name, "a");
}

use osteo::data::{
    split_stratified, synth_image, ClassLabel, DatasetManifest, PreparedData, Sample, SampleSource, Split,
    DEFAULT_FRACTIONS,
};
use osteo::models::{checkpoint, ArchName, ArchSpec, ModelGraph, RunInfo, Scale};
use osteo::train::{score_split, train, train_hybrid, TrainConfig};
use osteo::{Rng, Tensor};
use proptest::prelude::*;

fn data(per_class: usize, seed: u64) -> PreparedData {
    let mut rng = Rng::new(seed);
    let mut samples = Vec::new();
    for class in ClassLabel::ALL {
        for i in 0..per_class {
            let img = synth_image(class, 64, &mut rng);
            samples.push(Sample { id: format!("{}/{i}", class.name()), source: SampleSource::Raw(img), label: class, split: None });
        }
    }
    let m = split_stratified(&DatasetManifest::from_samples(samples, seed).unwrap(), DEFAULT_FRACTIONS, seed).unwrap();
    PreparedData::new(&m, &ClassLabel::ALL, 64, None).unwrap()
}

fn short(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 8, early_stop_patience: 100, ..TrainConfig::preset(ArchName::Cnn, Scale::Tiny) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equal_weights_give_the_plain_mean(n in 1usize..8, k in 2usize..5, w in 0.1f64..5.0, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let logits: Vec<f64> = (0..n * k).map(|_| rng.normal() * 3.0).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let x = Tensor::from_vec(logits.clone(), &[n, k]).unwrap();
        let got = x.weighted_cross_entropy(&labels, &vec![w; k]).unwrap().item();
        let want = logits
            .chunks(k)
            .zip(&labels)
            .map(|(row, &y)| {
                let mx = row.iter().cloned().fold(f64::MIN, f64::max);
                mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln() - row[y]
            })
            .sum::<f64>()
            / n as f64;
        prop_assert!((got - want).abs() < 1e-7, "{} vs {}", got, want);
    }
}

#[test]
fn returned_model_has_the_lowest_recorded_val_loss() {
    let d = data(8, 1);
    let spec = ArchSpec::preset(ArchName::Cnn, Scale::Tiny, 4);
    let weights = vec![1.0; 4];
    let out = train(ModelGraph::<f64>::build(&spec, 3).unwrap(), &d, &short(6), &weights, |_| Ok(())).unwrap();
    let best = out.records.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(out.records[out.best_epoch - 1].val_loss, best);
    let again = score_split(&out.model, &d, Split::Val, &weights, 8).unwrap();
    assert!((again.loss - best).abs() < 1e-9 * best.max(1.0), "{} vs {best}", again.loss);
}

#[test]
fn checkpoint_file_roundtrip_is_bitwise() {
    let spec = ArchSpec::preset(ArchName::Vit, Scale::Tiny, 3);
    let model = ModelGraph::<f32>::build(&spec, 21).unwrap();
    let info = RunInfo { class_names: vec!["NT".into(), "NVT".into(), "VT".into()], task: Some("three".into()), ..RunInfo::default() };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.oshx");
    checkpoint::save(&model, &info, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back.info, info);
    assert_eq!(back.model.spec(), model.spec());
    for (a, b) in model.params().iter().zip(back.model.params().iter()) {
        assert_eq!(a.name, b.name);
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.tensor), bits(&b.tensor), "{}", a.name);
    }
    let bytes = std::fs::read(&path).unwrap();
    checkpoint::save(&back.model, &back.info, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}

#[test]
fn hybrid_training_leaves_branches_untouched() {
    let d = data(8, 2);
    let spec = ArchSpec::preset(ArchName::Hybrid, Scale::Tiny, 4);
    let cnn = ModelGraph::<f64>::build(&spec.branch(ArchName::Cnn), 4).unwrap();
    let vit = ModelGraph::<f64>::build(&spec.branch(ArchName::Vit), 5).unwrap();
    let sums = (cnn.params().checksum(), vit.params().checksum());
    let (cnn_p, vit_p) = (cnn.params().clone(), vit.params().clone());
    let weights = vec![1.0; 4];
    let cfg = short(3);
    let out = train_hybrid(&spec, &d, (&cfg, &cfg), &cfg, &weights, Some((cnn, vit)), |_, _| Ok(())).unwrap();
    assert!(out.branches.is_none());
    let hybrid = out.hybrid.model.params();
    for (prefix, store, sum) in [("cnn", &cnn_p, sums.0), ("vit", &vit_p, sums.1)] {
        assert_eq!(store.checksum(), sum);
        for p in store.iter() {
            let got = hybrid.by_name(&format!("{prefix}.{}", p.name)).unwrap();
            assert_eq!(got.data(), p.tensor.data(), "{prefix}.{}", p.name);
        }
    }
}

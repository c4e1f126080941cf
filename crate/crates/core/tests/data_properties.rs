use std::collections::HashSet;

use osteo::data::{
    compute_class_weights, split_stratified, ClassLabel, DatasetManifest, PreparedData, RawImage, Sample, SampleSource, Split,
    DEFAULT_FRACTIONS,
};
use osteo::Rng;
use proptest::prelude::*;

fn manifest(counts: [usize; 4], seed: u64) -> DatasetManifest {
    let mut rng = Rng::new(seed);
    let mut samples = Vec::new();
    for (class, n) in ClassLabel::ALL.into_iter().zip(counts) {
        for i in 0..n {
            let pixels: Vec<u8> = (0..8 * 8 * 3).map(|_| rng.below(256) as u8).collect();
            let img = RawImage::new(8, 8, 3, pixels).unwrap();
            samples.push(Sample { id: format!("{}/{i}", class.name()), source: SampleSource::Raw(img), label: class, split: None });
        }
    }
    DatasetManifest::from_samples(samples, seed).unwrap()
}

fn counts() -> impl Strategy<Value = [usize; 4]> {
    [3usize..40, 3usize..40, 3usize..40, 3usize..40]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn split_is_a_stratified_partition(c in counts(), seed in any::<u64>()) {
        let m = split_stratified(&manifest(c, 1), DEFAULT_FRACTIONS, seed).unwrap();
        prop_assert!(m.samples.iter().all(|s| s.split.is_some()));
        let ids: HashSet<&str> = m.samples.iter().map(|s| s.id.as_str()).collect();
        prop_assert_eq!(ids.len(), c.iter().sum::<usize>());
        for (class, n) in ClassLabel::ALL.into_iter().zip(c) {
            for (split, f) in Split::ALL.into_iter().zip(DEFAULT_FRACTIONS) {
                let got = m.split(split).filter(|s| s.label == class).count() as f64;
                prop_assert!((got - f * n as f64).abs() < 2.0, "{} {}: {} of {}", class.name(), split.as_str(), got, n);
            }
        }
    }

    #[test]
    fn class_weights_balance_the_train_split(c in counts(), seed in any::<u64>()) {
        let m = split_stratified(&manifest(c, 2), DEFAULT_FRACTIONS, seed).unwrap();
        let w = compute_class_weights(&m, &ClassLabel::ALL).unwrap();
        let tc = m.train_counts();
        let total: f64 = ClassLabel::ALL.iter().zip(&w).map(|(k, w)| w * tc[k] as f64).sum();
        let n = m.split_len(Split::Train) as f64;
        prop_assert!(w.iter().all(|&w| w > 0.0));
        prop_assert!((total - n).abs() < 1e-9 * n);
    }

    #[test]
    fn batches_cover_each_split_once(c in counts(), bs in 1usize..9, seed in any::<u64>()) {
        let m = split_stratified(&manifest(c, 3), DEFAULT_FRACTIONS, 0).unwrap();
        let data = PreparedData::new(&m, &ClassLabel::ALL, 8, None).unwrap();
        for split in Split::ALL {
            let batches: Vec<_> = data.batches(split, bs, true, seed, true).unwrap().collect();
            prop_assert!(batches.iter().all(|b| !b.labels.is_empty() && b.labels.len() <= bs));
            let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, data.indices(split));
        }
    }
}

#[test]
fn train_split_is_centred_after_normalisation() {
    let m = split_stratified(&manifest([20, 12, 15, 6], 4), DEFAULT_FRACTIONS, 9).unwrap();
    let data = PreparedData::new(&m, &ClassLabel::ALL, 8, None).unwrap();
    let plane = 8 * 8;
    let mut sums = [0.0f64; 3];
    let idx = data.indices(Split::Train);
    for &i in &idx {
        for (c, sum) in sums.iter_mut().enumerate() {
            *sum += data.pixels(i)[c * plane..(c + 1) * plane].iter().map(|&v| v as f64).sum::<f64>();
        }
    }
    for sum in sums {
        assert!((sum / (idx.len() * plane) as f64).abs() < 1e-3);
    }
}

#[test]
fn augmentation_never_touches_val_or_test() {
    let m = split_stratified(&manifest([12, 12, 12, 12], 5), DEFAULT_FRACTIONS, 1).unwrap();
    let data = PreparedData::new(&m, &ClassLabel::ALL, 8, None).unwrap();
    for split in [Split::Val, Split::Test] {
        let plain: Vec<f32> = data.batches(split, 4, false, 3, false).unwrap().flat_map(|b| b.pixels.to_vec()).collect();
        let aug: Vec<f32> = data.batches(split, 4, false, 3, true).unwrap().flat_map(|b| b.pixels.to_vec()).collect();
        assert_eq!(plain.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), aug.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
    let plain: Vec<f32> = data.batches(Split::Train, 4, false, 3, false).unwrap().flat_map(|b| b.pixels.to_vec()).collect();
    let aug: Vec<f32> = data.batches(Split::Train, 4, false, 3, true).unwrap().flat_map(|b| b.pixels.to_vec()).collect();
    assert_ne!(plain, aug, "train flips should change some pixels");
}

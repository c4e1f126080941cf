use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{mix_seed, Rng};

use super::image::{decode_file, is_image_path, probe, RawImage};
use super::label::{ClassLabel, Split};
use super::normalize::NormStats;

/// Where a sample's pixels come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleSource {
    Path(PathBuf),
    Raw(RawImage),
}

impl SampleSource {
    pub fn decode(&self) -> Result<RawImage> {
        match self {
            SampleSource::Path(p) => decode_file(p),
            SampleSource::Raw(img) => Ok(img.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub source: SampleSource,
    pub label: ClassLabel,
    pub split: Option<Split>,
}

/// Enumerated samples with labels and split assignment.
///
/// Serialised as JSON:
/// `{"seed": u64, "class_counts": {"NT": n, ...}, "normalization": null |
/// {"mean": [r, g, b], "std": [r, g, b]}, "samples": [{"id": str, "source":
/// {"path": str} | {"raw": {...}}, "label": "NT", "split": "train" | null}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub class_counts: BTreeMap<ClassLabel, usize>,
    pub normalization: Option<NormStats>,
    pub samples: Vec<Sample>,
}

fn count(samples: &[Sample]) -> BTreeMap<ClassLabel, usize> {
    let mut counts: BTreeMap<ClassLabel, usize> = ClassLabel::ALL.iter().map(|&c| (c, 0)).collect();
    for s in samples {
        *counts.entry(s.label).or_insert(0) += 1;
    }
    counts
}

impl DatasetManifest {
    /// Builds a manifest from samples; ids must be unique.
    pub fn from_samples(samples: Vec<Sample>, seed: u64) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Usage(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(DatasetManifest { seed, class_counts: count(&samples), normalization: None, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn recount(&self) -> BTreeMap<ClassLabel, usize> {
        count(&self.samples)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == Some(split))
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Train-split counts per class.
    pub fn train_counts(&self) -> BTreeMap<ClassLabel, usize> {
        let mut counts: BTreeMap<ClassLabel, usize> = ClassLabel::ALL.iter().map(|&c| (c, 0)).collect();
        for s in self.split(Split::Train) {
            *counts.get_mut(&s.label).unwrap() += 1;
        }
        counts
    }

    /// Keeps only samples of `classes`, preserving order and splits.
    pub fn filter_classes(&self, classes: &[ClassLabel]) -> DatasetManifest {
        let samples: Vec<Sample> = self.samples.iter().filter(|s| classes.contains(&s.label)).cloned().collect();
        DatasetManifest { seed: self.seed, class_counts: count(&samples), normalization: self.normalization, samples }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_str(text)?;
        if m.class_counts != m.recount() {
            return Err(Error::Usage("manifest class_counts disagree with its samples".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Scans `<root>/{NT,NVT,VT,NVR}/*.{jpg,jpeg,png,raw}` in lexicographic
/// order. Missing class directories and undecodable files are skipped with
/// a warning; an empty result is an error.
pub fn load_manifest(root: &Path, seed: u64) -> Result<DatasetManifest> {
    let mut samples = Vec::new();
    for class in ClassLabel::ALL {
        let dir = root.join(class.name());
        if !dir.is_dir() {
            log::warn!("class directory {} is missing; {class} will be empty", dir.display());
            continue;
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image_path(p))
            .collect();
        files.sort();
        for path in files {
            if let Err(e) = probe(&path) {
                log::warn!("skipping {e}");
                continue;
            }
            let name = path.file_name().unwrap().to_string_lossy();
            samples.push(Sample { id: format!("{}/{name}", class.name()), source: SampleSource::Path(path), label: class, split: None });
        }
    }
    if samples.is_empty() {
        return Err(Error::NoSamples(root.to_path_buf()));
    }
    DatasetManifest::from_samples(samples, seed)
}

/// Train/val/test fractions.
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.60, 0.15, 0.25];

/// Per-class sizes under the floor/floor/remainder rule.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    if n < 3 {
        return [n, 0, 0];
    }
    // The epsilon keeps exact products such as 0.6 * 5 from flooring down.
    let train = (fractions[0] * n as f64 + 1e-9).floor() as usize;
    let val = ((fractions[1] * n as f64 + 1e-9).floor() as usize).min(n - train);
    [train, val, n - train - val]
}

/// Stratified split: each class is shuffled with a seed derived from
/// `seed` and its code, then cut by [`split_sizes`].
pub fn split_stratified(manifest: &DatasetManifest, fractions: [f64; 3], seed: u64) -> Result<DatasetManifest> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!("split fractions {fractions:?} must be in [0,1] and sum to 1")));
    }
    let mut out = manifest.clone();
    out.seed = seed;
    for class in ClassLabel::ALL {
        let mut idx: Vec<usize> = (0..out.samples.len()).filter(|&i| out.samples[i].label == class).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 3 {
            log::warn!("class {class} has only {} samples; all go to train", idx.len());
        }
        Rng::new(mix_seed(seed, class.code() as u64)).shuffle(&mut idx);
        let [train, val, _] = split_sizes(idx.len(), fractions);
        for (k, &i) in idx.iter().enumerate() {
            out.samples[i].split = Some(if k < train {
                Split::Train
            } else if k < train + val {
                Split::Val
            } else {
                Split::Test
            });
        }
    }
    Ok(out)
}

/// Inverse-frequency weights `N / (K * n_c)` over the train split, in the
/// order of `classes`.
pub fn compute_class_weights(manifest: &DatasetManifest, classes: &[ClassLabel]) -> Result<Vec<f64>> {
    let counts = manifest.train_counts();
    let n: usize = classes.iter().map(|c| counts[c]).sum();
    let k = classes.len() as f64;
    classes
        .iter()
        .map(|c| match counts[c] {
            0 => Err(Error::EmptyClass(c.name().to_string())),
            nc => Ok(n as f64 / (k * nc as f64)),
        })
        .collect()
}

#[cfg(test)]
pub(crate) fn synthetic_counts(counts: [usize; 4]) -> DatasetManifest {
    let mut samples = Vec::new();
    for (class, &n) in ClassLabel::ALL.iter().zip(&counts) {
        for i in 0..n {
            let img = RawImage { width: 1, height: 1, channels: 1, pixels: vec![0] };
            samples.push(Sample { id: format!("{class}/{i:05}"), source: SampleSource::Raw(img), label: *class, split: None });
        }
    }
    DatasetManifest::from_samples(samples, 0).unwrap()
}

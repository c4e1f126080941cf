use serde::{Deserialize, Serialize};

use crate::data::ClassLabel;
use crate::error::{Error, Result};

use super::task::TaskSpec;

/// K x K counts; rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

/// One-vs-rest counts for a single class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

pub fn confusion(truth: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Usage(format!("{} true labels but {} predictions", truth.len(), predicted.len())));
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= k || p >= k {
            return Err(Error::Usage(format!("label pair ({t}, {p}) outside [0, {k})")));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

impl ConfusionMatrix {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    pub fn one_vs_rest(&self, c: usize) -> BinaryCounts {
        let tp = self.counts[c][c];
        let fn_ = self.counts[c].iter().sum::<u64>() - tp;
        let fp = (0..self.k()).map(|r| self.counts[r][c]).sum::<u64>() - tp;
        BinaryCounts { tp, fp, fn_, tn: self.total() - tp - fn_ - fp }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 from one-vs-rest counts; zero denominators give 0.
pub fn binary_scores(b: BinaryCounts) -> (f64, f64, f64) {
    let p = ratio(b.tp, b.tp + b.fp);
    let r = ratio(b.tp, b.tp + b.fn_);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// How per-class scores are reduced to one number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Unweighted mean over classes.
    Macro,
    /// Scores of a single class (index into the task's classes).
    Positive(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassScores>,
    pub averaging: Averaging,
}

pub fn metrics(cm: &ConfusionMatrix, averaging: Averaging) -> Result<Scores> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Usage("confusion matrix is empty".into()));
    }
    let per_class: Vec<ClassScores> = (0..cm.k())
        .map(|c| {
            let b = cm.one_vs_rest(c);
            let (precision, recall, f1) = binary_scores(b);
            ClassScores { precision, recall, f1, support: b.tp + b.fn_ }
        })
        .collect();
    let (precision, recall, f1) = match averaging {
        Averaging::Macro => {
            let k = per_class.len() as f64;
            (
                per_class.iter().map(|s| s.precision).sum::<f64>() / k,
                per_class.iter().map(|s| s.recall).sum::<f64>() / k,
                per_class.iter().map(|s| s.f1).sum::<f64>() / k,
            )
        }
        Averaging::Positive(c) => {
            let s = per_class.get(c).ok_or_else(|| Error::Usage(format!("positive class {c} outside [0, {})", cm.k())))?;
            (s.precision, s.recall, s.f1)
        }
    };
    Ok(Scores { accuracy: ratio(cm.trace(), total), precision, recall, f1, per_class, averaging })
}

/// Scores of one model on one task and split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub task: TaskSpec,
    pub split: String,
    pub classes: Vec<ClassLabel>,
    pub confusion: ConfusionMatrix,
    #[serde(flatten)]
    pub scores: Scores,
}

impl MetricsReport {
    pub fn new(model: impl Into<String>, task: &TaskSpec, split: impl Into<String>, cm: ConfusionMatrix, averaging: Averaging) -> Result<Self> {
        let scores = metrics(&cm, averaging)?;
        Ok(MetricsReport { model: model.into(), task: task.clone(), split: split.into(), classes: task.classes.clone(), confusion: cm, scores })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_confusion() {
        let cm = confusion(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 2]]);
        assert!(confusion(&[0], &[0, 1], 2).is_err());
        assert!(confusion(&[0, 2], &[0, 1], 2).is_err());
    }

    #[test]
    fn substitution_example() {
        // Positive class 1: TP 9, FN 3, FP 1, TN 7.
        let cm = ConfusionMatrix { counts: vec![vec![7, 1], vec![3, 9]] };
        let s = metrics(&cm, Averaging::Positive(1)).unwrap();
        assert_eq!(s.precision, 0.9);
        assert_eq!(s.recall, 0.75);
        assert!((s.f1 - 0.8181818181818182).abs() < 1e-15);
        assert_eq!(s.accuracy, 0.8);
    }

    #[test]
    fn perfect_and_empty() {
        let cm = confusion(&[0, 1, 2, 3], &[0, 1, 2, 3], 4).unwrap();
        let s = metrics(&cm, Averaging::Macro).unwrap();
        assert_eq!((s.accuracy, s.precision, s.recall, s.f1), (1.0, 1.0, 1.0, 1.0));
        assert!(metrics(&ConfusionMatrix { counts: vec![vec![0; 2]; 2] }, Averaging::Macro).is_err());
    }

    #[test]
    fn constant_predictor() {
        let truth: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let cm = confusion(&truth, &[0; 40], 4).unwrap();
        let s = metrics(&cm, Averaging::Macro).unwrap();
        assert_eq!(s.accuracy, 0.25);
        assert_eq!(s.recall, 0.25);
        assert_eq!(s.per_class[1].precision, 0.0);
    }
}

use crate::error::{Error, Result};
use crate::tensor::tensor::{Computed, Op, Saved};
use crate::tensor::{Real, Tensor};

use super::activation::softmax_rows;

/// Weighted-mean cross-entropy over `[B, K]` logits:
/// `sum_i w[y_i] * -log softmax(z_i)[y_i] / sum_i w[y_i]`.
struct WeightedCrossEntropy {
    labels: Vec<usize>,
    /// Per-sample weight `w[y_i]`.
    sample_weights: Vec<f64>,
}

impl<T: Real> Op<T> for WeightedCrossEntropy {
    fn name(&self) -> &'static str {
        "weighted_cross_entropy"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let z = inputs[0];
        let k = z.shape()[1];
        let probs = softmax_rows(z.data(), k);
        let total_w: f64 = self.sample_weights.iter().sum();
        let mut loss = T::zero();
        for (i, row) in z.data().chunks(k).enumerate() {
            let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let lse = row.iter().fold(T::zero(), |a, &v| a + (v - m).exp()).ln() + m;
            let nll = lse - row[self.labels[i]];
            loss = loss + nll * T::from_f64(self.sample_weights[i]);
        }
        loss = loss / T::from_f64(total_w);
        Ok(Computed::new(vec![], vec![loss]).with_saved(Saved { values: vec![probs], indices: vec![] }))
    }

    fn backward(&self, inputs: &[&Tensor<T>], saved: &Saved<T>, _: &[T], grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let k = inputs[0].shape()[1];
        let total_w: f64 = self.sample_weights.iter().sum();
        let mut g = saved.values[0].clone();
        for (i, row) in g.chunks_mut(k).enumerate() {
            let c = grad[0] * T::from_f64(self.sample_weights[i] / total_w);
            row[self.labels[i]] = row[self.labels[i]] - T::one();
            row.iter_mut().for_each(|v| *v = *v * c);
        }
        vec![Some(g)]
    }
}

impl<T: Real> Tensor<T> {
    /// Class-weighted mean cross-entropy of `[B, K]` logits against integer
    /// labels; `class_weights[c]` weighs every sample of class `c`.
    pub fn weighted_cross_entropy(&self, labels: &[usize], class_weights: &[f64]) -> Result<Tensor<T>> {
        if self.ndim() != 2 {
            return Err(Error::Dimension(format!("cross-entropy expects [B, K] logits, got {:?}", self.shape())));
        }
        let (b, k) = (self.shape()[0], self.shape()[1]);
        if labels.len() != b {
            return Err(Error::Usage(format!("{} labels for a batch of {b}", labels.len())));
        }
        if class_weights.len() != k {
            return Err(Error::Usage(format!("{} class weights for {k} classes", class_weights.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Usage(format!("label {bad} out of range for {k} classes")));
        }
        let sample_weights: Vec<f64> = labels.iter().map(|&l| class_weights[l]).collect();
        if sample_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Usage("class weights of the batch sum to zero".into()));
        }
        Tensor::apply(WeightedCrossEntropy { labels: labels.to_vec(), sample_weights }, &[self])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    #[test]
    fn uniform_logits_give_ln_k() {
        let z = Tensor::<f64>::zeros(&[3, 4]);
        let l = z.weighted_cross_entropy(&[0, 1, 3], &[1.0; 4]).unwrap();
        assert!((l.item() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn matches_per_sample_oracle() {
        let mut rng = Rng::new(21);
        let zs: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let labels = [2, 0, 3];
        let w = [0.5, 1.0, 1.0, 2.0];
        let z = Tensor::<f64>::from_f64(&zs, &[3, 4]).unwrap();
        let got = z.weighted_cross_entropy(&labels, &w).unwrap().item();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..3 {
            let row = &zs[i * 4..i * 4 + 4];
            let denom: f64 = row.iter().map(|v| v.exp()).sum();
            let p = row[labels[i]].exp() / denom;
            num += w[labels[i]] * -p.ln();
            den += w[labels[i]];
        }
        assert!((got - num / den).abs() < 1e-6);
    }

    #[test]
    fn confident_logits_drive_loss_to_zero() {
        let mut prev = f64::INFINITY;
        for scale in [1.0, 5.0, 20.0, 100.0] {
            let z = Tensor::<f64>::from_f64(&[scale, 0.0, 0.0, 0.0, scale, 0.0], &[2, 3]).unwrap();
            let l = z.weighted_cross_entropy(&[0, 1], &[1.0; 3]).unwrap().item();
            assert!(l < prev);
            prev = l;
        }
        assert!(prev < 1e-40);
    }

    #[test]
    fn equal_weights_equal_unweighted_mean() {
        let z = Tensor::<f64>::from_f64(&[0.3, -1.2, 2.0, 0.1, 0.0, 0.7], &[2, 3]).unwrap();
        let a = z.weighted_cross_entropy(&[2, 0], &[1.0; 3]).unwrap().item();
        let b = z.weighted_cross_entropy(&[2, 0], &[3.7; 3]).unwrap().item();
        assert!((a - b).abs() < 1e-7);
    }

    #[test]
    fn label_out_of_range() {
        let z = Tensor::<f32>::zeros(&[1, 2]);
        assert!(matches!(z.weighted_cross_entropy(&[2], &[1.0, 1.0]), Err(Error::Usage(_))));
    }
}

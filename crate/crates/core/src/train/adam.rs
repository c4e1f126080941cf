use crate::error::{Error, Result};
use crate::models::ParamStore;
use crate::tensor::Real;

use super::config::TrainConfig;

/// First and second moment buffers per parameter, plus the step count.
/// Frozen parameters get empty buffers. Moments are stored at parameter
/// precision; each update is computed in f64.
#[derive(Clone, Debug)]
pub struct AdamState<T: Real> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<T>> = params
            .iter()
            .map(|p| if p.tensor.requires_grad() { vec![T::from_f64(0.0); p.tensor.numel()] } else { Vec::new() })
            .collect();
        AdamState { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// One bias-corrected Adam update of every trainable parameter. Consumes
/// the gradients.
pub fn adam_step<T: Real>(params: &mut ParamStore<T>, state: &mut AdamState<T>, cfg: &TrainConfig) -> Result<()> {
    if let Some(p) = params.iter().find(|p| p.tensor.requires_grad() && !p.tensor.has_grad()) {
        return Err(Error::Usage(format!("parameter {} has no gradient", p.name)));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..params.len() {
        let Some(g) = params.at(i).tensor.requires_grad().then(|| params.at(i).tensor.take_grad()).flatten() else { continue };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        params.update(i, |w| {
            for k in 0..w.len() {
                let g = g[k].as_f64();
                let mk = b1 * m[k].as_f64() + (1.0 - b1) * g;
                let vk = b2 * v[k].as_f64() + (1.0 - b2) * g * g;
                m[k] = T::from_f64(mk);
                v[k] = T::from_f64(vk);
                let (mh, vh) = (mk / c1, vk / c2);
                w[k] = T::from_f64(w[k].as_f64() - cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon));
            }
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ArchName, ArchSpec, ModelGraph, Scale};
    use crate::tensor::Tensor;

    fn store(values: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::default();
        s.insert("w".into(), Tensor::param(values.to_vec(), &[values.len()]).unwrap()).unwrap();
        s
    }

    fn set_grad(s: &ParamStore<f64>, g: &[f64]) {
        let w = s.at(0).tensor.clone();
        s.zero_grads();
        let gt = Tensor::from_vec(g.to_vec(), &[g.len()]).unwrap();
        w.mul(&gt).unwrap().sum().unwrap().backward().unwrap();
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = store(&[0.5, -2.0, 3.0]);
        let mut st = AdamState::new(&s);
        set_grad(&s, &[1.0, 1.0, 1.0]);
        let cfg = TrainConfig::default();
        adam_step(&mut s, &mut st, &cfg).unwrap();
        let expect = 1e-4 / (1.0 + 1e-8);
        for (a, b) in s.at(0).tensor.data().iter().zip([0.5, -2.0, 3.0]) {
            assert!(((b - a) - expect).abs() < 1e-15);
        }
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = store(&[0.25, 4.0]);
        let mut st = AdamState::new(&s);
        set_grad(&s, &[0.0, 0.0]);
        adam_step(&mut s, &mut st, &TrainConfig::default()).unwrap();
        assert_eq!(s.at(0).tensor.data(), &[0.25, 4.0]);
    }

    #[test]
    fn scalar_quadratic_matches_oracle() {
        // f(w) = (w - 3)^2, grad 2(w - 3).
        let cfg = TrainConfig { learning_rate: 0.1, ..TrainConfig::default() };
        let mut s = store(&[0.0]);
        let mut st = AdamState::new(&s);
        let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=5 {
            let g = 2.0 * (s.at(0).tensor.data()[0] - 3.0);
            set_grad(&s, &[g]);
            adam_step(&mut s, &mut st, &cfg).unwrap();
            let g = 2.0 * (w - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.1 * mh / (vh.sqrt() + 1e-8);
            assert!((s.at(0).tensor.data()[0] - w).abs() < 1e-10);
        }
    }

    #[test]
    fn quadratic_loss_decreases() {
        let cfg = TrainConfig { learning_rate: 0.05, ..TrainConfig::default() };
        let mut s = store(&[-1.0]);
        let mut st = AdamState::new(&s);
        let loss = |w: f64| (w - 2.0).powi(2);
        let start = loss(-1.0);
        for _ in 0..100 {
            let w = s.at(0).tensor.data()[0];
            set_grad(&s, &[2.0 * (w - 2.0)]);
            adam_step(&mut s, &mut st, &cfg).unwrap();
        }
        assert!(loss(s.at(0).tensor.data()[0]) < start);
    }

    #[test]
    fn missing_gradient_names_parameter() {
        let mut m = ModelGraph::<f32>::build(&ArchSpec::preset(ArchName::Cnn, Scale::Tiny, 2), 0).unwrap();
        let mut st = AdamState::new(m.params());
        let err = adam_step(m.params_mut(), &mut st, &TrainConfig::default()).unwrap_err();
        assert!(matches!(&err, Error::Usage(msg) if msg.contains("block1.conv1.weight")), "{err}");
    }
}

//! Finite-difference verification of every differentiable operation.
//!
//! Each case builds small random `f64` inputs, reduces the op's output to a
//! scalar with a fixed random projection, and compares `backward()` against
//! central differences. The reported error for an input is
//! `max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|, 1e-12)`.

use crate::error::Result;
use crate::tensor::ops::{multi_head_attention, AttentionWeights};
use crate::tensor::{mix_seed, no_grad, Computed, Op, Rng, Saved, Tensor};

pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-5;
pub const SEEDS_PER_OP: usize = 10;

type Forward = Box<dyn Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>>;

struct Instance {
    inputs: Vec<Tensor<f64>>,
    forward: Forward,
}

/// One named differentiable operation under test.
pub struct GradCase {
    pub name: &'static str,
    build: fn(&mut Rng) -> Instance,
}

#[derive(Clone, Debug)]
pub struct OpReport {
    pub op: String,
    pub max_rel_error: f64,
    pub seeds: usize,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub ops: Vec<OpReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.ops.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> Vec<&OpReport> {
        self.ops.iter().filter(|o| !o.passed).collect()
    }
}

fn randn(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    Tensor::param(v, shape).expect("shape")
}

/// Values bounded away from zero, for ops with a kink there.
fn away_from_zero(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n)
        .map(|_| {
            let x = rng.normal();
            x.signum() * (x.abs() + 0.05)
        })
        .collect();
    Tensor::param(v, shape).expect("shape")
}

/// Pairwise well-separated values so max selections are stable under ±h.
fn distinct(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let v: Vec<f64> = order.iter().map(|&k| k as f64 * 0.1 - n as f64 * 0.05 + rng.uniform() * 0.01).collect();
    Tensor::param(v, shape).expect("shape")
}

fn inst(inputs: Vec<Tensor<f64>>, f: impl Fn(&[Tensor<f64>]) -> Result<Tensor<f64>> + 'static) -> Instance {
    Instance { inputs, forward: Box::new(f) }
}

/// `y = 2x` with a deliberately wrong backward (`3g`). Only used to show the
/// suite catches a broken rule.
struct FaultyDouble;

impl Op<f64> for FaultyDouble {
    fn name(&self) -> &'static str {
        "faulty_double"
    }

    fn forward(&self, inputs: &[&Tensor<f64>]) -> Result<Computed<f64>> {
        Ok(Computed::new(inputs[0].shape().to_vec(), inputs[0].data().iter().map(|v| 2.0 * v).collect()))
    }

    fn backward(&self, _: &[&Tensor<f64>], _: &Saved<f64>, _: &[f64], grad: &[f64], _: &[bool]) -> Vec<Option<Vec<f64>>> {
        vec![Some(grad.iter().map(|g| 3.0 * g).collect())]
    }
}

/// A case whose backward rule is wrong on purpose.
pub fn faulty_case() -> GradCase {
    GradCase {
        name: "faulty_double",
        build: |r| inst(vec![randn(r, &[2, 3])], |x| Tensor::apply(FaultyDouble, &[&x[0]])),
    }
}

/// Every differentiable op in the library.
pub fn cases() -> Vec<GradCase> {
    vec![
        GradCase { name: "add", build: |r| inst(vec![randn(r, &[2, 3]), randn(r, &[2, 3])], |x| x[0].add(&x[1])) },
        GradCase {
            name: "add_broadcast",
            build: |r| inst(vec![randn(r, &[2, 3, 4]), randn(r, &[3, 4])], |x| x[0].add(&x[1])),
        },
        GradCase { name: "mul", build: |r| inst(vec![randn(r, &[3, 2]), randn(r, &[3, 2])], |x| x[0].mul(&x[1])) },
        GradCase { name: "scale", build: |r| inst(vec![randn(r, &[5])], |x| x[0].scale(-1.7)) },
        GradCase { name: "sum", build: |r| inst(vec![randn(r, &[2, 4])], |x| x[0].sum()) },
        GradCase { name: "mean", build: |r| inst(vec![randn(r, &[3, 3])], |x| x[0].mean()) },
        GradCase { name: "matmul", build: |r| inst(vec![randn(r, &[2, 3, 4]), randn(r, &[2, 4, 5])], |x| x[0].matmul(&x[1])) },
        GradCase { name: "matmul_t", build: |r| inst(vec![randn(r, &[2, 3, 4]), randn(r, &[2, 5, 4])], |x| x[0].matmul_t(&x[1])) },
        GradCase {
            name: "linear",
            build: |r| inst(vec![randn(r, &[2, 3, 4]), randn(r, &[5, 4]), randn(r, &[5])], |x| x[0].linear(&x[1], Some(&x[2]))),
        },
        GradCase {
            name: "conv2d",
            build: |r| {
                inst(vec![randn(r, &[2, 2, 5, 5]), randn(r, &[3, 2, 3, 3]), randn(r, &[3])], |x| {
                    x[0].conv2d(&x[1], Some(&x[2]), 1, 1)
                })
            },
        },
        GradCase {
            name: "conv2d_strided",
            build: |r| {
                inst(vec![randn(r, &[2, 3, 7, 6]), randn(r, &[2, 3, 3, 2]), randn(r, &[2])], |x| {
                    x[0].conv2d(&x[1], Some(&x[2]), 2, 1)
                })
            },
        },
        GradCase { name: "maxpool2d", build: |r| inst(vec![distinct(r, &[2, 2, 6, 6])], |x| x[0].maxpool2d(2, 2, 0)) },
        GradCase { name: "maxpool2d_padded", build: |r| inst(vec![distinct(r, &[1, 2, 7, 7])], |x| x[0].maxpool2d(3, 2, 1)) },
        GradCase { name: "global_avg_pool", build: |r| inst(vec![randn(r, &[2, 3, 4, 4])], |x| x[0].global_avg_pool()) },
        GradCase {
            name: "layer_norm",
            build: |r| {
                inst(vec![randn(r, &[3, 6]), randn(r, &[6]), randn(r, &[6])], |x| x[0].layer_norm(&x[1], &x[2], 1e-5))
            },
        },
        GradCase { name: "gelu", build: |r| inst(vec![randn(r, &[4, 3])], |x| x[0].gelu()) },
        GradCase { name: "relu", build: |r| inst(vec![away_from_zero(r, &[4, 3])], |x| x[0].relu()) },
        GradCase { name: "leaky_relu", build: |r| inst(vec![away_from_zero(r, &[4, 3])], |x| x[0].leaky_relu(0.25)) },
        GradCase { name: "softmax", build: |r| inst(vec![randn(r, &[3, 5])], |x| x[0].softmax()) },
        GradCase { name: "reshape", build: |r| inst(vec![randn(r, &[2, 6])], |x| x[0].reshape(&[3, 4])) },
        GradCase { name: "permute", build: |r| inst(vec![randn(r, &[2, 3, 4])], |x| x[0].permute(&[2, 0, 1])) },
        GradCase { name: "narrow", build: |r| inst(vec![randn(r, &[3, 5, 2])], |x| x[0].narrow(1, 1, 3)) },
        GradCase {
            name: "concat",
            build: |r| inst(vec![randn(r, &[2, 3]), randn(r, &[2, 4])], |x| Tensor::concat(&[&x[0], &x[1]], 1)),
        },
        GradCase { name: "expand_leading", build: |r| inst(vec![randn(r, &[2, 3])], |x| x[0].expand_leading(3)) },
        GradCase {
            name: "dropout",
            build: |r| inst(vec![randn(r, &[4, 5])], |x| x[0].dropout(0.3, &mut Rng::new(99), true)),
        },
        GradCase {
            name: "multi_head_attention",
            build: |r| {
                let inputs = vec![randn(r, &[2, 3, 4]), randn(r, &[12, 4]), randn(r, &[12]), randn(r, &[4, 4]), randn(r, &[4])];
                inst(inputs, |x| {
                    let w = AttentionWeights {
                        qkv_weight: &x[1],
                        qkv_bias: Some(&x[2]),
                        proj_weight: &x[3],
                        proj_bias: Some(&x[4]),
                    };
                    multi_head_attention(&x[0], 2, &w, |_, _| {})
                })
            },
        },
        GradCase {
            name: "weighted_cross_entropy",
            build: |r| {
                let labels: Vec<usize> = (0..3).map(|_| r.below(4)).collect();
                inst(vec![randn(r, &[3, 4])], move |x| x[0].weighted_cross_entropy(&labels, &[0.5, 1.0, 1.0, 2.0]))
            },
        },
        GradCase {
            name: "shared_use",
            build: |r| {
                inst(vec![randn(r, &[2, 3]), randn(r, &[3, 3])], |x| {
                    let a = x[0].linear(&x[1], None)?;
                    let b = x[0].mul(&x[0])?;
                    a.add(&b)?.gelu()
                })
            },
        },
    ]
}

fn projected_loss(out: &Tensor<f64>, proj: &Tensor<f64>) -> Result<Tensor<f64>> {
    out.mul(proj)?.sum()
}

/// Max relative error of one case instance for one seed.
pub fn check_case(case: &GradCase, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let instance = (case.build)(&mut rng);
    let out = (instance.forward)(&instance.inputs)?;
    let proj = Tensor::from_f64(&(0..out.numel()).map(|_| rng.normal()).collect::<Vec<_>>(), out.shape())?;
    projected_loss(&out, &proj)?.backward()?;

    let mut worst: f64 = 0.0;
    for (i, input) in instance.inputs.iter().enumerate() {
        let analytic = input.grad().unwrap_or_else(|| vec![0.0; input.numel()]);
        let mut numeric = vec![0.0; input.numel()];
        let _guard = no_grad();
        for (j, slot) in numeric.iter_mut().enumerate() {
            let eval = |delta: f64| -> Result<f64> {
                let mut v = input.to_vec();
                v[j] += delta;
                let mut inputs = instance.inputs.clone();
                inputs[i] = Tensor::from_vec(v, input.shape())?;
                let out = (instance.forward)(&inputs)?;
                Ok(projected_loss(&out, &proj)?.item())
            };
            *slot = (eval(STEP)? - eval(-STEP)?) / (2.0 * STEP);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(worst)
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(1e-12_f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / scale)
        .fold(0.0, f64::max)
}

/// Runs `cases` over `SEEDS_PER_OP` seeds derived from `seed`.
pub fn run_cases(cases: &[GradCase], seed: u64) -> Result<GradcheckReport> {
    let mut ops = Vec::with_capacity(cases.len());
    for case in cases {
        let mut max_err: f64 = 0.0;
        for s in 0..SEEDS_PER_OP as u64 {
            max_err = max_err.max(check_case(case, mix_seed(seed, s))?);
        }
        ops.push(OpReport {
            op: case.name.to_string(),
            max_rel_error: max_err,
            seeds: SEEDS_PER_OP,
            passed: max_err < TOLERANCE,
        });
    }
    Ok(GradcheckReport { ops })
}

/// Full suite; `inject_fault` appends [`faulty_case`].
pub fn run(seed: u64, inject_fault: bool) -> Result<GradcheckReport> {
    let mut all = cases();
    if inject_fault {
        all.push(faulty_case());
    }
    run_cases(&all, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_case_sum_wx_gives_x() {
        let x = Tensor::<f64>::from_f64(&[1.0, -2.0, 0.5], &[3]).unwrap();
        let w = Tensor::<f64>::param(vec![0.3, 0.1, 0.9], &[3]).unwrap();
        w.mul(&x).unwrap().sum().unwrap().backward().unwrap();
        assert_eq!(w.grad().unwrap(), x.to_vec());
    }

    #[test]
    fn faulty_rule_is_caught() {
        let report = run_cases(&[faulty_case()], 1).unwrap();
        assert!(!report.passed());
        assert_eq!(report.failures()[0].op, "faulty_double");
    }

    #[test]
    fn every_op_passes() {
        let report = run(7, false).unwrap();
        for op in &report.ops {
            println!("{:<24} {:.3e}", op.op, op.max_rel_error);
        }
        assert!(report.passed(), "{:?}", report.failures());
    }

    #[test]
    fn relative_error_is_scale_free() {
        assert_eq!(relative_error(&[2.0, 4.0], &[2.0, 4.0]), 0.0);
        assert!((relative_error(&[1.0, 0.0], &[1.1, 0.0]) - 0.1 / 1.1).abs() < 1e-12);
    }
}

use osteo::models::{ArchName, ArchSpec, ForwardCtx, ModelGraph, Scale, VitDims};
use osteo::train::argmax;
use osteo::{Rng, Tensor};
use proptest::prelude::*;

fn param(m: &ModelGraph<f64>, name: &str) -> Vec<f64> {
    m.params().by_name(name).unwrap_or_else(|| panic!("missing {name}")).to_vec()
}

/// `x [t, i] * w^T [o, i] + b`.
fn affine(x: &[f64], t: usize, w: &[f64], b: &[f64], o: usize) -> Vec<f64> {
    let i = x.len() / t;
    let mut out = vec![0.0; t * o];
    for r in 0..t {
        for c in 0..o {
            out[r * o + c] = b[c] + (0..i).map(|k| x[r * i + k] * w[c * i + k]).sum::<f64>();
        }
    }
    out
}

fn layer_norm(x: &[f64], d: usize, g: &[f64], b: &[f64]) -> Vec<f64> {
    x.chunks(d)
        .flat_map(|row| {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + 1e-6).sqrt();
            row.iter().enumerate().map(move |(j, v)| (v - mean) * inv * g[j] + b[j]).collect::<Vec<_>>()
        })
        .collect()
}

fn gelu(v: f64) -> f64 {
    0.5 * v * (1.0 + libm::erf(v / std::f64::consts::SQRT_2))
}

/// Loop-by-loop ViT forward for one `[3, s, s]` image, written from the
/// architecture description rather than the library's fused kernels.
fn vit_oracle(m: &ModelGraph<f64>, dims: &VitDims, image: &[f64]) -> Vec<f64> {
    let (d, ps, s) = (dims.embed_dim, dims.patch_size, dims.input_side);
    let g = s / ps;
    let t = g * g + 1;
    let (pw, pb) = (param(m, "patch_embed.proj.weight"), param(m, "patch_embed.proj.bias"));
    let mut h = param(m, "cls_token");
    for gy in 0..g {
        for gx in 0..g {
            for o in 0..d {
                let mut acc = pb[o];
                for c in 0..3 {
                    for ky in 0..ps {
                        for kx in 0..ps {
                            let pix = image[c * s * s + (gy * ps + ky) * s + gx * ps + kx];
                            acc += pix * pw[((o * 3 + c) * ps + ky) * ps + kx];
                        }
                    }
                }
                h.push(acc);
            }
        }
    }
    for (v, p) in h.iter_mut().zip(param(m, "pos_embed")) {
        *v += p;
    }
    let (heads, dh) = (dims.heads, d / dims.heads);
    for blk in 0..dims.depth {
        let n = |s: &str| format!("blocks.{blk}.{s}");
        let a = layer_norm(&h, d, &param(m, &n("norm1.weight")), &param(m, &n("norm1.bias")));
        let qkv = affine(&a, t, &param(m, &n("attn.qkv.weight")), &param(m, &n("attn.qkv.bias")), 3 * d);
        let at = |r: usize, part: usize, head: usize, k: usize| qkv[r * 3 * d + part * d + head * dh + k];
        let mut ctx = vec![0.0; t * d];
        for head in 0..heads {
            for i in 0..t {
                let scores: Vec<f64> =
                    (0..t).map(|j| (0..dh).map(|k| at(i, 0, head, k) * at(j, 1, head, k)).sum::<f64>() / (dh as f64).sqrt()).collect();
                let mx = scores.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = scores.iter().map(|v| (v - mx).exp()).collect();
                let z: f64 = e.iter().sum();
                for k in 0..dh {
                    ctx[i * d + head * dh + k] = (0..t).map(|j| e[j] / z * at(j, 2, head, k)).sum();
                }
            }
        }
        let attn = affine(&ctx, t, &param(m, &n("attn.proj.weight")), &param(m, &n("attn.proj.bias")), d);
        for (v, a) in h.iter_mut().zip(attn) {
            *v += a;
        }
        let a = layer_norm(&h, d, &param(m, &n("norm2.weight")), &param(m, &n("norm2.bias")));
        let mut f = affine(&a, t, &param(m, &n("mlp.fc1.weight")), &param(m, &n("mlp.fc1.bias")), dims.mlp_dim);
        f.iter_mut().for_each(|v| *v = gelu(*v));
        let f = affine(&f, t, &param(m, &n("mlp.fc2.weight")), &param(m, &n("mlp.fc2.bias")), d);
        for (v, a) in h.iter_mut().zip(f) {
            *v += a;
        }
    }
    let h = layer_norm(&h, d, &param(m, "norm.weight"), &param(m, "norm.bias"));
    affine(&h[..d], 1, &param(m, "head.weight"), &param(m, "head.bias"), m.num_classes())
}

#[test]
fn tiny_vit_matches_loop_oracle() {
    let spec = ArchSpec::preset(ArchName::Vit, Scale::Tiny, 4);
    let model = ModelGraph::<f64>::build(&spec, 5).unwrap();
    let s = spec.input_side;
    let mut rng = Rng::new(8);
    let x: Vec<f64> = (0..2 * 3 * s * s).map(|_| rng.normal()).collect();
    let logits = model.predict(&Tensor::from_vec(x.clone(), &[2, 3, s, s]).unwrap()).unwrap();
    for i in 0..2 {
        let want = vit_oracle(&model, &spec.vit, &x[i * 3 * s * s..(i + 1) * 3 * s * s]);
        let got = &logits.data()[i * 4..(i + 1) * 4];
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-4, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn eval_forward_ignores_dropout_seed() {
    let mut spec = ArchSpec::preset(ArchName::Cnn, Scale::Tiny, 3);
    spec.dropout_rate = 0.5;
    let model = ModelGraph::<f32>::build(&spec, 2).unwrap();
    let x = Tensor::<f32>::full(&[1, 3, 64, 64], 0.3);
    let a = model.predict(&x).unwrap();
    let b = model.forward(&x, &mut ForwardCtx::eval()).unwrap();
    assert_eq!(a.data(), b.data());
    let train_a = model.forward(&x, &mut ForwardCtx::train(1)).unwrap();
    let train_b = model.forward(&x, &mut ForwardCtx::train(1)).unwrap();
    assert_eq!(train_a.data(), train_b.data());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn argmax_survives_positive_scaling(logits in prop::collection::vec(-10.0f64..10.0, 2..6), c in 1e-3f64..1e3) {
        let scaled: Vec<f64> = logits.iter().map(|v| v * c).collect();
        prop_assert_eq!(argmax(&logits), argmax(&scaled));
    }
}

#[test]
fn model_argmax_survives_head_scaling() {
    let spec = ArchSpec::preset(ArchName::Cnn, Scale::Tiny, 4);
    let mut model = ModelGraph::<f64>::build(&spec, 11).unwrap();
    let s = spec.input_side;
    let mut rng = Rng::new(3);
    let x = Tensor::from_vec((0..4 * 3 * s * s).map(|_| rng.normal()).collect(), &[4, 3, s, s]).unwrap();
    let before: Vec<usize> = model.predict(&x).unwrap().data().chunks(4).map(argmax).collect();
    for name in ["head.weight", "head.bias"] {
        let i = model.params().index_of(name).unwrap();
        let scaled = model.params().at(i).tensor.data().iter().map(|v| v * 7.5).collect();
        model.params_mut().set_data(i, scaled).unwrap();
    }
    let after: Vec<usize> = model.predict(&x).unwrap().data().chunks(4).map(argmax).collect();
    assert_eq!(before, after);
}

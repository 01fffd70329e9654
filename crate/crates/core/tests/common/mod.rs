#![allow(dead_code)]

use microexp_core::models::{build, init_params, ArchKind, ArchSpec};
use microexp_core::nn::NetworkGraph;
use microexp_core::{Shape4, Tensor};
use rand::Rng;

pub fn shape(c: usize, h: usize, w: usize, d: usize) -> Shape4 {
    Shape4::new(c, h, w, d).unwrap()
}

pub fn random_tensor(rng: &mut impl Rng, s: Shape4, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_vec(s, (0..s.len()).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Nested-loop valid convolution over a 5-D `(f, c, kh, kw, kd)` weight array.
pub fn conv_ref(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64]) -> Tensor<f64> {
    let xs = x.shape();
    let ws = w.shape();
    let f_n = b.len();
    let c_n = xs.channels;
    let (kh, kw, kd) = (ws.height, ws.width, ws.depth);
    let out = shape(f_n, xs.height - kh + 1, xs.width - kw + 1, xs.depth - kd + 1);
    let mut y = Tensor::zeros(out);
    for f in 0..f_n {
        for i in 0..out.height {
            for j in 0..out.width {
                for t in 0..out.depth {
                    let mut acc = b[f];
                    for c in 0..c_n {
                        for a in 0..kh {
                            for bb in 0..kw {
                                for e in 0..kd {
                                    acc += w.at(f * c_n + c, a, bb, e) * x.at(c, i + a, j + bb, t + e);
                                }
                            }
                        }
                    }
                    *y.at_mut(f, i, j, t) = acc;
                }
            }
        }
    }
    y
}

/// Nested-loop non-overlapping max pooling.
pub fn pool_ref(x: &Tensor<f64>, (ph, pw, pd): (usize, usize, usize)) -> Tensor<f64> {
    let xs = x.shape();
    let out = shape(xs.channels, xs.height / ph, xs.width / pw, xs.depth / pd);
    let mut y = Tensor::zeros(out);
    for c in 0..out.channels {
        for i in 0..out.height {
            for j in 0..out.width {
                for t in 0..out.depth {
                    let mut m = f64::NEG_INFINITY;
                    for a in 0..ph {
                        for bb in 0..pw {
                            for e in 0..pd {
                                m = m.max(x.at(c, i * ph + a, j * pw + bb, t * pd + e));
                            }
                        }
                    }
                    *y.at_mut(c, i, j, t) = m;
                }
            }
        }
    }
    y
}

/// `y_j = b_j + sum_i x_i w[i][j]`.
pub fn dense_ref(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let m = b.len();
    (0..m)
        .map(|j| b[j] + x.iter().enumerate().map(|(i, xi)| xi * w[i * m + j]).sum::<f64>())
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A small STCNN that exercises every layer type.
pub fn tiny_stcnn() -> ArchSpec {
    ArchSpec {
        input_hw: 6,
        depth: 6,
        kernel: (3, 3, 3),
        filters: 2,
        pool: (2, 2, 2),
        hidden: vec![4],
        ..ArchSpec::new(ArchKind::Stcnn, 6)
    }
}

/// The 8 x 8 x 8 STCNN with a 3 x 3 x 3 kernel and a 16-unit dense layer.
pub fn small_stcnn() -> ArchSpec {
    ArchSpec {
        input_hw: 8,
        depth: 8,
        kernel: (3, 3, 3),
        hidden: vec![16],
        ..ArchSpec::new(ArchKind::Stcnn, 8)
    }
}

pub fn tiny_fusion(kind: ArchKind) -> ArchSpec {
    ArchSpec {
        input_hw: 5,
        depth: 5,
        kernel: (2, 2, 2),
        filters: 2,
        pool: (2, 2, 2),
        hidden: vec![5, 3],
        ..ArchSpec::new(kind, 5)
    }
}

/// The reduced STCNN used on 16 x 16 x 16 synthetic clips.
pub fn reduced_stcnn() -> ArchSpec {
    ArchSpec {
        input_hw: 16,
        depth: 16,
        kernel: (3, 3, 5),
        hidden: vec![32],
        ..ArchSpec::new(ArchKind::Stcnn, 16)
    }
}

pub fn built(spec: &ArchSpec, seed: u64) -> NetworkGraph<f64> {
    let mut g = build::<f64>(spec).unwrap();
    init_params(&mut g, seed);
    g
}

pub fn random_inputs(rng: &mut impl Rng, g: &NetworkGraph<f64>) -> Vec<Tensor<f64>> {
    g.input_shapes().into_iter().map(|s| random_tensor(rng, s, 0.0, 1.0)).collect()
}

/// Face-input samples rendered by the synthetic generator, `per_class` of each
/// class, with the clip side and depth taken from `spec`.
pub fn blob_samples<T: microexp_core::Scalar>(
    spec: &ArchSpec,
    classes: usize,
    per_class: usize,
    seed: u64,
) -> Vec<microexp_core::dataio::Sample<T>> {
    use microexp_core::dataio::samples::sample_from_clip;
    use microexp_core::dataio::synth::render_clip;
    use microexp_core::dataio::{SynthParams, TemporalMode};
    use rand::SeedableRng;
    let params = SynthParams { classes, per_class, hw: spec.input_hw, depth: spec.depth, seed };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for k in 0..classes {
        for j in 0..per_class {
            let clip = render_clip(k, &params, &mut rng, &format!("blob_{k}_{j}")).unwrap();
            out.push(sample_from_clip(&clip, None, spec, TemporalMode::Uniform, k).unwrap());
        }
    }
    out
}

/// Random-input samples for graphs of any architecture.
pub fn noise_samples(g: &NetworkGraph<f64>, n: usize, seed: u64) -> Vec<microexp_core::dataio::Sample<f64>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| microexp_core::dataio::Sample {
            inputs: random_inputs(&mut rng, g),
            label: i % g.num_classes(),
            id: format!("noise_{i}"),
        })
        .collect()
}

/// Largest relative error between `analytic` and central differences of `f`
/// around `x`.
pub fn fd_error(x: &Tensor<f64>, analytic: &Tensor<f64>, eps: f64, f: impl Fn(&Tensor<f64>) -> f64) -> f64 {
    use microexp_core::nn::gradcheck::relative_error;
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let (mut p, mut m) = (x.clone(), x.clone());
        p.as_mut_slice()[i] += eps;
        m.as_mut_slice()[i] -= eps;
        let numeric = (f(&p) - f(&m)) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.as_slice()[i], numeric));
    }
    worst
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Worst relative error of every layer backward pass against central
/// differences of `sum(r * layer(x))` for a random cotangent `r`.
pub fn layer_gradient_errors(seed: u64, eps: f64) -> Vec<(&'static str, f64)> {
    use microexp_core::nn::dense::dense_weight_shape;
    use microexp_core::nn::reshape::{split_at, unflatten};
    use microexp_core::nn::*;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let x = random_tensor(&mut rng, shape(2, 5, 4, 6), -1.0, 1.0);
    let w = random_tensor(&mut rng, shape(6, 2, 3, 3), -1.0, 1.0);
    let b = random_tensor(&mut rng, shape(3, 1, 1, 1), -1.0, 1.0);
    let r = random_tensor(&mut rng, conv_output_shape(x.shape(), 3, (2, 3, 3)).unwrap(), -1.0, 1.0);
    let (dx, dw, db) = conv3d_backward(&x, &w, &r).unwrap();
    let conv = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| dot(conv3d_forward(x, w, b).unwrap().as_slice(), r.as_slice());
    out.push(("conv3d input", fd_error(&x, &dx, eps, |v| conv(v, &w, &b))));
    out.push(("conv3d weights", fd_error(&w, &dw, eps, |v| conv(&x, v, &b))));
    out.push(("conv3d bias", fd_error(&b, &db, eps, |v| conv(&x, &w, v))));

    let x = random_tensor(&mut rng, shape(17, 1, 1, 1), -1.0, 1.0);
    let w = random_tensor(&mut rng, dense_weight_shape(17, 5).unwrap(), -1.0, 1.0);
    let b = random_tensor(&mut rng, shape(5, 1, 1, 1), -1.0, 1.0);
    let r = random_tensor(&mut rng, shape(5, 1, 1, 1), -1.0, 1.0);
    let (dx, dw, db) = dense_backward(&x, &w, &r).unwrap();
    let dense = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| dot(dense_forward(x, w, b).unwrap().as_slice(), r.as_slice());
    out.push(("dense input", fd_error(&x, &dx, eps, |v| dense(v, &w, &b))));
    out.push(("dense weights", fd_error(&w, &dw, eps, |v| dense(&x, v, &b))));
    out.push(("dense bias", fd_error(&b, &db, eps, |v| dense(&x, &w, v))));

    // Distinct pooling inputs spaced far wider than the perturbation.
    let s = shape(2, 4, 6, 6);
    let mut vals: Vec<f64> = (0..s.len()).map(|i| i as f64 * 0.01).collect();
    for i in (1..vals.len()).rev() {
        vals.swap(i, rng.gen_range(0..=i));
    }
    let x = Tensor::from_vec(s, vals).unwrap();
    let (y, argmax) = maxpool3d_forward(&x, (2, 3, 2)).unwrap();
    let r = random_tensor(&mut rng, y.shape(), -1.0, 1.0);
    let dx = maxpool3d_backward(&argmax, &r, s).unwrap();
    out.push(("maxpool3d", fd_error(&x, &dx, eps, |v| dot(maxpool3d_forward(v, (2, 3, 2)).unwrap().0.as_slice(), r.as_slice()))));

    let mut x = random_tensor(&mut rng, shape(3, 4, 4, 2), -1.0, 1.0);
    for v in x.as_mut_slice() {
        if v.abs() < 10.0 * eps {
            *v = 0.5;
        }
    }
    let r = random_tensor(&mut rng, x.shape(), -1.0, 1.0);
    let dx = relu_backward(&x, &r).unwrap();
    out.push(("relu", fd_error(&x, &dx, eps, |v| dot(relu_forward(v).as_slice(), r.as_slice()))));

    let x = random_tensor(&mut rng, shape(40, 1, 1, 1), -1.0, 1.0);
    let r = random_tensor(&mut rng, x.shape(), -1.0, 1.0);
    let masked = |v: &Tensor<f64>| {
        let mut mrng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xd0);
        dropout_forward(v, 0.5, &mut Mode::Train(&mut mrng)).unwrap()
    };
    let dx = dropout_backward(&masked(&x).1.unwrap(), &r).unwrap();
    out.push(("dropout", fd_error(&x, &dx, eps, |v| dot(masked(v).0.as_slice(), r.as_slice()))));

    let mut worst = 0.0f64;
    for class in 0..4 {
        let z = random_tensor(&mut rng, shape(4, 1, 1, 1), -3.0, 3.0);
        let g = Tensor::vector(softmax_xent_grad(z.as_slice(), class).unwrap()).unwrap();
        worst = worst.max(fd_error(&z, &g, eps, |v| softmax_xent(v.as_slice(), class).unwrap().1));
    }
    out.push(("softmax cross-entropy", worst));

    let x = random_tensor(&mut rng, shape(2, 3, 1, 2), -1.0, 1.0);
    let r = random_tensor(&mut rng, shape(12, 1, 1, 1), -1.0, 1.0);
    let dx = unflatten(&r, x.shape()).unwrap();
    out.push(("flatten", fd_error(&x, &dx, eps, |v| dot(flatten(v).as_slice(), r.as_slice()))));

    let (a, b) = (random_tensor(&mut rng, shape(3, 1, 1, 1), -1.0, 1.0), random_tensor(&mut rng, shape(2, 1, 1, 1), -1.0, 1.0));
    let r = random_tensor(&mut rng, shape(5, 1, 1, 1), -1.0, 1.0);
    let (ga, gb) = split_at(r.as_slice(), 3).unwrap();
    let (ga, gb) = (Tensor::vector(ga).unwrap(), Tensor::vector(gb).unwrap());
    let cat = |a: &Tensor<f64>, b: &Tensor<f64>| dot(&concat(a.as_slice(), b.as_slice()), r.as_slice());
    out.push(("concat first", fd_error(&a, &ga, eps, |v| cat(v, &b))));
    out.push(("concat second", fd_error(&b, &gb, eps, |v| cat(&a, v))));
    out
}

/// Worst relative error of a whole-graph finite-difference check of `spec`,
/// over every class, with biases moved off zero to keep ReLUs away from
/// their kink.
pub fn graph_gradient_error(spec: &ArchSpec, seed: u64, eps: f64) -> f64 {
    use microexp_core::nn::finite_diff_check;
    use rand::SeedableRng;
    let mut g = built(spec, seed);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
    let mut inputs;
    let mut attempts = 0;
    loop {
        for p in g.params_mut().iter_mut().filter(|p| p.name.ends_with(".bias")) {
            for v in p.value.as_mut_slice() {
                *v = rng.gen_range(0.05..0.2);
            }
        }
        inputs = random_inputs(&mut rng, &g);
        attempts += 1;
        let (pool, relu) = kink_margin(&g, &inputs);
        if pool > 2.0 * eps && relu > 20.0 * eps {
            break;
        }
        assert!(attempts < 500, "no instance clear of kinks");
    }
    let refs: Vec<&Tensor<f64>> = inputs.iter().collect();
    (0..g.num_classes())
        .map(|class| finite_diff_check(&mut g, &refs, class, eps).unwrap().max_error())
        .fold(0.0, f64::max)
}

/// Distances of the instance from the points where the loss is not
/// differentiable: `(pool, relu)` where `pool` covers ReLU-then-pool windows
/// (two candidates tying for the max, or the max at zero) and `relu` covers
/// the remaining ReLU inputs. Dropout masks match those of `finite_diff_check`.
pub fn kink_margin(g: &NetworkGraph<f64>, inputs: &[Tensor<f64>]) -> (f64, f64) {
    use microexp_core::nn::{LayerSpec, Mode, MASK_SEED};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(MASK_SEED);
    let refs: Vec<&Tensor<f64>> = inputs.iter().collect();
    let pass = g.forward(&refs, Mode::Train(&mut rng)).unwrap();
    let nodes = g.nodes();
    let (mut margin, mut relu) = (f64::INFINITY, f64::INFINITY);
    for (i, node) in nodes.iter().enumerate() {
        if node.layer != LayerSpec::Relu {
            continue;
        }
        let pre = pass.cache.activation(node.inputs[0]);
        let pool = nodes.iter().find_map(|n| match n.layer {
            LayerSpec::MaxPool3d { window } if n.inputs == [i] => Some(window),
            _ => None,
        });
        let Some((ph, pw, pd)) = pool else {
            relu = pre.as_slice().iter().fold(relu, |m, v| m.min(v.abs()));
            continue;
        };
        let s = pre.shape();
        for c in 0..s.channels {
            for y in 0..s.height / ph {
                for x in 0..s.width / pw {
                    for t in 0..s.depth / pd {
                        let (mut top, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                        for a in 0..ph {
                            for b in 0..pw {
                                for e in 0..pd {
                                    let v = pre.at(c, y * ph + a, x * pw + b, t * pd + e);
                                    if v > top {
                                        second = top;
                                        top = v;
                                    } else if v > second {
                                        second = v;
                                    }
                                }
                            }
                        }
                        let m = if top > 0.0 { top - second.max(0.0) } else { -top };
                        margin = margin.min(m);
                    }
                }
            }
        }
    }
    (margin, relu)
}

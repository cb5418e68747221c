use dynbias::diffcore::*;
use dynbias::rng::named;
use dynbias::snn::{Readout, SpikingModel};
use proptest::prelude::*;
use rand::Rng;

const TOL: f64 = 1e-4;

/// Random tensor with entries bounded away from zero so ReLU kinks and
/// |x| are not straddled by the finite-difference step.
fn rand_t(shape: &[usize], seed: u64) -> Tensor {
    let mut r = named(seed, "diffcore-test", &[]);
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = r.gen_range(0.1..1.0);
            if r.gen::<bool>() { v } else { -v }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

fn check(store: &ParamStore, build: impl Fn(&mut Graph, &ParamStore) -> DResult<Var>) -> GradCheckReport {
    let rep = grad_check(store, TOL, build).unwrap();
    assert!(rep.passed, "{rep:#?}");
    rep
}

#[test]
fn matmul_identity() {
    let mut g = Graph::new();
    let eye = g.input(Tensor::new(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap()).unwrap();
    let a = rand_t(&[3, 4], 1);
    let av = g.input(a.clone()).unwrap();
    let c = g.matmul(eye, av).unwrap();
    assert_eq!(g.value(c), &a);
}

#[test]
fn cross_entropy_of_zero_logits_is_ln_ten() {
    let mut g = Graph::new();
    let z = g.input(Tensor::zeros(&[2, 10])).unwrap();
    let l = g.softmax_cross_entropy(z, &[3, 9]).unwrap();
    assert!((g.scalar(l) - 10f64.ln()).abs() < 1e-12);
    assert!(g.cross_entropy_rows(z, &[10, 0]).is_err());
}

#[test]
fn layer_norm_of_constant_row_is_zero() {
    let mut g = Graph::new();
    let x = g.input(Tensor::full(&[2, 5], 3.7)).unwrap();
    let gain = g.input(Tensor::full(&[5], 1.0)).unwrap();
    let bias = g.input(Tensor::zeros(&[5])).unwrap();
    let y = g.layer_norm(x, gain, bias).unwrap();
    assert!(g.value(y).data.iter().all(|&v| v == 0.0));
}

#[test]
fn mse_gradient_vanishes_at_target() {
    let mut store = ParamStore::new();
    let t = rand_t(&[3, 2], 4);
    let p = store.add("x", t.clone());
    let mut g = Graph::new();
    let x = g.param(&store, p);
    let x0 = g.input(t).unwrap();
    let l = g.mse(x, x0).unwrap();
    let grads = g.backward(l, &store).unwrap();
    assert!(grads.get(p).data.iter().all(|&v| v == 0.0));
}

#[test]
fn shape_errors_and_nonfinite_are_reported() {
    let mut g = Graph::new();
    let a = g.input(Tensor::zeros(&[2, 3])).unwrap();
    let b = g.input(Tensor::zeros(&[2, 3])).unwrap();
    assert!(matches!(g.matmul(a, b), Err(DiffError::Shape { .. })));
    let c = g.input(Tensor::zeros(&[2])).unwrap();
    assert!(matches!(g.add(a, c), Err(DiffError::Shape { .. })));
    let big = g.input(Tensor::full(&[1], 1000.0)).unwrap();
    assert!(matches!(g.exp(big), Err(DiffError::NonFinite { .. })));
    assert!(matches!(g.backward(a, &ParamStore::new()), Err(DiffError::NonScalarLoss(_))));
    assert!(Tensor::new(&[2, 2, 2, 2], vec![0.0; 16]).is_err());
}

#[test]
fn grad_check_every_primitive() {
    let mut s = ParamStore::new();
    let a = s.add("a", rand_t(&[3, 4], 10));
    let b = s.add("b", rand_t(&[4, 2], 11));
    let v = s.add("v", rand_t(&[4], 12));
    let c = s.add("c", rand_t(&[3, 4], 13));
    let gain = s.add("gain", rand_t(&[4], 14));
    let bias = s.add("bias", rand_t(&[4], 15));
    let w = rand_t(&[3, 4], 16);
    let wsum = |g: &mut Graph, x: Var| -> DResult<Var> {
        // weighted sum with fixed random weights so every output entry matters
        let n = g.value(x).len();
        let shape = g.value(x).shape.clone();
        let wt = g.input(Tensor::new(&shape, w.data.iter().cycle().take(n).cloned().collect()).unwrap())?;
        let m = g.mul(x, wt)?;
        g.sum(m)
    };
    type Build<'a> = Box<dyn Fn(&mut Graph, &ParamStore) -> DResult<Var> + 'a>;
    let cases: Vec<(&str, Build)> = vec![
        ("matmul", Box::new(|g, st| {
            let (x, y) = (g.param(st, a), g.param(st, b));
            let m = g.matmul(x, y)?;
            wsum(g, m)
        })),
        ("add_broadcast", Box::new(|g, st| {
            let (x, y) = (g.param(st, a), g.param(st, v));
            let m = g.add(x, y)?;
            wsum(g, m)
        })),
        ("sub_broadcast", Box::new(|g, st| {
            let (x, y) = (g.param(st, a), g.param(st, v));
            let m = g.sub(x, y)?;
            wsum(g, m)
        })),
        ("mul", Box::new(|g, st| {
            let (x, y) = (g.param(st, a), g.param(st, c));
            let m = g.mul(x, y)?;
            wsum(g, m)
        })),
        ("mul_broadcast", Box::new(|g, st| {
            let (x, y) = (g.param(st, a), g.param(st, v));
            let m = g.mul(x, y)?;
            wsum(g, m)
        })),
        ("scale", Box::new(|g, st| {
            let x = g.param(st, a);
            let m = g.scale(x, -1.7)?;
            wsum(g, m)
        })),
        ("relu", Box::new(|g, st| {
            let x = g.param(st, a);
            let m = g.relu(x)?;
            wsum(g, m)
        })),
        ("tanh", Box::new(|g, st| {
            let x = g.param(st, a);
            let m = g.tanh(x)?;
            wsum(g, m)
        })),
        ("sigmoid", Box::new(|g, st| {
            let x = g.param(st, a);
            let m = g.sigmoid(x)?;
            wsum(g, m)
        })),
        ("exp", Box::new(|g, st| {
            let x = g.param(st, a);
            let m = g.exp(x)?;
            wsum(g, m)
        })),
        ("spike", Box::new(|g, st| {
            let x = g.param(st, a);
            let m = g.spike(x)?;
            wsum(g, m)
        })),
        ("layer_norm", Box::new(|g, st| {
            let (x, ga, bi) = (g.param(st, a), g.param(st, gain), g.param(st, bias));
            let m = g.layer_norm(x, ga, bi)?;
            wsum(g, m)
        })),
        ("softmax_cross_entropy", Box::new(|g, st| {
            let x = g.param(st, a);
            g.softmax_cross_entropy(x, &[0, 3, 2])
        })),
        ("mse", Box::new(|g, st| {
            let (x, y) = (g.param(st, a), g.param(st, c));
            g.mse(x, y)
        })),
        ("l1_norm", Box::new(|g, st| {
            let x = g.param(st, a);
            g.l1_norm(x)
        })),
        ("mean", Box::new(|g, st| {
            let x = g.param(st, a);
            let t = g.tanh(x)?;
            g.mean(t)
        })),
        ("concat_axis0", Box::new(|g, st| {
            let (x, y) = (g.param(st, a), g.param(st, c));
            let m = g.concat(&[x, y], 0)?;
            let t = g.tanh(m)?;
            g.sum(t)
        })),
        ("concat_axis1", Box::new(|g, st| {
            let (x, y) = (g.param(st, a), g.param(st, c));
            let m = g.concat(&[x, y], 1)?;
            let t = g.sigmoid(m)?;
            g.sum(t)
        })),
        ("slice", Box::new(|g, st| {
            let x = g.param(st, a);
            let m = g.slice(x, 1, 1, 2)?;
            wsum(g, m)
        })),
    ];
    let mut report = Vec::new();
    for (name, build) in &cases {
        let rep = grad_check(&s, TOL, build).unwrap();
        report.push((name, rep.worst()));
        assert!(rep.passed, "{name}: {rep:#?}");
    }
    for (name, worst) in report {
        println!("{name:<24} max rel err {worst:.2e}");
    }
}

#[test]
fn chain_of_three_primitives() {
    let mut s = ParamStore::new();
    let w = s.add("w", rand_t(&[5, 3], 20));
    let x = rand_t(&[4, 5], 21);
    check(&s, |g, st| {
        let xi = g.input(x.clone())?;
        let wv = g.param(st, w);
        let h = g.matmul(xi, wv)?;
        let t = g.tanh(h)?;
        g.l1_norm(t)
    });
}

#[test]
fn two_layer_spiking_model() {
    let mut s = ParamStore::new();
    let mut rng = named(1, "gc-snn", &[]);
    let model = SpikingModel::new(&mut s, &mut rng, "snn", &[6, 8, 3], 0.9, false, Readout::IntegratedMembrane);
    // scale the output layer up so its gradients are not all at round-off level
    let w_out = model.layers[1].w;
    s.get_mut(w_out).data.iter_mut().for_each(|v| *v *= 50.0);
    let xs: Vec<Tensor> = (0..4).map(|t| rand_t(&[2, 6], 30 + t)).collect();
    let rep = check(&s, |g, st| {
        let b = model.bind(g, st);
        let inputs: Vec<Var> = xs.iter().map(|x| g.input(x.clone())).collect::<DResult<_>>()?;
        let out = model.run_sequence(g, &b, &inputs)?;
        g.softmax_cross_entropy(out.readout, &[0, 2])
    });
    assert!(rep.params.iter().any(|p| p.name.ends_with("theta")));
}

#[test]
fn recurrent_spiking_model() {
    let mut s = ParamStore::new();
    let mut rng = named(2, "gc-rleaky", &[]);
    let model = SpikingModel::new(&mut s, &mut rng, "r", &[3, 5, 2], 0.5, true, Readout::IntegratedMembrane);
    let xs: Vec<Tensor> = (0..3).map(|t| rand_t(&[2, 3], 40 + t)).collect();
    check(&s, |g, st| {
        let b = model.bind(g, st);
        let inputs: Vec<Var> = xs.iter().map(|x| g.input(x.clone())).collect::<DResult<_>>()?;
        let out = model.run_sequence(g, &b, &inputs)?;
        g.softmax_cross_entropy(out.readout, &[1, 0])
    });
}

#[test]
fn mismatched_backward_is_detected() {
    // Heaviside forward with surrogate backward: finite differences see a
    // flat function, so the check must fail.
    let mut s = ParamStore::new();
    let p = s.add("u", Tensor::new(&[1, 3], vec![0.02, -0.03, 0.01]).unwrap());
    let rep = grad_check(&s, TOL, |g, st| {
        g.spike_mode = SpikeMode::Heaviside;
        let u = g.param(st, p);
        let sp = g.spike(u)?;
        g.sum(sp)
    })
    .unwrap();
    assert!(!rep.passed);
}

#[test]
fn disconnected_parameters_get_zero_and_are_listed() {
    let mut s = ParamStore::new();
    let a = s.add("used", rand_t(&[2], 1));
    let b = s.add("unused", rand_t(&[3], 2));
    let mut g = Graph::new();
    let x = g.param(&s, a);
    let l = g.sum(x).unwrap();
    let grads = g.backward(l, &s).unwrap();
    assert_eq!(grads.disconnected, vec!["unused".to_string()]);
    assert!(grads.get(b).data.iter().all(|&v| v == 0.0));
    assert_eq!(grads.get(a).data, vec![1.0, 1.0]);
}

#[test]
fn adam_first_step_and_zero_gradient() {
    let mut s = ParamStore::new();
    let p = s.add("w", Tensor::scalar(2.0));
    let mut adam = Adam::new(&s, 0.1);
    let zero = Grads::zeros_like(&s);
    adam.step(&mut s, &zero).unwrap();
    assert_eq!(s.get(p).item(), 2.0);
    assert_eq!(adam.step, 1);
    let mut adam = Adam::new(&s, 0.1);
    let mut one = Grads::zeros_like(&s);
    one.tensors[0].data[0] = 1.0;
    adam.step(&mut s, &one).unwrap();
    // m̂ = v̂ = 1 after bias correction
    assert!((s.get(p).item() - (2.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
}

#[test]
fn sgd_on_square() {
    let mut s = ParamStore::new();
    let p = s.add("w", Tensor::scalar(1.0));
    let mut g = Graph::new();
    let w = g.param(&s, p);
    let sq = g.mul(w, w).unwrap();
    let grads = g.backward(sq, &s).unwrap();
    Sgd { lr: 0.5 }.step(&mut s, &grads).unwrap();
    assert_eq!(s.get(p).item(), 0.0);
}

#[test]
fn nonfinite_gradient_aborts_step() {
    let mut s = ParamStore::new();
    let p = s.add("w", Tensor::scalar(1.0));
    let mut grads = Grads::zeros_like(&s);
    grads.tensors[0].data[0] = f64::NAN;
    let mut adam = Adam::new(&s, 0.1);
    assert!(adam.step(&mut s, &grads).is_err());
    assert!(Sgd { lr: 0.1 }.step(&mut s, &grads).is_err());
    assert_eq!(s.get(p).item(), 1.0);
    assert_eq!(adam.step, 0);
}

#[test]
fn clipping_bounds_global_norm() {
    let mut s = ParamStore::new();
    s.add("a", Tensor::zeros(&[2]));
    let mut grads = Grads::zeros_like(&s);
    grads.tensors[0].data = vec![3.0, 4.0];
    let before = clip_global_norm(&mut grads, 1.0);
    assert_eq!(before, 5.0);
    assert!((global_norm(&grads) - 1.0).abs() < 1e-12);
}

#[test]
fn checkpoint_roundtrip_and_tamper_detection() {
    let mut s = ParamStore::new();
    s.add("w", rand_t(&[3, 3], 7));
    s.add("theta", Tensor::full(&[3], 1.0 / 3.0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    s.to_checkpoint().save(&path).unwrap();
    let back = ParamStore::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(back, s);
    let mut ck = s.to_checkpoint();
    ck.params[0].data[0] += 1e-12;
    assert!(ParamStore::from_checkpoint(&ck).is_err());
}

#[test]
fn forward_is_bitwise_deterministic() {
    let run = || {
        let mut s = ParamStore::new();
        let mut rng = named(5, "det", &[]);
        let m = SpikingModel::new(&mut s, &mut rng, "m", &[4, 6, 2], 0.9, false, Readout::IntegratedMembrane);
        let mut g = Graph::new();
        let b = m.bind(&mut g, &s);
        let xs: Vec<Var> = (0..5).map(|t| g.input(rand_t(&[3, 4], t)).unwrap()).collect();
        let o = m.run_sequence(&mut g, &b, &xs).unwrap();
        g.value(o.readout).data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_three_layer_compositions(seed in 0u64..10_000, acts in prop::collection::vec(0usize..3, 3)) {
        let mut s = ParamStore::new();
        let dims = [3usize, 4, 4, 2];
        let ws: Vec<ParamId> = (0..3).map(|l| s.add(format!("w{l}"), rand_t(&[dims[l], dims[l + 1]], seed * 7 + l as u64))).collect();
        let bs: Vec<ParamId> = (0..3).map(|l| s.add(format!("b{l}"), rand_t(&[dims[l + 1]], seed * 11 + l as u64))).collect();
        let x = rand_t(&[2, 3], seed + 999);
        let rep = grad_check(&s, TOL, |g, st| {
            let mut h = g.input(x.clone())?;
            for l in 0..3 {
                let w = g.param(st, ws[l]);
                let b = g.param(st, bs[l]);
                let z = g.matmul(h, w)?;
                let z = g.add(z, b)?;
                h = match acts[l] {
                    0 => g.tanh(z)?,
                    1 => g.sigmoid(z)?,
                    _ => g.spike(z)?,
                };
            }
            g.softmax_cross_entropy(h, &[0, 1])
        }).unwrap();
        prop_assert!(rep.passed, "{:?}", rep);
    }

    #[test]
    fn adam_zero_gradient_is_identity(vals in prop::collection::vec(-10.0..10.0f64, 1..20), steps in 1usize..5) {
        let mut s = ParamStore::new();
        s.add("p", Tensor::new(&[vals.len()], vals.clone()).unwrap());
        let mut adam = Adam::new(&s, 0.01);
        let zero = Grads::zeros_like(&s);
        for _ in 0..steps {
            adam.step(&mut s, &zero).unwrap();
        }
        prop_assert_eq!(&s.get(ParamId(0)).data, &vals);
        prop_assert_eq!(adam.step, steps as u64);
    }

    #[test]
    fn surrogate_is_even_and_peaks_at_zero(u in -10.0..10.0f64) {
        prop_assert_eq!(surrogate_grad(u), surrogate_grad(-u));
        prop_assert!(surrogate_grad(u) <= 1.0);
        prop_assert!(surrogate_grad(u) > 0.0);
    }
}

#[test]
fn surrogate_hand_values() {
    assert_eq!(surrogate_grad(0.0), 1.0);
    assert!((surrogate_grad(0.04) - 0.25).abs() < 1e-15);
    assert!((surrogate_grad(-0.04) - 0.25).abs() < 1e-15);
}

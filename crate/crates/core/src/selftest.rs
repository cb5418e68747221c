//! Gradient checks and closed-form oracles run by `dynbias selftest`.

use rand::Rng as _;
use serde::Serialize;

use crate::diffcore::{grad_check, surrogate_grad, DResult, Graph, ParamStore, Tensor, Var};
use crate::dynmetrics::{lyapunov_with_fallback, LyapunovConfig};
use crate::dynsys::{init_state, SystemSpec};
use crate::pacbayes::{kl_gaussian, pac_bound, prior_variance};
use crate::rng::named;
use crate::snn::{Readout, SpikingModel};

pub const GRAD_TOL: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.into(), passed, detail }
}

fn rand_t(shape: &[usize], seed: u64) -> Tensor {
    let mut r = named(seed, "selftest", &[]);
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = r.gen_range(0.1..1.0);
            if r.gen::<bool>() { v } else { -v }
        })
        .collect();
    Tensor { shape: shape.to_vec(), data }
}

type Build = Box<dyn Fn(&mut Graph, &ParamStore) -> DResult<Var>>;

/// Finite-difference checks of every primitive and of a two-layer spiking
/// model with learnable thresholds.
pub fn gradient_checks() -> Vec<Check> {
    let mut s = ParamStore::new();
    let a = s.add("a", rand_t(&[3, 4], 1));
    let b = s.add("b", rand_t(&[4, 2], 2));
    let c = s.add("c", rand_t(&[3, 4], 3));
    let v = s.add("v", rand_t(&[4], 4));
    let w = rand_t(&[3, 4], 5);
    let weighted = move |g: &mut Graph, x: Var| -> DResult<Var> {
        let n = g.value(x).len();
        let shape = g.value(x).shape.clone();
        let wt = g.input(Tensor { shape, data: w.data.iter().cycle().take(n).cloned().collect() })?;
        let m = g.mul(x, wt)?;
        g.sum(m)
    };
    let unary = |f: fn(&mut Graph, Var) -> DResult<Var>| -> Build {
        let weighted = weighted.clone();
        Box::new(move |g, st| {
            let x = g.param(st, a);
            let y = f(g, x)?;
            weighted(g, y)
        })
    };
    let mut cases: Vec<(&str, Build)> = vec![
        ("relu", unary(|g, x| g.relu(x))),
        ("tanh", unary(|g, x| g.tanh(x))),
        ("sigmoid", unary(|g, x| g.sigmoid(x))),
        ("exp", unary(|g, x| g.exp(x))),
        ("spike", unary(|g, x| g.spike(x))),
        ("scale", unary(|g, x| g.scale(x, -1.7))),
    ];
    let wm = weighted.clone();
    cases.push((
        "matmul",
        Box::new(move |g, st| {
            let (x, y) = (g.param(st, a), g.param(st, b));
            let m = g.matmul(x, y)?;
            let t = g.tanh(m)?;
            g.sum(t)
        }),
    ));
    cases.push((
        "add_sub_mul_broadcast",
        Box::new(move |g, st| {
            let (x, y, z) = (g.param(st, a), g.param(st, v), g.param(st, c));
            let p = g.add(x, y)?;
            let q = g.sub(p, z)?;
            let r = g.mul(q, y)?;
            wm(g, r)
        }),
    ));
    cases.push((
        "layer_norm",
        Box::new(move |g, st| {
            let (x, ga, bi) = (g.param(st, a), g.param(st, v), g.param(st, v));
            let m = g.layer_norm(x, ga, bi)?;
            let t = g.sigmoid(m)?;
            g.sum(t)
        }),
    ));
    cases.push(("softmax_cross_entropy", Box::new(move |g, st| {
        let x = g.param(st, a);
        g.softmax_cross_entropy(x, &[0, 3, 2])
    })));
    cases.push(("mse_l1", Box::new(move |g, st| {
        let (x, y) = (g.param(st, a), g.param(st, c));
        let m = g.mse(x, y)?;
        let l = g.l1_norm(x)?;
        g.add(m, l)
    })));

    let mut out: Vec<Check> = cases
        .iter()
        .map(|(name, build)| match grad_check(&s, GRAD_TOL, build) {
            Ok(r) => check(&format!("grad:{name}"), r.passed, format!("max rel err {:.2e}", r.worst())),
            Err(e) => check(&format!("grad:{name}"), false, e.to_string()),
        })
        .collect();

    let mut ss = ParamStore::new();
    let model = SpikingModel::new(&mut ss, &mut named(1, "selftest-snn", &[]), "snn", &[6, 8, 3], 0.9, false, Readout::IntegratedMembrane);
    let w_out = model.layers[1].w;
    ss.get_mut(w_out).data.iter_mut().for_each(|x| *x *= 50.0);
    let xs: Vec<Tensor> = (0..4).map(|t| rand_t(&[2, 6], 30 + t)).collect();
    let rep = grad_check(&ss, GRAD_TOL, |g, st| {
        let bd = model.bind(g, st);
        let inputs: Vec<Var> = xs.iter().map(|x| g.input(x.clone())).collect::<DResult<_>>()?;
        let o = model.run_sequence(g, &bd, &inputs)?;
        g.softmax_cross_entropy(o.readout, &[0, 2])
    });
    out.push(match rep {
        Ok(r) => check("grad:two_layer_snn", r.passed, format!("max rel err {:.2e}", r.worst())),
        Err(e) => check("grad:two_layer_snn", false, e.to_string()),
    });
    out
}

/// Closed-form and reference-value oracles.
pub fn oracle_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let b = pac_bound(0.061, 2300.0, 1257, 0.05);
    out.push(check("pac_bound_reference_row", (b - 1.019).abs() <= 0.005, format!("{b:.4}")));
    let b0 = pac_bound(0.0, 0.0, 1001, 0.05);
    let want = ((2.0 * 1001f64.sqrt() / 0.05).ln() / 2000.0).sqrt();
    out.push(check("pac_bound_zero_kl", (b0 - want).abs() < 1e-12, format!("{b0:.6}")));
    let kl = kl_gaussian(&[1.0], &[1.0], 1.0);
    out.push(check("kl_unit_mean", (kl - 0.5).abs() < 1e-12, format!("{kl}")));
    let kl0 = kl_gaussian(&[0.0; 4], &[0.3; 4], 0.3);
    out.push(check("kl_matched", kl0.abs() < 1e-12, format!("{kl0}")));
    let pv = prior_variance(2.0);
    out.push(check("prior_variance_clip", (pv - (-5f64).exp()).abs() < 1e-12, format!("{pv}")));
    let sg = (surrogate_grad(0.0), surrogate_grad(0.04));
    out.push(check("surrogate_values", sg.0 == 1.0 && (sg.1 - 0.25).abs() < 1e-12, format!("{sg:?}")));
    let x0 = init_state(1.0).unwrap();
    match lyapunov_with_fallback(&SystemSpec::duffing(2.0), &x0, &LyapunovConfig::default()) {
        Ok((r, _)) => out.push(check("lyapunov_sum_delta2", (r.sum + 4.0).abs() <= 0.4, format!("{:.4}", r.sum))),
        Err(e) => out.push(check("lyapunov_sum_delta2", false, e.to_string())),
    }
    out
}

pub fn run_all() -> Vec<Check> {
    let mut v = gradient_checks();
    v.extend(oracle_checks());
    v
}

//! Bayesian spiking classifier with a damping-dependent Gaussian prior,
//! closed-form KL, McAllester bound and gradient-norm statistics.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{TabularDataset, N_CLASSES};
use crate::diffcore::{global_norm, Adam, DResult, Graph, ParamId, ParamStore, Sgd, Tensor, Var};
use crate::dynsys::EncodingConfig;
use crate::error::{invalid, Result};
use crate::exp_classify::{argmax, prepare_encoded, DataSource, EncodedSet};
use crate::rng::{self, fkey, Rng};
use crate::snn::{BoundLayer, Readout, SpikingModel};
use crate::stats;

pub const SIGMA0_SQ: f64 = 1.0;
pub const T_ENC: f64 = 4.0;
pub const EXPONENT_CLIP: f64 = 5.0;
pub const DELTA_CONF: f64 = 0.05;
pub const CV_EPS: f64 = 1e-8;

/// Lyapunov sums of the reference damping grid.
const LAMBDA_SUM_TABLE: [(f64, f64); 4] = [(-1.5, 3.0), (0.0, 0.0), (2.0, -4.0), (10.0, -20.0)];

/// Σλ at damping `delta`: table value on the grid, `−2δ` elsewhere.
pub fn lambda_sum(delta: f64) -> f64 {
    LAMBDA_SUM_TABLE.iter().find(|(d, _)| *d == delta).map_or(-2.0 * delta, |(_, s)| *s)
}

/// σ_p² = σ0²·exp(clip(Σλ·T_enc, ±5)).
pub fn prior_variance(delta: f64) -> f64 {
    SIGMA0_SQ * (lambda_sum(delta) * T_ENC).clamp(-EXPONENT_CLIP, EXPONENT_CLIP).exp()
}

/// KL(N(μ, σ_q²) ‖ N(0, σ_p²)) summed over independent weights.
pub fn kl_gaussian(mu: &[f64], var_q: &[f64], var_p: f64) -> f64 {
    assert_eq!(mu.len(), var_q.len());
    mu.iter()
        .zip(var_q)
        .map(|(m, vq)| 0.5 * (var_p / vq).ln() + (vq + m * m) / (2.0 * var_p) - 0.5)
        .sum()
}

/// McAllester bound on the expected error of the posterior.
pub fn pac_bound(train_error: f64, kl: f64, m: usize, delta_conf: f64) -> f64 {
    assert!(m >= 2, "need at least two samples");
    let m = m as f64;
    train_error + ((kl + (2.0 * m.sqrt() / delta_conf).ln()) / (2.0 * (m - 1.0))).sqrt()
}

/// Mean and σ/(μ + 1e-8) of a norm series.
pub fn norm_stats(norms: &[f64]) -> (f64, f64) {
    if norms.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mu = stats::mean(norms);
    (mu, stats::std_pop(norms) / (mu + CV_EPS))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacConfig {
    pub data: DataSource,
    pub hidden: usize,
    pub beta: f64,
    pub n_steps: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Initial log σ_q² of every weight.
    pub logvar_init: f64,
    pub delta_conf: f64,
}

impl Default for PacConfig {
    fn default() -> Self {
        PacConfig {
            data: DataSource::default(),
            hidden: 128,
            beta: 0.95,
            n_steps: 5,
            epochs: 100,
            batch: 32,
            lr: 1e-3,
            logvar_init: -6.0,
            delta_conf: DELTA_CONF,
        }
    }
}

impl PacConfig {
    pub fn encoding(&self) -> Result<EncodingConfig> {
        EncodingConfig::with_default_substeps(T_ENC, self.n_steps)
    }
}

/// Two-layer spiking classifier whose weights carry a mean and a log-variance.
#[derive(Clone, Debug)]
pub struct BayesSnn {
    pub model: SpikingModel,
    /// Log σ_q² per layer, shaped like the weight it belongs to.
    pub logvar: Vec<ParamId>,
}

impl BayesSnn {
    pub fn new(store: &mut ParamStore, rng: &mut Rng, width: usize, cfg: &PacConfig) -> Self {
        let dims = [width, cfg.hidden, N_CLASSES];
        let model = SpikingModel::new(store, rng, "bsnn", &dims, cfg.beta, false, Readout::IntegratedMembrane);
        let logvar = model
            .layers
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                store.add(format!("bsnn.l{l}.logvar"), Tensor::full(&[layer.in_dim, layer.out_dim], cfg.logvar_init))
            })
            .collect();
        BayesSnn { model, logvar }
    }

    /// Binds layers with weights `w = μ + exp(½ log σ_q²)·ε`.
    pub fn bind_sampled(&self, g: &mut Graph, store: &ParamStore, eps: &[Tensor]) -> DResult<Vec<BoundLayer>> {
        let mut bound = self.model.bind(g, store);
        for (l, b) in bound.iter_mut().enumerate() {
            let lv = g.param(store, self.logvar[l]);
            let half = g.scale(lv, 0.5)?;
            let sd = g.exp(half)?;
            let e = g.input(eps[l].clone())?;
            let noise = g.mul(sd, e)?;
            b.w = g.add(b.w, noise)?;
        }
        Ok(bound)
    }

    pub fn draw_eps(&self, rng: &mut Rng) -> Vec<Tensor> {
        self.model
            .layers
            .iter()
            .map(|l| {
                let n = l.in_dim * l.out_dim;
                let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
                Tensor { shape: vec![l.in_dim, l.out_dim], data }
            })
            .collect()
    }

    /// KL of the weight posterior against a zero-mean prior of variance `var_p`.
    pub fn kl(&self, store: &ParamStore, var_p: f64) -> f64 {
        self.model
            .layers
            .iter()
            .zip(&self.logvar)
            .map(|(l, &lv)| {
                let var_q: Vec<f64> = store.get(lv).data.iter().map(|v| v.exp()).collect();
                kl_gaussian(&store.get(l.w).data, &var_q, var_p)
            })
            .sum()
    }
}

fn frames_batch(g: &mut Graph, set: &EncodedSet, idx: &[usize]) -> DResult<Vec<Var>> {
    (0..set.n_steps)
        .map(|t| {
            let mut data = Vec::with_capacity(idx.len() * set.width);
            for &i in idx {
                data.extend_from_slice(set.frame(i, t));
            }
            g.input(Tensor::new(&[idx.len(), set.width], data)?)
        })
        .collect()
}

/// Gibbs error: one posterior sample per minibatch of 256.
pub fn gibbs_error(net: &BayesSnn, store: &ParamStore, set: &EncodedSet, rng: &mut Rng) -> Result<f64> {
    if set.is_empty() {
        return Ok(f64::NAN);
    }
    let all: Vec<usize> = (0..set.len()).collect();
    let mut wrong = 0usize;
    for chunk in all.chunks(256) {
        let mut g = Graph::new();
        let eps = net.draw_eps(rng);
        let bound = net.bind_sampled(&mut g, store, &eps)?;
        let inputs = frames_batch(&mut g, set, chunk)?;
        let out = net.model.run_sequence(&mut g, &bound, &inputs)?;
        let lv = g.value(out.readout);
        wrong += chunk.iter().enumerate().filter(|&(r, &i)| argmax(lv.row(r)) != set.labels[i]).count();
    }
    Ok(wrong as f64 / set.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacRow {
    pub delta: f64,
    pub seed: u64,
    pub kl: f64,
    pub train_err: f64,
    pub test_err: f64,
    pub gap: f64,
    pub bound: f64,
    pub bound_valid: bool,
}

#[derive(Clone, Debug)]
pub struct PacReport {
    pub row: PacRow,
    pub prior_variance: f64,
    pub m: usize,
    pub epoch_loss: Vec<f64>,
}

/// Cross-entropy on sampled weights with Adam; the KL is measured after
/// training, not penalized.
pub fn train_bayesian_snn(train: &EncodedSet, test: &EncodedSet, delta: f64, cfg: &PacConfig, seed: u64) -> Result<PacReport> {
    if train.len() < 2 {
        return invalid("PAC-Bayes bound needs at least two training samples");
    }
    let key = fkey(delta);
    let mut store = ParamStore::new();
    let net = BayesSnn::new(&mut store, &mut rng::named(seed, "pac-init", &[key]), train.width, cfg);
    let mut adam = Adam::new(&store, cfg.lr);
    let mut noise = rng::named(seed, "pac-eps", &[key]);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::named(seed, "pac-shuffle", &[key, epoch as u64]));
        let mut sum = 0.0;
        let mut n = 0;
        for chunk in order.chunks(cfg.batch.max(1)) {
            let mut g = Graph::new();
            let eps = net.draw_eps(&mut noise);
            let bound = net.bind_sampled(&mut g, &store, &eps)?;
            let inputs = frames_batch(&mut g, train, chunk)?;
            let out = net.model.run_sequence(&mut g, &bound, &inputs)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let loss = g.softmax_cross_entropy(out.readout, &labels)?;
            sum += g.scalar(loss);
            n += 1;
            let grads = g.backward(loss, &store)?;
            adam.step(&mut store, &grads)?;
        }
        epoch_loss.push(sum / n as f64);
    }
    let var_p = prior_variance(delta);
    let kl = net.kl(&store, var_p);
    let mut eval = rng::named(seed, "pac-eval", &[key]);
    let train_err = gibbs_error(&net, &store, train, &mut eval)?;
    let test_err = gibbs_error(&net, &store, test, &mut eval)?;
    let bound = pac_bound(train_err, kl, train.len(), cfg.delta_conf);
    let row = PacRow { delta, seed, kl, train_err, test_err, gap: test_err - train_err, bound, bound_valid: bound >= test_err };
    Ok(PacReport { row, prior_variance: var_p, m: train.len(), epoch_loss })
}

fn encode_splits(data: &TabularDataset, delta: f64, enc: &EncodingConfig) -> Result<(EncodedSet, EncodedSet)> {
    Ok((prepare_encoded(data, &data.train, delta, enc)?, prepare_encoded(data, &data.test, delta, enc)?))
}

/// Every (δ, seed) Bayesian run, in parallel.
pub fn pacbayes_grid(cfg: &PacConfig, deltas: &[f64], seeds: &[u64]) -> Result<Vec<PacReport>> {
    let data = cfg.data.load()?;
    let enc = cfg.encoding()?;
    let sets: Vec<(EncodedSet, EncodedSet)> = deltas.par_iter().map(|&d| encode_splits(&data, d, &enc)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, u64)> = (0..deltas.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    jobs.par_iter().map(|&(i, s)| train_bayesian_snn(&sets[i].0, &sets[i].1, deltas[i], cfg, s)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradStatsConfig {
    pub data: DataSource,
    pub hidden: usize,
    pub beta: f64,
    pub n_steps: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for GradStatsConfig {
    fn default() -> Self {
        GradStatsConfig { data: DataSource::default(), hidden: 128, beta: 0.95, n_steps: 5, epochs: 200, batch: 32, lr: 1e-2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradRow {
    pub delta: f64,
    pub seed: u64,
    pub mu_grad: f64,
    pub cv_grad: f64,
}

/// Plain SGD on the deterministic two-layer SNN, recording the global
/// gradient norm of every minibatch.
pub fn gradient_norms(train: &EncodedSet, delta: f64, cfg: &GradStatsConfig, seed: u64) -> Result<Vec<f64>> {
    if train.is_empty() {
        return invalid("empty training set");
    }
    let key = fkey(delta);
    let mut store = ParamStore::new();
    let dims = [train.width, cfg.hidden, N_CLASSES];
    let model =
        SpikingModel::new(&mut store, &mut rng::named(seed, "grad-init", &[key]), "snn", &dims, cfg.beta, false, Readout::IntegratedMembrane);
    let sgd = Sgd { lr: cfg.lr };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut norms = Vec::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::named(seed, "grad-shuffle", &[key, epoch as u64]));
        for chunk in order.chunks(cfg.batch.max(1)) {
            let mut g = Graph::new();
            let bound = model.bind(&mut g, &store);
            let inputs = frames_batch(&mut g, train, chunk)?;
            let out = model.run_sequence(&mut g, &bound, &inputs)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let loss = g.softmax_cross_entropy(out.readout, &labels)?;
            let grads = g.backward(loss, &store)?;
            norms.push(global_norm(&grads));
            sgd.step(&mut store, &grads)?;
        }
    }
    Ok(norms)
}

pub fn gradient_stats(train: &EncodedSet, delta: f64, cfg: &GradStatsConfig, seed: u64) -> Result<GradRow> {
    let (mu_grad, cv_grad) = norm_stats(&gradient_norms(train, delta, cfg, seed)?);
    Ok(GradRow { delta, seed, mu_grad, cv_grad })
}

pub fn gradstats_grid(cfg: &GradStatsConfig, deltas: &[f64], seeds: &[u64]) -> Result<Vec<GradRow>> {
    let data = cfg.data.load()?;
    let enc = EncodingConfig::with_default_substeps(T_ENC, cfg.n_steps)?;
    let sets: Vec<EncodedSet> = deltas.par_iter().map(|&d| prepare_encoded(&data, &data.train, d, &enc)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, u64)> = (0..deltas.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    jobs.par_iter().map(|&(i, s)| gradient_stats(&sets[i], deltas[i], cfg, s)).collect()
}

/// Mean of a column over seeds at one δ.
pub fn mean_at<T>(rows: &[T], delta: f64, key: impl Fn(&T) -> (f64, f64)) -> f64 {
    let v: Vec<f64> = rows.iter().map(&key).filter(|(d, x)| *d == delta && x.is_finite()).map(|(_, x)| x).collect();
    stats::mean(&v)
}

//! Cross-encoding classification: train at one damping δ, test at every δ,
//! and relate firing-rate variability to out-of-distribution accuracy.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_tabular, synth_blobs, TabularDataset, N_CLASSES};
use crate::diffcore::{Adam, DResult, Graph, ParamStore, Tensor, Var};
use crate::dynsys::{encode_features, EncodingConfig, SystemSpec};
use crate::error::{invalid, Error, Result};
use crate::mlp::Mlp;
use crate::rng::{self, fkey};
use crate::snn::{Readout, SpikingModel};
use crate::stats;

pub const DELTA_GRID: [f64; 12] = [-1.5, -1.0, -0.3, 0.0, 0.3, 1.0, 1.5, 2.0, 2.5, 5.0, 7.0, 10.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arch {
    #[serde(rename = "SNN")]
    Snn,
    #[serde(rename = "MLP_LastT")]
    MlpLastT,
    #[serde(rename = "MLP_AvgPool")]
    MlpAvgPool,
}

impl Arch {
    pub fn name(&self) -> &'static str {
        match self {
            Arch::Snn => "SNN",
            Arch::MlpLastT => "MLP_LastT",
            Arch::MlpAvgPool => "MLP_AvgPool",
        }
    }

    fn index(&self) -> u64 {
        *self as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Blobs { seed: u64, n: usize, d: usize, sigma: f64 },
    Csv { path: PathBuf, split_seed: u64 },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Blobs { seed: 0, n: 1500, d: 64, sigma: 0.35 }
    }
}

impl DataSource {
    pub fn load(&self) -> Result<TabularDataset> {
        match self {
            DataSource::Blobs { seed, n, d, sigma } => synth_blobs(*seed, *n, *d, *sigma),
            DataSource::Csv { path, split_seed } => load_tabular(path, *split_seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch: usize,
    pub hidden: usize,
    pub beta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 1e-4, max_epochs: 200, patience: 10, batch: 32, hidden: 128, beta: 0.95 }
    }
}

/// One split encoded at one δ. Frames are stored frame-major per sample:
/// `n_steps × width` with width = 3·features.
#[derive(Clone, Debug)]
pub struct EncodedSet {
    pub frames: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_steps: usize,
    pub width: usize,
    /// Samples dropped because their trajectory diverged.
    pub n_diverged: usize,
}

impl EncodedSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Input of a frame-consuming model at step `t`.
    pub fn frame(&self, i: usize, t: usize) -> &[f64] {
        &self.frames[i][t * self.width..(t + 1) * self.width]
    }

    pub fn last_frame(&self, i: usize) -> Vec<f64> {
        self.frame(i, self.n_steps - 1).to_vec()
    }

    pub fn mean_frame(&self, i: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.width];
        for t in 0..self.n_steps {
            m.iter_mut().zip(self.frame(i, t)).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|a| *a /= self.n_steps as f64);
        m
    }
}

/// Encodes the given rows at damping `delta`. Divergent samples are dropped
/// and counted.
pub fn prepare_encoded(data: &TabularDataset, rows: &[usize], delta: f64, cfg: &EncodingConfig) -> Result<EncodedSet> {
    let spec = SystemSpec::duffing(delta);
    let width = 3 * data.n_features();
    let mut frames = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    let mut n_diverged = 0;
    for &i in rows {
        match encode_features(&data.features[i], &spec, cfg) {
            Ok(tr) => {
                let mut f = Vec::with_capacity(cfg.n_steps * width);
                for k in 0..cfg.n_steps {
                    f.extend(tr.frame(k));
                }
                frames.push(f);
                labels.push(data.labels[i]);
            }
            Err(Error::Diverged { .. }) => n_diverged += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(EncodedSet { frames, labels, n_steps: cfg.n_steps, width, n_diverged })
}

#[derive(Clone, Debug)]
pub enum Classifier {
    Snn(SpikingModel),
    Mlp(Mlp, Arch),
}

impl Classifier {
    pub fn new(arch: Arch, store: &mut ParamStore, rng: &mut rng::Rng, width: usize, cfg: &TrainConfig) -> Self {
        let dims = [width, cfg.hidden, cfg.hidden, N_CLASSES];
        match arch {
            Arch::Snn => Classifier::Snn(SpikingModel::new(store, rng, "snn", &dims, cfg.beta, false, Readout::IntegratedMembrane)),
            a => Classifier::Mlp(Mlp::new(store, rng, "mlp", &dims, false), a),
        }
    }

    /// Logits for the samples `idx` of `set`, plus per-layer spike tensors
    /// (one entry per step per spiking layer) for spiking models.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, set: &EncodedSet, idx: &[usize]) -> DResult<(Var, Vec<Vec<Var>>)> {
        let b = idx.len();
        match self {
            Classifier::Snn(m) => {
                let bound = m.bind(g, store);
                let mut inputs = Vec::with_capacity(set.n_steps);
                for t in 0..set.n_steps {
                    let mut data = Vec::with_capacity(b * set.width);
                    for &i in idx {
                        data.extend_from_slice(set.frame(i, t));
                    }
                    inputs.push(g.input(Tensor::new(&[b, set.width], data)?)?);
                }
                let out = m.run_sequence(g, &bound, &inputs)?;
                Ok((out.readout, out.spikes))
            }
            Classifier::Mlp(m, arch) => {
                let mut data = Vec::with_capacity(b * set.width);
                for &i in idx {
                    match arch {
                        Arch::MlpLastT => data.extend(set.last_frame(i)),
                        _ => data.extend(set.mean_frame(i)),
                    }
                }
                let x = g.input(Tensor::new(&[b, set.width], data)?)?;
                Ok((m.forward(g, store, x)?, vec![]))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

pub struct TrainedModel {
    pub arch: Arch,
    pub classifier: Classifier,
    pub store: ParamStore,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

/// Evaluation of one model on one encoded set.
#[derive(Clone, Debug)]
pub struct EvalResult {
    /// Percent correct.
    pub accuracy: f64,
    /// Mean firing rate per spiking layer (spikes per neuron per step).
    pub rates: Vec<f64>,
}

pub fn evaluate(model: &TrainedModel, set: &EncodedSet, batch: usize) -> Result<EvalResult> {
    if set.is_empty() {
        return Ok(EvalResult { accuracy: f64::NAN, rates: vec![] });
    }
    let mut correct = 0usize;
    let mut rate_sum: Vec<f64> = Vec::new();
    let mut rate_count: Vec<f64> = Vec::new();
    let all: Vec<usize> = (0..set.len()).collect();
    for chunk in all.chunks(batch.max(1)) {
        let mut g = Graph::new();
        let (logits, spikes) = model.classifier.forward(&mut g, &model.store, set, chunk)?;
        let lv = g.value(logits);
        for (r, &i) in chunk.iter().enumerate() {
            let row = lv.row(r);
            let pred = argmax(row);
            if pred == set.labels[i] {
                correct += 1;
            }
        }
        for step in &spikes {
            if rate_sum.len() < step.len() {
                rate_sum.resize(step.len(), 0.0);
                rate_count.resize(step.len(), 0.0);
            }
            for (l, &s) in step.iter().enumerate() {
                let t = g.value(s);
                rate_sum[l] += t.data.iter().sum::<f64>();
                rate_count[l] += t.len() as f64;
            }
        }
    }
    let rates = rate_sum.iter().zip(&rate_count).map(|(s, c)| s / c).collect();
    Ok(EvalResult { accuracy: 100.0 * correct as f64 / set.len() as f64, rates })
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Adam on cross-entropy with early stopping on validation accuracy.
/// Returns the parameters of the best validation epoch.
pub fn train_model(arch: Arch, train: &EncodedSet, val: &EncodedSet, cfg: &TrainConfig, seed: u64) -> Result<TrainedModel> {
    if cfg.patience >= cfg.max_epochs && cfg.max_epochs > 0 {
        return invalid("patience must be smaller than max_epochs");
    }
    if train.is_empty() {
        return invalid("empty training set");
    }
    let mut store = ParamStore::new();
    let mut init = rng::named(seed, "classify-init", &[arch.index()]);
    let classifier = Classifier::new(arch, &mut store, &mut init, train.width, cfg);
    let mut adam = Adam::new(&store, cfg.lr);
    let mut best = TrainedModel { arch, classifier: classifier.clone(), store: store.clone(), history: vec![], best_epoch: 0 };
    let mut best_acc = f64::NEG_INFINITY;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng::named(seed, "classify-shuffle", &[arch.index(), epoch as u64]));
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch) {
            let mut g = Graph::new();
            let (logits, _) = classifier.forward(&mut g, &store, train, chunk)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let loss = g.softmax_cross_entropy(logits, &labels)?;
            loss_sum += g.scalar(loss);
            batches += 1;
            let grads = g.backward(loss, &store)?;
            adam.step(&mut store, &grads)?;
        }
        let current = TrainedModel { arch, classifier: classifier.clone(), store: store.clone(), history: vec![], best_epoch: epoch };
        let val_acc = evaluate(&current, val, 256)?.accuracy;
        history.push(EpochStats { epoch, train_loss: loss_sum / batches as f64, val_accuracy: val_acc });
        if val_acc > best_acc {
            best_acc = val_acc;
            best = current;
        } else if epoch - best.best_epoch >= cfg.patience {
            break;
        }
    }
    best.history = history;
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub data: DataSource,
    pub archs: Vec<Arch>,
    pub deltas_train: Vec<f64>,
    pub deltas_test: Vec<f64>,
    pub seeds: Vec<u64>,
    pub t_total: f64,
    pub n_steps: usize,
    pub train: TrainConfig,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            data: DataSource::default(),
            archs: vec![Arch::Snn, Arch::MlpLastT, Arch::MlpAvgPool],
            deltas_train: vec![-1.5, 0.0, 2.0, 10.0],
            deltas_test: DELTA_GRID.to_vec(),
            seeds: vec![0, 1, 2],
            t_total: 4.0,
            n_steps: 30,
            train: TrainConfig { max_epochs: 50, ..TrainConfig::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub arch: Arch,
    pub delta_train: f64,
    pub delta_test: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub n_diverged: usize,
}

/// Per-model firing-rate variability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub arch: Arch,
    pub delta_train: f64,
    pub seed: u64,
    /// 1-based spiking layer index.
    pub layer: usize,
    /// NaN when the layer never fired on some encoding mix (mean rate 0).
    pub cv: f64,
    pub ood_accuracy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassifyOutput {
    pub matrix: Vec<MatrixRow>,
    pub cv: Vec<CvRow>,
    pub histories: Vec<(Arch, f64, u64, Vec<EpochStats>)>,
}

/// Trains every (arch, δ_train, seed) model and evaluates it at every δ_test.
pub fn cross_matrix(cfg: &ClassifyConfig) -> Result<ClassifyOutput> {
    let data = cfg.data.load()?;
    let enc = EncodingConfig::with_default_substeps(cfg.t_total, cfg.n_steps)?;
    let mut needed: Vec<f64> = cfg.deltas_test.clone();
    for d in &cfg.deltas_train {
        if !needed.iter().any(|x| x.to_bits() == d.to_bits()) {
            needed.push(*d);
        }
    }
    let test_sets: BTreeMap<u64, EncodedSet> = needed
        .par_iter()
        .map(|&d| Ok((fkey(d), prepare_encoded(&data, &data.test, d, &enc)?)))
        .collect::<Result<_>>()?;
    let train_sets: BTreeMap<u64, (EncodedSet, EncodedSet)> = cfg
        .deltas_train
        .par_iter()
        .map(|&d| Ok((fkey(d), (prepare_encoded(&data, &data.train, d, &enc)?, prepare_encoded(&data, &data.val, d, &enc)?))))
        .collect::<Result<_>>()?;

    let mut jobs = Vec::new();
    for &arch in &cfg.archs {
        for &dt in &cfg.deltas_train {
            for &seed in &cfg.seeds {
                jobs.push((arch, dt, seed));
            }
        }
    }
    let results: Vec<(Vec<MatrixRow>, Vec<CvRow>, (Arch, f64, u64, Vec<EpochStats>))> = jobs
        .par_iter()
        .map(|&(arch, dt, seed)| {
            let (tr, va) = &train_sets[&fkey(dt)];
            let model = train_model(arch, tr, va, &cfg.train, seed)?;
            let mut rows = Vec::new();
            let mut rates: Vec<Vec<f64>> = Vec::new();
            for &dtest in &cfg.deltas_test {
                let set = &test_sets[&fkey(dtest)];
                let ev = evaluate(&model, set, 256)?;
                rows.push(MatrixRow { arch, delta_train: dt, delta_test: dtest, seed, accuracy: ev.accuracy, n_diverged: set.n_diverged });
                rates.push(ev.rates);
            }
            let ood: Vec<f64> = rows.iter().filter(|r| r.delta_test != dt && r.accuracy.is_finite()).map(|r| r.accuracy).collect();
            let ood_accuracy = stats::mean(&ood);
            let n_layers = rates.first().map_or(0, |r| r.len());
            let cv = (0..n_layers)
                .map(|l| {
                    let per_enc: Vec<f64> = rates.iter().map(|r| r[l]).collect();
                    let m = stats::mean(&per_enc);
                    let cv = if m > 0.0 { stats::std_pop(&per_enc) / m } else { f64::NAN };
                    CvRow { arch, delta_train: dt, seed, layer: l + 1, cv, ood_accuracy }
                })
                .collect();
            Ok((rows, cv, (arch, dt, seed, model.history)))
        })
        .collect::<Result<_>>()?;
    let mut out = ClassifyOutput { matrix: vec![], cv: vec![], histories: vec![] };
    for (m, c, h) in results {
        out.matrix.extend(m);
        out.cv.extend(c);
        out.histories.push(h);
    }
    Ok(out)
}

/// Mean OOD accuracy over seeds for one (arch, δ_train).
pub fn mean_ood(matrix: &[MatrixRow], arch: Arch, delta_train: f64) -> f64 {
    let v: Vec<f64> = matrix
        .iter()
        .filter(|r| r.arch == arch && r.delta_train == delta_train && r.delta_test != delta_train && r.accuracy.is_finite())
        .map(|r| r.accuracy)
        .collect();
    stats::mean(&v)
}

/// Mean accuracy over seeds of a single cell.
pub fn cell_mean(matrix: &[MatrixRow], arch: Arch, delta_train: f64, delta_test: f64) -> f64 {
    let v: Vec<f64> = matrix
        .iter()
        .filter(|r| r.arch == arch && r.delta_train == delta_train && r.delta_test == delta_test && r.accuracy.is_finite())
        .map(|r| r.accuracy)
        .collect();
    stats::mean(&v)
}

/// Pearson r between a layer's CV (per model) and the accuracy of every
/// off-diagonal (δ_train, δ_test, seed) cell of that model. Models with
/// undefined CV are excluded. Returns (r, n).
pub fn cv_cell_correlation(out: &ClassifyOutput, arch: Arch, layer: usize) -> (f64, usize) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for c in out.cv.iter().filter(|c| c.arch == arch && c.layer == layer && c.cv.is_finite()) {
        for r in out.matrix.iter().filter(|r| r.arch == arch && r.delta_train == c.delta_train && r.delta_test != r.delta_train && r.seed == c.seed) {
            if r.accuracy.is_finite() {
                xs.push(c.cv);
                ys.push(r.accuracy);
            }
        }
    }
    if xs.len() < 3 {
        return (f64::NAN, xs.len());
    }
    (stats::pearson(&xs, &ys), xs.len())
}

/// Pearson r between a layer's CV and each model's mean OOD accuracy.
pub fn cv_model_correlation(out: &ClassifyOutput, arch: Arch, layer: usize) -> (f64, usize) {
    let rows: Vec<&CvRow> = out.cv.iter().filter(|c| c.arch == arch && c.layer == layer && c.cv.is_finite()).collect();
    let xs: Vec<f64> = rows.iter().map(|c| c.cv).collect();
    let ys: Vec<f64> = rows.iter().map(|c| c.ood_accuracy).collect();
    if xs.len() < 3 {
        return (f64::NAN, xs.len());
    }
    (stats::pearson(&xs, &ys), xs.len())
}

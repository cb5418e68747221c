//! Sparse spiking autoencoder on 16×16 grayscale patches. A LIF bottleneck
//! of 128 units sits between a linear encoder and a linear decoder that
//! reads the spike-count vector `z = Σ_t S(t)`.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Normal, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Adam, DResult, Graph, ParamId, ParamStore, SpikeMode, Tensor, Var};
use crate::dynsys::{init_state, rk4_step, is_divergent, EncodingConfig, SystemSpec};
use crate::error::{invalid, Error, Result};
use crate::linalg::orthogonal;
use crate::rng::{self, fkey, Rng};
use crate::snn::{Readout, SpikingModel};

pub const PATCH_SIDE: usize = 16;
pub const PIXELS: usize = PATCH_SIDE * PATCH_SIDE;
pub const CIFAR_SIDE: usize = 32;
/// One label byte followed by 3 × 1024 channel bytes.
pub const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;
pub const RANDOM_JITTER: f64 = 0.1;
/// Spike probability per step for a pixel of value 1.
pub const POISSON_RATE_DT: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum PatchSource {
    #[default]
    Synthetic,
    CifarBinary { paths: Vec<PathBuf> },
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchDataset {
    /// `n × 256`, values in [0, 1].
    pub patches: Vec<Vec<f64>>,
    pub source: String,
}

impl PatchDataset {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Grayscale images (`32 × 32`, row-major, [0, 1]) from CIFAR-10 binary data.
pub fn parse_cifar_binary(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return invalid(format!(
            "truncated CIFAR binary: {} bytes is not a multiple of the {CIFAR_RECORD}-byte record",
            bytes.len()
        ));
    }
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    Ok(bytes
        .chunks_exact(CIFAR_RECORD)
        .map(|rec| {
            let px = &rec[1..];
            (0..plane)
                .map(|i| (0.299 * px[i] as f64 + 0.587 * px[plane + i] as f64 + 0.114 * px[2 * plane + i] as f64) / 255.0)
                .collect()
        })
        .collect())
}

/// Random `16 × 16` crop of a square image of side `side`.
pub fn random_crop(image: &[f64], side: usize, rng: &mut Rng) -> Vec<f64> {
    let r0 = rng.gen_range(0..=side - PATCH_SIDE);
    let c0 = rng.gen_range(0..=side - PATCH_SIDE);
    let mut out = Vec::with_capacity(PIXELS);
    for r in 0..PATCH_SIDE {
        out.extend_from_slice(&image[(r0 + r) * side + c0..(r0 + r) * side + c0 + PATCH_SIDE]);
    }
    out
}

/// Gaussian noise shaped to a 1/f amplitude spectrum, min-max scaled to [0, 1].
pub fn synthetic_patch(rng: &mut Rng) -> Vec<f64> {
    let n = PATCH_SIDE;
    let mut buf: Vec<Complex<f64>> = (0..PIXELS).map(|_| Complex::new(rng.sample(StandardNormal), 0.0)).collect();
    fft2(&mut buf, n, false);
    for ky in 0..n {
        for kx in 0..n {
            let fy = ky.min(n - ky) as f64;
            let fx = kx.min(n - kx) as f64;
            let f = (fx * fx + fy * fy).sqrt();
            buf[ky * n + kx] *= if f == 0.0 { 0.0 } else { 1.0 / f };
        }
    }
    fft2(&mut buf, n, true);
    let re: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let lo = re.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = re.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return vec![0.0; PIXELS];
    }
    re.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// In-place 2-D FFT of a square row-major grid (unnormalized both ways).
pub fn fft2(buf: &mut [Complex<f64>], n: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    for row in buf.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for c in 0..n {
        for r in 0..n {
            col[r] = buf[r * n + c];
        }
        fft.process(&mut col);
        for r in 0..n {
            buf[r * n + c] = col[r];
        }
    }
}

/// Mean power per integer radial frequency over a set of patches.
pub fn radial_power(patches: &[Vec<f64>]) -> Vec<f64> {
    let n = PATCH_SIDE;
    let n_bins = n / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut cnt = vec![0usize; n_bins];
    for p in patches {
        let m = p.iter().sum::<f64>() / p.len() as f64;
        let mut buf: Vec<Complex<f64>> = p.iter().map(|v| Complex::new(v - m, 0.0)).collect();
        fft2(&mut buf, n, false);
        for ky in 0..n {
            for kx in 0..n {
                let f = ((kx.min(n - kx).pow(2) + ky.min(n - ky).pow(2)) as f64).sqrt().round() as usize;
                if f < n_bins {
                    acc[f] += buf[ky * n + kx].norm_sqr();
                    cnt[f] += 1;
                }
            }
        }
    }
    acc.iter().zip(&cnt).map(|(a, &c)| if c == 0 { 0.0 } else { a / c as f64 }).collect()
}

/// Draws `n` patches. CIFAR crops are sampled with replacement.
pub fn extract_patches(source: &PatchSource, n: usize, seed: u64) -> Result<PatchDataset> {
    let mut r = rng::named(seed, "patches", &[]);
    match source {
        PatchSource::Synthetic => Ok(PatchDataset {
            patches: (0..n).map(|_| synthetic_patch(&mut r)).collect(),
            source: "synthetic-1/f".into(),
        }),
        PatchSource::CifarBinary { paths } => {
            let mut images = Vec::new();
            for p in paths {
                let bytes = std::fs::read(p).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", p.display())))?;
                images.extend(parse_cifar_binary(&bytes)?);
            }
            if images.is_empty() {
                return invalid("no CIFAR images given");
            }
            let patches = (0..n)
                .map(|_| {
                    let img = images.choose(&mut r).unwrap();
                    random_crop(img, CIFAR_SIDE, &mut r)
                })
                .collect();
            Ok(PatchDataset { patches, source: "cifar-binary".into() })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderKind {
    Baseline,
    Random,
    Linear,
    Poisson,
    Dynamic { system: SystemSpec },
}

impl EncoderKind {
    pub fn duffing(delta: f64) -> Self {
        EncoderKind::Dynamic { system: SystemSpec::duffing(delta) }
    }

    /// The eight encoders of the emergence comparison.
    pub fn standard_set() -> Vec<EncoderKind> {
        let mut v = vec![EncoderKind::Baseline, EncoderKind::Random, EncoderKind::Linear, EncoderKind::Poisson];
        v.extend([-1.5, 0.0, 2.0, 10.0].map(EncoderKind::duffing));
        v
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, EncoderKind::Random | EncoderKind::Poisson)
    }

    pub fn label(&self) -> String {
        match self {
            EncoderKind::Baseline => "Baseline".into(),
            EncoderKind::Random => "Random".into(),
            EncoderKind::Linear => "Linear".into(),
            EncoderKind::Poisson => "Poisson".into(),
            EncoderKind::Dynamic { system: SystemSpec::Duffing { delta, .. } } => {
                let regime = match *delta {
                    d if d == -1.5 => "Expansive",
                    d if d == 0.0 => "Critical",
                    d if d == 2.0 => "Transition",
                    d if d == 10.0 => "Dissipative",
                    _ => "Duffing",
                };
                format!("{regime}(delta={delta})")
            }
            EncoderKind::Dynamic { system } => format!("{}({})", system.kind_name(), system.control()),
        }
    }

    /// Control parameter of a dynamic encoder (δ, ρ or b), NaN otherwise.
    pub fn control(&self) -> f64 {
        match self {
            EncoderKind::Dynamic { system } => system.control(),
            _ => f64::NAN,
        }
    }

    /// File-system friendly name.
    pub fn slug(&self) -> String {
        self.label().chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
    }
}

/// Per-pixel drive of a dynamic encoder: `x + y + z` of each frame.
/// Returns `T × 256`.
pub fn dynamic_drive(patch: &[f64], system: &SystemSpec, enc: &EncodingConfig) -> Result<Vec<f64>> {
    let t = enc.n_steps;
    let h = enc.dt_internal();
    let mut out = vec![0.0; t * patch.len()];
    for (i, &x) in patch.iter().enumerate() {
        let mut s = init_state(x)?;
        out[i] = s.iter().sum();
        for k in 1..t {
            for j in 0..enc.substeps_per_frame {
                s = rk4_step(&s, system, h);
                if is_divergent(&s) {
                    let time = ((k - 1) * enc.substeps_per_frame + j + 1) as f64 * h;
                    return Err(Error::Diverged { feature: i, time });
                }
            }
            out[k * patch.len() + i] = s.iter().sum();
        }
    }
    Ok(out)
}

/// `T × 256` input sequence for one patch. `rng` is only drawn from by the
/// stochastic encoders.
pub fn encode_input(patch: &[f64], kind: &EncoderKind, enc: &EncodingConfig, rng: &mut Rng) -> Result<Vec<f64>> {
    let t_steps = enc.n_steps;
    let p = patch.len();
    let clamped: Vec<f64> = patch.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut out = vec![0.0; t_steps * p];
    match kind {
        EncoderKind::Baseline => out[..p].copy_from_slice(&clamped),
        EncoderKind::Random => {
            let noise = Normal::new(0.0, RANDOM_JITTER).unwrap();
            for t in 0..t_steps {
                for i in 0..p {
                    out[t * p + i] = (clamped[i] + rng.sample(noise)).clamp(0.0, 1.0);
                }
            }
        }
        EncoderKind::Linear => {
            for t in 0..t_steps {
                let f = (t + 1) as f64 / t_steps as f64;
                for i in 0..p {
                    out[t * p + i] = clamped[i] * f;
                }
            }
        }
        EncoderKind::Poisson => {
            for t in 0..t_steps {
                for i in 0..p {
                    let prob = (clamped[i] * POISSON_RATE_DT).clamp(0.0, 1.0);
                    out[t * p + i] = if prob > 0.0 && rng.gen::<f64>() < prob { 1.0 } else { 0.0 };
                }
            }
        }
        EncoderKind::Dynamic { system } => return dynamic_drive(&clamped, system, enc),
    }
    Ok(out)
}

/// Population standard deviation over every entry of a weight matrix.
pub fn rf_std(w: &[f64]) -> f64 {
    if w.is_empty() {
        return 0.0;
    }
    let n = w.len() as f64;
    let m = w.iter().sum::<f64>() / n;
    (w.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaeConfig {
    pub hidden: usize,
    pub beta: f64,
    pub t_steps: usize,
    /// Physical evolution time of dynamic encoders.
    pub t_phys: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Orthogonal-init gains of the encoder and decoder weights.
    pub enc_gain: f64,
    pub dec_gain: f64,
}

/// Gains giving the entry scale of a uniform ±1/√fan_in initializer
/// (std 1/√(3·fan_in)) for the 256 → 128 → 256 shapes.
pub const SAE_ENC_GAIN: f64 = 0.577_350_269_189_625_8;
pub const SAE_DEC_GAIN: f64 = 0.816_496_580_927_726;

impl Default for SaeConfig {
    fn default() -> Self {
        SaeConfig {
            hidden: 128,
            beta: 0.95,
            t_steps: 5,
            t_phys: 8.0,
            epochs: 30,
            batch: 64,
            lr: 1e-3,
            enc_gain: SAE_ENC_GAIN,
            dec_gain: SAE_DEC_GAIN,
        }
    }
}

impl SaeConfig {
    pub fn encoding(&self) -> Result<EncodingConfig> {
        EncodingConfig::with_default_substeps(self.t_phys, self.t_steps)
    }
}

/// Encoder LIF layer (weights stored `256 × hidden`) and decoder weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaeModel {
    pub encoder: SpikingModel,
    pub w_dec: ParamId,
}

impl SaeModel {
    pub fn new(store: &mut ParamStore, rng: &mut Rng, cfg: &SaeConfig) -> Self {
        let encoder = SpikingModel::new(store, rng, "sae.enc", &[PIXELS, cfg.hidden], cfg.beta, false, Readout::SpikeCount);
        let w = encoder.layers[0].w;
        store.get_mut(w).data = orthogonal(PIXELS, cfg.hidden, cfg.enc_gain, rng);
        let w_dec = store.add(
            "sae.dec.w",
            Tensor { shape: vec![cfg.hidden, PIXELS], data: orthogonal(cfg.hidden, PIXELS, cfg.dec_gain, rng) },
        );
        SaeModel { encoder, w_dec }
    }

    pub fn w_enc<'a>(&self, store: &'a ParamStore) -> &'a Tensor {
        store.get(self.encoder.layers[0].w)
    }

    /// Spike counts `z` and reconstruction for a batch of sequences
    /// (`inputs[t]` is `batch × 256`).
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, inputs: &[Var]) -> DResult<(Var, Var)> {
        let bound = self.encoder.bind(g, store);
        let z = self.encoder.run_sequence(g, &bound, inputs)?.readout;
        let w = g.param(store, self.w_dec);
        let recon = g.matmul(z, w)?;
        Ok((z, recon))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfReport {
    pub sigma_rf: f64,
    /// Mean squared reconstruction error per pixel.
    pub recon: f64,
    /// Mean spike count per bottleneck unit.
    pub sparsity: f64,
    /// `recon + λ·sparsity`.
    pub total: f64,
    pub lambda: f64,
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
}

pub struct TrainedSae {
    pub model: SaeModel,
    pub store: ParamStore,
    pub report: RfReport,
}

/// Inputs of a whole dataset under one encoder. Deterministic encoders are
/// computed once; stochastic ones are drawn per (epoch, sample).
struct InputTable<'a> {
    data: &'a PatchDataset,
    kind: EncoderKind,
    enc: EncodingConfig,
    cached: Option<Vec<Vec<f64>>>,
    seed: u64,
}

impl<'a> InputTable<'a> {
    fn new(data: &'a PatchDataset, kind: EncoderKind, enc: EncodingConfig, seed: u64) -> Result<Self> {
        let cached = if kind.is_stochastic() {
            None
        } else {
            // deterministic encoders never draw from the stream
            let rows: Result<Vec<Vec<f64>>> = data
                .patches
                .par_iter()
                .map(|p| encode_input(p, &kind, &enc, &mut rng::named(0, "unused", &[])))
                .collect();
            Some(rows?)
        };
        Ok(InputTable { data, kind, enc, cached, seed })
    }

    /// Builds the `T` batch inputs for the samples `idx`. `pass` separates the
    /// noise of different epochs (and of the final evaluation).
    fn batch(&self, g: &mut Graph, idx: &[usize], pass: u64) -> Result<Vec<Var>> {
        let t_steps = self.enc.n_steps;
        let b = idx.len();
        let rows: Vec<std::borrow::Cow<[f64]>> = idx
            .iter()
            .map(|&i| match &self.cached {
                Some(c) => Ok(std::borrow::Cow::Borrowed(c[i].as_slice())),
                None => {
                    let mut r = rng::named(self.seed, "sae-encode", &[pass, i as u64]);
                    encode_input(&self.data.patches[i], &self.kind, &self.enc, &mut r).map(std::borrow::Cow::Owned)
                }
            })
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(t_steps);
        for t in 0..t_steps {
            let mut d = Vec::with_capacity(b * PIXELS);
            for r in &rows {
                d.extend_from_slice(&r[t * PIXELS..(t + 1) * PIXELS]);
            }
            out.push(g.input(Tensor::new(&[b, PIXELS], d)?)?);
        }
        Ok(out)
    }
}

fn targets(g: &mut Graph, data: &PatchDataset, idx: &[usize]) -> DResult<Var> {
    let mut d = Vec::with_capacity(idx.len() * PIXELS);
    for &i in idx {
        d.extend_from_slice(&data.patches[i]);
    }
    g.input(Tensor::new(&[idx.len(), PIXELS], d)?)
}

/// Trains for a fixed epoch budget on `recon + λ·sparsity` and reports the
/// final full-dataset losses and σ_RF of the encoder weights.
pub fn train_sae(data: &PatchDataset, kind: EncoderKind, lambda: f64, cfg: &SaeConfig, seed: u64) -> Result<TrainedSae> {
    if !(lambda >= 0.0) {
        return invalid("lambda must be ≥ 0");
    }
    if data.is_empty() {
        return invalid("empty patch dataset");
    }
    let enc = cfg.encoding()?;
    let table = InputTable::new(data, kind, enc, seed)?;
    let mut store = ParamStore::new();
    let model = SaeModel::new(&mut store, &mut rng::named(seed, "sae-init", &[]), cfg);
    let mut adam = Adam::new(&store, cfg.lr);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::named(seed, "sae-shuffle", &[epoch as u64]));
        let mut acc = 0.0;
        let mut n = 0usize;
        for chunk in order.chunks(cfg.batch.max(1)) {
            let mut g = Graph::new();
            let inputs = table.batch(&mut g, chunk, epoch as u64)?;
            let x = targets(&mut g, data, chunk)?;
            let (z, recon) = model.forward(&mut g, &store, &inputs)?;
            let rec = g.mse(recon, x)?;
            let loss = if lambda > 0.0 {
                let sp = g.l1_norm(z)?;
                let sp = g.scale(sp, lambda)?;
                g.add(rec, sp)?
            } else {
                rec
            };
            acc += g.scalar(loss) * chunk.len() as f64;
            n += chunk.len();
            let grads = g.backward(loss, &store)?;
            adam.step(&mut store, &grads)?;
        }
        epoch_loss.push(acc / n as f64);
    }
    let (recon, sparsity) = evaluate_sae(&model, &store, data, &table, cfg.batch.max(1))?;
    let report = RfReport {
        sigma_rf: rf_std(&model.w_enc(&store).data),
        recon,
        sparsity,
        total: recon + lambda * sparsity,
        lambda,
        epoch_loss,
    };
    Ok(TrainedSae { model, store, report })
}

/// Mean per-pixel squared error and mean spike count over the dataset.
fn evaluate_sae(model: &SaeModel, store: &ParamStore, data: &PatchDataset, table: &InputTable, batch: usize) -> Result<(f64, f64)> {
    let all: Vec<usize> = (0..data.len()).collect();
    let (mut se, mut zs) = (0.0, 0.0);
    for chunk in all.chunks(batch) {
        let mut g = Graph::with_spike_mode(SpikeMode::Heaviside);
        let inputs = table.batch(&mut g, chunk, u64::MAX)?;
        let (z, recon) = model.forward(&mut g, store, &inputs)?;
        let rv = g.value(recon);
        for (r, &i) in chunk.iter().enumerate() {
            se += rv.row(r).iter().zip(&data.patches[i]).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        zs += g.value(z).data.iter().map(|v| v.abs()).sum::<f64>();
    }
    let n = data.len() as f64;
    Ok((se / (n * PIXELS as f64), zs / (n * model.encoder.out_dim() as f64)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaeRow {
    pub encoder: String,
    pub system: String,
    /// δ, ρ or b for dynamic encoders; NaN otherwise.
    pub control: f64,
    pub lambda: f64,
    pub seed: u64,
    pub sigma_rf: f64,
    pub recon: f64,
    pub sparsity: f64,
    pub total: f64,
    /// "ok" or the failure cause.
    pub status: String,
}

/// One trained cell plus its encoder weights (for RF export).
pub struct SaeCell {
    pub row: SaeRow,
    pub kind: EncoderKind,
    pub w_enc: Option<Tensor>,
}

/// Trains one SAE per (encoder, λ, seed). Failures are recorded in the row
/// status and leave the metrics NaN.
pub fn sae_grid(data: &PatchDataset, encoders: &[EncoderKind], lambdas: &[f64], seeds: &[u64], cfg: &SaeConfig) -> Vec<SaeCell> {
    let mut jobs = Vec::new();
    for e in encoders {
        for &l in lambdas {
            for &s in seeds {
                jobs.push((*e, l, s));
            }
        }
    }
    jobs.par_iter()
        .map(|&(kind, lambda, seed)| {
            let system = match kind {
                EncoderKind::Dynamic { system } => system.kind_name().to_string(),
                _ => "-".to_string(),
            };
            let job_seed = rng::derive(seed, &[rng::label("sae-cell"), fkey(kind.control()), fkey(lambda)]);
            let mut row = SaeRow {
                encoder: kind.label(),
                system,
                control: kind.control(),
                lambda,
                seed,
                sigma_rf: f64::NAN,
                recon: f64::NAN,
                sparsity: f64::NAN,
                total: f64::NAN,
                status: "ok".into(),
            };
            match train_sae(data, kind, lambda, cfg, job_seed) {
                Ok(t) => {
                    row.sigma_rf = t.report.sigma_rf;
                    row.recon = t.report.recon;
                    row.sparsity = t.report.sparsity;
                    row.total = t.report.total;
                    SaeCell { row, kind, w_enc: Some(t.model.w_enc(&t.store).clone()) }
                }
                Err(e) => {
                    row.status = e.to_string();
                    SaeCell { row, kind, w_enc: None }
                }
            }
        })
        .collect()
}

/// Duffing encoders over a δ grid crossed with a λ grid.
pub fn rf_scan(data: &PatchDataset, deltas: &[f64], lambdas: &[f64], seeds: &[u64], cfg: &SaeConfig) -> Vec<SaeCell> {
    let encoders: Vec<EncoderKind> = deltas.iter().map(|&d| EncoderKind::duffing(d)).collect();
    sae_grid(data, &encoders, lambdas, seeds, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniversalSystem {
    Lorenz,
    Thomas,
}

impl UniversalSystem {
    pub fn spec(&self, control: f64) -> SystemSpec {
        match self {
            UniversalSystem::Lorenz => SystemSpec::lorenz(control),
            UniversalSystem::Thomas => SystemSpec::thomas(control),
        }
    }
}

/// The same pipeline with a Lorenz (ρ grid) or Thomas (b grid) encoder.
pub fn universality_run(data: &PatchDataset, system: UniversalSystem, grid: &[f64], lambda: f64, seeds: &[u64], cfg: &SaeConfig) -> Result<Vec<SaeCell>> {
    let encoders: Vec<EncoderKind> = grid
        .iter()
        .map(|&c| {
            let spec = system.spec(c);
            spec.validate()?;
            Ok(EncoderKind::Dynamic { system: spec })
        })
        .collect::<Result<_>>()?;
    Ok(sae_grid(data, &encoders, &[lambda], seeds, cfg))
}

/// Mean σ_RF over the successful seeds of one encoder label and λ.
pub fn mean_sigma(rows: &[SaeRow], encoder: &str, lambda: f64) -> f64 {
    mean_of(rows, encoder, lambda, |r| r.sigma_rf)
}

pub fn mean_sparsity(rows: &[SaeRow], encoder: &str, lambda: f64) -> f64 {
    mean_of(rows, encoder, lambda, |r| r.sparsity)
}

fn mean_of(rows: &[SaeRow], encoder: &str, lambda: f64, f: impl Fn(&SaeRow) -> f64) -> f64 {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.encoder == encoder && r.lambda == lambda && r.status == "ok")
        .map(f)
        .filter(|v| v.is_finite())
        .collect();
    crate::stats::mean(&v)
}

/// Writes each bottleneck unit's receptive field as an 8-bit PGM with a
/// symmetric range: 128 is zero weight, 255 is `+max|w|`, 1 is `−max|w|`.
/// `w` is stored `inputs × units` (one column per unit).
pub fn write_rf_images(dir: &Path, w: &Tensor) -> Result<usize> {
    let (inputs, units) = w.dims2();
    if inputs != PIXELS {
        return invalid(format!("receptive fields need {PIXELS} inputs, got {inputs}"));
    }
    std::fs::create_dir_all(dir)?;
    let max = w.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for u in 0..units {
        let mut bytes = format!("P5\n{PATCH_SIDE} {PATCH_SIDE}\n255\n").into_bytes();
        for p in 0..PIXELS {
            let v = if max > 0.0 { w.data[p * units + u] / max } else { 0.0 };
            bytes.push((128.0 + 127.0 * v).round().clamp(0.0, 255.0) as u8);
        }
        let mut f = std::fs::File::create(dir.join(format!("neuron_{u:03}.pgm")))?;
        f.write_all(&bytes)?;
    }
    Ok(units)
}

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dynsys::{encode_features, EncodingConfig, SystemSpec, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::rng;
use rand::Rng as _;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSignature {
    pub centroid: f64,
    /// Normalized to [0, 1].
    pub entropy: f64,
    pub dominant_freq: f64,
    /// True when the series was shorter than the minimum segment and a single
    /// periodogram was used.
    pub single_segment: bool,
}

/// Which state dimensions enter the average.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DimsPolicy {
    All,
    Only(usize),
}

/// Largest power of two ≤ n/2, at least 8.
pub fn welch_segment_len(n: usize) -> usize {
    let half = (n / 2).max(1);
    let p = 1usize << (usize::BITS - 1 - half.leading_zeros());
    p.max(8)
}

/// One-sided Welch power spectral density (power per unit frequency) with a
/// Hann window, per-segment mean removal and fractional overlap. Summing
/// `power · Δf` recovers the signal variance.
pub fn psd_welch(signal: &[f64], sample_rate: f64, segment_len: usize, overlap_fraction: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if signal.is_empty() || segment_len == 0 || !(sample_rate > 0.0) {
        return invalid("psd_welch: empty signal, zero segment or bad sample rate");
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return invalid("psd_welch: overlap must be in [0, 1)");
    }
    let l = segment_len.min(signal.len());
    let step = ((l as f64 * (1.0 - overlap_fraction)).round() as usize).max(1);
    let window: Vec<f64> = if l == 1 {
        vec![1.0]
    } else {
        // periodic Hann, as in common signal-processing libraries
        (0..l).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / l as f64).cos()).collect()
    };
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(l);
    let n_freq = l / 2 + 1;
    let mut acc = vec![0.0; n_freq];
    let mut segments = 0usize;
    let mut start = 0;
    let mut buf = vec![Complex::new(0.0, 0.0); l];
    while start + l <= signal.len() {
        let seg = &signal[start..start + l];
        let m = seg.iter().sum::<f64>() / l as f64;
        for i in 0..l {
            buf[i] = Complex::new((seg[i] - m) * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = 1.0 / (sample_rate * wss.max(f64::MIN_POSITIVE) * segments as f64);
    let powers: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let one_sided = if k == 0 || (l.is_multiple_of(2) && k == l / 2) { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    let freqs = (0..n_freq).map(|k| k as f64 * sample_rate / l as f64).collect();
    Ok((freqs, powers))
}

/// Centroid, normalized entropy and peak of one spectrum. All-zero spectra
/// map to (0, 0, 0).
fn summarize(freqs: &[f64], powers: &[f64]) -> (f64, f64, f64) {
    let total: f64 = powers.iter().sum();
    if !(total > 0.0) || powers.len() < 2 {
        return (0.0, 0.0, 0.0);
    }
    let centroid = freqs.iter().zip(powers).map(|(f, p)| f * p).sum::<f64>() / total;
    let h: f64 = powers
        .iter()
        .map(|p| p / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    let entropy = h / (powers.len() as f64).ln();
    let (imax, _) = powers
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
    (centroid, entropy, freqs[imax])
}

/// Spectral summary of a single series sampled at `sample_rate`.
pub fn series_signature(series: &[f64], sample_rate: f64) -> Result<SpectralSignature> {
    let seg = welch_segment_len(series.len());
    let (f, p) = psd_welch(series, sample_rate, seg, 0.5)?;
    let (centroid, entropy, dominant_freq) = summarize(&f, &p);
    Ok(SpectralSignature { centroid, entropy, dominant_freq, single_segment: seg > series.len() })
}

/// Signature of every (feature, dim) series, averaged.
pub fn spectral_signature(traj: &Trajectory, dims: DimsPolicy) -> Result<SpectralSignature> {
    if traj.n < 2 {
        return invalid("spectral_signature needs at least 2 frames");
    }
    let dim_list: Vec<usize> = match dims {
        DimsPolicy::All => vec![0, 1, 2],
        DimsPolicy::Only(d) if d < 3 => vec![d],
        DimsPolicy::Only(d) => return invalid(format!("dimension {d} out of range")),
    };
    let fs = 1.0 / traj.dt_frame;
    let mut sums = [0.0; 3];
    let mut count = 0.0;
    let mut single = false;
    for f in 0..traj.d {
        for &dim in &dim_list {
            let s = series_signature(&traj.series(f, dim), fs)?;
            sums[0] += s.centroid;
            sums[1] += s.entropy;
            sums[2] += s.dominant_freq;
            single |= s.single_segment;
            count += 1.0;
        }
    }
    Ok(SpectralSignature {
        centroid: sums[0] / count,
        entropy: sums[1] / count,
        dominant_freq: sums[2] / count,
        single_segment: single,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralScanConfig {
    pub deltas: Vec<f64>,
    pub t_max: Vec<f64>,
    pub n_steps: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Random features per seed, drawn uniformly from [−1, 1].
    pub n_features: usize,
}

impl Default for SpectralScanConfig {
    fn default() -> Self {
        SpectralScanConfig {
            deltas: vec![-1.5, 0.0, 2.0, 10.0],
            t_max: vec![4.0, 8.0, 12.0, 16.0],
            n_steps: vec![32, 64, 128],
            seeds: vec![0, 1, 2],
            n_features: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub delta: f64,
    pub t: f64,
    pub n: usize,
    pub centroid: f64,
    pub entropy: f64,
    pub dominant_freq: f64,
    /// Features excluded because their trajectory diverged.
    pub n_diverged: usize,
}

/// Grid scan over (δ, T, N). Features whose trajectory diverges are excluded
/// and counted; a cell with no surviving feature reports NaN metrics.
pub fn spectral_scan(cfg: &SpectralScanConfig) -> Result<Vec<ScanRow>> {
    if cfg.deltas.is_empty() || cfg.t_max.is_empty() || cfg.n_steps.is_empty() || cfg.seeds.is_empty() || cfg.n_features == 0 {
        return invalid("spectral_scan: empty grid");
    }
    let inputs: Vec<Vec<f64>> = cfg
        .seeds
        .iter()
        .map(|&s| {
            let mut r = rng::named(s, "spectral-inputs", &[]);
            (0..cfg.n_features).map(|_| r.gen_range(-1.0..1.0)).collect()
        })
        .collect();
    let mut cells = Vec::new();
    for &delta in &cfg.deltas {
        for &t in &cfg.t_max {
            for &n in &cfg.n_steps {
                cells.push((delta, t, n));
            }
        }
    }
    cells
        .par_iter()
        .map(|&(delta, t, n)| {
            let enc = EncodingConfig::with_default_substeps(t, n)?;
            let spec = SystemSpec::duffing(delta);
            let (mut c, mut e, mut f, mut used, mut diverged) = (0.0, 0.0, 0.0, 0usize, 0usize);
            for xs in &inputs {
                for &x in xs {
                    match encode_features(&[x], &spec, &enc) {
                        Ok(traj) => {
                            let s = spectral_signature(&traj, DimsPolicy::All)?;
                            c += s.centroid;
                            e += s.entropy;
                            f += s.dominant_freq;
                            used += 1;
                        }
                        Err(Error::Diverged { .. }) => diverged += 1,
                        Err(err) => return Err(err),
                    }
                }
            }
            let k = used as f64;
            let (centroid, entropy, dominant_freq) = if used == 0 { (f64::NAN, f64::NAN, f64::NAN) } else { (c / k, e / k, f / k) };
            Ok(ScanRow { delta, t, n, centroid, entropy, dominant_freq, n_diverged: diverged })
        })
        .collect()
}

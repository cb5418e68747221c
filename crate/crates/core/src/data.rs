//! Tabular classification data: CSV loader, Gaussian-blob generator and
//! train/validation/test splitting with train-only standardization.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const N_CLASSES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    /// Standardized features, one row per sample.
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub source: String,
}

impl TabularDataset {
    pub fn n_features(&self) -> usize {
        self.features.first().map_or(0, |r| r.len())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Splits 70/15/15 with a seeded shuffle, then z-scores every feature
    /// using train-split statistics only.
    fn finish(features: Vec<Vec<f64>>, labels: Vec<usize>, seed: u64, source: String) -> Result<Self> {
        let n = features.len();
        if n < 3 {
            return Err(Error::Invalid(format!("dataset too small ({n} rows)")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::named(seed, "split", &[]));
        let n_train = (n as f64 * 0.70).round() as usize;
        let n_val = (n as f64 * 0.15).round() as usize;
        let train = idx[..n_train].to_vec();
        let val = idx[n_train..n_train + n_val].to_vec();
        let test = idx[n_train + n_val..].to_vec();
        let d = features[0].len();
        let mut mean = vec![0.0; d];
        let mut sd = vec![0.0; d];
        for &i in &train {
            for j in 0..d {
                mean[j] += features[i][j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= train.len() as f64);
        for &i in &train {
            for j in 0..d {
                sd[j] += (features[i][j] - mean[j]).powi(2);
            }
        }
        // constant features are centred and left unscaled
        sd.iter_mut().for_each(|s| {
            *s = (*s / train.len() as f64).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        });
        let features = features
            .into_iter()
            .map(|r| r.iter().enumerate().map(|(j, v)| (v - mean[j]) / sd[j]).collect())
            .collect();
        Ok(TabularDataset { features, labels, train, val, test, source })
    }
}

/// Reads rows of `d` features followed by an integer label in 0..10.
/// Lines starting with `#` and a non-numeric header line are skipped.
pub fn load_tabular(path: &Path, seed: u64) -> Result<TabularDataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read dataset {}: {e}", path.display())))?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = cells.iter().map(|c| c.parse::<f64>()).collect();
        let vals = match parsed {
            Ok(v) => v,
            Err(_) if features.is_empty() && ln == 0 => continue,
            Err(_) => return Err(Error::Parse { line: ln + 1, msg: "non-numeric cell".into() }),
        };
        if vals.len() < 2 {
            return Err(Error::Parse { line: ln + 1, msg: "need features and a label".into() });
        }
        let w = *width.get_or_insert(vals.len());
        if vals.len() != w {
            return Err(Error::Parse { line: ln + 1, msg: format!("expected {w} columns, got {}", vals.len()) });
        }
        let label = vals[w - 1];
        if label.fract() != 0.0 || label < 0.0 || label >= N_CLASSES as f64 {
            return Err(Error::Parse { line: ln + 1, msg: format!("label {label} out of range") });
        }
        if vals[..w - 1].iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse { line: ln + 1, msg: "non-finite feature".into() });
        }
        features.push(vals[..w - 1].to_vec());
        labels.push(label as usize);
    }
    TabularDataset::finish(features, labels, seed, format!("csv:{}", path.display()))
}

const MIN_CENTRE_DIST: f64 = 1.25;
const MAX_CENTRE_DRAWS: usize = 10_000;

/// Ten unit-norm class centres in `d` dimensions with pairwise distance at
/// least 1.25, plus isotropic Gaussian noise whose RMS norm is `sigma`.
pub fn synth_blobs(seed: u64, n: usize, d: usize, sigma: f64) -> Result<TabularDataset> {
    let mut r = rng::named(seed, "blobs", &[]);
    let mut attempts = 0;
    let centres = loop {
        attempts += 1;
        if attempts > MAX_CENTRE_DRAWS {
            return Err(Error::Invalid(format!("no {N_CLASSES} centres with separation {MIN_CENTRE_DIST} found in d = {d}")));
        }
        let c: Vec<Vec<f64>> = (0..N_CLASSES)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        let min_dist = (0..N_CLASSES)
            .flat_map(|a| (a + 1..N_CLASSES).map(move |b| (a, b)))
            .map(|(a, b)| c[a].iter().zip(&c[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        if min_dist >= MIN_CENTRE_DIST {
            break c;
        }
    };
    let per_dim = sigma / (d as f64).sqrt();
    let labels: Vec<usize> = (0..n).map(|i| i % N_CLASSES).collect();
    let features = labels
        .iter()
        .map(|&y| centres[y].iter().map(|c| c + per_dim * r.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    TabularDataset::finish(features, labels, seed, format!("blobs(seed={seed},n={n},d={d},sigma={sigma})"))
}

use serde::{Deserialize, Serialize};

use crate::dynsys::Trajectory;
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AisEstimate {
    /// Bits, averaged over the three state dimensions.
    pub value: f64,
    pub per_dim: [f64; 3],
    pub bins: usize,
    /// Number of (X_t, X_{t−1}) pairs per dimension.
    pub n_samples: usize,
}

/// Active information storage I(X_t; X_{t−1}) of one trajectory.
pub fn ais(traj: &Trajectory, bins: usize) -> Result<AisEstimate> {
    ais_pooled(std::slice::from_ref(traj), bins)
}

/// AIS with pairs pooled over every feature row of every trajectory.
/// Bins are equal-width over the observed range of each dimension and every
/// joint cell gets one pseudo-count.
pub fn ais_pooled(trajs: &[Trajectory], bins: usize) -> Result<AisEstimate> {
    if bins < 2 {
        return invalid("ais needs at least 2 bins");
    }
    if trajs.is_empty() || trajs.iter().any(|t| t.n < 2) {
        return invalid("ais needs at least 2 frames");
    }
    let n_samples: usize = trajs.iter().map(|t| t.d * (t.n - 1)).sum();
    let mut per_dim = [0.0; 3];
    for (dim, out) in per_dim.iter_mut().enumerate() {
        let values = || trajs.iter().flat_map(move |t| (0..t.d * t.n).map(move |i| t.data[i * 3 + dim]));
        let lo = values().fold(f64::INFINITY, f64::min);
        let hi = values().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            continue;
        }
        let width = (hi - lo) / bins as f64;
        let bin = |v: f64| (((v - lo) / width) as usize).min(bins - 1);
        let mut joint = vec![1.0f64; bins * bins];
        for t in trajs {
            for f in 0..t.d {
                for k in 1..t.n {
                    let cur = bin(t.get(f, k, dim));
                    let prev = bin(t.get(f, k - 1, dim));
                    joint[cur * bins + prev] += 1.0;
                }
            }
        }
        *out = mutual_information_bits(&joint, bins);
    }
    Ok(AisEstimate { value: per_dim.iter().sum::<f64>() / 3.0, per_dim, bins, n_samples })
}

/// MI in bits of a `bins × bins` count table.
pub(crate) fn mutual_information_bits(counts: &[f64], bins: usize) -> f64 {
    let total: f64 = counts.iter().sum();
    let mut pa = vec![0.0; bins];
    let mut pb = vec![0.0; bins];
    for a in 0..bins {
        for b in 0..bins {
            let p = counts[a * bins + b] / total;
            pa[a] += p;
            pb[b] += p;
        }
    }
    let mut mi = 0.0;
    for a in 0..bins {
        for b in 0..bins {
            let p = counts[a * bins + b] / total;
            if p > 0.0 {
                mi += p * (p / (pa[a] * pb[b])).log2();
            }
        }
    }
    mi.max(0.0)
}

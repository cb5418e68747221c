//! Parametric 3-D dynamical systems and the feature-to-trajectory encoder.
//!
//! Each scalar feature seeds its own copy of the system at
//! `(x, 0.2x, −x)` and is evolved with fixed-step RK4. Frame 0 is the
//! initial condition, so every regime starts from the same point.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{Mat3, Vec3};

/// States whose magnitude exceeds this are treated as divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SystemSpec {
    Duffing {
        alpha: f64,
        beta_cubic: f64,
        gamma: f64,
        omega: f64,
        delta: f64,
    },
    Lorenz {
        sigma: f64,
        rho: f64,
        beta_l: f64,
    },
    Thomas {
        b: f64,
    },
}

impl SystemSpec {
    /// Duffing-type oscillator with the fixed defaults and damping `delta`.
    pub fn duffing(delta: f64) -> Self {
        SystemSpec::Duffing { alpha: 2.0, beta_cubic: 0.1, gamma: 0.1, omega: 1.0, delta }
    }

    pub fn lorenz(rho: f64) -> Self {
        SystemSpec::Lorenz { sigma: 10.0, rho, beta_l: 8.0 / 3.0 }
    }

    pub fn thomas(b: f64) -> Self {
        SystemSpec::Thomas { b }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SystemSpec::Duffing { alpha, beta_cubic, gamma, omega, delta } => {
                [alpha, beta_cubic, gamma, omega, delta].iter().all(|v| v.is_finite())
            }
            SystemSpec::Lorenz { sigma, rho, beta_l } => {
                sigma.is_finite() && beta_l.is_finite() && rho.is_finite() && rho >= 0.0
            }
            SystemSpec::Thomas { b } => b.is_finite() && b > 0.0,
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("invalid system parameters {self:?}"))
        }
    }

    /// The scanned control parameter (δ, ρ or b).
    pub fn control(&self) -> f64 {
        match *self {
            SystemSpec::Duffing { delta, .. } => delta,
            SystemSpec::Lorenz { rho, .. } => rho,
            SystemSpec::Thomas { b } => b,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            SystemSpec::Duffing { .. } => "duffing",
            SystemSpec::Lorenz { .. } => "lorenz",
            SystemSpec::Thomas { .. } => "thomas",
        }
    }
}

/// Maps a scalar feature to the initial state `(x, 0.2x, −x)`.
pub fn init_state(x: f64) -> Result<Vec3> {
    if !x.is_finite() {
        return invalid(format!("non-finite feature {x}"));
    }
    Ok([x, 0.2 * x, -x])
}

pub fn derivative(s: &Vec3, spec: &SystemSpec) -> Vec3 {
    let [x, y, z] = *s;
    match *spec {
        SystemSpec::Duffing { alpha, beta_cubic, gamma, omega, delta } => [
            y,
            -alpha * x - beta_cubic * x * x * x - delta * y + gamma * z,
            -omega * x - delta * z + gamma * x * y,
        ],
        SystemSpec::Lorenz { sigma, rho, beta_l } => {
            [sigma * (y - x), x * (rho - z) - y, x * y - beta_l * z]
        }
        SystemSpec::Thomas { b } => [y.sin() - b * x, z.sin() - b * y, x.sin() - b * z],
    }
}

/// Analytic Jacobian of [`derivative`].
pub fn jacobian(s: &Vec3, spec: &SystemSpec) -> Mat3 {
    let [x, y, z] = *s;
    match *spec {
        SystemSpec::Duffing { alpha, beta_cubic, gamma, omega, delta } => [
            [0.0, 1.0, 0.0],
            [-alpha - 3.0 * beta_cubic * x * x, -delta, gamma],
            [-omega + gamma * y, gamma * x, -delta],
        ],
        SystemSpec::Lorenz { sigma, rho, beta_l } => [
            [-sigma, sigma, 0.0],
            [rho - z, -1.0, -x],
            [y, x, -beta_l],
        ],
        SystemSpec::Thomas { b } => [
            [-b, y.cos(), 0.0],
            [0.0, -b, z.cos()],
            [x.cos(), 0.0, -b],
        ],
    }
}

#[inline]
fn axpy(a: f64, x: &Vec3, y: &Vec3) -> Vec3 {
    [y[0] + a * x[0], y[1] + a * x[1], y[2] + a * x[2]]
}

/// One classical RK4 step.
pub fn rk4_step(s: &Vec3, spec: &SystemSpec, h: f64) -> Vec3 {
    let k1 = derivative(s, spec);
    let k2 = derivative(&axpy(0.5 * h, &k1, s), spec);
    let k3 = derivative(&axpy(0.5 * h, &k2, s), spec);
    let k4 = derivative(&axpy(h, &k3, s), spec);
    let mut out = *s;
    for i in 0..3 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

pub fn is_divergent(s: &Vec3) -> bool {
    s.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub t_total: f64,
    pub n_steps: usize,
    pub substeps_per_frame: usize,
}

impl EncodingConfig {
    pub fn new(t_total: f64, n_steps: usize, substeps_per_frame: usize) -> Result<Self> {
        let cfg = EncodingConfig { t_total, n_steps, substeps_per_frame };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Substep count: 20 per frame, raised so the internal step stays ≤ 0.032.
    pub fn with_default_substeps(t_total: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return invalid("n_steps must be ≥ 1");
        }
        let dt_frame = t_total / n_steps as f64;
        let sub = ((dt_frame / 0.032) - 1e-9).ceil().max(20.0) as usize;
        Self::new(t_total, n_steps, sub)
    }

    /// T = 4, N = 30: the high-resolution configuration.
    pub fn high_res() -> Self {
        EncodingConfig { t_total: 4.0, n_steps: 30, substeps_per_frame: 20 }
    }

    /// T = 8, N = 5: the efficient configuration.
    pub fn efficient() -> Self {
        EncodingConfig { t_total: 8.0, n_steps: 5, substeps_per_frame: 50 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 1 || self.substeps_per_frame < 1 || !(self.t_total > 0.0) {
            return invalid(format!("invalid encoding config {self:?}"));
        }
        Ok(())
    }

    pub fn dt_frame(&self) -> f64 {
        self.t_total / self.n_steps as f64
    }

    pub fn dt_internal(&self) -> f64 {
        self.dt_frame() / self.substeps_per_frame as f64
    }
}

/// A `d × N × 3` time series, row-major over (feature, frame, dim).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub data: Vec<f64>,
    pub d: usize,
    pub n: usize,
    pub dt_frame: f64,
    pub spec_used: SystemSpec,
}

impl Trajectory {
    #[inline]
    pub fn get(&self, feature: usize, frame: usize, dim: usize) -> f64 {
        self.data[(feature * self.n + frame) * 3 + dim]
    }

    pub fn row(&self, feature: usize) -> &[f64] {
        &self.data[feature * self.n * 3..(feature + 1) * self.n * 3]
    }

    /// Series of one feature along one dimension.
    pub fn series(&self, feature: usize, dim: usize) -> Vec<f64> {
        (0..self.n).map(|k| self.get(feature, k, dim)).collect()
    }

    /// Frame `k` flattened feature-major: `[f0x, f0y, f0z, f1x, ...]`.
    pub fn frame(&self, k: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.d * 3);
        for i in 0..self.d {
            out.extend_from_slice(&self.data[(i * self.n + k) * 3..(i * self.n + k) * 3 + 3]);
        }
        out
    }
}

fn integrate_into(x0: &Vec3, spec: &SystemSpec, cfg: &EncodingConfig, feature: usize, out: &mut [f64]) -> Result<()> {
    let h = cfg.dt_internal();
    let mut s = *x0;
    out[..3].copy_from_slice(&s);
    for k in 1..cfg.n_steps {
        for j in 0..cfg.substeps_per_frame {
            s = rk4_step(&s, spec, h);
            if is_divergent(&s) {
                let time = ((k - 1) * cfg.substeps_per_frame + j + 1) as f64 * h;
                return Err(Error::Diverged { feature, time });
            }
        }
        out[k * 3..k * 3 + 3].copy_from_slice(&s);
    }
    Ok(())
}

/// Evolves one initial state and samples `n_steps` frames.
pub fn integrate(x0: &Vec3, spec: &SystemSpec, cfg: &EncodingConfig) -> Result<Trajectory> {
    cfg.validate()?;
    spec.validate()?;
    if is_divergent(x0) {
        return invalid("initial state is not finite");
    }
    let mut data = vec![0.0; cfg.n_steps * 3];
    integrate_into(x0, spec, cfg, 0, &mut data)?;
    Ok(Trajectory { data, d: 1, n: cfg.n_steps, dt_frame: cfg.dt_frame(), spec_used: *spec })
}

/// Encodes every feature independently into a `d × N × 3` trajectory.
pub fn encode_features(x: &[f64], spec: &SystemSpec, cfg: &EncodingConfig) -> Result<Trajectory> {
    cfg.validate()?;
    spec.validate()?;
    if x.is_empty() {
        return invalid("empty feature vector");
    }
    let n = cfg.n_steps;
    let mut data = vec![0.0; x.len() * n * 3];
    for (i, &xi) in x.iter().enumerate() {
        let s0 = init_state(xi).map_err(|_| Error::Invalid(format!("feature {i} is not finite")))?;
        integrate_into(&s0, spec, cfg, i, &mut data[i * n * 3..(i + 1) * n * 3])?;
    }
    Ok(Trajectory { data, d: x.len(), n, dt_frame: cfg.dt_frame(), spec_used: *spec })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_state_examples() {
        assert_eq!(init_state(1.0).unwrap(), [1.0, 0.2, -1.0]);
        assert_eq!(init_state(0.0).unwrap(), [0.0, 0.0, 0.0]);
        assert_eq!(init_state(-2.0).unwrap(), [-2.0, -0.4, 2.0]);
        assert!(init_state(f64::NAN).is_err());
        assert!(init_state(f64::INFINITY).is_err());
    }

    #[test]
    fn duffing_rhs_by_hand() {
        let d = derivative(&[1.0, 0.0, 0.0], &SystemSpec::duffing(2.0));
        assert_eq!(d, [0.0, -2.1, -1.0]);
        assert_eq!(derivative(&[0.0; 3], &SystemSpec::duffing(-1.5)), [0.0; 3]);
        assert_eq!(derivative(&[0.0; 3], &SystemSpec::lorenz(28.0)), [0.0; 3]);
    }

    #[test]
    fn jacobian_at_origin() {
        let delta = 3.0;
        let j = jacobian(&[0.0; 3], &SystemSpec::duffing(delta));
        assert_eq!(j, [[0.0, 1.0, 0.0], [-2.0, -delta, 0.1], [-1.0, 0.0, -delta]]);
    }

    #[test]
    fn default_substeps() {
        assert_eq!(EncodingConfig::with_default_substeps(4.0, 30).unwrap(), EncodingConfig::high_res());
        assert_eq!(EncodingConfig::with_default_substeps(8.0, 5).unwrap(), EncodingConfig::efficient());
        assert!(EncodingConfig::new(0.0, 5, 1).is_err());
        assert!(EncodingConfig::new(1.0, 0, 1).is_err());
    }

    #[test]
    fn divergence_is_reported_with_feature_index() {
        let cfg = EncodingConfig::with_default_substeps(40.0, 10).unwrap();
        let err = encode_features(&[0.0, 3.0], &SystemSpec::duffing(-1.5), &cfg).unwrap_err();
        match err {
            Error::Diverged { feature, .. } => assert_eq!(feature, 1),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn spec_validation() {
        assert!(SystemSpec::lorenz(-1.0).validate().is_err());
        assert!(SystemSpec::thomas(0.0).validate().is_err());
        assert!(SystemSpec::thomas(0.2).validate().is_ok());
    }
}

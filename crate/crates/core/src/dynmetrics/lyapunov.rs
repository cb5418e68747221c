use serde::{Deserialize, Serialize};

use crate::dynsys::{is_divergent, jacobian, rk4_step, SystemSpec};
use crate::error::{invalid, Error, Result};
use crate::linalg::{mat3_mul, qr3, Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovConfig {
    pub t_total: f64,
    pub dt: f64,
    pub qr_interval: usize,
    /// Leading fraction of the run treated as transient.
    pub discard_fraction: f64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig { t_total: 500.0, dt: 0.005, qr_interval: 10, discard_fraction: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    /// Sorted descending.
    pub exponents: [f64; 3],
    pub sum: f64,
    pub t_total: f64,
    pub dt: f64,
    pub qr_interval: usize,
    /// False if any exponent moved by more than 5% over the last 10% of the run.
    pub converged: bool,
    /// Initial state the reference orbit started from.
    pub x0: Vec3,
}

/// QR (Benettin) estimate of the full Lyapunov spectrum.
pub fn lyapunov_spectrum(spec: &SystemSpec, x0: &Vec3, cfg: &LyapunovConfig) -> Result<LyapunovReport> {
    spec.validate()?;
    lyapunov_generic(|s| jacobian(s, spec), |s, h| rk4_step(s, spec, h), x0, cfg)
}

/// Same estimator for an arbitrary 3-D flow given its Jacobian and a
/// one-step integrator.
pub fn lyapunov_generic(
    jac: impl Fn(&Vec3) -> Mat3,
    step_fn: impl Fn(&Vec3, f64) -> Vec3,
    x0: &Vec3,
    cfg: &LyapunovConfig,
) -> Result<LyapunovReport> {
    if !(cfg.dt > 0.0 && cfg.t_total > 0.0 && cfg.qr_interval >= 1) {
        return invalid(format!("invalid Lyapunov config {cfg:?}"));
    }
    if !(0.0..1.0).contains(&cfg.discard_fraction) {
        return invalid("discard_fraction must be in [0, 1)");
    }
    let steps = (cfg.t_total / cfg.dt).round() as usize;
    let discard = ((steps as f64 * cfg.discard_fraction) as usize / cfg.qr_interval) * cfg.qr_interval;
    let check_at = discard + ((steps - discard) as f64 * 0.9) as usize;
    let dt = cfg.dt;

    let mut s = *x0;
    let mut q: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut acc = [0.0; 3];
    let mut t_acc = 0.0;
    let mut last_qr = 0;
    let mut snapshot: Option<[f64; 3]> = None;

    for step in 1..=steps {
        let j = jac(&s);
        let j2 = mat3_mul(&j, &j);
        let mut m = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                let id = if a == b { 1.0 } else { 0.0 };
                m[a][b] = id + j[a][b] * dt + 0.5 * j2[a][b] * dt * dt;
            }
        }
        q = mat3_mul(&m, &q);
        s = step_fn(&s, dt);
        if is_divergent(&s) {
            return Err(Error::Diverged { feature: 0, time: step as f64 * dt });
        }
        if step % cfg.qr_interval == 0 || step == steps {
            let (qn, r) = qr3(&q);
            q = qn;
            if step > discard {
                for i in 0..3 {
                    acc[i] += r[i].ln();
                }
                t_acc += (step - last_qr) as f64 * dt;
            }
            last_qr = step;
        }
        if snapshot.is_none() && step >= check_at && t_acc > 0.0 {
            snapshot = Some([acc[0] / t_acc, acc[1] / t_acc, acc[2] / t_acc]);
        }
    }
    if t_acc == 0.0 {
        return invalid("run too short to accumulate any QR steps");
    }
    let mut ex = [acc[0] / t_acc, acc[1] / t_acc, acc[2] / t_acc];
    let converged = match snapshot {
        Some(prev) => (0..3).all(|i| (ex[i] - prev[i]).abs() <= 0.05 * ex[i].abs().max(0.1)),
        None => false,
    };
    ex.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if ex.iter().any(|v| !v.is_finite()) {
        return invalid("non-finite Lyapunov exponent");
    }
    Ok(LyapunovReport {
        exponents: ex,
        sum: ex.iter().sum(),
        t_total: cfg.t_total,
        dt: cfg.dt,
        qr_interval: cfg.qr_interval,
        converged,
        x0: *x0,
    })
}

/// Runs from `x0`; if the orbit diverges, retries from the origin, which is a
/// fixed point of all three systems and so yields the spectrum of the
/// linearization there. The flag reports whether the fallback was used.
pub fn lyapunov_with_fallback(spec: &SystemSpec, x0: &Vec3, cfg: &LyapunovConfig) -> Result<(LyapunovReport, bool)> {
    match lyapunov_spectrum(spec, x0, cfg) {
        Ok(r) => Ok((r, false)),
        Err(Error::Diverged { .. }) => Ok((lyapunov_spectrum(spec, &[0.0; 3], cfg)?, true)),
        Err(e) => Err(e),
    }
}

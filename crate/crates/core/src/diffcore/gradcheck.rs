use serde::Serialize;

use super::{DResult, Graph, ParamStore, SpikeMode, Var};

#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }
}

/// Differences below this are treated as agreement regardless of scale;
/// they sit at the round-off level of a central difference with h = 1e-4.
const ABS_FLOOR: f64 = 1e-9;

/// Compares reverse-mode gradients against central finite differences
/// (step 1e-4) for every scalar of every parameter. Spike ops run in
/// [`SpikeMode::Smoothed`] so the forward is differentiable and its exact
/// derivative is the surrogate used by backward.
pub fn grad_check<F>(store: &ParamStore, tolerance: f64, build: F) -> DResult<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> DResult<Var>,
{
    const H: f64 = 1e-4;
    let eval = |s: &ParamStore| -> DResult<f64> {
        let mut g = Graph::with_spike_mode(SpikeMode::Smoothed);
        let loss = build(&mut g, s)?;
        Ok(g.scalar(loss))
    };
    let mut g = Graph::with_spike_mode(SpikeMode::Smoothed);
    let loss = build(&mut g, store)?;
    let analytic = g.backward(loss, store)?;

    let mut work = store.clone();
    let mut params = Vec::new();
    for id in store.ids() {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for j in 0..store.get(id).len() {
            let orig = store.get(id).data[j];
            work.get_mut(id).data[j] = orig + H;
            let up = eval(&work)?;
            work.get_mut(id).data[j] = orig - H;
            let down = eval(&work)?;
            work.get_mut(id).data[j] = orig;
            let numeric = (up - down) / (2.0 * H);
            let a = analytic.get(id).data[j];
            let abs = (a - numeric).abs();
            let rel = if abs <= ABS_FLOOR { 0.0 } else { abs / a.abs().max(numeric.abs()) };
            max_rel = max_rel.max(rel);
            max_abs = max_abs.max(abs);
        }
        params.push(ParamCheck { name: store.name(id).to_string(), max_rel_err: max_rel, max_abs_err: max_abs });
    }
    let passed = params.iter().all(|p| p.max_rel_err < tolerance);
    Ok(GradCheckReport { params, tolerance, passed })
}

//! Leaky integrate-and-fire layers with learnable thresholds and surrogate
//! spike gradients, assembled into feed-forward spiking models.
//!
//! Update per step for a spiking layer:
//!
//! ```text
//! mem ← β·mem + x·W (+ s_prev·W_rec)
//! s   = H(mem − θ)
//! mem ← mem − θ·s
//! ```
//!
//! The output layer of a classifier or policy does not spike; it is a leaky
//! integrator whose membrane is the readout.

use serde::{Deserialize, Serialize};

use crate::diffcore::{DResult, Graph, ParamId, ParamStore, Tensor, Var};
use crate::linalg::{orthogonal, scale_to_radius};
use crate::rng::Rng;

pub use crate::diffcore::surrogate_grad;

pub const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;
pub const OUTPUT_GAIN: f64 = 0.01;
pub const THRESHOLD_INIT: f64 = 1.0;
pub const RECURRENT_RADIUS: f64 = 0.9;
pub const RADIUS_ITERS: usize = 50;

/// Membrane time constant `−1/ln β` in steps (infinite for β = 1).
pub fn tau_mem(beta: f64) -> f64 {
    -1.0 / beta.ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Lif,
    RLeaky,
    /// Non-spiking leaky integrator.
    Integrator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifLayer {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub beta: f64,
    pub w: ParamId,
    pub theta: Option<ParamId>,
    pub w_rec: Option<ParamId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Readout {
    /// Time-summed membrane of a non-spiking output layer.
    IntegratedMembrane,
    /// Σ_t S(t) of the last spiking layer.
    SpikeCount,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikingModel {
    pub layers: Vec<LifLayer>,
    pub readout: Readout,
}

/// Graph handles for one layer's weights.
#[derive(Clone, Copy, Debug)]
pub struct BoundLayer {
    pub w: Var,
    pub theta: Option<Var>,
    pub w_rec: Option<Var>,
}

/// Per-layer membrane and last spikes. `None` means zero (sequence start).
#[derive(Clone, Debug, Default)]
pub struct SnnState {
    pub mem: Vec<Option<Var>>,
    pub spikes: Vec<Option<Var>>,
}

pub struct StepOut {
    /// Spikes of every spiking layer, in order.
    pub spikes: Vec<Var>,
    /// Membrane of the integrator output layer, or spikes of the last layer.
    pub out: Var,
}

pub struct SeqOut {
    pub readout: Var,
    /// `spikes[t][l]` for spiking layer `l` at step `t`.
    pub spikes: Vec<Vec<Var>>,
}

impl SpikingModel {
    /// Builds a stack `dims[0] → dims[1] → … → dims[last]`. Hidden layers are
    /// LIF (or recurrent LIF); the last layer is an integrator for
    /// [`Readout::IntegratedMembrane`] and LIF for [`Readout::SpikeCount`].
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        prefix: &str,
        dims: &[usize],
        beta: f64,
        recurrent: bool,
        readout: Readout,
    ) -> Self {
        assert!(dims.len() >= 2, "need at least one layer");
        let n = dims.len() - 1;
        let mut layers = Vec::with_capacity(n);
        for l in 0..n {
            let (i, o) = (dims[l], dims[l + 1]);
            let last = l == n - 1;
            let kind = match (last, readout) {
                (true, Readout::IntegratedMembrane) => LayerKind::Integrator,
                _ if recurrent => LayerKind::RLeaky,
                _ => LayerKind::Lif,
            };
            let gain = if kind == LayerKind::Integrator { OUTPUT_GAIN } else { HIDDEN_GAIN };
            let w = store.add(format!("{prefix}.l{l}.w"), Tensor { shape: vec![i, o], data: orthogonal(i, o, gain, rng) });
            let theta = (kind != LayerKind::Integrator)
                .then(|| store.add(format!("{prefix}.l{l}.theta"), Tensor::full(&[o], THRESHOLD_INIT)));
            let w_rec = (kind == LayerKind::RLeaky).then(|| {
                let mut wr = orthogonal(o, o, 1.0, rng);
                scale_to_radius(&mut wr, o, RECURRENT_RADIUS, RADIUS_ITERS, rng);
                store.add(format!("{prefix}.l{l}.w_rec"), Tensor { shape: vec![o, o], data: wr })
            });
            layers.push(LifLayer { kind, in_dim: i, out_dim: o, beta, w, theta, w_rec });
        }
        SpikingModel { layers, readout }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [Some(l.w), l.theta, l.w_rec]).flatten().collect()
    }

    /// Binds stored parameters as graph leaves.
    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> Vec<BoundLayer> {
        self.layers
            .iter()
            .map(|l| BoundLayer {
                w: g.param(store, l.w),
                theta: l.theta.map(|t| g.param(store, t)),
                w_rec: l.w_rec.map(|t| g.param(store, t)),
            })
            .collect()
    }

    /// Fresh state: membranes at zero.
    pub fn reset(&self) -> SnnState {
        SnnState { mem: vec![None; self.layers.len()], spikes: vec![None; self.layers.len()] }
    }

    /// Advances every layer by one step on input `x` (`batch × in_dim`).
    pub fn step(&self, g: &mut Graph, bound: &[BoundLayer], st: &mut SnnState, x: Var) -> DResult<StepOut> {
        let mut h = x;
        let mut spikes = Vec::new();
        for (l, (layer, b)) in self.layers.iter().zip(bound).enumerate() {
            let mut drive = g.matmul(h, b.w)?;
            if let (Some(wr), Some(prev)) = (b.w_rec, st.spikes[l]) {
                let rec = g.matmul(prev, wr)?;
                drive = g.add(drive, rec)?;
            }
            let mem = match st.mem[l] {
                Some(m) if layer.beta != 0.0 => {
                    let decayed = g.scale(m, layer.beta)?;
                    g.add(decayed, drive)?
                }
                _ => drive,
            };
            match b.theta {
                None => {
                    st.mem[l] = Some(mem);
                    h = mem;
                }
                Some(theta) => {
                    let u = g.sub(mem, theta)?;
                    let s = g.spike(u)?;
                    let reset = g.mul(s, theta)?;
                    st.mem[l] = Some(g.sub(mem, reset)?);
                    st.spikes[l] = Some(s);
                    spikes.push(s);
                    h = s;
                }
            }
        }
        Ok(StepOut { spikes, out: h })
    }

    /// Runs a sequence of per-step inputs from a reset state.
    pub fn run_sequence(&self, g: &mut Graph, bound: &[BoundLayer], inputs: &[Var]) -> DResult<SeqOut> {
        if inputs.is_empty() {
            return Err(crate::diffcore::DiffError::Shape { op: "run_sequence", detail: "T = 0".into() });
        }
        let mut st = self.reset();
        let mut acc: Option<Var> = None;
        let mut spikes = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let o = self.step(g, bound, &mut st, x)?;
            acc = Some(match acc {
                None => o.out,
                Some(a) => g.add(a, o.out)?,
            });
            spikes.push(o.spikes);
        }
        Ok(SeqOut { readout: acc.unwrap(), spikes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::named;

    fn single_layer(store: &mut ParamStore, beta: f64, w: Vec<f64>, n: usize, recurrent: Option<Vec<f64>>) -> SpikingModel {
        let wid = store.add("w", Tensor::new(&[n, n], w).unwrap());
        let theta = store.add("theta", Tensor::full(&[n], 1.0));
        let w_rec = recurrent.map(|r| store.add("w_rec", Tensor::new(&[n, n], r).unwrap()));
        let kind = if w_rec.is_some() { LayerKind::RLeaky } else { LayerKind::Lif };
        SpikingModel {
            layers: vec![LifLayer { kind, in_dim: n, out_dim: n, beta, w: wid, theta: Some(theta), w_rec }],
            readout: Readout::SpikeCount,
        }
    }

    #[test]
    fn memoryless_subthreshold() {
        let mut store = ParamStore::new();
        let m = single_layer(&mut store, 0.0, vec![1.0], 1, None);
        let mut g = Graph::new();
        let b = m.bind(&mut g, &store);
        let mut st = m.reset();
        let x = g.input(Tensor::new(&[1, 1], vec![0.7]).unwrap()).unwrap();
        let o = m.step(&mut g, &b, &mut st, x).unwrap();
        assert_eq!(g.value(o.out).data, vec![0.0]);
        assert_eq!(g.value(st.mem[0].unwrap()).data, vec![0.7]);
    }

    #[test]
    fn hand_arithmetic_with_prior_membrane() {
        // β = 0.95, prior mem 0.5, drive 0.6 → 1.075, spike, reset to 0.075
        let mut store = ParamStore::new();
        let m = single_layer(&mut store, 0.95, vec![1.0], 1, None);
        let mut g = Graph::new();
        let b = m.bind(&mut g, &store);
        let mut st = m.reset();
        st.mem[0] = Some(g.input(Tensor::new(&[1, 1], vec![0.5]).unwrap()).unwrap());
        let x = g.input(Tensor::new(&[1, 1], vec![0.6]).unwrap()).unwrap();
        let o = m.step(&mut g, &b, &mut st, x).unwrap();
        assert_eq!(g.value(o.out).data, vec![1.0]);
        assert!((g.value(st.mem[0].unwrap()).data[0] - 0.075).abs() < 1e-12);
    }

    #[test]
    fn recurrent_hand_case() {
        // W_rec = 0.5, one prior spike, β = 0.5, mem 0, no feed-forward drive
        let mut store = ParamStore::new();
        let m = single_layer(&mut store, 0.5, vec![1.0], 1, Some(vec![0.5]));
        let mut g = Graph::new();
        let b = m.bind(&mut g, &store);
        let mut st = m.reset();
        st.mem[0] = Some(g.input(Tensor::new(&[1, 1], vec![0.0]).unwrap()).unwrap());
        st.spikes[0] = Some(g.input(Tensor::new(&[1, 1], vec![1.0]).unwrap()).unwrap());
        let x = g.input(Tensor::new(&[1, 1], vec![0.0]).unwrap()).unwrap();
        let o = m.step(&mut g, &b, &mut st, x).unwrap();
        assert_eq!(g.value(o.out).data, vec![0.0]);
        assert_eq!(g.value(st.mem[0].unwrap()).data, vec![0.5]);
    }

    #[test]
    fn tau_at_half() {
        assert!((tau_mem(0.5) - 1.0 / 2f64.ln()).abs() < 1e-12);
        assert!(tau_mem(1.0).is_infinite());
    }

    #[test]
    fn recurrent_init_radius() {
        let mut store = ParamStore::new();
        let mut rng = named(3, "snn", &[]);
        let m = SpikingModel::new(&mut store, &mut rng, "r", &[4, 16, 2], 0.5, true, Readout::IntegratedMembrane);
        let wr = store.get(m.layers[0].w_rec.unwrap());
        let mut rng2 = named(9, "check", &[]);
        let r = crate::linalg::spectral_radius(&wr.data, 16, 400, &mut rng2);
        assert!((r - 0.9).abs() < 0.05, "{r}");
        assert!(m.layers[1].w_rec.is_none());
    }
}

//! Fully connected ReLU networks used as non-spiking controls.

use serde::{Deserialize, Serialize};

use crate::diffcore::{DResult, Graph, ParamId, ParamStore, Tensor, Var};
use crate::linalg::orthogonal;
use crate::rng::Rng;
use crate::snn::{HIDDEN_GAIN, OUTPUT_GAIN};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub dims: Vec<usize>,
    pub weights: Vec<ParamId>,
    pub biases: Vec<ParamId>,
    /// Gain and bias of a layer norm after each hidden affine map.
    pub norms: Vec<Option<(ParamId, ParamId)>>,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, rng: &mut Rng, prefix: &str, dims: &[usize], layer_norm: bool) -> Self {
        assert!(dims.len() >= 2);
        let n = dims.len() - 1;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut norms = Vec::new();
        for l in 0..n {
            let (i, o) = (dims[l], dims[l + 1]);
            let gain = if l == n - 1 { OUTPUT_GAIN } else { HIDDEN_GAIN };
            weights.push(store.add(format!("{prefix}.l{l}.w"), Tensor { shape: vec![i, o], data: orthogonal(i, o, gain, rng) }));
            biases.push(store.add(format!("{prefix}.l{l}.b"), Tensor::zeros(&[o])));
            norms.push((layer_norm && l < n - 1).then(|| {
                (
                    store.add(format!("{prefix}.l{l}.ln_gain"), Tensor::full(&[o], 1.0)),
                    store.add(format!("{prefix}.l{l}.ln_bias"), Tensor::zeros(&[o])),
                )
            }));
        }
        Mlp { dims: dims.to_vec(), weights, biases, norms }
    }

    /// Logits for a `batch × dims[0]` input.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> DResult<Var> {
        let n = self.weights.len();
        let mut h = x;
        for l in 0..n {
            let w = g.param(store, self.weights[l]);
            let b = g.param(store, self.biases[l]);
            let z = g.matmul(h, w)?;
            let mut z = g.add(z, b)?;
            if l < n - 1 {
                if let Some((gain, bias)) = self.norms[l] {
                    let (gv, bv) = (g.param(store, gain), g.param(store, bias));
                    z = g.layer_norm(z, gv, bv)?;
                }
                z = g.relu(z)?;
            }
            h = z;
        }
        Ok(h)
    }
}

use super::{DResult, DiffError, Grads, ParamStore, Tensor};

pub fn global_norm(grads: &Grads) -> f64 {
    grads.tensors.iter().flat_map(|t| t.data.iter()).map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Grads, max_norm: f64) -> f64 {
    let n = global_norm(grads);
    if n > max_norm && n > 0.0 {
        let s = max_norm / n;
        grads.tensors.iter_mut().for_each(|t| t.data.iter_mut().for_each(|g| *g *= s));
    }
    n
}

fn check_finite(store: &ParamStore, grads: &Grads) -> DResult<()> {
    for id in store.ids() {
        if !grads.get(id).all_finite() {
            return Err(DiffError::NonFiniteGrad(store.name(id).to_string()));
        }
    }
    Ok(())
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = store.ids().map(|i| Tensor::zeros(&store.get(i).shape)).collect();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    /// One update. A non-finite gradient aborts before any parameter changes.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) -> DResult<()> {
        check_finite(store, grads)?;
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let g = &grads.get(id).data;
            let (m, v) = (&mut self.m[id.0].data, &mut self.v[id.0].data);
            let p = &mut store.get_mut(id).data;
            for j in 0..p.len() {
                if g[j] == 0.0 && m[j] == 0.0 && v[j] == 0.0 {
                    continue;
                }
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Plain stochastic gradient descent.
#[derive(Clone, Copy, Debug)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn step(&self, store: &mut ParamStore, grads: &Grads) -> DResult<()> {
        check_finite(store, grads)?;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let g = &grads.get(id).data;
            store.get_mut(id).data.iter_mut().zip(g).for_each(|(p, g)| *p -= self.lr * g);
        }
        Ok(())
    }
}

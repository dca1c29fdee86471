use super::params::Weights;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty applied to the asset-embedding table only.
    pub e_weight_decay: f64,
    m: Weights,
    v: Weights,
    t: i32,
}

impl Adam {
    pub fn new(like: &Weights, lr: f64, e_weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            e_weight_decay,
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut Weights, grads: &Weights) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let decay = self.e_weight_decay;
        let e_slot = 2;
        let grads = grads.slices();
        let ms = self.m.slices_mut();
        let vs = self.v.slices_mut();
        for (slot, (((p, g), m), v)) in params.slices_mut().into_iter().zip(grads).zip(ms).zip(vs).enumerate() {
            let wd = if slot == e_slot { decay } else { 0.0 };
            for i in 0..p.len() {
                let gi = g[i] + wd * p[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

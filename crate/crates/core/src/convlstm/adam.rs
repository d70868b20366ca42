use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.99, eps: 1e-8 }
    }
}

/// One bias-corrected ADAM update of `theta` in place; `t` is the 1-based
/// step number of this update.
pub fn adam_update<T: Real>(hp: &AdamHyper, t: u64, theta: &mut [T], grad: &[T], m: &mut [T], v: &mut [T]) {
    debug_assert!(theta.len() == grad.len() && m.len() == grad.len() && v.len() == grad.len());
    let (b1, b2) = (T::lit(hp.beta1), T::lit(hp.beta2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    let c1 = T::lit(1.0 - hp.beta1.powf(t as f64));
    let c2 = T::lit(1.0 - hp.beta2.powf(t as f64));
    let lr = T::lit(hp.lr);
    let eps = T::lit(hp.eps);
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + one_b1 * g;
        v[i] = b2 * v[i] + one_b2 * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

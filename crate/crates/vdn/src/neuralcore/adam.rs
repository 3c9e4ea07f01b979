use super::{s, Param, Scalar};

/// Adam moment/stability constants. The learning rate is passed per call so
/// one hyper block can serve every layer.
#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update. Consumes (and zeroes) the accumulated
/// gradient. Returns false if any gradient entry was non-finite, leaving the
/// caller to surface a training fault.
pub fn adam_step<S: Scalar>(param: &mut Param<S>, hyper: &AdamHyper, lr: S) -> bool {
    param.adam_t += 1;
    let b1 = s::<S>(hyper.beta1);
    let b2 = s::<S>(hyper.beta2);
    let eps = s::<S>(hyper.eps);
    let one = S::one();
    let corr1 = one - s::<S>(hyper.beta1.powi(param.adam_t as i32));
    let corr2 = one - s::<S>(hyper.beta2.powi(param.adam_t as i32));

    let mut ok = true;
    let g_all = param.grad.data_mut();
    let m_all = param.adam_m.data_mut();
    let v_all = param.adam_v.data_mut();
    let w_all = param.value.data_mut();
    for i in 0..g_all.len() {
        let g = g_all[i];
        ok &= g.is_finite();
        let m = b1 * m_all[i] + (one - b1) * g;
        let v = b2 * v_all[i] + (one - b2) * g * g;
        m_all[i] = m;
        v_all[i] = v;
        let m_hat = m / corr1;
        let v_hat = v / corr2;
        w_all[i] = w_all[i] - lr * m_hat / (v_hat.sqrt() + eps);
        g_all[i] = S::zero();
    }
    ok
}

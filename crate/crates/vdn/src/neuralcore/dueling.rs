use super::adam::AdamHyper;
use super::linear::Linear;
use super::Scalar;

/// Combines a state value with per-action advantages exactly as written:
/// `Q[a] = v + adv[a]` (no mean subtraction).
pub fn dueling_combine<S: Scalar>(v: S, adv: &[S], q: &mut [S]) {
    for (qi, &ai) in q.iter_mut().zip(adv) {
        *qi = v + ai;
    }
}

/// Dueling output head: a scalar value branch plus an advantage branch over
/// the action set, combined additively.
#[derive(Debug, Clone)]
pub struct DuelingHead<S> {
    pub value: Linear<S>,     // in → 1
    pub advantage: Linear<S>, // in → n_actions
    pub n_actions: usize,
}

impl<S: Scalar> DuelingHead<S> {
    pub fn new(rng: &mut impl rand::Rng, i_dim: usize, n_actions: usize) -> Self {
        DuelingHead {
            value: Linear::new(rng, i_dim, 1),
            advantage: Linear::new(rng, i_dim, n_actions),
            n_actions,
        }
    }

    /// `q[b,a] = v[b] + adv[b,a]`; scratch buffers are allocated per call
    /// (head sizes are tiny next to the recurrent trunk).
    pub fn forward(&self, x: &[S], q: &mut [S], batch: usize) {
        let a = self.n_actions;
        let mut v = vec![S::zero(); batch];
        self.value.forward(x, &mut v, batch);
        self.advantage.forward(x, q, batch);
        for b in 0..batch {
            for qi in &mut q[b * a..(b + 1) * a] {
                *qi = *qi + v[b];
            }
        }
    }

    /// Routes `dq` into both branches; accumulates the input gradient into `dx`.
    pub fn backward(&mut self, x: &[S], dq: &[S], dx: &mut [S], batch: usize) {
        let a = self.n_actions;
        let mut dv = vec![S::zero(); batch];
        for b in 0..batch {
            let mut acc = S::zero();
            for &g in &dq[b * a..(b + 1) * a] {
                acc = acc + g;
            }
            dv[b] = acc;
        }
        self.value.backward(x, &dv, Some(dx), batch);
        self.advantage.backward(x, dq, Some(dx), batch);
    }

    pub fn adam(&mut self, hyper: &AdamHyper, lr: S) -> bool {
        self.value.adam(hyper, lr) & self.advantage.adam(hyper, lr)
    }

    pub fn param_count(&self) -> usize {
        self.value.param_count() + self.advantage.param_count()
    }
}

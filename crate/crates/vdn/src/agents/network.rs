use rand::Rng;

use super::spec::AgentSpec;
use crate::error::{Result, VdnError};
use crate::neuralcore::{
    relu, relu_backward, AdamHyper, DuelingHead, Linear, LstmCell, LstmState, LstmStepCache,
    Param, Scalar, Tensor,
};
use crate::util::seeded_rng;
use crate::{HIDDEN, NUM_AGENTS};

/// One agent's processing column: linear → ReLU → LSTM → ReLU → dueling.
/// Concatenation points widen the LSTM/head inputs; the layers themselves
/// don't know whose activations they receive.
#[derive(Debug, Clone)]
struct Tower<S> {
    fc1: Linear<S>,
    lstm: LstmCell<S>,
    head: DuelingHead<S>,
}

impl<S: Scalar> Tower<S> {
    fn new(rng: &mut impl Rng, spec: AgentSpec) -> Self {
        Tower {
            fc1: Linear::new(rng, spec.input_width(), HIDDEN),
            lstm: LstmCell::new(rng, spec.lstm_input_width(), HIDDEN),
            head: DuelingHead::new(rng, spec.head_input_width(), spec.head_actions()),
        }
    }

    fn visit(&self, f: &mut impl FnMut(&Param<S>)) {
        f(&self.fc1.w);
        f(&self.fc1.b);
        f(&self.lstm.w_ih);
        f(&self.lstm.w_hh);
        f(&self.lstm.b);
        f(&self.head.value.w);
        f(&self.head.value.b);
        f(&self.head.advantage.w);
        f(&self.head.advantage.b);
    }

    fn visit_mut(&mut self, f: &mut impl FnMut(&mut Param<S>)) {
        f(&mut self.fc1.w);
        f(&mut self.fc1.b);
        f(&mut self.lstm.w_ih);
        f(&mut self.lstm.w_hh);
        f(&mut self.lstm.b);
        f(&mut self.head.value.w);
        f(&mut self.head.value.b);
        f(&mut self.head.advantage.w);
        f(&mut self.head.advantage.b);
    }

    fn refresh(&mut self) {
        self.fc1.refresh();
        self.lstm.refresh();
        self.head.value.refresh();
        self.head.advantage.refresh();
    }

    fn adam(&mut self, hyper: &AdamHyper, lr: S) -> bool {
        self.fc1.adam(hyper, lr) & self.lstm.adam(hyper, lr) & self.head.adam(hyper, lr)
    }

    fn param_count(&self) -> usize {
        self.fc1.param_count() + self.lstm.param_count() + self.head.param_count()
    }
}

#[derive(Debug, Clone)]
enum Body<S> {
    /// Specs 1–7: one tower per agent, or a single aliased tower when
    /// weights are shared.
    PerAgent { towers: Vec<Tower<S>> },
    /// Specs 8–9: both observations encoded separately, concatenated into one
    /// recurrent trunk, finished by per-agent heads (8) or a joint head (9).
    Central { encoders: [Linear<S>; 2], lstm: LstmCell<S>, heads: Vec<DuelingHead<S>> },
}

/// A complete policy/value network for a two-agent team.
#[derive(Debug, Clone)]
pub struct PolicyNetwork<S> {
    pub spec: AgentSpec,
    body: Body<S>,
}

/// Recurrent state carried across steps: one [`LstmState`] per agent, or a
/// single one for the centralized trunks. Reset to zeros at episode start.
#[derive(Debug, Clone)]
pub struct JointHidden<S> {
    pub states: Vec<LstmState<S>>,
    pub batch: usize,
}

impl<S: Scalar> JointHidden<S> {
    pub fn zeros(spec: AgentSpec, batch: usize) -> Self {
        let n = if spec.centralized { 1 } else { NUM_AGENTS };
        JointHidden {
            states: (0..n).map(|_| LstmState::zeros(HIDDEN, batch)).collect(),
            batch,
        }
    }
}

/// Q values for one batched step: a length-8 row per agent for decomposed
/// architectures, or one length-64 joint row for the combinatorial baseline.
#[derive(Debug, Clone)]
pub enum QOut<S> {
    PerAgent([Tensor<S>; 2]),
    Joint(Tensor<S>),
}

impl<S: Scalar> QOut<S> {
    pub fn batch(&self) -> usize {
        match self {
            QOut::PerAgent([q, _]) => q.shape()[0],
            QOut::Joint(q) => q.shape()[0],
        }
    }

    pub fn all_finite(&self) -> bool {
        match self {
            QOut::PerAgent([a, b]) => a.all_finite() && b.all_finite(),
            QOut::Joint(q) => q.all_finite(),
        }
    }

    /// A zero-filled holder with this output's exact shapes (for gradients).
    pub fn zeros_like(&self) -> QOut<S> {
        match self {
            QOut::PerAgent([a, b]) => {
                QOut::PerAgent([Tensor::zeros(a.shape()), Tensor::zeros(b.shape())])
            }
            QOut::Joint(q) => QOut::Joint(Tensor::zeros(q.shape())),
        }
    }
}

/// Encoded inputs for one step: a `batch × input_width` row block per agent
/// slot (both slots are fed even to centralized trunks).
#[derive(Debug, Clone)]
pub struct StepInput<S> {
    pub rows: [Tensor<S>; 2],
    pub batch: usize,
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug)]
pub struct StepCache<S> {
    input: StepInput<S>,
    /// Post-ReLU LSTM inputs, one per LSTM instance.
    x: Vec<Tensor<S>>,
    /// Recurrent state *entering* this step.
    state_in: Vec<LstmState<S>>,
    lstm: Vec<LstmStepCache<S>>,
    /// Post-ReLU LSTM outputs.
    y: Vec<Tensor<S>>,
    /// High-comm head inputs (own ⊕ teammate); empty unless the spec has H.
    z: Vec<Tensor<S>>,
}

impl<S: Scalar> StepCache<S> {
    pub fn batch(&self) -> usize {
        self.input.batch
    }
}

/// Recurrent gradient flowing backward across step boundaries. Zeroed at the
/// segment's last step, which is what truncates BPTT there.
pub struct BpttCarry<S> {
    dh: Vec<Vec<S>>,
    dc: Vec<Vec<S>>,
}

impl<S: Scalar> BpttCarry<S> {
    pub fn zeros(spec: AgentSpec, batch: usize) -> Self {
        let n = if spec.centralized { 1 } else { NUM_AGENTS };
        BpttCarry {
            dh: (0..n).map(|_| vec![S::zero(); HIDDEN * batch]).collect(),
            dc: (0..n).map(|_| vec![S::zero(); HIDDEN * batch]).collect(),
        }
    }
}

/// `dst[own] += src[..h]`, `dst[1-own] += src[h..]`, per batch row.
fn split_rows_add<S: Scalar>(src: &[S], dst: &mut [Vec<S>; 2], own: usize, h: usize, batch: usize) {
    for b in 0..batch {
        let row = &src[b * 2 * h..(b + 1) * 2 * h];
        let d0 = &mut dst[own][b * h..(b + 1) * h];
        for (d, &v) in d0.iter_mut().zip(&row[..h]) {
            *d = *d + v;
        }
        let d1 = &mut dst[1 - own][b * h..(b + 1) * h];
        for (d, &v) in d1.iter_mut().zip(&row[h..]) {
            *d = *d + v;
        }
    }
}

/// Interleaves two `batch × h` blocks into `batch × 2h` rows, `a` first.
fn concat_rows<S: Scalar>(a: &[S], b_: &[S], dst: &mut [S], h: usize, batch: usize) {
    for b in 0..batch {
        dst[b * 2 * h..b * 2 * h + h].copy_from_slice(&a[b * h..(b + 1) * h]);
        dst[b * 2 * h + h..(b + 1) * 2 * h].copy_from_slice(&b_[b * h..(b + 1) * h]);
    }
}

impl<S: Scalar> PolicyNetwork<S> {
    /// Builds a preset architecture with seed-determined initial weights.
    pub fn build(spec: AgentSpec, seed: u64) -> Result<Self> {
        spec.ensure_preset()?;
        Ok(Self::build_unchecked(spec, seed))
    }

    /// Builds a non-preset flag combination (explicit override path).
    pub fn build_with_override(spec: AgentSpec, seed: u64) -> Result<Self> {
        spec.with_override()?;
        Ok(Self::build_unchecked(spec, seed))
    }

    fn build_unchecked(spec: AgentSpec, seed: u64) -> Self {
        let body = if spec.centralized {
            let mut rng = seeded_rng(seed, 0xc0);
            let encoders = [
                Linear::new(&mut rng, spec.input_width(), HIDDEN),
                Linear::new(&mut rng, spec.input_width(), HIDDEN),
            ];
            let lstm = LstmCell::new(&mut rng, spec.lstm_input_width(), HIDDEN);
            let n_heads = if spec.joint_head() { 1 } else { NUM_AGENTS };
            let heads = (0..n_heads)
                .map(|_| DuelingHead::new(&mut rng, spec.head_input_width(), spec.head_actions()))
                .collect();
            Body::Central { encoders, lstm, heads }
        } else {
            let n = if spec.shared_weights { 1 } else { NUM_AGENTS };
            let towers = (0..n)
                .map(|t| Tower::new(&mut seeded_rng(seed, 0x70 + t as u64), spec))
                .collect();
            Body::PerAgent { towers }
        };
        PolicyNetwork { spec, body }
    }

    /// Index into `towers` for an agent slot (0 when weights are shared).
    fn tower_of(&self, agent: usize) -> usize {
        match &self.body {
            Body::PerAgent { towers } if towers.len() == 1 => 0,
            _ => agent,
        }
    }

    /// Advances one step for the whole batch. Consumes the encoded input (it
    /// is retained inside the cache when one is requested).
    pub fn forward(
        &self,
        input: StepInput<S>,
        hidden: &mut JointHidden<S>,
        want_cache: bool,
    ) -> (QOut<S>, Option<StepCache<S>>) {
        debug_assert_eq!(input.batch, hidden.batch);
        match &self.body {
            Body::PerAgent { towers } => self.forward_per_agent(towers, input, hidden, want_cache),
            Body::Central { encoders, lstm, heads } => {
                self.forward_central(encoders, lstm, heads, input, hidden, want_cache)
            }
        }
    }

    fn forward_per_agent(
        &self,
        towers: &[Tower<S>],
        input: StepInput<S>,
        hidden: &mut JointHidden<S>,
        want_cache: bool,
    ) -> (QOut<S>, Option<StepCache<S>>) {
        let b = input.batch;
        let spec = self.spec;
        let lw = spec.lstm_input_width();
        let hw = spec.head_input_width();
        let na = spec.head_actions();

        // First layer for both agents (needed before any concatenation).
        let mut p: Vec<Tensor<S>> = Vec::with_capacity(2);
        for i in 0..NUM_AGENTS {
            let tower = &towers[self.tower_of(i)];
            let mut pi = Tensor::zeros(&[b, HIDDEN]);
            tower.fc1.forward(input.rows[i].data(), pi.data_mut(), b);
            p.push(pi);
        }

        // LSTM inputs: own-first concat for the low-level channel, then ReLU.
        let mut x: Vec<Tensor<S>> = Vec::with_capacity(2);
        for i in 0..NUM_AGENTS {
            let mut xi = Tensor::zeros(&[b, lw]);
            if spec.low_comm {
                let mut u = vec![S::zero(); b * lw];
                concat_rows(p[i].data(), p[1 - i].data(), &mut u, HIDDEN, b);
                relu(&u, xi.data_mut());
            } else {
                relu(p[i].data(), xi.data_mut());
            }
            x.push(xi);
        }

        // Recurrent step per agent; states advance in place afterwards.
        let mut state_in: Vec<LstmState<S>> = Vec::new();
        let mut lstm_caches: Vec<LstmStepCache<S>> = Vec::new();
        let mut y: Vec<Tensor<S>> = Vec::with_capacity(2);
        for i in 0..NUM_AGENTS {
            let tower = &towers[self.tower_of(i)];
            let mut out = LstmState::zeros(HIDDEN, b);
            let mut cache = want_cache.then(LstmStepCache::default);
            tower.lstm.forward(x[i].data(), &hidden.states[i], &mut out, cache.as_mut(), b);
            let mut yi = Tensor::zeros(&[b, HIDDEN]);
            relu(&out.h, yi.data_mut());
            y.push(yi);
            if want_cache {
                state_in.push(hidden.states[i].clone());
                lstm_caches.push(cache.unwrap());
            }
            hidden.states[i] = out;
        }

        // Heads, with the post-LSTM concat for the high-level channel.
        let mut z: Vec<Tensor<S>> = Vec::new();
        let mut q: Vec<Tensor<S>> = Vec::with_capacity(2);
        for i in 0..NUM_AGENTS {
            let tower = &towers[self.tower_of(i)];
            let mut qi = Tensor::zeros(&[b, na]);
            if spec.high_comm {
                let mut zi = Tensor::zeros(&[b, hw]);
                concat_rows(y[i].data(), y[1 - i].data(), zi.data_mut(), HIDDEN, b);
                tower.head.forward(zi.data(), qi.data_mut(), b);
                if want_cache {
                    z.push(zi);
                }
            } else {
                tower.head.forward(y[i].data(), qi.data_mut(), b);
            }
            q.push(qi);
        }

        let q1 = q.pop().unwrap();
        let q0 = q.pop().unwrap();
        let out = QOut::PerAgent([q0, q1]);
        let cache = want_cache.then(|| StepCache { input, x, state_in, lstm: lstm_caches, y, z });
        (out, cache)
    }

    fn forward_central(
        &self,
        encoders: &[Linear<S>; 2],
        lstm: &LstmCell<S>,
        heads: &[DuelingHead<S>],
        input: StepInput<S>,
        hidden: &mut JointHidden<S>,
        want_cache: bool,
    ) -> (QOut<S>, Option<StepCache<S>>) {
        let b = input.batch;
        let lw = self.spec.lstm_input_width();
        let na = self.spec.head_actions();

        let mut pa = vec![S::zero(); b * HIDDEN];
        let mut pb = vec![S::zero(); b * HIDDEN];
        encoders[0].forward(input.rows[0].data(), &mut pa, b);
        encoders[1].forward(input.rows[1].data(), &mut pb, b);
        let mut u = vec![S::zero(); b * lw];
        concat_rows(&pa, &pb, &mut u, HIDDEN, b);
        let mut x = Tensor::zeros(&[b, lw]);
        relu(&u, x.data_mut());

        let mut out_state = LstmState::zeros(HIDDEN, b);
        let mut cache = want_cache.then(LstmStepCache::default);
        lstm.forward(x.data(), &hidden.states[0], &mut out_state, cache.as_mut(), b);
        let mut y = Tensor::zeros(&[b, HIDDEN]);
        relu(&out_state.h, y.data_mut());

        let qout = if heads.len() == 1 {
            let mut qj = Tensor::zeros(&[b, na]);
            heads[0].forward(y.data(), qj.data_mut(), b);
            QOut::Joint(qj)
        } else {
            let mut q0 = Tensor::zeros(&[b, na]);
            let mut q1 = Tensor::zeros(&[b, na]);
            heads[0].forward(y.data(), q0.data_mut(), b);
            heads[1].forward(y.data(), q1.data_mut(), b);
            QOut::PerAgent([q0, q1])
        };

        let step_cache = want_cache.then(|| StepCache {
            input,
            x: vec![x],
            state_in: vec![hidden.states[0].clone()],
            lstm: vec![cache.unwrap()],
            y: vec![y],
            z: Vec::new(),
        });
        hidden.states[0] = out_state;
        (qout, step_cache)
    }

    /// One reverse BPTT step. `dq` holds ∂loss/∂Q for this step (dense shape,
    /// typically sparse content); gradients accumulate into the parameter
    /// stores and the recurrent carry.
    pub fn backward_step(&mut self, cache: &StepCache<S>, dq: &QOut<S>, carry: &mut BpttCarry<S>) {
        let b = cache.input.batch;
        let spec = self.spec;
        match &mut self.body {
            Body::PerAgent { towers } => {
                let shared = towers.len() == 1;
                let tower_of = |agent: usize| if shared { 0 } else { agent };
                let dqs = match dq {
                    QOut::PerAgent(qs) => qs,
                    QOut::Joint(_) => panic!("joint gradient on a per-agent network"),
                };

                // Heads → gradient on post-ReLU LSTM outputs.
                let mut dy: [Vec<S>; 2] =
                    [vec![S::zero(); b * HIDDEN], vec![S::zero(); b * HIDDEN]];
                for i in 0..NUM_AGENTS {
                    let hw = spec.head_input_width();
                    let mut dz = vec![S::zero(); b * hw];
                    let zi = if spec.high_comm { cache.z[i].data() } else { cache.y[i].data() };
                    towers[tower_of(i)].head.backward(zi, dqs[i].data(), &mut dz, b);
                    if spec.high_comm {
                        split_rows_add(&dz, &mut dy, i, HIDDEN, b);
                    } else {
                        for (d, v) in dy[i].iter_mut().zip(dz) {
                            *d = *d + v;
                        }
                    }
                }

                // LSTMs → gradient on their inputs + next carry.
                let mut dx: Vec<Vec<S>> = Vec::with_capacity(2);
                for i in 0..NUM_AGENTS {
                    let mut dh = std::mem::take(&mut carry.dh[i]);
                    relu_backward(cache.y[i].data(), &dy[i], &mut dh);
                    let dc = std::mem::take(&mut carry.dc[i]);
                    let mut dxi = vec![S::zero(); b * spec.lstm_input_width()];
                    let mut dhp = vec![S::zero(); b * HIDDEN];
                    let mut dcp = vec![S::zero(); b * HIDDEN];
                    towers[tower_of(i)].lstm.backward(
                        cache.x[i].data(),
                        &cache.state_in[i].h,
                        &cache.state_in[i].c,
                        &cache.lstm[i],
                        &dh,
                        &dc,
                        &mut dxi,
                        &mut dhp,
                        &mut dcp,
                        b,
                    );
                    carry.dh[i] = dhp;
                    carry.dc[i] = dcp;
                    dx.push(dxi);
                }

                // Undo the pre-LSTM ReLU (+ low-level concat) back to fc1.
                let mut dp: [Vec<S>; 2] =
                    [vec![S::zero(); b * HIDDEN], vec![S::zero(); b * HIDDEN]];
                for i in 0..NUM_AGENTS {
                    if spec.low_comm {
                        let mut du = vec![S::zero(); b * spec.lstm_input_width()];
                        relu_backward(cache.x[i].data(), &dx[i], &mut du);
                        split_rows_add(&du, &mut dp, i, HIDDEN, b);
                    } else {
                        relu_backward(cache.x[i].data(), &dx[i], &mut dp[i]);
                    }
                }
                for i in 0..NUM_AGENTS {
                    towers[tower_of(i)].fc1.backward(
                        cache.input.rows[i].data(),
                        &dp[i],
                        None,
                        b,
                    );
                }
            }
            Body::Central { encoders, lstm, heads } => {
                let mut dy = vec![S::zero(); b * HIDDEN];
                match (dq, heads.len()) {
                    (QOut::Joint(dqj), 1) => {
                        heads[0].backward(cache.y[0].data(), dqj.data(), &mut dy, b)
                    }
                    (QOut::PerAgent(dqs), 2) => {
                        for i in 0..NUM_AGENTS {
                            heads[i].backward(cache.y[0].data(), dqs[i].data(), &mut dy, b);
                        }
                    }
                    _ => panic!("gradient shape does not match the head layout"),
                }

                let mut dh = std::mem::take(&mut carry.dh[0]);
                relu_backward(cache.y[0].data(), &dy, &mut dh);
                let dc = std::mem::take(&mut carry.dc[0]);
                let lw = spec.lstm_input_width();
                let mut dx = vec![S::zero(); b * lw];
                let mut dhp = vec![S::zero(); b * HIDDEN];
                let mut dcp = vec![S::zero(); b * HIDDEN];
                lstm.backward(
                    cache.x[0].data(),
                    &cache.state_in[0].h,
                    &cache.state_in[0].c,
                    &cache.lstm[0],
                    &dh,
                    &dc,
                    &mut dx,
                    &mut dhp,
                    &mut dcp,
                    b,
                );
                carry.dh[0] = dhp;
                carry.dc[0] = dcp;

                let mut du = vec![S::zero(); b * lw];
                relu_backward(cache.x[0].data(), &dx, &mut du);
                let mut dpa = vec![S::zero(); b * HIDDEN];
                let mut dpb = vec![S::zero(); b * HIDDEN];
                for bi in 0..b {
                    let row = &du[bi * lw..(bi + 1) * lw];
                    dpa[bi * HIDDEN..(bi + 1) * HIDDEN].copy_from_slice(&row[..HIDDEN]);
                    dpb[bi * HIDDEN..(bi + 1) * HIDDEN].copy_from_slice(&row[HIDDEN..]);
                }
                encoders[0].backward(cache.input.rows[0].data(), &dpa, None, b);
                encoders[1].backward(cache.input.rows[1].data(), &dpb, None, b);
            }
        }
    }

    /// Truncated BPTT over one forward-cached segment: runs the steps in
    /// reverse with a zero incoming carry at the far end. `dqs[t]` must be
    /// ∂loss/∂Q for step `t`.
    pub fn backward_segment(&mut self, caches: &[StepCache<S>], dqs: &[QOut<S>]) {
        assert_eq!(caches.len(), dqs.len(), "one gradient per cached step");
        if caches.is_empty() {
            return;
        }
        let mut carry = BpttCarry::zeros(self.spec, caches[0].input.batch);
        for (cache, dq) in caches.iter().zip(dqs).rev() {
            self.backward_step(cache, dq, &mut carry);
        }
    }

    /// Visits every parameter in the declared (checkpoint) order.
    pub fn visit_params(&self, mut f: impl FnMut(&Param<S>)) {
        match &self.body {
            Body::PerAgent { towers } => {
                for t in towers {
                    t.visit(&mut f);
                }
            }
            Body::Central { encoders, lstm, heads } => {
                for e in encoders {
                    f(&e.w);
                    f(&e.b);
                }
                f(&lstm.w_ih);
                f(&lstm.w_hh);
                f(&lstm.b);
                for h in heads {
                    f(&h.value.w);
                    f(&h.value.b);
                    f(&h.advantage.w);
                    f(&h.advantage.b);
                }
            }
        }
    }

    /// Mutable variant of [`PolicyNetwork::visit_params`]; callers that write
    /// values must call [`PolicyNetwork::refresh`] afterwards.
    pub fn visit_params_mut(&mut self, mut f: impl FnMut(&mut Param<S>)) {
        match &mut self.body {
            Body::PerAgent { towers } => {
                for t in towers {
                    t.visit_mut(&mut f);
                }
            }
            Body::Central { encoders, lstm, heads } => {
                for e in encoders.iter_mut() {
                    f(&mut e.w);
                    f(&mut e.b);
                }
                f(&mut lstm.w_ih);
                f(&mut lstm.w_hh);
                f(&mut lstm.b);
                for h in heads {
                    f(&mut h.value.w);
                    f(&mut h.value.b);
                    f(&mut h.advantage.w);
                    f(&mut h.advantage.b);
                }
            }
        }
    }

    /// Rebuilds the transposed weight scratch after direct parameter writes.
    pub fn refresh(&mut self) {
        match &mut self.body {
            Body::PerAgent { towers } => towers.iter_mut().for_each(Tower::refresh),
            Body::Central { encoders, lstm, heads } => {
                encoders.iter_mut().for_each(Linear::refresh);
                lstm.refresh();
                for h in heads {
                    h.value.refresh();
                    h.advantage.refresh();
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match &self.body {
            Body::PerAgent { towers } => towers.iter().map(Tower::param_count).sum(),
            Body::Central { encoders, lstm, heads } => {
                encoders.iter().map(Linear::param_count).sum::<usize>()
                    + lstm.param_count()
                    + heads.iter().map(DuelingHead::param_count).sum::<usize>()
            }
        }
    }

    pub fn zero_grads(&mut self) {
        self.visit_params_mut(|p| p.zero_grad());
    }

    /// Applies one Adam update to every parameter. Returns false (leaving
    /// further diagnosis to the caller) if any updated value went non-finite.
    pub fn adam_step_all(&mut self, hyper: &AdamHyper, lr: S) -> bool {
        match &mut self.body {
            Body::PerAgent { towers } => towers
                .iter_mut()
                .fold(true, |ok, t| ok & t.adam(hyper, lr)),
            Body::Central { encoders, lstm, heads } => {
                let mut ok = true;
                for e in encoders.iter_mut() {
                    ok &= e.adam(hyper, lr);
                }
                ok &= lstm.adam(hyper, lr);
                for h in heads {
                    ok &= h.adam(hyper, lr);
                }
                ok
            }
        }
    }

    /// Scales every accumulated gradient by `k` (loss-normalization hook).
    pub fn scale_grads(&mut self, k: S) {
        self.visit_params_mut(|p| {
            for g in p.grad.data_mut() {
                *g = *g * k;
            }
        });
    }

    /// Flattens parameter values in declared order, widened to f64.
    pub fn export_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit_params(|p| {
            out.extend(p.value.data().iter().map(|v| v.to_f64().unwrap()));
        });
        out
    }

    /// Loads a flat parameter vector (declared order) and refreshes scratch.
    pub fn import_params(&mut self, vals: &[f64]) -> Result<()> {
        if vals.len() != self.param_count() {
            return Err(VdnError::Checkpoint(format!(
                "parameter count mismatch: network holds {}, data holds {}",
                self.param_count(),
                vals.len()
            )));
        }
        let mut at = 0usize;
        self.visit_params_mut(|p| {
            for v in p.value.data_mut() {
                *v = S::from(vals[at]).unwrap();
                at += 1;
            }
        });
        self.refresh();
        Ok(())
    }

    /// Exact f64 twin (same wiring, parameters widened) for gradient oracles.
    pub fn to_f64(&self) -> PolicyNetwork<f64> {
        let mut twin = PolicyNetwork::<f64>::build_unchecked(self.spec, 0);
        twin.import_params(&self.export_params()).expect("twin has identical layout");
        twin
    }
}

#[cfg(test)]
mod tests {
    use super::super::{encode_step, joint_q};
    use super::*;
    use crate::gridworld::{Action, Observation};
    use crate::neuralcore::max_rel_error;
    use crate::util::seeded_rng;
    use crate::NUM_ACTIONS;

    fn random_obs(rng: &mut impl Rng) -> Observation {
        let mut o = Observation::black();
        for v in o.0.iter_mut() {
            *v = rng.gen();
        }
        o
    }

    fn random_pairs(rng: &mut impl Rng, batch: usize) -> Vec<[Observation; 2]> {
        (0..batch).map(|_| [random_obs(rng), random_obs(rng)]).collect()
    }

    #[test]
    fn zero_parameters_give_zero_q() {
        for preset in [1u8, 5, 8, 9] {
            let spec = AgentSpec::preset(preset).unwrap();
            let mut net = PolicyNetwork::<f32>::build(spec, 3).unwrap();
            net.import_params(&vec![0.0; net.param_count()]).unwrap();
            let mut rng = seeded_rng(1, 1);
            let input = encode_step::<f32>(spec, &random_pairs(&mut rng, 2));
            let mut hidden = JointHidden::zeros(spec, 2);
            let (q, _) = net.forward(input, &mut hidden, false);
            match q {
                QOut::PerAgent(qs) => {
                    for t in &qs {
                        assert!(t.data().iter().all(|&v| v == 0.0), "preset {preset}");
                    }
                }
                QOut::Joint(t) => assert!(t.data().iter().all(|&v| v == 0.0)),
            }
        }
    }

    #[test]
    fn shared_weights_with_identical_observations_match() {
        let spec = AgentSpec::preset(3).unwrap();
        let net = PolicyNetwork::<f32>::build(spec, 9).unwrap();
        let mut rng = seeded_rng(2, 2);
        let o = random_obs(&mut rng);
        let input = encode_step::<f32>(spec, &[[o, o]]);
        let mut hidden = JointHidden::zeros(spec, 1);
        let (q, _) = net.forward(input, &mut hidden, false);
        match q {
            QOut::PerAgent([a, b]) => assert_eq!(a.data(), b.data()),
            _ => unreachable!(),
        }
    }

    #[test]
    fn hidden_state_isolation_without_channels() {
        // Specs 1–4: agent 1's Q depends only on its own history. Perturbing
        // agent 2's observation must leave agent 1's output bit-identical.
        for preset in [1u8, 2, 3, 4] {
            let spec = AgentSpec::preset(preset).unwrap();
            let net = PolicyNetwork::<f32>::build(spec, 17).unwrap();
            let mut rng = seeded_rng(3, preset as u64);
            let o1 = random_obs(&mut rng);
            let o2 = random_obs(&mut rng);
            let mut o2_perturbed = o2;
            o2_perturbed.0[40] ^= 0xff;

            let run = |mate: Observation| {
                let mut hidden = JointHidden::zeros(spec, 1);
                let (q, _) = net.forward(encode_step(spec, &[[o1, mate]]), &mut hidden, false);
                match q {
                    QOut::PerAgent([a, _]) => a.data().to_vec(),
                    _ => unreachable!(),
                }
            };
            assert_eq!(run(o2), run(o2_perturbed), "preset {preset}");
        }
    }

    #[test]
    fn low_comm_carries_teammate_information() {
        let spec = AgentSpec::preset(5).unwrap();
        let net = PolicyNetwork::<f32>::build(spec, 17).unwrap();
        let mut rng = seeded_rng(4, 4);
        let o1 = random_obs(&mut rng);
        let o2 = random_obs(&mut rng);
        let mut o2_perturbed = o2;
        for v in o2_perturbed.0.iter_mut() {
            *v = v.wrapping_add(97);
        }
        let run = |mate: Observation| {
            let mut hidden = JointHidden::zeros(spec, 1);
            let (q, _) = net.forward(encode_step(spec, &[[o1, mate]]), &mut hidden, false);
            match q {
                QOut::PerAgent([a, _]) => a.data().to_vec(),
                _ => unreachable!(),
            }
        };
        assert_ne!(run(o2), run(o2_perturbed), "channel must carry information");
    }

    #[test]
    fn shared_parameter_aliasing_propagates_updates() {
        // Spec 3: push a gradient through agent 1's path only; after Adam,
        // agent 2's forward output must change too.
        let spec = AgentSpec::preset(3).unwrap();
        let mut net = PolicyNetwork::<f32>::build(spec, 21).unwrap();
        let mut rng = seeded_rng(5, 5);
        let pairs = random_pairs(&mut rng, 1);
        let probe = |net: &PolicyNetwork<f32>| {
            let mut hidden = JointHidden::zeros(spec, 1);
            let (q, _) = net.forward(encode_step(spec, &pairs), &mut hidden, false);
            match q {
                QOut::PerAgent([_, b]) => b.data().to_vec(),
                _ => unreachable!(),
            }
        };
        let before = probe(&net);

        let mut hidden = JointHidden::zeros(spec, 1);
        let (q, cache) = net.forward(encode_step(spec, &pairs), &mut hidden, true);
        let mut dq = q.zeros_like();
        if let QOut::PerAgent([a, _]) = &mut dq {
            a.data_mut()[0] = 1.0; // gradient on agent 1's action 0 only
        }
        net.backward_segment(&[cache.unwrap()], &[dq]);
        assert!(net.adam_step_all(&AdamHyper::default(), 1e-2));
        assert_ne!(before, probe(&net));
    }

    #[test]
    fn import_export_round_trips_and_twin_matches() {
        let spec = AgentSpec::preset(7).unwrap();
        let net = PolicyNetwork::<f32>::build(spec, 31).unwrap();
        let vals = net.export_params();
        assert_eq!(vals.len(), net.param_count());
        let mut rng = seeded_rng(6, 6);
        let pairs = random_pairs(&mut rng, 3);

        let twin = net.to_f64();
        let mut h32 = JointHidden::zeros(spec, 3);
        let mut h64 = JointHidden::zeros(spec, 3);
        let (q32, _) = net.forward(encode_step::<f32>(spec, &pairs), &mut h32, false);
        let (q64, _) = twin.forward(encode_step::<f64>(spec, &pairs), &mut h64, false);
        match (q32, q64) {
            (QOut::PerAgent(a), QOut::PerAgent(b)) => {
                for (ta, tb) in a.iter().zip(b.iter()) {
                    for (&x, &y) in ta.data().iter().zip(tb.data()) {
                        assert!((x as f64 - y).abs() < 2e-5, "{x} vs {y}");
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    /// Finite-difference oracle for a short segment: loss = ½ Σ (q_sel − g)²
    /// against fixed targets g, exercising every wiring of the preset.
    fn fd_check(preset: u8, seed: u64, steps: usize, batch: usize) -> f64 {
        let spec = AgentSpec::preset(preset).unwrap();
        let mut net = PolicyNetwork::<f32>::build(spec, seed).unwrap().to_f64();
        let mut rng = seeded_rng(seed, 1000);
        let seq: Vec<Vec<[Observation; 2]>> =
            (0..steps).map(|_| random_pairs(&mut rng, batch)).collect();
        let actions: Vec<Vec<[Action; 2]>> = (0..steps)
            .map(|_| {
                (0..batch)
                    .map(|_| {
                        [
                            Action::from_index(rng.gen_range(0..NUM_ACTIONS)),
                            Action::from_index(rng.gen_range(0..NUM_ACTIONS)),
                        ]
                    })
                    .collect()
            })
            .collect();
        // Targets sit a small offset below the network's own predictions.
        // Central differences subtract two loss values that agree to ~|L|·ε
        // absolute; keeping |td| (and with it |L|) small keeps that noise
        // floor well below the analytic gradients being verified.
        let targets: Vec<Vec<f64>> = {
            let mut hidden = JointHidden::zeros(spec, batch);
            (0..steps)
                .map(|t| {
                    let (q, _) = net.forward(encode_step(spec, &seq[t]), &mut hidden, false);
                    (0..batch)
                        .map(|bi| joint_q(&q, actions[t][bi], bi) - rng.gen_range(0.02..0.08))
                        .collect()
                })
                .collect()
        };

        // Loss under the current parameters (pure function of the network).
        let loss = |net: &PolicyNetwork<f64>| -> f64 {
            let mut hidden = JointHidden::zeros(spec, batch);
            let mut total = 0.0;
            for t in 0..steps {
                let (q, _) = net.forward(encode_step(spec, &seq[t]), &mut hidden, false);
                for bi in 0..batch {
                    let sel = joint_q(&q, actions[t][bi], bi);
                    let td = sel - targets[t][bi];
                    total += 0.5 * td * td;
                }
            }
            total
        };

        // Analytic gradients via the cached backward pass.
        net.zero_grads();
        let mut hidden = JointHidden::zeros(spec, batch);
        let mut caches = Vec::new();
        let mut dqs = Vec::new();
        for t in 0..steps {
            let (q, cache) = net.forward(encode_step(spec, &seq[t]), &mut hidden, true);
            let mut dq = q.zeros_like();
            for bi in 0..batch {
                let td = joint_q(&q, actions[t][bi], bi) - targets[t][bi];
                match &mut dq {
                    QOut::PerAgent(qs) => {
                        for i in 0..NUM_AGENTS {
                            let col = actions[t][bi][i].index();
                            qs[i].data_mut()[bi * NUM_ACTIONS + col] += td;
                        }
                    }
                    QOut::Joint(qj) => {
                        let col = actions[t][bi][0].index() * NUM_ACTIONS
                            + actions[t][bi][1].index();
                        qj.data_mut()[bi * 64 + col] += td;
                    }
                }
            }
            caches.push(cache.unwrap());
            dqs.push(dq);
        }
        net.backward_segment(&caches, &dqs);

        let analytic: Vec<f64> = {
            let mut g = Vec::new();
            net.visit_params(|p| g.extend_from_slice(p.grad.data()));
            g
        };

        // Central finite differences over a strided subset of parameters.
        let h = 1e-5;
        let base = net.export_params();
        let stride = (base.len() / 60).max(1);
        let mut numeric = vec![f64::NAN; base.len()];
        for k in (0..base.len()).step_by(stride) {
            let mut plus = base.clone();
            plus[k] += h;
            net.import_params(&plus).unwrap();
            let lp = loss(&net);
            let mut minus = base.clone();
            minus[k] -= h;
            net.import_params(&minus).unwrap();
            let lm = loss(&net);
            numeric[k] = (lp - lm) / (2.0 * h);
        }
        net.import_params(&base).unwrap();

        let mut worst = 0.0f64;
        for k in (0..base.len()).step_by(stride) {
            worst = worst.max(max_rel_error(&[analytic[k]], &[numeric[k]]));
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences_low_comm() {
        let err = fd_check(5, 13, 3, 2);
        assert!(err < 1e-5, "max rel err {err}");
    }

    #[test]
    fn gradients_match_finite_differences_high_comm_both() {
        let err = fd_check(7, 14, 3, 2);
        assert!(err < 1e-5, "max rel err {err}");
    }

    #[test]
    fn gradients_match_finite_differences_central_heads() {
        let err = fd_check(8, 15, 3, 2);
        assert!(err < 1e-5, "max rel err {err}");
    }

    #[test]
    fn gradients_match_finite_differences_joint_head() {
        let err = fd_check(9, 16, 3, 2);
        assert!(err < 1e-5, "max rel err {err}");
    }

    #[test]
    fn truncation_ignores_pre_segment_history() {
        // Feeding different *pre-segment* hidden states must not change the
        // gradients when the cached initial state for the segment is fixed.
        let spec = AgentSpec::preset(3).unwrap();
        let mut net = PolicyNetwork::<f32>::build(spec, 41).unwrap();
        let mut rng = seeded_rng(7, 7);
        let pairs = random_pairs(&mut rng, 2);

        let grads_with_initial = |net: &mut PolicyNetwork<f32>, h0: JointHidden<f32>| {
            net.zero_grads();
            let mut hidden = h0;
            let (q, cache) = net.forward(encode_step(spec, &pairs), &mut hidden, true);
            let mut dq = q.zeros_like();
            if let QOut::PerAgent(qs) = &mut dq {
                qs[0].data_mut()[0] = 1.0;
                qs[1].data_mut()[3] = 0.5;
            }
            net.backward_segment(&[cache.unwrap()], &[dq]);
            let mut g = Vec::new();
            net.visit_params(|p| g.extend_from_slice(p.grad.data()));
            g
        };

        let zero_state = JointHidden::zeros(spec, 2);
        let a = grads_with_initial(&mut net, zero_state.clone());
        let b = grads_with_initial(&mut net, zero_state);
        assert_eq!(a, b, "same cached initial state ⇒ identical grads");
    }
}

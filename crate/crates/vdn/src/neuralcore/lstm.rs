use super::adam::{adam_step, AdamHyper};
use super::gemm::{accum_mat, backward_dw, backward_dw_only, backward_dx, forward_mat, transpose_into};
use super::{init_uniform, Param, Scalar, Tensor};

/// Recurrent state of one LSTM chain, batch-major: `h`/`c` are `batch × H`.
#[derive(Debug, Clone)]
pub struct LstmState<S> {
    pub h: Vec<S>,
    pub c: Vec<S>,
}

impl<S: Scalar> LstmState<S> {
    pub fn zeros(hidden: usize, batch: usize) -> Self {
        LstmState { h: vec![S::zero(); hidden * batch], c: vec![S::zero(); hidden * batch] }
    }
}

/// Activations cached by one forward step for BPTT: post-nonlinearity gates
/// in `[i f g o]` order (`batch × 4H`) and `tanh(c_new)` (`batch × H`).
#[derive(Debug, Clone, Default)]
pub struct LstmStepCache<S> {
    pub gates: Vec<S>,
    pub tanh_c: Vec<S>,
}

/// Standard LSTM cell (input/forget/candidate/output gates, no peepholes).
///
/// Gate pre-activations are `a = W_ih·x + W_hh·h_prev + b` with the four
/// gates stacked along the output dimension in `[i f g o]` order. The forget
/// block of the bias is initialized to 1.
#[derive(Debug, Clone)]
pub struct LstmCell<S> {
    pub w_ih: Param<S>, // [4H × I]
    pub w_hh: Param<S>, // [4H × H]
    pub b: Param<S>,    // [4H]
    wt_ih: Vec<S>,
    wt_hh: Vec<S>,
    pub i_dim: usize,
    pub hidden: usize,
}

fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).fast_exp())
}

/// `tanh` routed through [`Scalar::fast_exp`] so the f32 gate loop vectorizes.
fn tanh_fast<S: Scalar>(x: S) -> S {
    let two = S::one() + S::one();
    two / (S::one() + (-(two * x)).fast_exp()) - S::one()
}

impl<S: Scalar> LstmCell<S> {
    pub fn new(rng: &mut impl rand::Rng, i_dim: usize, hidden: usize) -> Self {
        let rows = 4 * hidden;
        let w_ih = Tensor::from_vec(&[rows, i_dim], init_uniform(rng, i_dim, rows * i_dim))
            .expect("shape matches");
        let w_hh = Tensor::from_vec(&[rows, hidden], init_uniform(rng, hidden, rows * hidden))
            .expect("shape matches");
        let mut b = Tensor::zeros(&[rows]);
        // Forget-gate bias starts at 1 so early training does not flush the cell.
        for j in hidden..2 * hidden {
            b.data_mut()[j] = S::one();
        }
        let mut cell = LstmCell {
            w_ih: Param::new(w_ih),
            w_hh: Param::new(w_hh),
            b: Param::new(b),
            wt_ih: vec![S::zero(); rows * i_dim],
            wt_hh: vec![S::zero(); rows * hidden],
            i_dim,
            hidden,
        };
        cell.refresh();
        cell
    }

    /// Rebuilds transposed weight copies; call after mutating weights directly.
    pub fn refresh(&mut self) {
        transpose_into(self.w_ih.value.data(), &mut self.wt_ih, self.i_dim, 4 * self.hidden);
        transpose_into(self.w_hh.value.data(), &mut self.wt_hh, self.hidden, 4 * self.hidden);
    }

    /// One batched step: reads `state`, writes the successor into `out`, and
    /// (if given) fills `cache` for the backward pass.
    pub fn forward(
        &self,
        x: &[S],
        state: &LstmState<S>,
        out: &mut LstmState<S>,
        mut cache: Option<&mut LstmStepCache<S>>,
        batch: usize,
    ) {
        let hd = self.hidden;
        let rows = 4 * hd;
        let mut a = vec![S::zero(); rows * batch];
        forward_mat(&self.wt_ih, self.b.value.data(), x, &mut a, self.i_dim, rows, batch);
        accum_mat(&self.wt_hh, &state.h, &mut a, hd, rows, batch);

        if let Some(c) = cache.as_deref_mut() {
            c.gates.resize(rows * batch, S::zero());
            c.tanh_c.resize(hd * batch, S::zero());
        }
        for bi in 0..batch {
            let ar = &mut a[bi * rows..(bi + 1) * rows];
            for j in 0..hd {
                ar[j] = sigmoid(ar[j]); // input gate
                ar[hd + j] = sigmoid(ar[hd + j]); // forget gate
                ar[2 * hd + j] = tanh_fast(ar[2 * hd + j]); // candidate
                ar[3 * hd + j] = sigmoid(ar[3 * hd + j]); // output gate
            }
            let c_prev = &state.c[bi * hd..(bi + 1) * hd];
            let h_out = &mut out.h[bi * hd..(bi + 1) * hd];
            let c_out = &mut out.c[bi * hd..(bi + 1) * hd];
            for j in 0..hd {
                let i_g = ar[j];
                let f_g = ar[hd + j];
                let g_g = ar[2 * hd + j];
                let o_g = ar[3 * hd + j];
                let c_new = f_g * c_prev[j] + i_g * g_g;
                let t = tanh_fast(c_new);
                c_out[j] = c_new;
                h_out[j] = o_g * t;
                if let Some(cc) = cache.as_deref_mut() {
                    cc.tanh_c[bi * hd + j] = t;
                }
            }
            if let Some(cc) = cache.as_deref_mut() {
                cc.gates[bi * rows..(bi + 1) * rows].copy_from_slice(ar);
            }
        }
    }

    /// BPTT step. `dh`/`dc` are the total gradients on this step's outputs;
    /// gradients flow into the weight accumulators and are *added* to `dx`,
    /// `dh_prev` and `dc_prev` (callers zero them per step).
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &mut self,
        x: &[S],
        h_prev: &[S],
        c_prev: &[S],
        cache: &LstmStepCache<S>,
        dh: &[S],
        dc: &[S],
        dx: &mut [S],
        dh_prev: &mut [S],
        dc_prev: &mut [S],
        batch: usize,
    ) {
        let hd = self.hidden;
        let rows = 4 * hd;
        let one = S::one();
        let mut da = vec![S::zero(); rows * batch];
        for bi in 0..batch {
            let g = &cache.gates[bi * rows..(bi + 1) * rows];
            let tc = &cache.tanh_c[bi * hd..(bi + 1) * hd];
            let dhr = &dh[bi * hd..(bi + 1) * hd];
            let dcr = &dc[bi * hd..(bi + 1) * hd];
            let cpr = &c_prev[bi * hd..(bi + 1) * hd];
            let dar = &mut da[bi * rows..(bi + 1) * rows];
            let dcp = &mut dc_prev[bi * hd..(bi + 1) * hd];
            for j in 0..hd {
                let i_g = g[j];
                let f_g = g[hd + j];
                let g_g = g[2 * hd + j];
                let o_g = g[3 * hd + j];
                let t = tc[j];
                let d_o = dhr[j] * t;
                let dc_tot = dcr[j] + dhr[j] * o_g * (one - t * t);
                let d_f = dc_tot * cpr[j];
                let d_i = dc_tot * g_g;
                let d_g = dc_tot * i_g;
                dcp[j] = dcp[j] + dc_tot * f_g;
                dar[j] = d_i * i_g * (one - i_g);
                dar[hd + j] = d_f * f_g * (one - f_g);
                dar[2 * hd + j] = d_g * (one - g_g * g_g);
                dar[3 * hd + j] = d_o * o_g * (one - o_g);
            }
        }
        backward_dw(
            self.w_ih.grad.data_mut(),
            self.b.grad.data_mut(),
            &da,
            x,
            self.i_dim,
            rows,
            batch,
        );
        backward_dw_only(self.w_hh.grad.data_mut(), &da, h_prev, hd, rows, batch);
        backward_dx(self.w_ih.value.data(), &da, dx, self.i_dim, rows, batch);
        backward_dx(self.w_hh.value.data(), &da, dh_prev, hd, rows, batch);
    }

    pub fn adam(&mut self, hyper: &AdamHyper, lr: S) -> bool {
        let ok = adam_step(&mut self.w_ih, hyper, lr)
            & adam_step(&mut self.w_hh, hyper, lr)
            & adam_step(&mut self.b, hyper, lr);
        self.refresh();
        ok
    }

    pub fn param_count(&self) -> usize {
        self.w_ih.value.len() + self.w_hh.value.len() + self.b.value.len()
    }
}

/// `lstm_step` in functional form: advances `state` by one step and returns
/// the new state, without keeping a cache.
pub fn lstm_step<S: Scalar>(cell: &LstmCell<S>, x: &[S], state: &LstmState<S>) -> LstmState<S> {
    let mut out = LstmState::zeros(cell.hidden, 1);
    cell.forward(x, state, &mut out, None, 1);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::seeded_rng;
    use rand::Rng;

    fn zeroed_cell(i_dim: usize, hidden: usize) -> LstmCell<f64> {
        let mut rng = seeded_rng(0, 0);
        let mut cell = LstmCell::<f64>::new(&mut rng, i_dim, hidden);
        cell.w_ih.value.fill(0.0);
        cell.w_hh.value.fill(0.0);
        cell.b.value.fill(0.0);
        cell.refresh();
        cell
    }

    #[test]
    fn zero_parameters_zero_state_give_zero_outputs() {
        let cell = zeroed_cell(3, 4);
        let state = LstmState::zeros(4, 1);
        let out = lstm_step(&cell, &[0.7, -2.0, 1.1], &state);
        assert!(out.h.iter().all(|&v| v == 0.0));
        assert!(out.c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_open_input_closed_preserves_cell() {
        let mut cell = zeroed_cell(2, 3);
        // Forget bias +30 → f ≈ 1; input bias −30 → i ≈ 0.
        for j in 0..3 {
            cell.b.value.data_mut()[j] = -30.0;
            cell.b.value.data_mut()[3 + j] = 30.0;
        }
        cell.refresh();
        let mut state = LstmState::zeros(3, 1);
        state.c.copy_from_slice(&[0.3, -1.2, 0.9]);
        let out = lstm_step(&cell, &[5.0, -5.0], &state);
        for j in 0..3 {
            assert!((out.c[j] - state.c[j]).abs() < 1e-9, "cell drifted: {:?}", out.c);
        }
    }

    #[test]
    fn random_step_matches_equation_by_equation_oracle() {
        // Seed 11: f32 cell against an independent f64 implementation of the
        // gate equations.
        let mut rng = seeded_rng(11, 0);
        let cell = LstmCell::<f32>::new(&mut rng, 5, 4);
        let x: Vec<f32> = (0..5).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let mut state = LstmState::zeros(4, 1);
        for v in state.h.iter_mut().chain(state.c.iter_mut()) {
            *v = rng.gen_range(-1.0..1.0);
        }
        let out = lstm_step(&cell, &x, &state);

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for j in 0..4 {
            let mut pre = [0.0f64; 4]; // i, f, g, o rows for unit j
            for (k, row) in [(0, j), (1, 4 + j), (2, 8 + j), (3, 12 + j)] {
                let mut acc = cell.b.value.data()[row] as f64;
                for i in 0..5 {
                    acc += cell.w_ih.value.data()[row * 5 + i] as f64 * x[i] as f64;
                }
                for hh in 0..4 {
                    acc += cell.w_hh.value.data()[row * 4 + hh] as f64 * state.h[hh] as f64;
                }
                pre[k] = acc;
            }
            let (i_g, f_g, g_g, o_g) = (sig(pre[0]), sig(pre[1]), pre[2].tanh(), sig(pre[3]));
            let c_new = f_g * state.c[j] as f64 + i_g * g_g;
            let h_new = o_g * c_new.tanh();
            let rel_c = (out.c[j] as f64 - c_new).abs() / c_new.abs().max(1e-12);
            let rel_h = (out.h[j] as f64 - h_new).abs() / h_new.abs().max(1e-12);
            assert!(rel_c < 1e-6 && rel_h < 1e-6, "unit {j}: {rel_c} {rel_h}");
        }
    }

    #[test]
    fn single_step_backward_matches_finite_differences() {
        let mut rng = seeded_rng(13, 5);
        let mut cell = LstmCell::<f64>::new(&mut rng, 3, 4);
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut state = LstmState::zeros(4, 1);
        for v in state.h.iter_mut().chain(state.c.iter_mut()) {
            *v = rng.gen_range(-1.0..1.0);
        }
        let dh: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();

        // Loss = Σ dh ⊙ h_out.
        let eval = |cell: &LstmCell<f64>, x: &[f64], st: &LstmState<f64>| -> f64 {
            let out = lstm_step(cell, x, st);
            out.h.iter().zip(&dh).map(|(a, b)| a * b).sum()
        };

        let mut out = LstmState::zeros(4, 1);
        let mut cache = LstmStepCache::default();
        cell.forward(&x, &state, &mut out, Some(&mut cache), 1);
        let mut dx = vec![0.0; 3];
        let mut dh_prev = vec![0.0; 4];
        let mut dc_prev = vec![0.0; 4];
        let dc = vec![0.0; 4];
        let (h_prev, c_prev) = (state.h.clone(), state.c.clone());
        cell.backward(&x, &h_prev, &c_prev, &cache, &dh, &dc, &mut dx, &mut dh_prev, &mut dc_prev, 1);

        let h = 1e-6;
        // Weights.
        for p in 0..cell.w_ih.value.len() {
            let mut up = cell.clone();
            up.w_ih.value.data_mut()[p] += h;
            up.refresh();
            let mut dn = cell.clone();
            dn.w_ih.value.data_mut()[p] -= h;
            dn.refresh();
            let numeric = (eval(&up, &x, &state) - eval(&dn, &x, &state)) / (2.0 * h);
            assert!(
                (cell.w_ih.grad.data()[p] - numeric).abs() < 1e-7,
                "w_ih[{p}]: {} vs {numeric}",
                cell.w_ih.grad.data()[p]
            );
        }
        // Inputs and previous state.
        for i in 0..3 {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let numeric = (eval(&cell, &xp, &state) - eval(&cell, &xm, &state)) / (2.0 * h);
            assert!((dx[i] - numeric).abs() < 1e-7);
        }
        for j in 0..4 {
            let mut sp = state.clone();
            sp.h[j] += h;
            let mut sm = state.clone();
            sm.h[j] -= h;
            let numeric = (eval(&cell, &x, &sp) - eval(&cell, &x, &sm)) / (2.0 * h);
            assert!((dh_prev[j] - numeric).abs() < 1e-7);

            let mut sp = state.clone();
            sp.c[j] += h;
            let mut sm = state.clone();
            sm.c[j] -= h;
            let numeric = (eval(&cell, &x, &sp) - eval(&cell, &x, &sm)) / (2.0 * h);
            assert!((dc_prev[j] - numeric).abs() < 1e-7);
        }
    }
}

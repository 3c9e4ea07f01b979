use super::adam::{adam_step, AdamHyper};
use super::gemm::{backward_dw, backward_dx, forward_mat, transpose_into};
use super::{init_uniform, Param, Scalar, Tensor};

/// Fully connected affine layer `y = W·x + b` with batched forward/backward.
///
/// `w` is canonical `[out × in]`; `wt` is its transposed copy used by the
/// forward kernel and refreshed whenever the weights change.
#[derive(Debug, Clone)]
pub struct Linear<S> {
    pub w: Param<S>,
    pub b: Param<S>,
    wt: Vec<S>,
    pub i_dim: usize,
    pub o_dim: usize,
}

impl<S: Scalar> Linear<S> {
    /// Fresh layer with uniform `±1/sqrt(in)` weights and zero bias.
    pub fn new(rng: &mut impl rand::Rng, i_dim: usize, o_dim: usize) -> Self {
        let w = Tensor::from_vec(&[o_dim, i_dim], init_uniform(rng, i_dim, i_dim * o_dim))
            .expect("shape matches generated data");
        let b = Tensor::zeros(&[o_dim]);
        let mut layer =
            Linear { w: Param::new(w), b: Param::new(b), wt: vec![S::zero(); i_dim * o_dim], i_dim, o_dim };
        layer.refresh();
        layer
    }

    /// Rebuilds the transposed weight copy; call after mutating `w` directly.
    pub fn refresh(&mut self) {
        transpose_into(self.w.value.data(), &mut self.wt, self.i_dim, self.o_dim);
    }

    /// `y[b,:] = W·x[b,:] + b` for every row of a `batch × in` input.
    pub fn forward(&self, x: &[S], y: &mut [S], batch: usize) {
        forward_mat(&self.wt, self.b.value.data(), x, y, self.i_dim, self.o_dim, batch);
    }

    /// Accumulates weight/bias gradients from `dy` and the cached input `x`;
    /// optionally accumulates the input gradient into `dx`.
    pub fn backward(&mut self, x: &[S], dy: &[S], dx: Option<&mut [S]>, batch: usize) {
        backward_dw(
            self.w.grad.data_mut(),
            self.b.grad.data_mut(),
            dy,
            x,
            self.i_dim,
            self.o_dim,
            batch,
        );
        if let Some(dx) = dx {
            backward_dx(self.w.value.data(), dy, dx, self.i_dim, self.o_dim, batch);
        }
    }

    /// Adam update on both params; refreshes the transposed copy. Returns
    /// false if any gradient was non-finite.
    pub fn adam(&mut self, hyper: &AdamHyper, lr: S) -> bool {
        let ok = adam_step(&mut self.w, hyper, lr) & adam_step(&mut self.b, hyper, lr);
        self.refresh();
        ok
    }

    pub fn param_count(&self) -> usize {
        self.w.value.len() + self.b.value.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::seeded_rng;

    fn set_weights(layer: &mut Linear<f64>, w: &[f64], b: &[f64]) {
        layer.w.value.data_mut().copy_from_slice(w);
        layer.b.value.data_mut().copy_from_slice(b);
        layer.refresh();
    }

    #[test]
    fn identity_weights_pass_input_through() {
        let mut rng = seeded_rng(0, 0);
        let mut layer = Linear::<f64>::new(&mut rng, 3, 3);
        set_weights(&mut layer, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], &[0.0; 3]);
        let x = [0.3, -1.2, 4.5];
        let mut y = [0.0; 3];
        layer.forward(&x, &mut y, 1);
        assert_eq!(y, x);
    }

    #[test]
    fn zero_input_returns_bias() {
        let mut rng = seeded_rng(0, 1);
        let mut layer = Linear::<f64>::new(&mut rng, 4, 2);
        layer.b.value.data_mut().copy_from_slice(&[0.7, -0.2]);
        let x = [0.0; 4];
        let mut y = [0.0; 2];
        layer.forward(&x, &mut y, 1);
        assert_eq!(y, [0.7, -0.2]);
    }

    #[test]
    fn random_layer_matches_double_precision_matmul_oracle() {
        // Seed 7, sizes 5 → 3: forward must agree with an independent
        // double-precision matrix multiply to tight relative error.
        use rand::Rng;
        let mut rng = seeded_rng(7, 0);
        let layer = Linear::<f32>::new(&mut rng, 5, 3);
        let x: Vec<f32> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut y = [0.0f32; 3];
        layer.forward(&x, &mut y, 1);

        for o in 0..3 {
            let mut oracle = layer.b.value.data()[o] as f64;
            for i in 0..5 {
                oracle += layer.w.value.data()[o * 5 + i] as f64 * x[i] as f64;
            }
            let rel = (y[o] as f64 - oracle).abs() / oracle.abs().max(1e-12);
            assert!(rel < 1e-6, "output {o}: got {}, oracle {oracle}", y[o]);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        use rand::Rng;
        let mut rng = seeded_rng(21, 0);
        let mut layer = Linear::<f64>::new(&mut rng, 4, 3);
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dy: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();

        // Loss L = Σ dy ⊙ y — analytic grads.
        let mut dx = vec![0.0; 8];
        layer.backward(&x, &dy, Some(&mut dx), 2);

        let eval = |layer: &Linear<f64>, x: &[f64]| -> f64 {
            let mut y = vec![0.0; 6];
            layer.forward(x, &mut y, 2);
            y.iter().zip(&dy).map(|(a, b)| a * b).sum()
        };

        let h = 1e-6;
        for p in 0..12 {
            let mut up = layer.clone();
            up.w.value.data_mut()[p] += h;
            up.refresh();
            let mut dn = layer.clone();
            dn.w.value.data_mut()[p] -= h;
            dn.refresh();
            let numeric = (eval(&up, &x) - eval(&dn, &x)) / (2.0 * h);
            assert!((layer.w.grad.data()[p] - numeric).abs() < 1e-7);
        }
        for i in 0..8 {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let numeric = (eval(&layer, &xp) - eval(&layer, &xm)) / (2.0 * h);
            assert!((dx[i] - numeric).abs() < 1e-7);
        }
    }
}

//! Minimal dense neural-network engine with hand-derived gradients.
//!
//! Everything is generic over [`Scalar`]: training runs in `f32`, while a
//! `f64` instantiation of the same code paths exists solely so gradient
//! checking can compare analytic BPTT gradients against central finite
//! differences with tight tolerances.
//!
//! Layers follow one convention throughout: weight matrices are stored
//! row-major as `[out × in]` (the declared checkpoint order) together with a
//! transposed copy `[in × out]` that the batched forward kernel streams over.
//! The transposed copy is a derived cache — anything that mutates a weight
//! value must go through the layer's `refresh()`/`adam()` methods.

mod adam;
mod dueling;
mod fd;
mod gemm;
mod linear;
mod lstm;

pub use adam::{adam_step, AdamHyper};
pub use dueling::{dueling_combine, DuelingHead};
pub use fd::max_rel_error;
pub use gemm::{accum_mat, axpy, backward_dw, backward_dw_only, backward_dx, forward_mat, transpose_into};
pub use linear::Linear;
pub use lstm::{lstm_step, LstmCell, LstmState, LstmStepCache};

use crate::error::{Result, VdnError};

/// Floating-point element type for network arithmetic. `f32` for training,
/// `f64` for the gradient-checking evaluation mode.
pub trait Scalar:
    num_traits::Float + std::fmt::Debug + std::fmt::Display + std::iter::Sum + Default + Send + Sync + 'static
{
    /// `exp(x)`, allowed to trade up to ~3e-7 relative error for speed.
    /// The `f32` path uses a branch-free polynomial that vectorizes inside
    /// the LSTM gate loop; `f64` (the gradient-check mode) stays exact.
    fn fast_exp(self) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn fast_exp(self) -> Self {
        exp_approx_f32(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn fast_exp(self) -> Self {
        self.exp()
    }
}

/// Branch-free single-precision `exp`: range-reduce by powers of two, degree-5
/// polynomial on the residual, scale via exponent-bit assembly. Max relative
/// error ≈ 2e-7 over the clamped domain; inputs far outside it saturate to
/// 0 / exp(±87.3).
#[inline]
pub fn exp_approx_f32(x: f32) -> f32 {
    const LOG2E: f32 = std::f32::consts::LOG2_E;
    const LN2_HI: f32 = 0.693_359_375;
    const LN2_LO: f32 = -2.121_944_4e-4;
    // Round-to-nearest via the 1.5·2²³ shift (valid since |k| < 2²²).
    const SHIFT: f32 = 12_582_912.0;
    let x = x.min(87.3).max(-87.3);
    let k = (x * LOG2E + SHIFT) - SHIFT;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    // exp(r) ≈ 1 + r + r²·P(r) on [-ln2/2, ln2/2] (Cephes coefficients).
    let mut p = 1.987_569_2e-4f32;
    p = p * r + 1.398_199_9e-3;
    p = p * r + 8.333_452e-3;
    p = p * r + 4.166_579_6e-2;
    p = p * r + 1.666_666_6e-1;
    p = p * r + 0.5;
    let poly = r * r * p + r + 1.0;
    let scale = f32::from_bits((((k as i32) + 127) << 23) as u32);
    poly * scale
}

/// Converts an `f64` literal into the active scalar type.
pub fn s<S: Scalar>(x: f64) -> S {
    S::from(x).expect("f64 converts into every Scalar")
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![S::zero(); len] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(VdnError::Config(format!(
                "tensor shape {:?} wants {} values, got {}",
                shape,
                expect,
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn fill(&mut self, v: S) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// A learnable tensor bundled with its gradient accumulator and Adam state.
#[derive(Debug, Clone)]
pub struct Param<S> {
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
    pub adam_m: Tensor<S>,
    pub adam_v: Tensor<S>,
    pub adam_t: u64,
}

impl<S: Scalar> Param<S> {
    pub fn new(value: Tensor<S>) -> Self {
        let shape = value.shape().to_vec();
        Param {
            value,
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            adam_t: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::zero());
    }
}

/// Elementwise ReLU.
pub fn relu<S: Scalar>(x: &[S], y: &mut [S]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = if xi > S::zero() { xi } else { S::zero() };
    }
}

/// ReLU backward: `dx[i] += dy[i]` wherever the cached output was positive.
/// The mask comes from the post-activation value, which matches the forward
/// subgradient choice at exactly zero.
pub fn relu_backward<S: Scalar>(y_out: &[S], dy: &[S], dx: &mut [S]) {
    for ((dxi, &yi), &dyi) in dx.iter_mut().zip(y_out).zip(dy) {
        if yi > S::zero() {
            *dxi = *dxi + dyi;
        }
    }
}

/// Draws uniform values in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`, the crate's
/// initialization for every weight matrix.
pub fn init_uniform<S: Scalar>(rng: &mut impl rand::Rng, fan_in: usize, n: usize) -> Vec<S> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| s::<S>(rng.gen_range(-bound..=bound))).collect()
}

//! Batched dense kernels shared by every layer.
//!
//! All three kernels are written as scaled row accumulations (`axpy`) over
//! contiguous slices: elementwise loops with no cross-lane reduction, which
//! LLVM vectorizes cleanly. Zero coefficients are skipped — observations and
//! post-ReLU activations are sparse, and the TD-error upstream gradient is
//! zero everywhere except the chosen actions.

use super::Scalar;

/// `y += a * x` over equal-length slices.
#[inline]
pub fn axpy<S: Scalar>(y: &mut [S], a: S, x: &[S]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = xi.mul_add(a, *yi);
    }
}

/// Batched affine forward `y[b,:] = bias + x[b,:] · Wᵀ`, with the weights
/// given in transposed layout `wt[in × out]`.
pub fn forward_mat<S: Scalar>(
    wt: &[S],
    bias: &[S],
    x: &[S],
    y: &mut [S],
    i_dim: usize,
    o_dim: usize,
    batch: usize,
) {
    debug_assert_eq!(bias.len(), o_dim);
    debug_assert_eq!(y.len(), o_dim * batch);
    for b in 0..batch {
        y[b * o_dim..(b + 1) * o_dim].copy_from_slice(bias);
    }
    accum_mat(wt, x, y, i_dim, o_dim, batch);
}

/// Like [`forward_mat`] but accumulates into `y` instead of re-initializing:
/// `y[b,:] += x[b,:] · Wᵀ`.
pub fn accum_mat<S: Scalar>(wt: &[S], x: &[S], y: &mut [S], i_dim: usize, o_dim: usize, batch: usize) {
    debug_assert_eq!(wt.len(), i_dim * o_dim);
    debug_assert_eq!(x.len(), i_dim * batch);
    debug_assert_eq!(y.len(), o_dim * batch);
    for b in 0..batch {
        let xr = &x[b * i_dim..(b + 1) * i_dim];
        let yr = &mut y[b * o_dim..(b + 1) * o_dim];
        for (i, &xi) in xr.iter().enumerate() {
            if xi != S::zero() {
                axpy(yr, xi, &wt[i * o_dim..(i + 1) * o_dim]);
            }
        }
    }
}

/// Input gradient `dx[b,:] += dy[b,:] · W` with canonical weights
/// `w[out × in]`. Accumulates, so callers can merge several upstream paths.
pub fn backward_dx<S: Scalar>(
    w: &[S],
    dy: &[S],
    dx: &mut [S],
    i_dim: usize,
    o_dim: usize,
    batch: usize,
) {
    debug_assert_eq!(w.len(), i_dim * o_dim);
    debug_assert_eq!(dy.len(), o_dim * batch);
    debug_assert_eq!(dx.len(), i_dim * batch);
    for b in 0..batch {
        let dyr = &dy[b * o_dim..(b + 1) * o_dim];
        let dxr = &mut dx[b * i_dim..(b + 1) * i_dim];
        for (o, &g) in dyr.iter().enumerate() {
            if g != S::zero() {
                axpy(dxr, g, &w[o * i_dim..(o + 1) * i_dim]);
            }
        }
    }
}

/// Weight/bias gradients for the affine map: `dw[o,:] += Σ_b dy[b,o]·x[b,:]`
/// and `db[o] += Σ_b dy[b,o]`, accumulated in canonical `[out × in]` layout.
pub fn backward_dw<S: Scalar>(
    dw: &mut [S],
    db: &mut [S],
    dy: &[S],
    x: &[S],
    i_dim: usize,
    o_dim: usize,
    batch: usize,
) {
    debug_assert_eq!(dw.len(), i_dim * o_dim);
    debug_assert_eq!(db.len(), o_dim);
    debug_assert_eq!(dy.len(), o_dim * batch);
    debug_assert_eq!(x.len(), i_dim * batch);
    for b in 0..batch {
        let dyr = &dy[b * o_dim..(b + 1) * o_dim];
        let xr = &x[b * i_dim..(b + 1) * i_dim];
        for (o, &g) in dyr.iter().enumerate() {
            if g != S::zero() {
                db[o] = db[o] + g;
                axpy(&mut dw[o * i_dim..(o + 1) * i_dim], g, xr);
            }
        }
    }
}

/// Weight gradients only (`dw[o,:] += Σ_b dy[b,o]·x[b,:]`), for maps whose
/// bias gradient is accumulated elsewhere (the LSTM's two weight matrices
/// share one bias).
pub fn backward_dw_only<S: Scalar>(
    dw: &mut [S],
    dy: &[S],
    x: &[S],
    i_dim: usize,
    o_dim: usize,
    batch: usize,
) {
    debug_assert_eq!(dw.len(), i_dim * o_dim);
    debug_assert_eq!(dy.len(), o_dim * batch);
    debug_assert_eq!(x.len(), i_dim * batch);
    for b in 0..batch {
        let dyr = &dy[b * o_dim..(b + 1) * o_dim];
        let xr = &x[b * i_dim..(b + 1) * i_dim];
        for (o, &g) in dyr.iter().enumerate() {
            if g != S::zero() {
                axpy(&mut dw[o * i_dim..(o + 1) * i_dim], g, xr);
            }
        }
    }
}

/// Transposes `w[out × in]` into `wt[in × out]`.
pub fn transpose_into<S: Scalar>(w: &[S], wt: &mut [S], i_dim: usize, o_dim: usize) {
    debug_assert_eq!(w.len(), i_dim * o_dim);
    debug_assert_eq!(wt.len(), i_dim * o_dim);
    for o in 0..o_dim {
        for i in 0..i_dim {
            wt[i * o_dim + o] = w[o * i_dim + i];
        }
    }
}

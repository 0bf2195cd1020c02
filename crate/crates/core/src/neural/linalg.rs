//! Dense kernels for the recurrent layers.
//!
//! Everything runs in a fixed summation order so repeated calls are
//! bit-identical; the dot product uses a fixed 8-lane accumulator tree,
//! which also lets the compiler vectorize it.

use super::Scalar;

/// Dot product with an 8-way accumulator split (deterministic order).
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [S::zero(); 8];
    let chunks = a.len() / 8;
    for k in 0..chunks {
        let i = k * 8;
        for j in 0..8 {
            acc[j] = acc[j] + a[i + j] * b[i + j];
        }
    }
    for i in chunks * 8..a.len() {
        acc[i % 8] = acc[i % 8] + a[i] * b[i];
    }
    let s0 = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    let s1 = (acc[4] + acc[5]) + (acc[6] + acc[7]);
    s0 + s1
}

/// `out = W x` for row-major `W` of shape (rows, cols).
pub fn matvec<S: Scalar>(w: &[S], rows: usize, cols: usize, x: &[S], out: &mut [S]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for r in 0..rows {
        out[r] = dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `out += W x`.
pub fn matvec_acc<S: Scalar>(w: &[S], rows: usize, cols: usize, x: &[S], out: &mut [S]) {
    for r in 0..rows {
        out[r] += dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `dx += W' dy` (transpose product, accumulating).
pub fn matvec_t_acc<S: Scalar>(w: &[S], rows: usize, cols: usize, dy: &[S], dx: &mut [S]) {
    debug_assert_eq!(dx.len(), cols);
    for r in 0..rows {
        let s = dy[r];
        if s == S::zero() {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for c in 0..cols {
            dx[c] += row[c] * s;
        }
    }
}

/// `dW += dy (x)'` (outer product, accumulating).
pub fn outer_acc<S: Scalar>(dw: &mut [S], dy: &[S], x: &[S]) {
    let cols = x.len();
    debug_assert_eq!(dw.len(), dy.len() * cols);
    for (r, &s) in dy.iter().enumerate() {
        if s == S::zero() {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for c in 0..cols {
            row[c] += s * x[c];
        }
    }
}

pub fn add_acc<S: Scalar>(dst: &mut [S], src: &[S]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

/// Logistic function with the argument clamped to +-40 to avoid overflow.
pub fn sigmoid<S: Scalar>(x: S) -> S {
    let cap = S::from_f64(40.0);
    let x = x.max(-cap).min(cap);
    S::one() / (S::one() + (-x).exp())
}

/// Max-subtracted softmax; output sums to 1 up to rounding.
pub fn softmax<S: Scalar>(xs: &[S]) -> Vec<S> {
    let max = xs.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = xs.iter().map(|&x| (x - max).exp()).collect();
    let sum: S = exps.iter().copied().fold(S::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// log(sum(exp(xs))) with max subtraction.
pub fn log_sum_exp<S: Scalar>(xs: &[S]) -> S {
    let max = xs.iter().copied().fold(S::neg_infinity(), S::max);
    let sum: S = xs
        .iter()
        .map(|&x| (x - max).exp())
        .fold(S::zero(), |a, b| a + b);
    max + sum.ln()
}

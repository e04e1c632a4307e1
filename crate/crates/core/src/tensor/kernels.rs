//! Matrix-multiply kernels.
//!
//! The parallel path splits work by output row and runs the exact same
//! per-row loop as the sequential path, so both produce bit-identical
//! results. Everything else about the crate's determinism story leans on
//! that property.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many multiply-adds the thread fan-out costs more than it saves.
const PAR_THRESHOLD: usize = 32_768;

#[inline]
fn row_kernel(a_row: &[f64], b: &[f64], n: usize, out_row: &mut [f64]) {
    out_row.fill(0.0);
    for (kk, &av) in a_row.iter().enumerate() {
        let b_row = &b[kk * n..(kk + 1) * n];
        for (o, &bv) in out_row.iter_mut().zip(b_row) {
            *o += av * bv;
        }
    }
}

/// `out = a (m x k) * b (k x n)`, row-major slices, sequential.
pub fn matmul_seq_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        row_kernel(&a[i * k..(i + 1) * k], b, n, &mut out[i * n..(i + 1) * n]);
    }
}

/// Row-parallel variant; bit-identical to [`matmul_seq_into`].
#[cfg(feature = "parallel")]
pub fn matmul_par_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.par_chunks_mut(n)
        .zip(a.par_chunks(k))
        .for_each(|(out_row, a_row)| row_kernel(a_row, b, n, out_row));
}

/// Dispatching entry point used by the tape: parallel when compiled in and
/// the problem is big enough, sequential otherwise.
pub fn matmul_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    #[cfg(feature = "parallel")]
    if m * k * n >= PAR_THRESHOLD {
        matmul_par_into(a, b, m, k, n, out);
        return;
    }
    matmul_seq_into(a, b, m, k, n, out);
}

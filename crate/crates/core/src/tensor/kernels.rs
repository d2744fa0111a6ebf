//! Dense kernels shared by the graph ops. All row-major.
//!
//! Parallel paths split work by output rows only, so every output element is
//! accumulated in the same order regardless of thread count.

use rayon::prelude::*;

use super::Real;

const PAR_THRESHOLD: usize = 1 << 18;
const K_BLOCK: usize = 256;
const ROW_BLOCK: usize = 4;

/// `c (m x n) [+]= a (m x k) * b (k x n)`.
pub fn gemm<F: Real>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize, accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if !accumulate {
        c.iter_mut().for_each(|x| *x = F::zero());
    }
    if n == 0 || m == 0 {
        return;
    }
    let block = |(bi, c_blk): (usize, &mut [F])| {
        let r0 = bi * ROW_BLOCK;
        let rows = c_blk.len() / n;
        for k0 in (0..k).step_by(K_BLOCK) {
            let k1 = (k0 + K_BLOCK).min(k);
            if rows == ROW_BLOCK {
                let (c0, rest) = c_blk.split_at_mut(n);
                let (c1, rest) = rest.split_at_mut(n);
                let (c2, c3) = rest.split_at_mut(n);
                let a0 = &a[r0 * k..(r0 + 1) * k];
                let a1 = &a[(r0 + 1) * k..(r0 + 2) * k];
                let a2 = &a[(r0 + 2) * k..(r0 + 3) * k];
                let a3 = &a[(r0 + 3) * k..(r0 + 4) * k];
                for p in k0..k1 {
                    let brow = &b[p * n..(p + 1) * n];
                    let (x0, x1, x2, x3) = (a0[p], a1[p], a2[p], a3[p]);
                    for j in 0..n {
                        let bv = brow[j];
                        c0[j] += x0 * bv;
                        c1[j] += x1 * bv;
                        c2[j] += x2 * bv;
                        c3[j] += x3 * bv;
                    }
                }
            } else {
                for r in 0..rows {
                    let arow = &a[(r0 + r) * k..(r0 + r + 1) * k];
                    let crow = &mut c_blk[r * n..(r + 1) * n];
                    for p in k0..k1 {
                        let x = arow[p];
                        let brow = &b[p * n..(p + 1) * n];
                        for (cv, &bv) in crow.iter_mut().zip(brow) {
                            *cv += x * bv;
                        }
                    }
                }
            }
        }
    };
    if m * n * k >= PAR_THRESHOLD && m >= 2 * ROW_BLOCK {
        c.par_chunks_mut(ROW_BLOCK * n).enumerate().for_each(block);
    } else {
        c.chunks_mut(ROW_BLOCK * n).enumerate().for_each(block);
    }
}

/// `c (m x n) [+]= a^T * b` with `a` stored `k x m`.
pub fn gemm_tn<F: Real>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize, accumulate: bool) {
    let mut at = vec![F::zero(); m * k];
    transpose(a, k, m, &mut at);
    gemm(&at, b, c, m, k, n, accumulate);
}

/// `c (m x n) [+]= a * b^T` with `b` stored `n x k`.
pub fn gemm_nt<F: Real>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize, accumulate: bool) {
    let mut bt = vec![F::zero(); k * n];
    transpose(b, n, k, &mut bt);
    gemm(a, &bt, c, m, k, n, accumulate);
}

/// Writes the `cols x rows` transpose of a `rows x cols` matrix into `out`.
pub fn transpose<F: Copy>(src: &[F], rows: usize, cols: usize, out: &mut [F]) {
    const B: usize = 32;
    for i0 in (0..rows).step_by(B) {
        for j0 in (0..cols).step_by(B) {
            for i in i0..(i0 + B).min(rows) {
                for j in j0..(j0 + B).min(cols) {
                    out[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
}

/// Unfolds a `t x c` sequence into `t x (k*c)` sliding windows with zero "same"
/// padding (`k` odd): row `i` holds inputs `i-k/2 ..= i+k/2`, tap-major.
pub fn im2col<F: Real>(x: &[F], t: usize, c: usize, k: usize) -> Vec<F> {
    let half = k / 2;
    let width = k * c;
    let mut cols = vec![F::zero(); t * width];
    for i in 0..t {
        let row = &mut cols[i * width..(i + 1) * width];
        for tap in 0..k {
            let src = i as isize + tap as isize - half as isize;
            if src >= 0 && (src as usize) < t {
                let s = src as usize;
                row[tap * c..(tap + 1) * c].copy_from_slice(&x[s * c..(s + 1) * c]);
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters window gradients back onto the sequence.
pub fn col2im<F: Real>(cols: &[F], t: usize, c: usize, k: usize, out: &mut [F]) {
    let half = k / 2;
    let width = k * c;
    for i in 0..t {
        let row = &cols[i * width..(i + 1) * width];
        for tap in 0..k {
            let src = i as isize + tap as isize - half as isize;
            if src >= 0 && (src as usize) < t {
                let s = src as usize;
                for (o, &g) in out[s * c..(s + 1) * c].iter_mut().zip(&row[tap * c..(tap + 1) * c]) {
                    *o += g;
                }
            }
        }
    }
}

pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

//! Dense symmetric positive-definite kernels for the LM normal equations.

use nalgebra::{DMatrix, DVector};

const BLOCK: usize = 64;

/// Lower Cholesky factor of a symmetric positive-definite matrix, computed
/// in place (right-looking and blocked: each diagonal block is factored
/// directly, the panel below it is solved against the block's inverse and
/// the trailing matrix is updated, all but the first step as matrix
/// products). Only the lower triangle of `a` is read; the strict upper
/// triangle is zeroed. Returns `false` if `a` is not numerically positive
/// definite.
pub fn cholesky_in_place(a: &mut DMatrix<f64>) -> bool {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "Cholesky needs a square matrix");
    let mut k0 = 0;
    while k0 < n {
        let kb = BLOCK.min(n - k0);
        let mut d = a.view((k0, k0), (kb, kb)).clone_owned();
        if !cholesky_small(&mut d) {
            return false;
        }
        a.view_mut((k0, k0), (kb, kb)).copy_from(&d);
        let rest = n - k0 - kb;
        if rest > 0 {
            // L21 = A21 · L11⁻ᵀ
            let panel = a.view((k0 + kb, k0), (rest, kb)) * lower_inverse(&d).transpose();
            a.view_mut((k0 + kb, k0), (rest, kb)).copy_from(&panel);
            let mut c0 = 0;
            while c0 < rest {
                let cw = BLOCK.min(rest - c0);
                let lower = panel.rows(c0, rest - c0);
                let top = panel.rows(c0, cw);
                a.view_mut((k0 + kb + c0, k0 + kb + c0), (rest - c0, cw))
                    .gemm(-1.0, &lower, &top.transpose(), 1.0);
                c0 += cw;
            }
        }
        k0 += kb;
    }
    for j in 1..n {
        a.column_mut(j).rows_range_mut(0..j).fill(0.0);
    }
    true
}

/// Unblocked in-place Cholesky of a small block; leaves the strict upper
/// triangle untouched.
fn cholesky_small(a: &mut DMatrix<f64>) -> bool {
    let n = a.nrows();
    for j in 0..n {
        for p in 0..j {
            let ljp = a[(j, p)];
            if ljp != 0.0 {
                let (src, mut dst) = a.columns_range_pair_mut(p, j);
                dst.rows_range_mut(j..n).axpy(-ljp, &src.rows_range(j..n), 1.0);
            }
        }
        let d = a[(j, j)];
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        a.column_mut(j).rows_range_mut(j..n).scale_mut(1.0 / d.sqrt());
    }
    true
}

/// Solves `L Lᵀ x = b` given the lower factor `L`.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = b.clone();
    l.solve_lower_triangular_mut(&mut x);
    l.tr_solve_lower_triangular_mut(&mut x);
    x
}

/// `tr(A⁻¹) = ‖L⁻¹‖_F²` from the lower factor of `A`.
///
/// `L⁻¹` is built block column by block column; below the diagonal,
/// `X_IJ = −L_II⁻¹ · L[I, J..I] · X[J..I, J]`, one matrix product each.
pub fn trace_of_inverse(l: &DMatrix<f64>) -> f64 {
    trace_of_inverse_in(l, &mut DMatrix::zeros(0, 0))
}

/// [`trace_of_inverse`] with a caller-owned `n × n` buffer for `L⁻¹`.
pub(crate) fn trace_of_inverse_in(l: &DMatrix<f64>, x: &mut DMatrix<f64>) -> f64 {
    let n = l.nrows();
    if x.shape() != (n, n) {
        *x = DMatrix::zeros(n, n);
    }
    let starts: Vec<usize> = (0..n).step_by(BLOCK).collect();
    let width = |b: usize| BLOCK.min(n - starts[b]);
    let inv_diag: Vec<DMatrix<f64>> =
        (0..starts.len()).map(|b| lower_inverse(&l.view((starts[b], starts[b]), (width(b), width(b))).clone_owned())).collect();
    for jb in 0..starts.len() {
        let (j0, jw) = (starts[jb], width(jb));
        x.view_mut((j0, j0), (jw, jw)).copy_from(&inv_diag[jb]);
        for ib in jb + 1..starts.len() {
            let (i0, iw) = (starts[ib], width(ib));
            let acc = l.view((i0, j0), (iw, i0 - j0)) * x.view((j0, j0), (i0 - j0, jw));
            let block = -(&inv_diag[ib] * acc);
            x.view_mut((i0, j0), (iw, jw)).copy_from(&block);
        }
    }
    x.norm_squared()
}

/// Inverse of a small lower-triangular matrix by forward substitution.
fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut x = DMatrix::<f64>::identity(n, n);
    for c in 0..n {
        for j in c..n {
            let v = x[(j, c)] / l[(j, j)];
            x[(j, c)] = v;
            for i in j + 1..n {
                x[(i, c)] -= l[(i, j)] * v;
            }
        }
    }
    x
}

//! Strided matrix products on column-major buffers.
//!
//! nalgebra allocates a fresh result and materializes transposes; the
//! training loop instead multiplies straight into buffers it keeps across
//! epochs and reads transposes through swapped strides.

use nalgebra::DMatrix;

pub(crate) trait Scalar: Copy {
    /// # Safety
    /// Same contract as the `matrixmultiply` routine it forwards to.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize, k: usize, n: usize,
        alpha: Self, a: *const Self, rsa: isize, csa: isize,
        b: *const Self, rsb: isize, csb: isize,
        beta: Self, c: *mut Self, rsc: isize, csc: isize,
    );
}

impl Scalar for f32 {
    unsafe fn gemm(
        m: usize, k: usize, n: usize,
        alpha: f32, a: *const f32, rsa: isize, csa: isize,
        b: *const f32, rsb: isize, csb: isize,
        beta: f32, c: *mut f32, rsc: isize, csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    unsafe fn gemm(
        m: usize, k: usize, n: usize,
        alpha: f64, a: *const f64, rsa: isize, csa: isize,
        b: *const f64, rsb: isize, csb: isize,
        beta: f64, c: *mut f64, rsc: isize, csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Read-only strided view.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, T> Mat<'a, T> {
    pub fn of(m: &'a DMatrix<T>) -> Self {
        Self { data: m.as_slice(), rows: m.nrows(), cols: m.ncols(), rs: 1, cs: m.nrows() }
    }

    /// Rows `start..start + rows`.
    pub fn rows(self, start: usize, rows: usize) -> Self {
        assert!(start + rows <= self.rows);
        Self { data: &self.data[(start * self.rs).min(self.data.len())..], rows, ..self }
    }

    /// Columns `start..start + cols`.
    pub fn cols(self, start: usize, cols: usize) -> Self {
        assert!(start + cols <= self.cols);
        Self { data: &self.data[(start * self.cs).min(self.data.len())..], cols, ..self }
    }

    pub fn t(self) -> Self {
        Self { data: self.data, rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }

    fn in_bounds(&self, len: usize) -> bool {
        self.rows == 0 || self.cols == 0 || (self.rows - 1) * self.rs + (self.cols - 1) * self.cs < len
    }
}

/// `c[..rows] = alpha · a · b + beta · c[..rows]`, where `c` is column-major
/// and only its first `a.rows` rows are touched.
pub(crate) fn mul_into<T: Scalar>(alpha: T, a: Mat<'_, T>, b: Mat<'_, T>, beta: T, c: &mut DMatrix<T>) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert!(a.rows <= c.nrows() && b.cols == c.ncols(), "output shape mismatch");
    assert!(a.in_bounds(a.data.len()) && b.in_bounds(b.data.len()));
    let ldc = c.nrows() as isize;
    // SAFETY: every index the routine touches lies inside the slices, as
    // checked above; `c` is exclusively borrowed and does not alias a or b.
    unsafe {
        T::gemm(
            a.rows, a.cols, b.cols,
            alpha, a.data.as_ptr(), a.rs as isize, a.cs as isize,
            b.data.as_ptr(), b.rs as isize, b.cs as isize,
            beta, c.as_mut_slice().as_mut_ptr(), 1, ldc,
        )
    }
}

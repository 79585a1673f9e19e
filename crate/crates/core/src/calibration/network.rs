//! Least-squares view of the network on a fixed, normalized data set:
//! residuals, Jacobian and Gauss–Newton products as functions of the flat
//! parameter vector (layout of [`CalibModel::params`]).
//!
//! [`CalibModel::params`]: super::CalibModel::params

use nalgebra::{DMatrix, DVector};

use super::gemm::{mul_into, Mat};
use super::{HIDDEN_UNITS, OUTPUTS};

const H: usize = HIDDEN_UNITS;
/// Samples per block of the Gauss–Newton accumulation.
const CHUNK: usize = 256;

/// Normalized inputs and targets of one training run.
#[derive(Debug, Clone)]
pub struct Problem {
    d: usize,
    /// `(d+1) × N`, inputs with a trailing row of ones.
    xt: DMatrix<f64>,
    /// `N × (d+1)`.
    x: DMatrix<f64>,
    /// `OUTPUTS × N`.
    yt: DMatrix<f64>,
    /// `N × P`: products `x̄ᵢ x̄ₗ` for `i ≤ l`, single precision.
    z: DMatrix<f32>,
}

/// Reusable buffers for the forward pass and [`Problem::gauss_newton_in`].
/// The products are large enough that fresh allocations spend much of their
/// time faulting in pages, so the training loop keeps one of these alive
/// across epochs.
#[derive(Debug, Default)]
pub struct Scratch {
    /// `(H+1) × N`, hidden activations plus a row of ones.
    hbt: DMatrix<f64>,
    /// `OUTPUTS × N` residuals `ŷ − y`.
    et: DMatrix<f64>,
    /// `H × N`, back-propagated residuals `Σₒ W2[o,j]·eₒ·(1 − h_j²)`.
    dt: DMatrix<f64>,
    hbt32: DMatrix<f32>,
    ct: DMatrix<f32>,
    vt: DMatrix<f32>,
    t: DMatrix<f32>,
    r: DMatrix<f32>,
}

fn ensure<T: nalgebra::Scalar + Default>(m: &mut DMatrix<T>, rows: usize, cols: usize) {
    if m.shape() != (rows, cols) {
        *m = DMatrix::from_element(rows, cols, T::default());
    }
}

/// Index of the unordered pair `(a, b)`, `a ≤ b < n`, in row-major upper
/// triangle order.
fn pair(a: usize, b: usize, n: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * n - a * (a + 1) / 2 + b
}

impl Problem {
    /// `x` is `N × d`, `y` is `N × 2`, both already normalized.
    pub fn new(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Self {
        assert_eq!(x.nrows(), y.nrows());
        assert_eq!(y.ncols(), OUTPUTS);
        let (n, d) = (x.nrows(), x.ncols());
        let m = d + 1;
        let xb = DMatrix::from_fn(n, m, |r, c| if c < d { x[(r, c)] } else { 1.0 });
        let mut z = DMatrix::<f32>::zeros(n, m * (m + 1) / 2);
        for i in 0..m {
            for l in i..m {
                let col = z.column_mut(pair(i, l, m));
                for ((zv, a), b) in col.into_iter().zip(xb.column(i).iter()).zip(xb.column(l).iter()) {
                    *zv = (a * b) as f32;
                }
            }
        }
        Self { d, xt: xb.transpose(), x: xb, yt: y.transpose(), z }
    }

    pub fn num_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn num_params(&self) -> usize {
        H * (self.d + 1) + OUTPUTS * (H + 1)
    }

    fn unpack(&self, theta: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        assert_eq!(theta.len(), self.num_params());
        let m = self.d + 1;
        let w1 = DMatrix::from_row_slice(H, m, &theta.as_slice()[..H * m]);
        let w2 = DMatrix::from_row_slice(OUTPUTS, H + 1, &theta.as_slice()[H * m..]);
        (w1, w2)
    }

    /// Fills `hbt` and `et` of the scratch for the given weights.
    fn forward_into(&self, w1: &DMatrix<f64>, w2: &DMatrix<f64>, sc: &mut Scratch) {
        let n = self.num_samples();
        ensure(&mut sc.hbt, H + 1, n);
        ensure(&mut sc.et, OUTPUTS, n);
        mul_into(1.0, Mat::of(w1), Mat::of(&self.xt), 0.0, &mut sc.hbt);
        for col in sc.hbt.as_mut_slice().chunks_exact_mut(H + 1) {
            tanh_in_place(&mut col[..H]);
            col[H] = 1.0;
        }
        sc.et.copy_from(&self.yt);
        mul_into(1.0, Mat::of(w2), Mat::of(&sc.hbt), -1.0, &mut sc.et);
    }

    /// Residuals `ŷ − y`, `N × 2`.
    pub fn residuals(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let (w1, w2) = self.unpack(theta);
        let mut sc = Scratch::default();
        self.forward_into(&w1, &w2, &mut sc);
        sc.et.transpose()
    }

    /// Sum of squared residuals over both outputs.
    pub fn sse(&self, theta: &DVector<f64>) -> f64 {
        self.sse_in(theta, &mut Scratch::default())
    }

    /// [`Problem::sse`] with caller-owned buffers.
    pub fn sse_in(&self, theta: &DVector<f64>, scratch: &mut Scratch) -> f64 {
        let (w1, w2) = self.unpack(theta);
        self.forward_into(&w1, &w2, scratch);
        scratch.et.norm_squared()
    }

    /// Explicit Jacobian of the residuals, row `2n + o` for sample `n`,
    /// output `o`. Memory-hungry; meant for checks on small problems.
    pub fn jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let (w1, w2) = self.unpack(theta);
        let mut f = Scratch::default();
        self.forward_into(&w1, &w2, &mut f);
        let m = self.d + 1;
        let off = H * m;
        let mut jac = DMatrix::zeros(OUTPUTS * self.num_samples(), self.num_params());
        for n in 0..self.num_samples() {
            for o in 0..OUTPUTS {
                let row = OUTPUTS * n + o;
                for j in 0..H {
                    let h = f.hbt[(j, n)];
                    let g = w2[(o, j)] * (1.0 - h * h);
                    for i in 0..m {
                        jac[(row, j * m + i)] = g * self.xt[(i, n)];
                    }
                }
                for k in 0..=H {
                    jac[(row, off + o * (H + 1) + k)] = f.hbt[(k, n)];
                }
            }
        }
        jac
    }

    /// Gauss–Newton matrix `JᵀJ`, gradient `Jᵀe` and the sum of squared
    /// residuals, without forming `J`.
    ///
    /// A residual row depends on the hidden weights only through
    /// `W2[o,j]·(1 − h_j²)·x̄`, so the hidden block factors into
    /// `(W2ᵀW2)[j,k] · Σₙ s_j s_k x̄ x̄ᵀ`; the sums over samples for all
    /// unit pairs and input pairs come out of a single matrix product.
    ///
    /// The two large sample sums are accumulated in single precision. The
    /// matrix only shapes the LM step; residuals, gradient and the step
    /// acceptance test stay in double precision.
    pub fn gauss_newton(&self, theta: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, f64) {
        let mut g = DMatrix::zeros(0, 0);
        let (grad, sse) = self.gauss_newton_in(theta, &mut Scratch::default(), &mut g);
        (g, grad, sse)
    }

    /// [`Problem::gauss_newton`] with caller-owned buffers; the matrix is
    /// written to `g`, which is resized if needed.
    pub fn gauss_newton_in(
        &self,
        theta: &DVector<f64>,
        scratch: &mut Scratch,
        g: &mut DMatrix<f64>,
    ) -> (DVector<f64>, f64) {
        let (w1, w2) = self.unpack(theta);
        self.forward_into(&w1, &w2, scratch);
        let n = self.num_samples();
        let m = self.d + 1;
        let off = H * m;
        let npar = self.num_params();
        let q = H * (H + 1) / 2;
        let p = self.z.ncols();
        let Scratch { hbt, et, dt, hbt32, ct, vt, t, r } = scratch;
        ensure(dt, H, n);
        ensure(hbt32, H + 1, n);
        ensure(ct, q, CHUNK);
        ensure(vt, H * m, CHUNK);
        ensure(t, q, p);
        ensure(r, H * m, H + 1);

        // Per sample: s = 1 − h², the pair products s_j s_k and s_j x̄ᵢ,
        // and the back-propagated residual for the gradient. Samples go in
        // chunks so the product buffers stay cache-resident.
        let mut s32 = [0f32; H];
        let mut x32 = vec![0f32; m];
        for n0 in (0..n).step_by(CHUNK) {
            let nc = CHUNK.min(n - n0);
            let cols = hbt.as_slice()[n0 * (H + 1)..]
                .chunks_exact(H + 1)
                .zip(self.xt.as_slice()[n0 * m..].chunks_exact(m))
                .zip(et.as_slice()[n0 * OUTPUTS..].chunks_exact(OUTPUTS))
                .zip(dt.as_mut_slice()[n0 * H..].chunks_exact_mut(H))
                .zip(hbt32.as_mut_slice()[n0 * (H + 1)..].chunks_exact_mut(H + 1))
                .zip(ct.as_mut_slice().chunks_exact_mut(q).zip(vt.as_mut_slice().chunks_exact_mut(H * m)))
                .take(nc);
            for (((((h, x), e), dc), h32), (cc, vc)) in cols {
                for j in 0..H {
                    let s = 1.0 - h[j] * h[j];
                    s32[j] = s as f32;
                    dc[j] = (w2[(0, j)] * e[0] + w2[(1, j)] * e[1]) * s;
                }
                h32.iter_mut().zip(h).for_each(|(a, b)| *a = *b as f32);
                x32.iter_mut().zip(x).for_each(|(a, b)| *a = *b as f32);
                let mut rest = cc;
                for j in 0..H {
                    let sj = s32[j];
                    let (row, tail) = rest.split_at_mut(H - j);
                    for (out, sk) in row.iter_mut().zip(&s32[j..]) {
                        *out = sj * sk;
                    }
                    rest = tail;
                    for (out, xi) in vc[j * m..(j + 1) * m].iter_mut().zip(&x32) {
                        *out = sj * xi;
                    }
                }
            }
            let beta = if n0 == 0 { 0.0 } else { 1.0 };
            mul_into(1.0, Mat::of(ct).cols(0, nc), Mat::of(&self.z).rows(n0, nc), beta, t);
            mul_into(1.0, Mat::of(vt).cols(0, nc), Mat::of(hbt32).cols(n0, nc).t(), beta, r);
        }
        let mut hth = DMatrix::zeros(H + 1, H + 1);
        mul_into(1.0, Mat::of(hbt), Mat::of(hbt).t(), 0.0, &mut hth);
        let w2h = w2.columns(0, H);
        let mm = w2h.transpose() * w2h;

        ensure(g, npar, npar);
        for j in 0..H {
            for k in j..H {
                let mjk = mm[(j, k)];
                let tq = pair(j, k, H);
                for i in 0..m {
                    for l in 0..m {
                        let v = mjk * t[(tq, pair(i, l, m))] as f64;
                        g[(j * m + i, k * m + l)] = v;
                        g[(k * m + l, j * m + i)] = v;
                    }
                }
            }
        }
        for o in 0..OUTPUTS {
            let base = off + o * (H + 1);
            for k in 0..=H {
                for j in 0..H {
                    let w = w2[(o, j)];
                    for i in 0..m {
                        let v = w * r[(j * m + i, k)] as f64;
                        g[(j * m + i, base + k)] = v;
                        g[(base + k, j * m + i)] = v;
                    }
                }
                for k2 in 0..=H {
                    g[(base + k, base + k2)] = hth[(k, k2)];
                }
                // the two output layers never share a residual
                let other = off + (1 - o) * (H + 1);
                for k2 in 0..=H {
                    g[(base + k, other + k2)] = 0.0;
                }
            }
        }

        // gradient Jᵀe
        let mut gh = DMatrix::zeros(H, m);
        mul_into(1.0, Mat::of(dt), Mat::of(&self.x), 0.0, &mut gh);
        let mut go = DMatrix::zeros(OUTPUTS, H + 1);
        mul_into(1.0, Mat::of(et), Mat::of(hbt).t(), 0.0, &mut go);
        let mut grad = DVector::zeros(npar);
        for j in 0..H {
            for i in 0..m {
                grad[j * m + i] = gh[(j, i)];
            }
        }
        for o in 0..OUTPUTS {
            for k in 0..=H {
                grad[off + o * (H + 1) + k] = go[(o, k)];
            }
        }
        (grad, et.norm_squared())
    }
}

/// `tanh` through a single exponential, accurate to a few ulps. The
/// exponential is a branch-free polynomial so that [`tanh_in_place`]
/// vectorizes; results are bit-identical whichever path runs.
#[inline(always)]
pub(crate) fn tanh(x: f64) -> f64 {
    // beyond |x| = 20 the result rounds to ±1; NaN passes through
    let y = -2.0 * x.abs();
    let e = exp_neg(if y < -40.0 { -40.0 } else { y });
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

/// `eˣ` for `x ∈ [-40, 0]`: `x = k·ln2 + r` with `|r| ≤ ln2/2`, a degree-13
/// Taylor polynomial for `eʳ` and `2ᵏ` assembled from its bit pattern.
#[inline(always)]
fn exp_neg(x: f64) -> f64 {
    const SHIFTER: f64 = 6755399441055744.0; // 1.5·2⁵², rounds to an integer
    const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
    const C: [f64; 14] = [
        1.0 / 6_227_020_800.0,
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ];
    let kf = x.mul_add(std::f64::consts::LOG2_E, SHIFTER);
    let k = kf.to_bits().wrapping_sub(SHIFTER.to_bits()) as i64;
    let kf = kf - SHIFTER;
    let r = kf.mul_add(-LN2_LO, kf.mul_add(-LN2_HI, x));
    let mut p = C[0];
    for c in &C[1..] {
        p = p.mul_add(r, *c);
    }
    p * f64::from_bits((k.wrapping_add(1023) as u64) << 52)
}

/// Applies [`tanh`] to every element, with AVX2/FMA code when available.
pub(crate) fn tanh_in_place(xs: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
        // SAFETY: the required CPU features were just detected.
        return unsafe { tanh_in_place_avx2(xs) };
    }
    xs.iter_mut().for_each(|v| *v = tanh(*v));
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn tanh_in_place_avx2(xs: &mut [f64]) {
    xs.iter_mut().for_each(|v| *v = tanh(*v));
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(n: usize, d: usize, seed: u64) -> (Problem, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        let p = Problem::new(&x, &y);
        let theta = DVector::from_fn(p.num_params(), |_, _| rng.random_range(-0.8..0.8));
        (p, theta)
    }

    #[test]
    fn fast_tanh_matches_libm() {
        for k in -4000..=4000 {
            let x = k as f64 * 0.005;
            assert!((tanh(x) - x.tanh()).abs() <= 4.0 * f64::EPSILON, "{x}");
        }
        assert_eq!(tanh(1e6), 1.0);
        assert_eq!(tanh(-1e300), -1.0);
        assert_eq!(tanh(0.0), 0.0);
        assert!(tanh(f64::NAN).is_nan());
        let mut xs: Vec<f64> = (-4000..=4000).map(|k| k as f64 * 0.00731).collect();
        let want: Vec<f64> = xs.iter().map(|x| tanh(*x)).collect();
        tanh_in_place(&mut xs);
        assert_eq!(xs, want);
        assert!(tanh(f64::NAN).is_nan());
    }

    #[test]
    fn pair_indexing_is_dense() {
        let n = 7;
        let mut seen = vec![false; n * (n + 1) / 2];
        for a in 0..n {
            for b in a..n {
                assert_eq!(pair(a, b, n), pair(b, a, n));
                assert!(!seen[pair(a, b, n)]);
                seen[pair(a, b, n)] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn structured_products_match_explicit_jacobian() {
        let (p, theta) = problem(37, 5, 1);
        let j = p.jacobian(&theta);
        let (g, grad, sse) = p.gauss_newton(&theta);
        let e = DVector::from_iterator(2 * 37, p.residuals(&theta).transpose().iter().copied());
        let jtj = j.transpose() * &j;
        // single-precision sample sums
        assert!((&g - &jtj).abs().max() < 1e-5 * jtj.abs().max());
        assert!((&grad - j.transpose() * &e).abs().max() < 1e-11);
        assert!((sse - e.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (p, theta) = problem(11, 4, 2);
        let j = p.jacobian(&theta);
        let h = 1e-6;
        for k in (0..p.num_params()).step_by(7) {
            let mut up = theta.clone();
            up[k] += h;
            let mut dn = theta.clone();
            dn[k] -= h;
            let fd = (p.residuals(&up) - p.residuals(&dn)) / (2.0 * h);
            for n in 0..11 {
                for o in 0..2 {
                    let a = j[(2 * n + o, k)];
                    let b = fd[(n, o)];
                    assert!((a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1e-3), "k={k} {a} {b}");
                }
            }
        }
    }
}

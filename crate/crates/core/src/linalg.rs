//! Dense and sparse complex linear algebra shared by the engines.
//!
//! Everything here works on `nalgebra` column-major matrices. The sparse
//! operator and the Chebyshev propagator exist because the dense engines
//! spend nearly all of their time applying `exp(-i H tau)` to a block of
//! vectors, and every Hamiltonian we build has O(N) nonzeros per row.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Eigendecomposition of a Hermitian matrix, ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

/// Hermitian eigensolver. Takes the real symmetric path when the imaginary
/// part vanishes identically, which is the common case for spin chains.
pub fn eigh(h: &CMat) -> Eigh {
    if h.iter().all(|z| z.im == 0.0) {
        let re = h.map(|z| z.re);
        let (values, vectors) = eigh_real(&re);
        return Eigh {
            values,
            vectors: vectors.map(|x| C64::new(x, 0.0)),
        };
    }
    let sym = hermitize(h);
    let eig = SymmetricEigen::new(sym);
    let order = ascending_order(eig.eigenvalues.as_slice());
    let n = h.nrows();
    let mut vectors = CMat::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Eigh { values, vectors }
}

/// Real symmetric eigensolver, ascending eigenvalues with stable tie-break.
pub fn eigh_real(h: &RMat) -> (Vec<f64>, RMat) {
    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let order = ascending_order(eig.eigenvalues.as_slice());
    let n = h.nrows();
    let mut vectors = RMat::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues only, ascending.
pub fn eigvalsh(h: &CMat) -> Vec<f64> {
    if h.iter().all(|z| z.im == 0.0) {
        let re = h.map(|z| z.re);
        let sym = (&re + re.transpose()) * 0.5;
        let mut v: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        return v;
    }
    let mut v: Vec<f64> = hermitize(h).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// `(m + m^dagger) / 2`.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

/// `V diag(f(lambda)) V^dagger`.
pub fn spectral_map(eig: &Eigh, f: impl Fn(f64) -> C64) -> CMat {
    let mut scaled = eig.vectors.clone();
    for (j, &lam) in eig.values.iter().enumerate() {
        let w = f(lam);
        scaled.column_mut(j).scale_mut_c(w);
    }
    &scaled * eig.vectors.adjoint()
}

trait ScaleC {
    fn scale_mut_c(&mut self, w: C64);
}

impl<S> ScaleC for nalgebra::Matrix<C64, nalgebra::Dyn, nalgebra::U1, S>
where
    S: nalgebra::StorageMut<C64, nalgebra::Dyn, nalgebra::U1>,
{
    fn scale_mut_c(&mut self, w: C64) {
        for z in self.iter_mut() {
            *z *= w;
        }
    }
}

/// Exact propagator `exp(-i H t)` from the eigendecomposition of `H`.
pub fn expm_hermitian(h: &CMat, t: f64) -> CMat {
    let eig = eigh(h);
    spectral_map(&eig, |e| C64::from_polar(1.0, -e * t))
}

/// Complex product through four real GEMMs, which are far faster than the
/// generic complex kernel for large matrices.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    join(&re, &im)
}

/// `a^dagger b` through real GEMMs.
pub fn adjoint_mul(a: &CMat, b: &CMat) -> CMat {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = ar.tr_mul(&br) + ai.tr_mul(&bi);
    let im = ar.tr_mul(&bi) - ai.tr_mul(&br);
    join(&re, &im)
}

/// `a b^dagger` through real GEMMs.
pub fn mul_adjoint(a: &CMat, b: &CMat) -> CMat {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * br.transpose() + &ai * bi.transpose();
    let im = &ai * br.transpose() - &ar * bi.transpose();
    join(&re, &im)
}

fn split(m: &CMat) -> (RMat, RMat) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

fn join(re: &RMat, im: &RMat) -> CMat {
    CMat::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}

/// Trace of a square complex matrix.
pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Largest absolute deviation from Hermiticity.
pub fn hermiticity_error(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Natural log of the determinant (complex branch from the LU pivots).
pub fn log_det(m: &CMat) -> C64 {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut acc = ZERO;
    for i in 0..u.nrows() {
        acc += u[(i, i)].ln();
    }
    let sign: f64 = lu.p().determinant();
    if sign < 0.0 {
        acc += C64::new(0.0, std::f64::consts::PI);
    }
    acc
}

/// Kronecker product of two dense matrices.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = CMat::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Compressed-sparse-row complex operator.
#[derive(Debug, Clone)]
pub struct SparseOp {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
    /// Real parts of `vals` when every entry is real, for the faster kernel.
    real: Option<Vec<f64>>,
}

impl SparseOp {
    pub fn from_dense(m: &CMat) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "sparse operator must be square");
        let dim = m.nrows();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in 0..dim {
            for c in 0..dim {
                let v = m[(r, c)];
                if v != ZERO {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseOp::assemble(dim, row_ptr, cols, vals)
    }

    fn assemble(dim: usize, row_ptr: Vec<usize>, cols: Vec<usize>, vals: Vec<C64>) -> Self {
        let real = vals.iter().all(|v| v.im == 0.0).then(|| vals.iter().map(|v| v.re).collect());
        SparseOp {
            dim,
            row_ptr,
            cols,
            vals,
            real,
        }
    }

    /// Linear combination `a * x + b * y` of two operators of equal size.
    pub fn combine(a: f64, x: &SparseOp, b: f64, y: &SparseOp) -> SparseOp {
        assert_eq!(x.dim, y.dim);
        let mut row_ptr = Vec::with_capacity(x.dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in 0..x.dim {
            let (mut i, ie) = (x.row_ptr[r], x.row_ptr[r + 1]);
            let (mut j, je) = (y.row_ptr[r], y.row_ptr[r + 1]);
            while i < ie || j < je {
                let ci = if i < ie { x.cols[i] } else { usize::MAX };
                let cj = if j < je { y.cols[j] } else { usize::MAX };
                let (c, v) = if ci == cj {
                    let v = x.vals[i] * a + y.vals[j] * b;
                    i += 1;
                    j += 1;
                    (ci, v)
                } else if ci < cj {
                    i += 1;
                    (ci, x.vals[i - 1] * a)
                } else {
                    j += 1;
                    (cj, y.vals[j - 1] * b)
                };
                if v != ZERO {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseOp::assemble(x.dim, row_ptr, cols, vals)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[k])] += self.vals[k];
            }
        }
        m
    }

    /// `out = alpha * (self - shift) * x + beta * out`, column by column.
    fn apply_affine(&self, x: &CMat, shift: f64, alpha: f64, beta: f64, out: &mut CMat) {
        let dim = self.dim;
        for j in 0..x.ncols() {
            let xc = &x.as_slice()[j * dim..(j + 1) * dim];
            let oc = &mut out.as_mut_slice()[j * dim..(j + 1) * dim];
            for r in 0..dim {
                let mut acc = ZERO;
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.vals[k] * xc[self.cols[k]];
                }
                acc -= xc[r] * shift;
                oc[r] = acc * alpha + oc[r] * beta;
            }
        }
    }

    /// Row-major variant: `x` and `out` hold `m` vectors with entry `(r, j)`
    /// at `r * m + j`, so each nonzero updates one contiguous row.
    fn apply_affine_rows(&self, x: &[C64], m: usize, shift: f64, alpha: f64, beta: f64, out: &mut [C64]) {
        let mut acc = vec![ZERO; m];
        for r in 0..self.dim {
            acc.iter_mut().for_each(|a| *a = ZERO);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let xr = &x[self.cols[k] * m..(self.cols[k] + 1) * m];
                match &self.real {
                    Some(re) => {
                        let v = re[k];
                        for (a, xv) in acc.iter_mut().zip(xr) {
                            *a += xv * v;
                        }
                    }
                    None => {
                        let v = self.vals[k];
                        for (a, xv) in acc.iter_mut().zip(xr) {
                            *a += xv * v;
                        }
                    }
                }
            }
            let xr = &x[r * m..(r + 1) * m];
            let or = &mut out[r * m..(r + 1) * m];
            if beta == 0.0 {
                for ((o, a), xv) in or.iter_mut().zip(&acc).zip(xr) {
                    *o = (a - xv * shift) * alpha;
                }
            } else {
                for ((o, a), xv) in or.iter_mut().zip(&acc).zip(xr) {
                    *o = (a - xv * shift) * alpha + *o * beta;
                }
            }
        }
    }

    /// `self * x`.
    pub fn apply(&self, x: &CMat) -> CMat {
        let mut out = CMat::zeros(self.dim, x.ncols());
        self.apply_affine(x, 0.0, 1.0, 0.0, &mut out);
        out
    }

    /// Gershgorin enclosure of the (real) spectrum of a Hermitian operator.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..self.dim {
            let mut diag = 0.0;
            let mut radius = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.cols[k] == r {
                    diag += self.vals[k].re;
                } else {
                    radius += self.vals[k].norm();
                }
            }
            lo = lo.min(diag - radius);
            hi = hi.max(diag + radius);
        }
        if self.dim == 0 {
            return (0.0, 0.0);
        }
        (lo, hi)
    }
}

/// Bessel functions `J_0(x) .. J_{n_max}(x)` by Miller's downward recurrence.
pub fn bessel_j_seq(x: f64, n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let start = (n_max.max(ax.ceil() as usize) + 40 + (ax.sqrt() * 10.0) as usize) & !1;
    let mut next = 0.0f64;
    let mut cur = 1e-300f64;
    let mut vals = vec![0.0; start + 1];
    vals[start] = cur;
    for n in (1..=start).rev() {
        let prev = 2.0 * n as f64 / ax * cur - next;
        next = cur;
        cur = prev;
        vals[n - 1] = cur;
        if cur.abs() > 1e250 {
            for v in vals[n - 1..].iter_mut() {
                *v *= 1e-250;
            }
            next *= 1e-250;
            cur *= 1e-250;
        }
    }
    let mut norm = vals[0];
    for k in (2..=start).step_by(2) {
        norm += 2.0 * vals[k];
    }
    for (n, o) in out.iter_mut().enumerate() {
        let v = vals[n] / norm;
        *o = if x < 0.0 && n % 2 == 1 { -v } else { v };
    }
    out
}

/// Applies `exp(-i H t)` to blocks of vectors through a Chebyshev expansion
/// truncated at machine precision.
#[derive(Debug, Clone)]
pub struct ChebyshevPropagator {
    center: f64,
    half_width: f64,
    coeffs: Vec<C64>,
}

impl ChebyshevPropagator {
    pub fn new(h: &SparseOp, t: f64) -> Self {
        let (lo, hi) = h.spectral_bounds();
        Self::with_bounds(lo, hi, t)
    }

    pub fn with_bounds(lo: f64, hi: f64, t: f64) -> Self {
        let center = 0.5 * (lo + hi);
        let half_width = (0.5 * (hi - lo)).max(1e-12) * (1.0 + 1e-10);
        let z = half_width * t;
        let n_max = (z.abs().ceil() as usize) * 2 + 60;
        let j = bessel_j_seq(z.abs(), n_max);
        let phase = C64::from_polar(1.0, -center * t);
        let mut coeffs = Vec::new();
        let mut quiet = 0;
        let mut minus_i_pow = ONE;
        for (k, &jk) in j.iter().enumerate() {
            let jk = if t < 0.0 && k % 2 == 1 { -jk } else { jk };
            let weight = if k == 0 { 1.0 } else { 2.0 };
            coeffs.push(phase * minus_i_pow * (weight * jk));
            minus_i_pow *= C64::new(0.0, -1.0);
            if k as f64 > z.abs() && jk.abs() < 1e-17 {
                quiet += 1;
                if quiet >= 2 {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        ChebyshevPropagator {
            center,
            half_width,
            coeffs,
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    /// Returns `exp(-i H t) x`.
    pub fn apply(&self, h: &SparseOp, x: &CMat) -> CMat {
        let (dim, m) = (x.nrows(), x.ncols());
        let mut out = CMat::zeros(dim, m);
        // The recurrence runs on column chunks small enough to stay in cache.
        let chunk = (CACHE_BLOCK_ENTRIES / dim.max(1)).clamp(1, m.max(1));
        let mut start = 0;
        while start < m {
            let width = chunk.min(m - start);
            let rows = x.columns(start, width).transpose();
            let res = self.apply_rows(h, rows.as_slice(), width);
            for j in 0..width {
                for r in 0..dim {
                    out[(r, start + j)] = res[r * width + j];
                }
            }
            start += width;
        }
        out
    }

    fn apply_rows(&self, h: &SparseOp, first: &[C64], m: usize) -> Vec<C64> {
        let mut result: Vec<C64> = first.iter().map(|z| z * self.coeffs[0]).collect();
        if self.coeffs.len() > 1 {
            let inv = 1.0 / self.half_width;
            let mut prev = first.to_vec();
            let mut cur = vec![ZERO; prev.len()];
            h.apply_affine_rows(&prev, m, self.center, inv, 0.0, &mut cur);
            axpy(&mut result, self.coeffs[1], &cur);
            for &c in &self.coeffs[2..] {
                // prev <- 2 X cur - prev, then rotate so cur holds the newest term.
                h.apply_affine_rows(&cur, m, self.center, 2.0 * inv, -1.0, &mut prev);
                std::mem::swap(&mut prev, &mut cur);
                axpy(&mut result, c, &cur);
            }
        }
        result
    }
}

/// Complex entries per working buffer of the chunked Chebyshev recurrence.
const CACHE_BLOCK_ENTRIES: usize = 1 << 14;

fn axpy(y: &mut [C64], a: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += a * xi;
    }
}

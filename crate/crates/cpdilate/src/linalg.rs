//! Dense complex matrices and the numerical kernels everything else is built
//! on: a cyclic Jacobi Hermitian eigensolver, PSD square roots, Gram-matrix
//! quotients and least-squares extension of maps defined on generators.

use crate::error::{CpError, Result};
use crate::scalar::{c_one, c_re, c_zero, Real, C};
use num_complex::Complex;

/// Numerical thresholds used throughout.
///
/// `rank_tol` is relative: eigenvalues below `rank_tol * lambda_max` are
/// treated as zero when computing ranks, pseudo-inverses and quotients.
/// `psd_tol` and `residual_tol` are absolute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<R: Real> {
    pub rank_tol: R,
    pub psd_tol: R,
    pub residual_tol: R,
}

impl<R: Real> Default for Tolerances<R> {
    fn default() -> Self {
        Tolerances {
            rank_tol: R::of(1e-9),
            psd_tol: R::of(1e-9),
            residual_tol: R::of(1e-7),
        }
    }
}

impl<R: Real> Tolerances<R> {
    pub fn new(rank_tol: R, psd_tol: R, residual_tol: R) -> Result<Self> {
        let cap = R::of(1e-2);
        for (name, v) in [
            ("rank_tol", rank_tol),
            ("psd_tol", psd_tol),
            ("residual_tol", residual_tol),
        ] {
            if !(v > R::zero()) || !(v <= cap) {
                return Err(CpError::InvalidTolerances {
                    context: format!("{name} must lie in (0, 1e-2], got {v:e}"),
                });
            }
        }
        Ok(Tolerances {
            rank_tol,
            psd_tol,
            residual_tol,
        })
    }
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<R: Real> {
    rows: usize,
    cols: usize,
    data: Vec<C<R>>,
}

impl<R: Real> CMatrix<R> {
    pub fn new(rows: usize, cols: usize, data: Vec<C<R>>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        CMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![c_zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, c_one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<R>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CMatrix { rows, cols, data }
    }

    /// Convenience constructor from real entries.
    pub fn from_real(rows: usize, cols: usize, entries: &[R]) -> Self {
        assert_eq!(entries.len(), rows * cols);
        CMatrix {
            rows,
            cols,
            data: entries.iter().map(|&x| c_re(x)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[C<R>] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C<R> {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: C<R>) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect();
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: C<R>) -> Self {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul dimension mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == c_zero() {
                    continue;
                }
                for c in 0..other.cols {
                    let v = out.get(r, c) + a * other.get(k, c);
                    out.set(r, c, v);
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c).conj());
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn trace(&self) -> C<R> {
        let n = self.rows.min(self.cols);
        (0..n).fold(c_zero(), |acc, i| acc + self.get(i, i))
    }

    pub fn max_abs(&self) -> R {
        self.data
            .iter()
            .map(|z| z.norm())
            .fold(R::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn fro_norm(&self) -> R {
        self.data
            .iter()
            .map(|z| z.norm_sqr())
            .fold(R::zero(), |a, b| a + b)
            .sqrt()
    }

    /// Max-entry distance to another matrix of the same shape.
    pub fn dist_max(&self, other: &Self) -> R {
        self.sub(other).max_abs()
    }

    pub fn hermitian_deviation(&self) -> R {
        if self.rows != self.cols {
            return R::infinity();
        }
        self.sub(&self.adjoint()).max_abs()
    }

    pub fn is_hermitian(&self, tol: R) -> bool {
        self.rows == self.cols && self.hermitian_deviation() <= tol
    }

    /// (A + A*) / 2.
    pub fn hermitize(&self) -> Self {
        assert_eq!(self.rows, self.cols);
        let half = c_re(R::of(0.5));
        self.add(&self.adjoint()).scale(half)
    }

    pub fn column(&self, c: usize) -> Vec<C<R>> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn set_column(&mut self, c: usize, v: &[C<R>]) {
        assert_eq!(v.len(), self.rows);
        for (r, &x) in v.iter().enumerate() {
            self.set(r, c, x);
        }
    }

    /// Copy `block` into self with top-left corner at (r0, c0).
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Self) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for r in 0..block.rows {
            for c in 0..block.cols {
                self.set(r0 + r, c0 + c, block.get(r, c));
            }
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols);
        Self::from_fn(rows, cols, |r, c| self.get(r0 + r, c0 + c))
    }

    /// Horizontal concatenation.
    pub fn hstack(parts: &[&Self]) -> Self {
        assert!(!parts.is_empty());
        let rows = parts[0].rows;
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let mut c0 = 0;
        for p in parts {
            assert_eq!(p.rows, rows);
            out.set_block(0, c0, p);
            c0 += p.cols;
        }
        out
    }

    /// Vertical concatenation.
    pub fn vstack(parts: &[&Self]) -> Self {
        assert!(!parts.is_empty());
        let cols = parts[0].cols;
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for p in parts {
            assert_eq!(p.cols, cols);
            out.set_block(r0, 0, p);
            r0 += p.rows;
        }
        out
    }

    /// Kronecker product.
    pub fn kron(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.rows * other.rows, self.cols * other.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let a = self.get(r, c);
                if a == c_zero() {
                    continue;
                }
                for rr in 0..other.rows {
                    for cc in 0..other.cols {
                        out.set(r * other.rows + rr, c * other.cols + cc, a * other.get(rr, cc));
                    }
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C<R>]) -> Vec<C<R>> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                (0..self.cols).fold(c_zero(), |acc, c| acc + self.get(r, c) * v[c])
            })
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Map entries to another scalar type (used by f32/f64 interop in tests).
    pub fn map_scalar<S: Real>(&self, f: impl Fn(R) -> S) -> CMatrix<S> {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|z| Complex::new(f(z.re), f(z.im)))
                .collect(),
        }
    }
}

/// Eigendecomposition of a Hermitian matrix: `values` descending, `vectors`
/// unitary with column `i` the eigenvector for `values[i]`.
#[derive(Debug, Clone)]
pub struct HermEig<R: Real> {
    pub values: Vec<R>,
    pub vectors: CMatrix<R>,
}

/// Cyclic Jacobi eigensolver for Hermitian matrices.
///
/// Errors with `NON_SQUARE` / `NON_HERMITIAN` (deviation beyond
/// `residual_tol`); the input is hermitized before iterating so roundoff-level
/// asymmetry is harmless.
pub fn herm_eig<R: Real>(m: &CMatrix<R>, tol: &Tolerances<R>) -> Result<HermEig<R>> {
    if m.rows() != m.cols() {
        return Err(CpError::NonSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let dev = m.hermitian_deviation();
    if dev > tol.residual_tol {
        return Err(CpError::NonHermitian {
            residual: dev.to_f64_lossy(),
        });
    }
    let n = m.rows();
    if n == 0 {
        return Ok(HermEig {
            values: vec![],
            vectors: CMatrix::zeros(0, 0),
        });
    }

    let mut a = m.hermitize();
    let mut v = CMatrix::identity(n);
    let scale = a.fro_norm().max(R::min_positive_value());
    let stop = scale * R::epsilon() * R::of(n as f64);

    for _sweep in 0..80 {
        let mut off = R::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off + a.get(p, q).norm_sqr();
            }
        }
        if off.sqrt() <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                let r = apq.norm();
                if r <= scale * R::epsilon() * R::of(1e-2) {
                    continue;
                }
                let app = a.get(p, p).re;
                let aqq = a.get(q, q).re;
                let tau = (aqq - app) / (r + r);
                // small-magnitude root of t^2 - 2*tau*t - 1 = 0, written in
                // the cancellation-free reciprocal form
                let sgn = if tau >= R::zero() { R::one() } else { -R::one() };
                let t = -sgn / (tau.abs() + (tau * tau + R::one()).sqrt());
                let c = R::one() / (t * t + R::one()).sqrt();
                let s = t * c;
                let phase = apq / c_re(r);
                let cs = c_re(c);
                let sp = phase * c_re(s); // s * e^{i phi}
                let spc = phase.conj() * c_re(s); // s * e^{-i phi}

                // A <- U* A U with U[pp]=c, U[pq]=-s*phase, U[qp]=s*conj(phase), U[qq]=c
                // columns: A <- A U
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, akp * cs + akq * spc);
                    a.set(k, q, akq * cs - akp * sp);
                }
                // rows: A <- U* A
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, apk * cs + aqk * sp);
                    a.set(q, k, aqk * cs - apk * spc);
                }
                // keep the pivot block exactly Hermitian
                a.set(p, q, c_zero());
                a.set(q, p, c_zero());
                let app_new = a.get(p, p).re;
                let aqq_new = a.get(q, q).re;
                a.set(p, p, c_re(app_new));
                a.set(q, q, c_re(aqq_new));

                // V <- V U
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, vkp * cs + vkq * spc);
                    v.set(k, q, vkq * cs - vkp * sp);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<R> = (0..n).map(|i| a.get(i, i).re).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).expect("finite eigenvalues"));
    let values: Vec<R> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (newc, &oldc) in order.iter().enumerate() {
        vectors.set_column(newc, &v.column(oldc));
    }
    Ok(HermEig { values, vectors })
}

/// Operator (spectral) norm via the Gram matrix of the smaller side.
pub fn op_norm<R: Real>(m: &CMatrix<R>, tol: &Tolerances<R>) -> R {
    if m.is_empty() {
        return R::zero();
    }
    let gram = if m.rows() <= m.cols() {
        m.mul(&m.adjoint())
    } else {
        m.adjoint().mul(m)
    };
    let eig = herm_eig(&gram, tol).expect("Gram matrix is Hermitian by construction");
    eig.values
        .first()
        .map(|&l| l.max(R::zero()).sqrt())
        .unwrap_or(R::zero())
}

/// Rank of a PSD matrix given its eigenvalues (descending): eigenvalues above
/// `rank_tol * lambda_max` count.
pub fn rank_from_eigs<R: Real>(values: &[R], tol: &Tolerances<R>) -> usize {
    let lmax = values.first().copied().unwrap_or(R::zero()).max(R::zero());
    if lmax == R::zero() {
        return 0;
    }
    let cut = tol.rank_tol * lmax;
    values.iter().filter(|&&l| l > cut).count()
}

/// Numerical rank of an arbitrary matrix (via its Gram matrix; singular
/// values above `sqrt(rank_tol) * sigma_max` effectively count).
pub fn rank<R: Real>(m: &CMatrix<R>, tol: &Tolerances<R>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let gram = if m.rows() <= m.cols() {
        m.mul(&m.adjoint())
    } else {
        m.adjoint().mul(m)
    };
    let eig = herm_eig(&gram, tol).expect("Gram matrix is Hermitian by construction");
    rank_from_eigs(&eig.values, tol)
}

/// Square root of a PSD Hermitian matrix.
///
/// Eigenvalues in `[-psd_tol, 0)` are clamped to zero; anything below
/// `-psd_tol` errors with `NOT_PSD`.
pub fn psd_sqrt<R: Real>(m: &CMatrix<R>, tol: &Tolerances<R>) -> Result<CMatrix<R>> {
    let eig = herm_eig(m, tol)?;
    let n = m.rows();
    let min = eig.values.last().copied().unwrap_or(R::zero());
    if min < -tol.psd_tol {
        return Err(CpError::NotPsd {
            min_eigenvalue: min.to_f64_lossy(),
        });
    }
    let mut out = CMatrix::zeros(n, n);
    for i in 0..n {
        let l = eig.values[i].max(R::zero()).sqrt();
        if l == R::zero() {
            continue;
        }
        let vi = eig.vectors.column(i);
        for r in 0..n {
            for c in 0..n {
                let v = out.get(r, c) + vi[r] * vi[c].conj() * c_re(l);
                out.set(r, c, v);
            }
        }
    }
    Ok(out.hermitize())
}

/// Moore-Penrose pseudo-inverse through the Hermitian eigendecomposition of
/// the smaller Gram matrix.
pub fn pinv<R: Real>(m: &CMatrix<R>, tol: &Tolerances<R>) -> CMatrix<R> {
    if m.is_empty() {
        return CMatrix::zeros(m.cols(), m.rows());
    }
    if m.rows() <= m.cols() {
        // pinv = M* V diag(1/l) V*
        let gram = m.mul(&m.adjoint());
        let eig = herm_eig(&gram, tol).expect("Gram matrix is Hermitian by construction");
        let r = rank_from_eigs(&eig.values, tol);
        let mut core = CMatrix::zeros(m.rows(), m.rows());
        for i in 0..r {
            let inv = R::one() / eig.values[i];
            let vi = eig.vectors.column(i);
            for a in 0..m.rows() {
                for b in 0..m.rows() {
                    let v = core.get(a, b) + vi[a] * vi[b].conj() * c_re(inv);
                    core.set(a, b, v);
                }
            }
        }
        m.adjoint().mul(&core)
    } else {
        let gram = m.adjoint().mul(m);
        let eig = herm_eig(&gram, tol).expect("Gram matrix is Hermitian by construction");
        let r = rank_from_eigs(&eig.values, tol);
        let mut core = CMatrix::zeros(m.cols(), m.cols());
        for i in 0..r {
            let inv = R::one() / eig.values[i];
            let vi = eig.vectors.column(i);
            for a in 0..m.cols() {
                for b in 0..m.cols() {
                    let v = core.get(a, b) + vi[a] * vi[b].conj() * c_re(inv);
                    core.set(a, b, v);
                }
            }
        }
        core.mul(&m.adjoint())
    }
}

/// Quotient of a semi-inner-product space by its null vectors.
///
/// `coord_map` (r x N) sends raw coordinates to coordinates in the quotient
/// and reproduces the Gram matrix: `coord_map* . coord_map = gram`. `lift`
/// (N x r) is a right inverse: `coord_map . lift = I_r`; `lift . coord_map`
/// is the orthogonal projection onto the non-null subspace.
#[derive(Debug, Clone)]
pub struct GramQuotient<R: Real> {
    pub gram: CMatrix<R>,
    pub rank: usize,
    pub coord_map: CMatrix<R>,
    pub lift: CMatrix<R>,
    pub min_eigenvalue: R,
}

pub fn gram_quotient<R: Real>(gram: &CMatrix<R>, tol: &Tolerances<R>) -> Result<GramQuotient<R>> {
    let eig = herm_eig(gram, tol)?;
    let n = gram.rows();
    let min = eig.values.last().copied().unwrap_or(R::zero());
    if min < -tol.psd_tol {
        return Err(CpError::GramNotPsd {
            min_eigenvalue: min.to_f64_lossy(),
        });
    }
    let r = rank_from_eigs(&eig.values, tol);
    let mut coord_map = CMatrix::zeros(r, n);
    let mut lift = CMatrix::zeros(n, r);
    for i in 0..r {
        let l = eig.values[i].max(R::zero());
        let sq = l.sqrt();
        let vi = eig.vectors.column(i);
        for k in 0..n {
            coord_map.set(i, k, vi[k].conj() * c_re(sq));
            lift.set(k, i, vi[k] / c_re(sq));
        }
    }
    Ok(GramQuotient {
        gram: gram.clone(),
        rank: r,
        coord_map,
        lift,
        min_eigenvalue: min,
    })
}

/// Random unitary: eigenvector matrix of a random Gaussian Hermitian matrix.
pub fn random_unitary<R: Real>(rng: &mut impl rand::Rng, d: usize) -> CMatrix<R> {
    let g = CMatrix::from_fn(d, d, |_, _| crate::scalar::c_std_normal(rng)).hermitize();
    herm_eig(&g, &Tolerances::default())
        .expect("Hermitian by construction")
        .vectors
}

/// Least-squares extension of a map specified on generators.
///
/// Columns of `generators_in` (d_src x N) and `generators_out` (d_tgt x N)
/// are paired; the result `X` minimizes the Frobenius norm of
/// `X * generators_in - generators_out`, with that norm returned as the
/// well-definedness residual.
pub fn lsq_define<R: Real>(
    generators_in: &CMatrix<R>,
    generators_out: &CMatrix<R>,
    tol: &Tolerances<R>,
) -> Result<(CMatrix<R>, R)> {
    if generators_in.cols() != generators_out.cols() {
        return Err(CpError::DimensionMismatch {
            context: format!(
                "generator families have {} and {} columns",
                generators_in.cols(),
                generators_out.cols()
            ),
        });
    }
    let x = generators_out.mul(&pinv(generators_in, tol));
    let residual = x.mul(generators_in).sub(generators_out).fro_norm();
    Ok((x, residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::c_re;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tols() -> Tolerances<f64> {
        Tolerances::default()
    }

    pub(crate) fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix<f64> {
        CMatrix::from_fn(rows, cols, |_, _| {
            Complex::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0)
        })
    }

    #[test]
    fn tolerances_validate() {
        assert!(Tolerances::new(1e-9, 1e-9, 1e-7).is_ok());
        assert!(Tolerances::new(0.0, 1e-9, 1e-7).is_err());
        assert!(Tolerances::new(1e-9, 0.5, 1e-7).is_err());
    }

    #[test]
    fn eig_diagonal() {
        let m = CMatrix::from_real(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let eig = herm_eig(&m, &tols()).unwrap();
        assert!((eig.values[0] - 3.0).abs() < 1e-12);
        assert!((eig.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_pauli_x() {
        let m = CMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let eig = herm_eig(&m, &tols()).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-12);
        assert!((eig.values[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 6, 6).hermitize();
            let eig = herm_eig(&a, &tols()).unwrap();
            // V diag(l) V*
            let mut d = CMatrix::zeros(6, 6);
            for i in 0..6 {
                d.set(i, i, c_re(eig.values[i]));
            }
            let rec = eig.vectors.mul(&d).mul(&eig.vectors.adjoint());
            assert!(rec.dist_max(&a) < 1e-10, "reconstruction failed");
            let unit = eig.vectors.adjoint().mul(&eig.vectors);
            assert!(unit.dist_max(&CMatrix::identity(6)) < 1e-12);
            // trace check
            let tr: f64 = eig.values.iter().sum();
            assert!((tr - a.trace().re).abs() < 1e-10);
        }
    }

    #[test]
    fn eig_rejects_bad_input() {
        let m = CMatrix::<f64>::zeros(2, 3);
        assert!(matches!(
            herm_eig(&m, &tols()),
            Err(CpError::NonSquare { .. })
        ));
        let m = CMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            herm_eig(&m, &tols()),
            Err(CpError::NonHermitian { .. })
        ));
    }

    #[test]
    fn psd_sqrt_examples() {
        let t = tols();
        let i = CMatrix::<f64>::identity(3);
        assert!(psd_sqrt(&i, &t).unwrap().dist_max(&i) < 1e-12);

        let d = CMatrix::from_real(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        let s = psd_sqrt(&d, &t).unwrap();
        let expect = CMatrix::from_real(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        assert!(s.dist_max(&expect) < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let b = random_matrix(&mut rng, 5, 5);
            let m = b.adjoint().mul(&b);
            let s = psd_sqrt(&m, &t).unwrap();
            assert!(s.mul(&s).dist_max(&m) < 1e-9);
            assert!(s.hermitian_deviation() < 1e-12);
        }

        let neg = CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(psd_sqrt(&neg, &t), Err(CpError::NotPsd { .. })));
    }

    #[test]
    fn gram_quotient_identity() {
        let g = CMatrix::<f64>::identity(3);
        let q = gram_quotient(&g, &tols()).unwrap();
        assert_eq!(q.rank, 3);
        let rec = q.coord_map.adjoint().mul(&q.coord_map);
        assert!(rec.dist_max(&g) < 1e-12);
        assert!(q.coord_map.mul(&q.lift).dist_max(&CMatrix::identity(3)) < 1e-12);
    }

    #[test]
    fn gram_quotient_rank_one() {
        // all-ones 2x2 Gram: one-dimensional quotient
        let g = CMatrix::from_real(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let q = gram_quotient(&g, &tols()).unwrap();
        assert_eq!(q.rank, 1);
        let rec = q.coord_map.adjoint().mul(&q.coord_map);
        assert!(rec.dist_max(&g) < 1e-12);
        assert!(q.coord_map.mul(&q.lift).dist_max(&CMatrix::identity(1)) < 1e-12);
        // coordinates of the two raw vectors agree (they differ by a null vector)
        assert!((q.coord_map.get(0, 0) - q.coord_map.get(0, 1)).norm() < 1e-12);
        assert!((q.coord_map.get(0, 0).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gram_quotient_zero_and_negative() {
        let z = CMatrix::<f64>::zeros(4, 4);
        let q = gram_quotient(&z, &tols()).unwrap();
        assert_eq!(q.rank, 0);
        assert_eq!(q.coord_map.rows(), 0);

        let neg = CMatrix::from_real(1, 1, &[-1.0]);
        assert!(matches!(
            gram_quotient(&neg, &tols()),
            Err(CpError::GramNotPsd { .. })
        ));
    }

    #[test]
    fn gram_quotient_reproduces_random_psd() {
        let t = tols();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 0..200 {
            let n = 1 + (k % 12);
            let b = random_matrix(&mut rng, n, n);
            let g = b.adjoint().mul(&b).hermitize();
            let q = gram_quotient(&g, &t).unwrap();
            let rec = q.coord_map.adjoint().mul(&q.coord_map);
            assert!(
                rec.dist_max(&g) <= 1e-9 * g.max_abs().max(1.0),
                "gram not reproduced at trial {k}"
            );
            if q.rank > 0 {
                assert!(
                    q.coord_map
                        .mul(&q.lift)
                        .dist_max(&CMatrix::identity(q.rank))
                        < 1e-9
                );
            }
        }
    }

    #[test]
    fn pinv_properties() {
        let t = tols();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 4, 6);
            let p = pinv(&m, &t);
            assert!(m.mul(&p).mul(&m).dist_max(&m) < 1e-9);
            assert!(p.mul(&m).mul(&p).dist_max(&p) < 1e-9);
        }
    }

    #[test]
    fn lsq_exact_and_inconsistent() {
        let t = tols();
        // identity system
        let gin = CMatrix::<f64>::identity(3);
        let gout = CMatrix::from_real(3, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 5.0]);
        let (x, res) = lsq_define(&gin, &gout, &t).unwrap();
        assert!(x.dist_max(&gout) < 1e-12);
        assert!(res < 1e-12);

        // inconsistent 2 -> 1 system: the two input columns coincide but the
        // outputs differ; optimum is the midpoint with residual sqrt(1/2)
        let gin = CMatrix::from_real(1, 2, &[1.0, 1.0]);
        let gout = CMatrix::from_real(1, 2, &[1.0, 2.0]);
        let (x, res) = lsq_define(&gin, &gout, &t).unwrap();
        assert!((x.get(0, 0).re - 1.5).abs() < 1e-12);
        assert!((res - (0.5f64).sqrt()).abs() < 1e-12);

        let bad = CMatrix::<f64>::zeros(1, 3);
        assert!(matches!(
            lsq_define(&gin, &bad, &t),
            Err(CpError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn op_norm_examples() {
        let t = tols();
        let m = CMatrix::from_real(2, 2, &[3.0, 0.0, 0.0, -4.0]);
        assert!((op_norm(&m, &t) - 4.0).abs() < 1e-10);
        let v = CMatrix::from_real(1, 2, &[3.0, 4.0]);
        assert!((op_norm(&v, &t) - 5.0).abs() < 1e-10);
        assert_eq!(op_norm(&CMatrix::<f64>::zeros(0, 3), &t), 0.0);
    }

    #[test]
    fn works_in_f32() {
        let t = Tolerances::<f32>::new(1e-5, 1e-5, 1e-3).unwrap();
        let m = CMatrix::<f32>::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let eig = herm_eig(&m, &t).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-5);
        assert!((eig.values[1] + 1.0).abs() < 1e-5);
    }
}

//! Matrices of maps: completely n-positive matrices `[φ] = (φ_ij): A -> L(H)`
//! and their module companions `[Φ] = (Φ_ij): M -> L(H, K)`.
//!
//! Maps are stored densely as matrices acting on vectorized inputs, so
//! adversarial (non-CP) inputs are representable; positivity is a check, not
//! an invariant. Complete positivity of `[φ]` is decided through the Choi
//! matrix of the induced map on `M_{n·d}` (composed with the conditional
//! expectation onto the block-diagonal subalgebra).

use crate::algebra::{AlgElement, CStarAlgebra};
use crate::error::{CpError, Result};
use crate::flag::{flag_violation, FlagOperator, FlagSpace};
use crate::linalg::{herm_eig, CMatrix, Tolerances};
use crate::module::{HilbertModule, ModuleElement};
use crate::scalar::{c_re, Real, C};
use std::sync::Arc;

/// An `n x n` matrix of linear maps `A -> L(H)`.
///
/// Entry `(i, j)` is a `(h·h) x dim(A)` matrix sending vectorized algebra
/// elements to vectorized (row-major) `h x h` operator matrices.
#[derive(Debug, Clone)]
pub struct NPositiveMatrixMap<R: Real> {
    n: usize,
    algebra: Arc<CStarAlgebra>,
    space: FlagSpace,
    maps: Vec<CMatrix<R>>,
}

impl<R: Real> NPositiveMatrixMap<R> {
    pub fn new(
        n: usize,
        algebra: Arc<CStarAlgebra>,
        space: FlagSpace,
        maps: Vec<CMatrix<R>>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(CpError::InvalidInput {
                context: "matrix size n must be positive".into(),
            });
        }
        if space.levels() != algebra.levels() {
            return Err(CpError::ShapeMismatch {
                context: format!(
                    "space has {} flag levels but the algebra chain has {}",
                    space.levels(),
                    algebra.levels()
                ),
            });
        }
        if maps.len() != n * n {
            return Err(CpError::DimensionMismatch {
                context: format!("expected {} map entries, got {}", n * n, maps.len()),
            });
        }
        let h = space.ambient_dim();
        for (e, m) in maps.iter().enumerate() {
            if m.rows() != h * h || m.cols() != algebra.dim() {
                return Err(CpError::DimensionMismatch {
                    context: format!(
                        "map entry {e} is {}x{}, expected {}x{}",
                        m.rows(),
                        m.cols(),
                        h * h,
                        algebra.dim()
                    ),
                });
            }
            if !m.all_finite() {
                return Err(CpError::InvalidInput {
                    context: format!("map entry {e} has non-finite coefficients"),
                });
            }
        }
        Ok(NPositiveMatrixMap {
            n,
            algebra,
            space,
            maps,
        })
    }

    /// Build from basis images: `images(i, j, b)` is the `h x h` value of
    /// `φ_ij` on the `b`-th matrix-unit basis element.
    pub fn from_images(
        n: usize,
        algebra: Arc<CStarAlgebra>,
        space: FlagSpace,
        mut images: impl FnMut(usize, usize, usize) -> CMatrix<R>,
    ) -> Result<Self> {
        let h = space.ambient_dim();
        let dim_a = algebra.dim();
        let mut maps = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut m = CMatrix::zeros(h * h, dim_a);
                for b in 0..dim_a {
                    let img = images(i, j, b);
                    assert_eq!((img.rows(), img.cols()), (h, h), "basis image shape");
                    m.set_column(b, img.data());
                }
                maps.push(m);
            }
        }
        Self::new(n, algebra, space, maps)
    }

    pub fn zero(n: usize, algebra: Arc<CStarAlgebra>, space: FlagSpace) -> Result<Self> {
        let h = space.ambient_dim();
        let dim_a = algebra.dim();
        let maps = vec![CMatrix::zeros(h * h, dim_a); n * n];
        Self::new(n, algebra, space, maps)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn algebra(&self) -> &Arc<CStarAlgebra> {
        &self.algebra
    }

    pub fn space(&self) -> &FlagSpace {
        &self.space
    }

    pub fn entry(&self, i: usize, j: usize) -> Result<&CMatrix<R>> {
        if i >= self.n || j >= self.n {
            return Err(CpError::IndexOutOfRange {
                index: i.max(j),
                len: self.n,
            });
        }
        Ok(&self.maps[i * self.n + j])
    }

    /// Value of `φ_ij` on the `b`-th basis element, as an `h x h` matrix.
    pub fn basis_image(&self, i: usize, j: usize, b: usize) -> CMatrix<R> {
        let h = self.space.ambient_dim();
        let m = &self.maps[i * self.n + j];
        let mut out = CMatrix::zeros(h, h);
        for r in 0..h {
            for c in 0..h {
                out.set(r, c, m.get(r * h + c, b));
            }
        }
        out
    }

    /// Evaluate `φ_ij(a)` without flag validation.
    pub fn evaluate_matrix(&self, i: usize, j: usize, a: &AlgElement<R>) -> Result<CMatrix<R>> {
        if i >= self.n || j >= self.n {
            return Err(CpError::IndexOutOfRange {
                index: i.max(j),
                len: self.n,
            });
        }
        if a.algebra() != &self.algebra {
            return Err(CpError::AlgebraMismatch);
        }
        let h = self.space.ambient_dim();
        let out = self.maps[i * self.n + j].mul_vec(&a.vectorize());
        Ok(CMatrix::new(h, h, out))
    }

    /// Evaluate `φ_ij(a)` as a flag operator on `H`.
    pub fn evaluate(
        &self,
        i: usize,
        j: usize,
        a: &AlgElement<R>,
        tol: &Tolerances<R>,
    ) -> Result<FlagOperator<R>> {
        let m = self.evaluate_matrix(i, j, a)?;
        FlagOperator::new(self.space.clone(), self.space.clone(), m, tol)
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.algebra != other.algebra || self.space != other.space {
            return Err(CpError::ShapeMismatch {
                context: "map matrices have different (n, algebra, space) data".into(),
            });
        }
        Ok(())
    }

    pub fn add_maps(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let maps = self
            .maps
            .iter()
            .zip(&other.maps)
            .map(|(a, b)| a.add(b))
            .collect();
        Ok(NPositiveMatrixMap {
            n: self.n,
            algebra: Arc::clone(&self.algebra),
            space: self.space.clone(),
            maps,
        })
    }

    pub fn sub_maps(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let maps = self
            .maps
            .iter()
            .zip(&other.maps)
            .map(|(a, b)| a.sub(b))
            .collect();
        Ok(NPositiveMatrixMap {
            n: self.n,
            algebra: Arc::clone(&self.algebra),
            space: self.space.clone(),
            maps,
        })
    }

    pub fn scale_maps(&self, s: C<R>) -> Self {
        NPositiveMatrixMap {
            n: self.n,
            algebra: Arc::clone(&self.algebra),
            space: self.space.clone(),
            maps: self.maps.iter().map(|m| m.scale(s)).collect(),
        }
    }

    pub fn dist_max(&self, other: &Self) -> R {
        self.maps
            .iter()
            .zip(&other.maps)
            .map(|(a, b)| a.dist_max(b))
            .fold(R::zero(), |acc, d| acc.max(d))
    }

    /// Structural residuals: worst flag violation over basis images and the
    /// Hermiticity-pairing residual `max ||φ_ji(a*) - φ_ij(a)*||`.
    pub fn validate(&self) -> MapValidation<R> {
        let mut flag = R::zero();
        let mut herm = R::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                for b in 0..self.algebra.dim() {
                    let img = self.basis_image(i, j, b);
                    flag = flag.max(
                        flag_violation(&img, &self.space, &self.space)
                            .expect("shapes agree by construction"),
                    );
                    let paired = self.basis_image(j, i, self.algebra.basis_adjoint(b));
                    herm = herm.max(paired.dist_max(&img.adjoint()));
                }
            }
        }
        MapValidation {
            flag_violation: flag,
            hermiticity_residual: herm,
        }
    }

    /// Choi matrix of the induced map on `M_{n·d}` (where `d` is the
    /// dimension of the defining representation of `A`), composed with the
    /// conditional expectation onto block-diagonal matrices. `[φ]` is
    /// completely n-positive exactly when this matrix is PSD.
    pub fn choi_matrix(&self) -> CMatrix<R> {
        let n = self.n;
        let d = self.algebra.rep_dim();
        let h = self.space.ambient_dim();
        let side = n * d * n * h;
        let mut choi = CMatrix::zeros(side, side);
        // index ((i, s), (i2, u)) -> ((i*d + s)*n + i2)*h + u
        for k in 0..self.algebra.num_blocks() {
            let dk = self.algebra.block_dims()[k];
            let off = self.algebra.rep_offset(k);
            for i in 0..n {
                for j in 0..n {
                    for r in 0..dk {
                        for c in 0..dk {
                            let img = self.basis_image(i, j, self.algebra.basis_index(k, r, c));
                            let s = off + r;
                            let t = off + c;
                            for u in 0..h {
                                for v in 0..h {
                                    let row = ((i * d + s) * n + i) * h + u;
                                    let col = ((j * d + t) * n + j) * h + v;
                                    choi.set(row, col, img.get(u, v));
                                }
                            }
                        }
                    }
                }
            }
        }
        choi
    }

    /// Hermiticity deviation and minimal eigenvalue of the Choi matrix.
    pub fn cp_report(&self, tol: &Tolerances<R>) -> CpReport<R> {
        let choi = self.choi_matrix();
        let herm = choi.hermitian_deviation();
        if herm > tol.residual_tol {
            return CpReport {
                hermiticity_residual: herm,
                min_choi_eigenvalue: None,
            };
        }
        let eig = herm_eig(&choi, tol).expect("hermitized within tolerance");
        CpReport {
            hermiticity_residual: herm,
            min_choi_eigenvalue: eig.values.last().copied(),
        }
    }

    /// Complete n-positivity check: Choi Hermitian within `residual_tol` and
    /// PSD within `psd_tol`.
    pub fn cp_check(&self, tol: &Tolerances<R>) -> bool {
        let report = self.cp_report(tol);
        match report.min_choi_eigenvalue {
            Some(min) => min >= -tol.psd_tol,
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MapValidation<R: Real> {
    pub flag_violation: R,
    pub hermiticity_residual: R,
}

#[derive(Debug, Clone, Copy)]
pub struct CpReport<R: Real> {
    pub hermiticity_residual: R,
    /// `None` when the Choi matrix is too far from Hermitian to diagonalize.
    pub min_choi_eigenvalue: Option<R>,
}

/// An `n x n` matrix of module maps `M -> L(H, K)` together with its scalar
/// part `[φ]: A -> L(H)`.
///
/// Entry `(i, j)` is a `(k·h) x dim(M)` matrix on vectorized module elements
/// producing vectorized (row-major) `k x h` operators.
#[derive(Debug, Clone)]
pub struct ModuleCPMatrix<R: Real> {
    n: usize,
    module: Arc<HilbertModule>,
    source: FlagSpace,
    target: FlagSpace,
    maps: Vec<CMatrix<R>>,
    scalar: NPositiveMatrixMap<R>,
}

impl<R: Real> ModuleCPMatrix<R> {
    pub fn new(
        module: Arc<HilbertModule>,
        target: FlagSpace,
        maps: Vec<CMatrix<R>>,
        scalar: NPositiveMatrixMap<R>,
    ) -> Result<Self> {
        let n = scalar.n();
        if module.algebra() != scalar.algebra() {
            return Err(CpError::AlgebraMismatch);
        }
        let source = scalar.space().clone();
        if target.levels() != source.levels() {
            return Err(CpError::ShapeMismatch {
                context: format!(
                    "target has {} flag levels, source has {}",
                    target.levels(),
                    source.levels()
                ),
            });
        }
        if maps.len() != n * n {
            return Err(CpError::DimensionMismatch {
                context: format!("expected {} module map entries, got {}", n * n, maps.len()),
            });
        }
        let k = target.ambient_dim();
        let h = source.ambient_dim();
        for (e, m) in maps.iter().enumerate() {
            if m.rows() != k * h || m.cols() != module.dim() {
                return Err(CpError::DimensionMismatch {
                    context: format!(
                        "module map entry {e} is {}x{}, expected {}x{}",
                        m.rows(),
                        m.cols(),
                        k * h,
                        module.dim()
                    ),
                });
            }
            if !m.all_finite() {
                return Err(CpError::InvalidInput {
                    context: format!("module map entry {e} has non-finite coefficients"),
                });
            }
        }
        Ok(ModuleCPMatrix {
            n,
            module,
            source,
            target,
            maps,
            scalar,
        })
    }

    /// Build from basis images: `images(i, j, b)` is the `k x h` value of
    /// `Φ_ij` on the `b`-th module basis element.
    pub fn from_images(
        module: Arc<HilbertModule>,
        target: FlagSpace,
        scalar: NPositiveMatrixMap<R>,
        mut images: impl FnMut(usize, usize, usize) -> CMatrix<R>,
    ) -> Result<Self> {
        let n = scalar.n();
        let k = target.ambient_dim();
        let h = scalar.space().ambient_dim();
        let dim_m = module.dim();
        let mut maps = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut m = CMatrix::zeros(k * h, dim_m);
                for b in 0..dim_m {
                    let img = images(i, j, b);
                    assert_eq!((img.rows(), img.cols()), (k, h), "basis image shape");
                    m.set_column(b, img.data());
                }
                maps.push(m);
            }
        }
        Self::new(module, target, maps, scalar)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn module(&self) -> &Arc<HilbertModule> {
        &self.module
    }

    pub fn source(&self) -> &FlagSpace {
        &self.source
    }

    pub fn target(&self) -> &FlagSpace {
        &self.target
    }

    pub fn scalar_part(&self) -> &NPositiveMatrixMap<R> {
        &self.scalar
    }

    pub fn entry(&self, i: usize, j: usize) -> Result<&CMatrix<R>> {
        if i >= self.n || j >= self.n {
            return Err(CpError::IndexOutOfRange {
                index: i.max(j),
                len: self.n,
            });
        }
        Ok(&self.maps[i * self.n + j])
    }

    pub fn basis_image(&self, i: usize, j: usize, b: usize) -> CMatrix<R> {
        let k = self.target.ambient_dim();
        let h = self.source.ambient_dim();
        let m = &self.maps[i * self.n + j];
        let mut out = CMatrix::zeros(k, h);
        for r in 0..k {
            for c in 0..h {
                out.set(r, c, m.get(r * h + c, b));
            }
        }
        out
    }

    pub fn evaluate_matrix(&self, i: usize, j: usize, x: &ModuleElement<R>) -> Result<CMatrix<R>> {
        if i >= self.n || j >= self.n {
            return Err(CpError::IndexOutOfRange {
                index: i.max(j),
                len: self.n,
            });
        }
        if x.module() != &self.module {
            return Err(CpError::ModuleMismatch);
        }
        let k = self.target.ambient_dim();
        let h = self.source.ambient_dim();
        let out = self.maps[i * self.n + j].mul_vec(&x.vectorize());
        Ok(CMatrix::new(k, h, out))
    }

    pub fn evaluate(
        &self,
        i: usize,
        j: usize,
        x: &ModuleElement<R>,
        tol: &Tolerances<R>,
    ) -> Result<FlagOperator<R>> {
        let m = self.evaluate_matrix(i, j, x)?;
        FlagOperator::new(self.source.clone(), self.target.clone(), m, tol)
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.n != other.n
            || self.module != other.module
            || self.source != other.source
            || self.target != other.target
        {
            return Err(CpError::ShapeMismatch {
                context: "module map matrices have different (n, module, H, K) data".into(),
            });
        }
        Ok(())
    }

    pub fn add_maps(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let maps = self
            .maps
            .iter()
            .zip(&other.maps)
            .map(|(a, b)| a.add(b))
            .collect();
        Ok(ModuleCPMatrix {
            n: self.n,
            module: Arc::clone(&self.module),
            source: self.source.clone(),
            target: self.target.clone(),
            maps,
            scalar: self.scalar.add_maps(&other.scalar).expect("same shape"),
        })
    }

    /// Scale the module maps by `s`; the scalar part scales by `|s|²` so the
    /// compatibility identity is preserved.
    pub fn scale_maps(&self, s: C<R>) -> Self {
        ModuleCPMatrix {
            n: self.n,
            module: Arc::clone(&self.module),
            source: self.source.clone(),
            target: self.target.clone(),
            maps: self.maps.iter().map(|m| m.scale(s)).collect(),
            scalar: self.scalar.scale_maps(c_re(s.norm_sqr())),
        }
    }

    pub fn dist_max(&self, other: &Self) -> R {
        self.maps
            .iter()
            .zip(&other.maps)
            .map(|(a, b)| a.dist_max(b))
            .fold(R::zero(), |acc, d| acc.max(d))
    }

    /// Worst flag violation over the basis images of the module maps.
    pub fn flag_violation(&self) -> R {
        let mut worst = R::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                for b in 0..self.module.dim() {
                    let img = self.basis_image(i, j, b);
                    worst = worst.max(
                        flag_violation(&img, &self.source, &self.target)
                            .expect("shapes agree by construction"),
                    );
                }
            }
        }
        worst
    }

    /// Compatibility with the scalar part: the largest entry of
    /// `Σ_r Φ_ri(x)* Φ_rj(y) - φ_ij(⟨x, y⟩)` over basis pairs `(x, y)` and
    /// all `(i, j)`.
    pub fn compatibility_residual(&self) -> R {
        let n = self.n;
        let dim_m = self.module.dim();
        let alg = self.module.algebra();
        let mut worst = R::zero();
        // cache basis images
        let mut images = Vec::with_capacity(n * n * dim_m);
        for i in 0..n {
            for j in 0..n {
                for b in 0..dim_m {
                    images.push(self.basis_image(i, j, b));
                }
            }
        }
        let img = |i: usize, j: usize, b: usize| &images[(i * n + j) * dim_m + b];
        for b in 0..dim_m {
            let (kb, rb, sb) = self.module.basis_coords(b).expect("valid index");
            for c in 0..dim_m {
                let (kc, rc, sc) = self.module.basis_coords(c).expect("valid index");
                // <x_b, x_c> is zero unless same block and same row, in which
                // case it is the matrix unit e_{sb,sc} of block kb
                let ip = (kb == kc && rb == rc)
                    .then(|| alg.basis_index(kb, sb, sc));
                for i in 0..n {
                    for j in 0..n {
                        let mut lhs =
                            CMatrix::zeros(self.source.ambient_dim(), self.source.ambient_dim());
                        for r in 0..n {
                            lhs = lhs.add(&img(r, i, b).adjoint().mul(img(r, j, c)));
                        }
                        let rhs = match ip {
                            Some(idx) => self.scalar.basis_image(i, j, idx),
                            None => CMatrix::zeros(
                                self.source.ambient_dim(),
                                self.source.ambient_dim(),
                            ),
                        };
                        worst = worst.max(lhs.dist_max(&rhs));
                    }
                }
            }
        }
        worst
    }
}

/// Outcome of [`random_cp_pair`]: the maps plus the Stinespring data that
/// generated them (a valid, generally non-minimal dilation witness).
pub struct GeneratedPair<R: Real> {
    pub phi: NPositiveMatrixMap<R>,
    pub big_phi: ModuleCPMatrix<R>,
    pub witness: crate::ksgns::StinespringData<R>,
}

/// Default nondecreasing multiplicity profile over `m` levels ending at
/// `mult` copies.
pub fn default_level_multiplicities(levels: usize, mult: usize) -> Vec<usize> {
    (0..levels)
        .map(|a| ((mult * (a + 1)) + levels - 1) / levels)
        .map(|v| v.max(1))
        .collect()
}

/// Draw a compatible pair `([φ], [Φ])` from Stinespring form.
///
/// The dilation representation is `mult` copies of the defining
/// representation, with copies entering level by level according to
/// `level_mults` (nondecreasing, ending at `mult`; defaults to an even
/// spread). `S_i` are random flag-compatible operators, and the `W_i` family
/// is normalized per flag level so that `Σ_i W_i W_i* = I` exactly; the
/// returned pair therefore satisfies complete n-positivity and the
/// compatibility identity by construction. Fully deterministic in `seed`.
pub fn random_cp_pair<R: Real>(
    algebra: &Arc<CStarAlgebra>,
    module: &Arc<HilbertModule>,
    space_h: &FlagSpace,
    space_k: &FlagSpace,
    n: usize,
    mult: usize,
    level_mults: Option<&[usize]>,
    seed: u64,
) -> Result<GeneratedPair<R>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    if module.algebra() != algebra {
        return Err(CpError::AlgebraMismatch);
    }
    if n == 0 || mult == 0 {
        return Err(CpError::InvalidInput {
            context: "n and multiplicity must be positive".into(),
        });
    }
    let m = algebra.levels();
    if space_h.levels() != m || space_k.levels() != m {
        return Err(CpError::ShapeMismatch {
            context: format!(
                "flag levels ({}, {}) must both equal the chain length {m}",
                space_h.levels(),
                space_k.levels()
            ),
        });
    }
    let default_profile = default_level_multiplicities(m, mult);
    let profile: &[usize] = match level_mults {
        Some(p) => p,
        None => &default_profile,
    };
    if profile.len() != m
        || profile.windows(2).any(|w| w[0] > w[1])
        || *profile.last().unwrap() != mult
        || profile.iter().any(|&p| p == 0)
    {
        return Err(CpError::BadMultiplicity {
            context: format!(
                "level multiplicities {profile:?} must be positive, nondecreasing over {m} levels and end at {mult}"
            ),
        });
    }

    // chunk (copy c, block k) enters at the first level where both are live
    let chunk_level = |c: usize, k: usize| -> usize {
        (0..m)
            .find(|&a| c < profile[a] && algebra.chain()[a].contains(&k))
            .expect("last level contains everything")
    };

    // dilation H: coordinates (c, k, r) ordered by entry level
    let mut h_coords: Vec<(usize, usize, usize)> = Vec::new();
    for lvl in 0..m {
        for c in 0..mult {
            for k in 0..algebra.num_blocks() {
                if chunk_level(c, k) == lvl {
                    for r in 0..algebra.block_dims()[k] {
                        h_coords.push((c, k, r));
                    }
                }
            }
        }
    }
    let dim_hpi = h_coords.len();
    debug_assert_eq!(dim_hpi, mult * algebra.rep_dim());
    let mut hpi_dims = Vec::with_capacity(m);
    for lvl in 0..m {
        hpi_dims.push(
            h_coords
                .iter()
                .filter(|&&(c, k, _)| chunk_level(c, k) <= lvl)
                .count(),
        );
    }
    let hpi_flag = FlagSpace::new(hpi_dims)?;

    // dilation K: coordinates (c, k, row)
    let mut k_coords: Vec<(usize, usize, usize)> = Vec::new();
    for lvl in 0..m {
        for c in 0..mult {
            for k in 0..algebra.num_blocks() {
                if chunk_level(c, k) == lvl {
                    for r in 0..module.row_dims()[k] {
                        k_coords.push((c, k, r));
                    }
                }
            }
        }
    }
    let dim_kpi = k_coords.len();
    let mut kpi_dims = Vec::with_capacity(m);
    for lvl in 0..m {
        kpi_dims.push(
            k_coords
                .iter()
                .filter(|&&(c, k, _)| chunk_level(c, k) <= lvl)
                .count(),
        );
    }
    let kpi_flag = FlagSpace::new(kpi_dims.clone())?;

    // representation matrices on the ordered coordinates
    let dim_a = algebra.dim();
    let mut pi_phi = Vec::with_capacity(dim_a);
    for b in 0..dim_a {
        let (kb, rb, sb) = algebra.basis_coords(b)?;
        let mut mat = CMatrix::zeros(dim_hpi, dim_hpi);
        for (row, &(c1, k1, r1)) in h_coords.iter().enumerate() {
            if k1 != kb || r1 != rb {
                continue;
            }
            for (col, &(c2, k2, r2)) in h_coords.iter().enumerate() {
                if c2 == c1 && k2 == kb && r2 == sb {
                    mat.set(row, col, crate::scalar::c_one());
                }
            }
        }
        pi_phi.push(mat);
    }
    let dim_m = module.dim();
    let mut pi_mod = Vec::with_capacity(dim_m);
    for b in 0..dim_m {
        let (kb, rowb, colb) = module.basis_coords(b)?;
        let mut mat = CMatrix::zeros(dim_kpi, dim_hpi);
        for (row, &(c1, k1, r1)) in k_coords.iter().enumerate() {
            if k1 != kb || r1 != rowb {
                continue;
            }
            for (col, &(c2, k2, r2)) in h_coords.iter().enumerate() {
                if c2 == c1 && k2 == kb && r2 == colb {
                    mat.set(row, col, crate::scalar::c_one());
                }
            }
        }
        pi_mod.push(mat);
    }

    // S_i: random flag-compatible H -> H_pi, scaled to keep map norms O(1)
    let s_scale = c_re(R::one() / R::of(dim_hpi as f64).sqrt());
    let s_ops: Vec<CMatrix<R>> = (0..n)
        .map(|_| crate::flag::random_flag_compatible::<R>(&mut rng, space_h, &hpi_flag).scale(s_scale))
        .collect();

    // W_i: per flag level, a normalized coisometry family K -> K_pi
    let tol_local = Tolerances::<R>::default();
    let kd = space_k.diff_dims();
    let pd = kpi_flag.diff_dims();
    let mut w_ops = vec![CMatrix::<R>::zeros(dim_kpi, space_k.ambient_dim()); n];
    let mut k_off = 0usize; // column offset into K
    let mut p_off = 0usize; // row offset into K_pi
    for lvl in 0..m {
        let cols = kd[lvl];
        let rows = pd[lvl];
        if rows > 0 {
            if n * cols < rows {
                return Err(CpError::BadMultiplicity {
                    context: format!(
                        "level {lvl}: dilation needs n·{cols} >= {rows} fresh coisometry columns; \
                         reduce the multiplicity or enlarge K"
                    ),
                });
            }
            let g: Vec<CMatrix<R>> = (0..n)
                .map(|_| {
                    CMatrix::from_fn(rows, cols, |_, _| crate::scalar::c_std_normal(&mut rng))
                })
                .collect();
            let mut gram = CMatrix::zeros(rows, rows);
            for gr in &g {
                gram = gram.add(&gr.mul(&gr.adjoint()));
            }
            let eig = herm_eig(&gram.hermitize(), &tol_local)
                .expect("Gram matrix is Hermitian by construction");
            let lmax = eig.values[0];
            let lmin = *eig.values.last().unwrap();
            if lmin <= lmax * R::of(1e-10) {
                return Err(CpError::InvalidInput {
                    context: "degenerate coisometry draw; retry with another seed".into(),
                });
            }
            // gram^{-1/2}
            let mut inv_sqrt = CMatrix::zeros(rows, rows);
            for e in 0..rows {
                let w = R::one() / eig.values[e].sqrt();
                let vi = eig.vectors.column(e);
                for r in 0..rows {
                    for c in 0..rows {
                        let v = inv_sqrt.get(r, c) + vi[r] * vi[c].conj() * c_re(w);
                        inv_sqrt.set(r, c, v);
                    }
                }
            }
            for (i, gr) in g.iter().enumerate() {
                w_ops[i].set_block(p_off, k_off, &inv_sqrt.mul(gr));
            }
        }
        k_off += cols;
        p_off += rows;
    }

    let phi = NPositiveMatrixMap::from_images(n, Arc::clone(algebra), space_h.clone(), |i, j, b| {
        s_ops[i].adjoint().mul(&pi_phi[b]).mul(&s_ops[j])
    })?;
    let big_phi = ModuleCPMatrix::from_images(
        Arc::clone(module),
        space_k.clone(),
        phi.clone(),
        |i, j, b| w_ops[i].adjoint().mul(&pi_mod[b]).mul(&s_ops[j]),
    )?;

    let witness = crate::ksgns::StinespringData {
        n,
        algebra: Arc::clone(algebra),
        module: Arc::clone(module),
        space_h: space_h.clone(),
        space_k: space_k.clone(),
        dim_h: dim_hpi,
        dim_k: dim_kpi,
        pi_phi,
        pi_mod,
        s_ops,
        w_ops,
    };
    Ok(GeneratedPair {
        phi,
        big_phi,
        witness,
    })
}

/// Canonical multiplicity-one pair on a one-level algebra: `φ` is the
/// defining representation on `H = C^{rep_dim}` (so for a single block,
/// the identity map) and `Φ` is left multiplication into `K = C^{rows}`.
pub fn canonical_pair<R: Real>(
    algebra: &Arc<CStarAlgebra>,
    module: &Arc<HilbertModule>,
) -> Result<GeneratedPair<R>> {
    if module.algebra() != algebra {
        return Err(CpError::AlgebraMismatch);
    }
    if algebra.levels() != 1 {
        return Err(CpError::ShapeMismatch {
            context: "canonical pair requires a one-level chain".into(),
        });
    }
    let h = algebra.rep_dim();
    let k = module.rep_row_dim();
    let space_h = FlagSpace::trivial(h);
    let space_k = FlagSpace::trivial(k);
    let pi_phi: Vec<CMatrix<R>> = (0..algebra.dim())
        .map(|b| {
            AlgElement::<R>::basis(algebra, b)
                .expect("valid index")
                .represent()
        })
        .collect();
    let pi_mod: Vec<CMatrix<R>> = (0..module.dim())
        .map(|b| {
            ModuleElement::<R>::basis(module, b)
                .expect("valid index")
                .rep_matrix()
        })
        .collect();
    let phi =
        NPositiveMatrixMap::from_images(1, Arc::clone(algebra), space_h.clone(), |_, _, b| {
            pi_phi[b].clone()
        })?;
    let big_phi = ModuleCPMatrix::from_images(
        Arc::clone(module),
        space_k.clone(),
        phi.clone(),
        |_, _, b| pi_mod[b].clone(),
    )?;
    let witness = crate::ksgns::StinespringData {
        n: 1,
        algebra: Arc::clone(algebra),
        module: Arc::clone(module),
        space_h: space_h.clone(),
        space_k: space_k.clone(),
        dim_h: h,
        dim_k: k,
        pi_phi,
        pi_mod,
        s_ops: vec![CMatrix::identity(h)],
        w_ops: vec![CMatrix::identity(k)],
    };
    Ok(GeneratedPair {
        phi,
        big_phi,
        witness,
    })
}

//! Minimal Stinespring-type dilations of compatible pairs `([φ], [Φ])`.
//!
//! The construction quotients the free semi-inner-product space `(A ⊗ H)^n`
//! by the Gram matrix of `[φ]`, carries the left action of `A` and of the
//! module through least-squares extension on the generating family, and
//! assembles the dilated space on the `K` side from the per-row generator
//! subspaces. Reconstruction identities
//! `φ_ij(a) = S_i* π(a) S_j` and `Φ_ij(x) = W_i* Π(x) S_j`
//! then hold up to quotient accuracy.

use crate::algebra::CStarAlgebra;
use crate::cpmatrix::{ModuleCPMatrix, NPositiveMatrixMap};
use crate::error::{CpError, Result};
use crate::flag::FlagSpace;
use crate::linalg::{
    gram_quotient, herm_eig, lsq_define, rank, rank_from_eigs, CMatrix, Tolerances,
};
use crate::module::HilbertModule;
use crate::scalar::{c_zero, Real};
use std::sync::Arc;

/// Stinespring data for a pair `([φ], [Φ])`: a unital *-representation
/// `π` of `A` on the dilation space `C^{dim_h}`, a module representation
/// `Π: M -> L(C^{dim_h}, C^{dim_k})`, and operator families `S_i: H -> C^{dim_h}`,
/// `W_i: K -> C^{dim_k}` with `Σ_i W_i W_i* = I`.
///
/// Representations are stored by their values on the matrix-unit bases of
/// `A` and `M` and extended by linearity.
#[derive(Debug, Clone)]
pub struct StinespringData<R: Real> {
    pub n: usize,
    pub algebra: Arc<CStarAlgebra>,
    pub module: Arc<HilbertModule>,
    pub space_h: FlagSpace,
    pub space_k: FlagSpace,
    pub dim_h: usize,
    pub dim_k: usize,
    /// `π` on the algebra basis; `dim_h x dim_h` each.
    pub pi_phi: Vec<CMatrix<R>>,
    /// `Π` on the module basis; `dim_k x dim_h` each.
    pub pi_mod: Vec<CMatrix<R>>,
    /// `S_i: H -> dilation`, `dim_h x h` each.
    pub s_ops: Vec<CMatrix<R>>,
    /// `W_i: K -> dilation`, `dim_k x k` each.
    pub w_ops: Vec<CMatrix<R>>,
}

/// Residuals of the structural identities a Stinespring datum must satisfy.
#[derive(Debug, Clone, Copy)]
pub struct RepresentationReport<R: Real> {
    /// `||π(a)π(b) - π(ab)||` over basis pairs.
    pub pi_hom: R,
    /// `||π(a)* - π(a*)||` over the basis.
    pub pi_star: R,
    /// `||π(1) - I||`.
    pub pi_unital: R,
    /// `||Π(x)*Π(y) - π(<x, y>)||` over basis pairs.
    pub module_rep: R,
    /// `||Π(x·a) - Π(x)π(a)||` over basis pairs.
    pub module_action: R,
    /// `||Σ_i W_i W_i* - I||`.
    pub w_sum: R,
}

impl<R: Real> RepresentationReport<R> {
    pub fn max(&self) -> R {
        self.pi_hom
            .max(self.pi_star)
            .max(self.pi_unital)
            .max(self.module_rep)
            .max(self.module_action)
            .max(self.w_sum)
    }
}

impl<R: Real> StinespringData<R> {
    pub fn h_dim(&self) -> usize {
        self.space_h.ambient_dim()
    }

    pub fn k_dim(&self) -> usize {
        self.space_k.ambient_dim()
    }

    /// Linear extension of `π` to an arbitrary element's coordinates.
    pub fn pi_phi_of_vec(&self, coords: &[num_complex::Complex<R>]) -> CMatrix<R> {
        let mut out = CMatrix::zeros(self.dim_h, self.dim_h);
        for (b, &z) in coords.iter().enumerate() {
            if z != c_zero() {
                out = out.add(&self.pi_phi[b].scale(z));
            }
        }
        out
    }

    pub fn pi_mod_of_vec(&self, coords: &[num_complex::Complex<R>]) -> CMatrix<R> {
        let mut out = CMatrix::zeros(self.dim_k, self.dim_h);
        for (b, &z) in coords.iter().enumerate() {
            if z != c_zero() {
                out = out.add(&self.pi_mod[b].scale(z));
            }
        }
        out
    }

    /// `S_i* π(a_b) S_j` — the reconstructed value of `φ_ij` on basis `b`.
    pub fn phi_value(&self, i: usize, j: usize, b: usize) -> CMatrix<R> {
        self.s_ops[i]
            .adjoint()
            .mul(&self.pi_phi[b])
            .mul(&self.s_ops[j])
    }

    /// `W_i* Π(x_b) S_j` — the reconstructed value of `Φ_ij` on basis `b`.
    pub fn module_value(&self, i: usize, j: usize, b: usize) -> CMatrix<R> {
        self.w_ops[i]
            .adjoint()
            .mul(&self.pi_mod[b])
            .mul(&self.s_ops[j])
    }

    /// Max-entry residuals of the two reconstruction identities against a
    /// concrete pair of map matrices.
    pub fn reconstruction_residual(
        &self,
        phi: &NPositiveMatrixMap<R>,
        big_phi: &ModuleCPMatrix<R>,
    ) -> (R, R) {
        let mut res1 = R::zero();
        let mut res2 = R::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                for b in 0..self.algebra.dim() {
                    res1 = res1.max(self.phi_value(i, j, b).dist_max(&phi.basis_image(i, j, b)));
                }
                for b in 0..self.module.dim() {
                    res2 = res2
                        .max(self.module_value(i, j, b).dist_max(&big_phi.basis_image(i, j, b)));
                }
            }
        }
        (res1, res2)
    }

    /// Structural residuals of the representation data.
    pub fn representation_report(&self) -> RepresentationReport<R> {
        let dim_a = self.algebra.dim();
        let dim_m = self.module.dim();
        let mut pi_hom = R::zero();
        let mut pi_star = R::zero();
        for b in 0..dim_a {
            pi_star = pi_star.max(
                self.pi_phi[b]
                    .adjoint()
                    .dist_max(&self.pi_phi[self.algebra.basis_adjoint(b)]),
            );
            for c in 0..dim_a {
                let prod = self.pi_phi[b].mul(&self.pi_phi[c]);
                let expect = match self.algebra.basis_product(b, c) {
                    Some(d) => self.pi_phi[d].clone(),
                    None => CMatrix::zeros(self.dim_h, self.dim_h),
                };
                pi_hom = pi_hom.max(prod.dist_max(&expect));
            }
        }
        let mut unit = CMatrix::zeros(self.dim_h, self.dim_h);
        for k in 0..self.algebra.num_blocks() {
            for r in 0..self.algebra.block_dims()[k] {
                unit = unit.add(&self.pi_phi[self.algebra.basis_index(k, r, r)]);
            }
        }
        let pi_unital = unit.dist_max(&CMatrix::identity(self.dim_h));

        let mut module_rep = R::zero();
        let mut module_action = R::zero();
        for b in 0..dim_m {
            let (kb, rb, sb) = self.module.basis_coords(b).expect("valid index");
            for c in 0..dim_m {
                let (kc, rc, sc) = self.module.basis_coords(c).expect("valid index");
                let prod = self.pi_mod[b].adjoint().mul(&self.pi_mod[c]);
                let expect = if kb == kc && rb == rc {
                    self.pi_phi[self.algebra.basis_index(kb, sb, sc)].clone()
                } else {
                    CMatrix::zeros(self.dim_h, self.dim_h)
                };
                module_rep = module_rep.max(prod.dist_max(&expect));
            }
            for c in 0..dim_a {
                let (kc, tc, uc) = self.algebra.basis_coords(c).expect("valid index");
                let acted = self.pi_mod[b].mul(&self.pi_phi[c]);
                let expect = if kb == kc && sb == tc {
                    self.pi_mod[self.module.basis_index(kb, rb, uc)].clone()
                } else {
                    CMatrix::zeros(self.dim_k, self.dim_h)
                };
                module_action = module_action.max(acted.dist_max(&expect));
            }
        }

        let mut wsum = CMatrix::zeros(self.dim_k, self.dim_k);
        for w in &self.w_ops {
            wsum = wsum.add(&w.mul(&w.adjoint()));
        }
        let w_sum = wsum.dist_max(&CMatrix::identity(self.dim_k));

        RepresentationReport {
            pi_hom,
            pi_star,
            pi_unital,
            module_rep,
            module_action,
            w_sum,
        }
    }

    /// Generating family of the dilated `H` space: columns `π(a_b) S_i e_ξ`
    /// indexed by `(i, b, ξ)` in row-major order.
    pub fn generator_matrix_h(&self) -> CMatrix<R> {
        let h = self.h_dim();
        let dim_a = self.algebra.dim();
        let mut out = CMatrix::zeros(self.dim_h, self.n * dim_a * h);
        for i in 0..self.n {
            for b in 0..dim_a {
                let block = self.pi_phi[b].mul(&self.s_ops[i]);
                for xi in 0..h {
                    out.set_column((i * dim_a + b) * h + xi, &block.column(xi));
                }
            }
        }
        out
    }

    /// Generating family of the dilated `K` space: columns `Π(x_b) S_i e_ξ`
    /// indexed by `(i, b, ξ)`.
    pub fn generator_matrix_k(&self) -> CMatrix<R> {
        let h = self.h_dim();
        let dim_m = self.module.dim();
        let mut out = CMatrix::zeros(self.dim_k, self.n * dim_m * h);
        for i in 0..self.n {
            for b in 0..dim_m {
                let block = self.pi_mod[b].mul(&self.s_ops[i]);
                for xi in 0..h {
                    out.set_column((i * dim_m + b) * h + xi, &block.column(xi));
                }
            }
        }
        out
    }

    /// Minimality: the generating families span both dilation spaces.
    pub fn minimality_check(&self, tol: &Tolerances<R>) -> bool {
        rank(&self.generator_matrix_h(), tol) == self.dim_h
            && rank(&self.generator_matrix_k(), tol) == self.dim_k
    }

    /// Nondegeneracy of the module representation: `Π(M)` has dense range in
    /// the dilated `K` and `Π(M)*` has dense range in the dilated `H`.
    pub fn nondegeneracy_check(&self, tol: &Tolerances<R>) -> bool {
        if self.module.dim() == 0 {
            return self.dim_k == 0 && self.dim_h == 0;
        }
        let fwd_parts: Vec<&CMatrix<R>> = self.pi_mod.iter().collect();
        let fwd = CMatrix::hstack(&fwd_parts);
        let bwd_parts: Vec<CMatrix<R>> = self.pi_mod.iter().map(|m| m.adjoint()).collect();
        let bwd_refs: Vec<&CMatrix<R>> = bwd_parts.iter().collect();
        let bwd = CMatrix::hstack(&bwd_refs);
        rank(&fwd, tol) == self.dim_k && rank(&bwd, tol) == self.dim_h
    }

    /// Conjugate every operator by unitaries on the dilation spaces — the
    /// result is a distinct but unitarily equivalent datum.
    pub fn conjugate(&self, u1: &CMatrix<R>, u2: &CMatrix<R>) -> StinespringData<R> {
        assert_eq!(u1.rows(), self.dim_h);
        assert_eq!(u2.rows(), self.dim_k);
        StinespringData {
            n: self.n,
            algebra: Arc::clone(&self.algebra),
            module: Arc::clone(&self.module),
            space_h: self.space_h.clone(),
            space_k: self.space_k.clone(),
            dim_h: self.dim_h,
            dim_k: self.dim_k,
            pi_phi: self
                .pi_phi
                .iter()
                .map(|m| u1.mul(m).mul(&u1.adjoint()))
                .collect(),
            pi_mod: self
                .pi_mod
                .iter()
                .map(|m| u2.mul(m).mul(&u1.adjoint()))
                .collect(),
            s_ops: self.s_ops.iter().map(|s| u1.mul(s)).collect(),
            w_ops: self.w_ops.iter().map(|w| u2.mul(w)).collect(),
        }
    }

    /// Direct sum with another datum over the same shape. The result dilates
    /// the entrywise sum of the two reconstructed pairs; with `other == self`
    /// it is the canonical non-minimal "two copies" example.
    pub fn direct_sum(&self, other: &StinespringData<R>) -> Result<StinespringData<R>> {
        if self.n != other.n
            || self.algebra != other.algebra
            || self.module != other.module
            || self.space_h != other.space_h
            || self.space_k != other.space_k
        {
            return Err(CpError::ShapeMismatch {
                context: "direct sum requires identical (n, algebra, module, H, K)".into(),
            });
        }
        let dh = self.dim_h + other.dim_h;
        let dk = self.dim_k + other.dim_k;
        let blockdiag = |a: &CMatrix<R>, b: &CMatrix<R>| {
            let mut m = CMatrix::zeros(a.rows() + b.rows(), a.cols() + b.cols());
            m.set_block(0, 0, a);
            m.set_block(a.rows(), a.cols(), b);
            m
        };
        Ok(StinespringData {
            n: self.n,
            algebra: Arc::clone(&self.algebra),
            module: Arc::clone(&self.module),
            space_h: self.space_h.clone(),
            space_k: self.space_k.clone(),
            dim_h: dh,
            dim_k: dk,
            pi_phi: self
                .pi_phi
                .iter()
                .zip(&other.pi_phi)
                .map(|(a, b)| blockdiag(a, b))
                .collect(),
            pi_mod: self
                .pi_mod
                .iter()
                .zip(&other.pi_mod)
                .map(|(a, b)| blockdiag(a, b))
                .collect(),
            s_ops: self
                .s_ops
                .iter()
                .zip(&other.s_ops)
                .map(|(a, b)| CMatrix::vstack(&[a, b]))
                .collect(),
            w_ops: self
                .w_ops
                .iter()
                .zip(&other.w_ops)
                .map(|(a, b)| CMatrix::vstack(&[a, b]))
                .collect(),
        })
    }
}

/// A built minimal dilation: the Stinespring data plus the Gram-quotient
/// artifacts and accumulated residuals.
#[derive(Debug, Clone)]
pub struct DilationData<R: Real> {
    pub stine: StinespringData<R>,
    pub gram: CMatrix<R>,
    pub gram_min_eigenvalue: R,
    /// Dimensions of the per-row subspaces `K_i` of the dilated `K` space.
    pub k_slot_dims: Vec<usize>,
    /// Largest least-squares residual met while extending `π` and `Π`.
    pub welldef_residual: R,
    pub source_phi: NPositiveMatrixMap<R>,
    pub source_big_phi: ModuleCPMatrix<R>,
}

impl<R: Real> DilationData<R> {
    pub fn reconstruction_residual(&self) -> (R, R) {
        self.stine
            .reconstruction_residual(&self.source_phi, &self.source_big_phi)
    }
}

/// Gram matrix of the free generating family `a_b ⊗ e_ξ` at slot `i`:
/// entry `((i,b,u),(j,c,v)) = φ_ij(a_b* a_c)[u, v]`.
pub fn dilation_gram<R: Real>(phi: &NPositiveMatrixMap<R>) -> CMatrix<R> {
    let n = phi.n();
    let algebra = phi.algebra();
    let h = phi.space().ambient_dim();
    let dim_a = algebra.dim();
    let n_raw = n * dim_a * h;
    let mut gram = CMatrix::zeros(n_raw, n_raw);
    for i in 0..n {
        for b in 0..dim_a {
            let b_star = algebra.basis_adjoint(b);
            for j in 0..n {
                for c in 0..dim_a {
                    if let Some(prod) = algebra.basis_product(b_star, c) {
                        let img = phi.basis_image(i, j, prod);
                        for u in 0..h {
                            for v in 0..h {
                                gram.set(
                                    (i * dim_a + b) * h + u,
                                    (j * dim_a + c) * h + v,
                                    img.get(u, v),
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    gram.hermitize()
}

/// Build the minimal dilation of a compatible pair.
///
/// Preconditions: `[φ]` completely n-positive (`NOT_CP`), `[Φ]` compatible
/// with `[φ]` within `residual_tol` (`COMPAT_FAIL`). The Gram matrix of the
/// free space must be PSD (`GRAM_NOT_PSD`; guaranteed by complete
/// positivity up to roundoff) and the least-squares extensions must be
/// consistent (`NOT_WELL_DEFINED`).
pub fn build_dilation<R: Real>(
    phi: &NPositiveMatrixMap<R>,
    big_phi: &ModuleCPMatrix<R>,
    tol: &Tolerances<R>,
) -> Result<DilationData<R>> {
    if big_phi.scalar_part().n() != phi.n()
        || big_phi.scalar_part().algebra() != phi.algebra()
        || big_phi.scalar_part().space() != phi.space()
    {
        return Err(CpError::ShapeMismatch {
            context: "module map's scalar part has different shape than [φ]".into(),
        });
    }
    let scalar_dist = big_phi.scalar_part().dist_max(phi);
    if scalar_dist > tol.residual_tol {
        return Err(CpError::CompatFail {
            residual: scalar_dist.to_f64_lossy(),
        });
    }
    let report = phi.cp_report(tol);
    match report.min_choi_eigenvalue {
        Some(min) if min >= -tol.psd_tol => {}
        Some(min) => {
            return Err(CpError::NotCp {
                min_choi_eigenvalue: min.to_f64_lossy(),
            })
        }
        None => {
            return Err(CpError::NonHermitian {
                residual: report.hermiticity_residual.to_f64_lossy(),
            })
        }
    }
    let compat = big_phi.compatibility_residual();
    if compat > tol.residual_tol {
        return Err(CpError::CompatFail {
            residual: compat.to_f64_lossy(),
        });
    }

    let n = phi.n();
    let algebra = Arc::clone(phi.algebra());
    let module = Arc::clone(big_phi.module());
    let space_h = phi.space().clone();
    let space_k = big_phi.target().clone();
    let h = space_h.ambient_dim();
    let k = space_k.ambient_dim();
    let dim_a = algebra.dim();
    let dim_m = module.dim();
    let n_raw = n * dim_a * h;

    let gram = dilation_gram(phi);
    let quotient = gram_quotient(&gram, tol)?;
    let dim_h = quotient.rank;
    let coord = &quotient.coord_map;

    // π on the algebra basis via least squares on the generating family:
    // left multiplication permutes basis columns of the raw space.
    let mut welldef = R::zero();
    let mut pi_phi = Vec::with_capacity(dim_a);
    for b in 0..dim_a {
        let mut target = CMatrix::zeros(dim_h, n_raw);
        for j in 0..n {
            for c in 0..dim_a {
                if let Some(d) = algebra.basis_product(b, c) {
                    for v in 0..h {
                        target.set_column(
                            (j * dim_a + c) * h + v,
                            &coord.column((j * dim_a + d) * h + v),
                        );
                    }
                }
            }
        }
        let (x, res) = lsq_define(coord, &target, tol)?;
        welldef = welldef.max(res);
        pi_phi.push(x);
    }

    // S_i: image of (1 ⊗ e_ξ at slot i)
    let mut s_ops = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = CMatrix::zeros(dim_h, h);
        for kblk in 0..algebra.num_blocks() {
            for r in 0..algebra.block_dims()[kblk] {
                let b = algebra.basis_index(kblk, r, r);
                for xi in 0..h {
                    let col = coord.column((i * dim_a + b) * h + xi);
                    for row in 0..dim_h {
                        let v = s.get(row, xi) + col[row];
                        s.set(row, xi, v);
                    }
                }
            }
        }
        s_ops.push(s);
    }

    // Per-row subspaces K_i = span { Φ_ij(x_b) e_v } of K, with orthonormal
    // bases assembled from the eigenvectors of C_i C_i*.
    let mut slot_bases: Vec<CMatrix<R>> = Vec::with_capacity(n);
    let mut k_slot_dims = Vec::with_capacity(n);
    for i in 0..n {
        let mut ci = CMatrix::zeros(k, n * dim_m * h);
        for j in 0..n {
            for b in 0..dim_m {
                let img = big_phi.basis_image(i, j, b);
                for v in 0..h {
                    ci.set_column((j * dim_m + b) * h + v, &img.column(v));
                }
            }
        }
        let gram_i = ci.mul(&ci.adjoint()).hermitize();
        let eig = herm_eig(&gram_i, tol)?;
        let r_i = rank_from_eigs(&eig.values, tol);
        let mut basis = CMatrix::zeros(k, r_i);
        for e in 0..r_i {
            basis.set_column(e, &eig.vectors.column(e));
        }
        k_slot_dims.push(r_i);
        slot_bases.push(basis);
    }
    let dim_k: usize = k_slot_dims.iter().sum();
    let mut w_ops = Vec::with_capacity(n);
    let mut slot_off = 0;
    for i in 0..n {
        let mut w = CMatrix::zeros(dim_k, k);
        w.set_block(slot_off, 0, &slot_bases[i].adjoint());
        w_ops.push(w);
        slot_off += k_slot_dims[i];
    }

    // Π on the module basis via least squares: the generator (a_c ⊗ e_v at
    // slot j) maps to the K-tuple with row-i component Φ_ij(x_b · a_c) e_v.
    let mut pi_mod = Vec::with_capacity(dim_m);
    for b in 0..dim_m {
        let (kb, rowb, colb) = module.basis_coords(b)?;
        let mut target = CMatrix::zeros(dim_k, n_raw);
        for j in 0..n {
            for c in 0..dim_a {
                let (kc, tc, uc) = algebra.basis_coords(c)?;
                if kc != kb || tc != colb {
                    continue; // x_b · a_c = 0
                }
                let y = module.basis_index(kb, rowb, uc);
                for v in 0..h {
                    let mut column = vec![c_zero(); dim_k];
                    let mut off = 0;
                    for i in 0..n {
                        let img = big_phi.basis_image(i, j, y);
                        let coords = slot_bases[i].adjoint().mul_vec(&img.column(v));
                        column[off..off + k_slot_dims[i]].copy_from_slice(&coords);
                        off += k_slot_dims[i];
                    }
                    target.set_column((j * dim_a + c) * h + v, &column);
                }
            }
        }
        let (x, res) = lsq_define(coord, &target, tol)?;
        welldef = welldef.max(res);
        pi_mod.push(x);
    }
    if welldef > tol.residual_tol {
        return Err(CpError::NotWellDefined {
            residual: welldef.to_f64_lossy(),
        });
    }

    let mut stine = StinespringData {
        n,
        algebra,
        module,
        space_h,
        space_k,
        dim_h,
        dim_k,
        pi_phi,
        pi_mod,
        s_ops,
        w_ops,
    };

    // The direct sum of the per-row slots can exceed the span of the module
    // generators Π(x_b)S_i e_ξ when the row components are linearly
    // dependent across rows; compress K^Φ onto that span so the dilation is
    // minimal. The projection QQ* acts as the identity on every Π image of
    // H^Φ, so the reconstruction identities and ‖ΣW_iW_i* − I‖ are
    // unchanged.
    if stine.dim_k > 0 {
        let gen_k = stine.generator_matrix_k();
        let eig = herm_eig(&gen_k.mul(&gen_k.adjoint()).hermitize(), tol)?;
        let r = rank_from_eigs(&eig.values, tol);
        if r < stine.dim_k {
            let mut q = CMatrix::zeros(stine.dim_k, r);
            for e in 0..r {
                q.set_column(e, &eig.vectors.column(e));
            }
            let qa = q.adjoint();
            for w in &mut stine.w_ops {
                *w = qa.mul(w);
            }
            for m in &mut stine.pi_mod {
                *m = qa.mul(m);
            }
            stine.dim_k = r;
        }
    }

    Ok(DilationData {
        stine,
        gram,
        gram_min_eigenvalue: quotient.min_eigenvalue,
        k_slot_dims,
        welldef_residual: welldef,
        source_phi: phi.clone(),
        source_big_phi: big_phi.clone(),
    })
}

/// Residuals of a unitary-equivalence witness.
#[derive(Debug, Clone, Copy)]
pub struct EquivalenceResiduals<R: Real> {
    pub welldef_u1: R,
    pub welldef_u2: R,
    pub unitarity_u1: R,
    pub unitarity_u2: R,
    pub diagram_s: R,
    pub diagram_pi: R,
    pub diagram_pi_mod: R,
    pub diagram_w: R,
}

impl<R: Real> EquivalenceResiduals<R> {
    /// The residuals that decide equivalence (the `W` diagram commutes only
    /// when both data dilate the same pair, so it is reported but does not
    /// participate in the verdict).
    pub fn decision_max(&self) -> R {
        self.welldef_u1
            .max(self.welldef_u2)
            .max(self.unitarity_u1)
            .max(self.unitarity_u2)
    }
}

#[derive(Debug, Clone)]
pub struct EquivalenceWitness<R: Real> {
    pub u1: CMatrix<R>,
    pub u2: CMatrix<R>,
    pub residuals: EquivalenceResiduals<R>,
}

fn unitarity_residual<R: Real>(u: &CMatrix<R>) -> R {
    let a = u.adjoint().mul(u).dist_max(&CMatrix::identity(u.cols()));
    let b = u.mul(&u.adjoint()).dist_max(&CMatrix::identity(u.rows()));
    a.max(b)
}

/// Compute the candidate intertwining unitaries and all residuals without
/// deciding equivalence. Errors only on shape mismatch or non-minimality.
pub fn equivalence_attempt<R: Real>(
    a: &StinespringData<R>,
    b: &StinespringData<R>,
    tol: &Tolerances<R>,
) -> Result<EquivalenceWitness<R>> {
    if a.n != b.n
        || a.algebra != b.algebra
        || a.module != b.module
        || a.space_h != b.space_h
        || a.space_k != b.space_k
    {
        return Err(CpError::ShapeMismatch {
            context: "dilations have different (n, algebra, module, H, K) data".into(),
        });
    }
    if !a.minimality_check(tol) || !b.minimality_check(tol) {
        return Err(CpError::NotMinimal);
    }
    let (u1, welldef_u1) = lsq_define(&a.generator_matrix_h(), &b.generator_matrix_h(), tol)?;
    let (u2, welldef_u2) = lsq_define(&a.generator_matrix_k(), &b.generator_matrix_k(), tol)?;
    let unitarity_u1 = unitarity_residual(&u1);
    let unitarity_u2 = unitarity_residual(&u2);

    let mut diagram_s = R::zero();
    for i in 0..a.n {
        diagram_s = diagram_s.max(u1.mul(&a.s_ops[i]).dist_max(&b.s_ops[i]));
    }
    let mut diagram_pi = R::zero();
    for bb in 0..a.algebra.dim() {
        diagram_pi = diagram_pi.max(
            u1.mul(&a.pi_phi[bb])
                .dist_max(&b.pi_phi[bb].mul(&u1)),
        );
    }
    let mut diagram_pi_mod = R::zero();
    for bb in 0..a.module.dim() {
        diagram_pi_mod = diagram_pi_mod.max(
            u2.mul(&a.pi_mod[bb])
                .dist_max(&b.pi_mod[bb].mul(&u1)),
        );
    }
    let mut diagram_w = R::zero();
    for i in 0..a.n {
        diagram_w = diagram_w.max(u2.mul(&a.w_ops[i]).dist_max(&b.w_ops[i]));
    }

    let residuals = EquivalenceResiduals {
        welldef_u1,
        welldef_u2,
        unitarity_u1,
        unitarity_u2,
        diagram_s,
        diagram_pi,
        diagram_pi_mod,
        diagram_w,
    };
    Ok(EquivalenceWitness { u1, u2, residuals })
}

/// Unitaries intertwining two minimal Stinespring data, defined by least
/// squares on the generating families.
///
/// Errors: `NOT_MINIMAL` when either datum fails minimality;
/// `NOT_EQUIVALENT` when the least-squares definition is inconsistent or the
/// resulting maps are not unitary within `residual_tol`.
pub fn unitary_equivalence<R: Real>(
    a: &StinespringData<R>,
    b: &StinespringData<R>,
    tol: &Tolerances<R>,
) -> Result<EquivalenceWitness<R>> {
    let witness = equivalence_attempt(a, b, tol)?;
    let r = &witness.residuals;
    if r.decision_max() > tol.residual_tol {
        return Err(CpError::NotEquivalent {
            context: format!(
                "welldef ({:e}, {:e}) or unitarity ({:e}, {:e}) beyond tolerance",
                r.welldef_u1.to_f64_lossy(),
                r.welldef_u2.to_f64_lossy(),
                r.unitarity_u1.to_f64_lossy(),
                r.unitarity_u2.to_f64_lossy()
            ),
        });
    }
    Ok(witness)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpmatrix::{canonical_pair, random_cp_pair};
    use crate::module::{HilbertModule, ModuleKind};
    use num_complex::Complex;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tols() -> Tolerances<f64> {
        Tolerances::default()
    }

    #[test]
    fn identity_map_dilates_to_dimension_two() {
        let alg = CStarAlgebra::matrix(2);
        let module = HilbertModule::new(Arc::clone(&alg), ModuleKind::SelfModule).unwrap();
        let pair = canonical_pair::<f64>(&alg, &module).unwrap();
        let dil = build_dilation(&pair.phi, &pair.big_phi, &tols()).unwrap();
        assert_eq!(dil.stine.dim_h, 2);
        assert_eq!(dil.stine.dim_k, 2);
        let (r1, r2) = dil.reconstruction_residual();
        assert!(r1 < 1e-10 && r2 < 1e-10, "residuals {r1:e} {r2:e}");
        assert!(dil.stine.minimality_check(&tols()));
        assert!(dil.stine.representation_report().max() < 1e-9);
    }

    #[test]
    fn trace_map_dilates_to_dimension_four() {
        // φ = tr on M_2 over H = C, Φ(x) = vec(x) into K = C^4
        let alg = CStarAlgebra::matrix(2);
        let module = HilbertModule::new(Arc::clone(&alg), ModuleKind::SelfModule).unwrap();
        let h = FlagSpace::trivial(1);
        let k = FlagSpace::trivial(4);
        let phi = NPositiveMatrixMap::from_images(1, Arc::clone(&alg), h, |_, _, b| {
            let (_, r, s) = alg.basis_coords(b).unwrap();
            CMatrix::from_real(1, 1, &[if r == s { 1.0 } else { 0.0 }])
        })
        .unwrap();
        let big = ModuleCPMatrix::from_images(Arc::clone(&module), k, phi.clone(), |_, _, b| {
            let mut col = CMatrix::zeros(4, 1);
            col.set(b, 0, Complex::new(1.0, 0.0));
            col
        })
        .unwrap();
        assert!(big.compatibility_residual() < 1e-14);
        let dil = build_dilation(&phi, &big, &tols()).unwrap();
        assert_eq!(dil.stine.dim_h, 4);
        assert_eq!(dil.stine.dim_k, 4);
        let (r1, r2) = dil.reconstruction_residual();
        assert!(r1 < 1e-10 && r2 < 1e-10);
        assert!(dil.stine.representation_report().max() < 1e-9);
    }

    #[test]
    fn zero_pair_dilates_to_dimension_zero() {
        let alg = CStarAlgebra::matrix(2);
        let module = HilbertModule::new(Arc::clone(&alg), ModuleKind::SelfModule).unwrap();
        let phi =
            NPositiveMatrixMap::<f64>::zero(1, Arc::clone(&alg), FlagSpace::trivial(2)).unwrap();
        let big = ModuleCPMatrix::from_images(
            Arc::clone(&module),
            FlagSpace::trivial(2),
            phi.clone(),
            |_, _, _| CMatrix::zeros(2, 2),
        )
        .unwrap();
        let dil = build_dilation(&phi, &big, &tols()).unwrap();
        assert_eq!(dil.stine.dim_h, 0);
        assert_eq!(dil.stine.dim_k, 0);
    }

    #[test]
    fn random_pairs_dilate_and_reconstruct() {
        let alg = CStarAlgebra::matrix(2);
        let module = HilbertModule::new(Arc::clone(&alg), ModuleKind::SelfModule).unwrap();
        for seed in 0..5u64 {
            let pair = random_cp_pair::<f64>(
                &alg,
                &module,
                &FlagSpace::trivial(2),
                &FlagSpace::trivial(2),
                2,
                2,
                None,
                seed,
            )
            .unwrap();
            let dil = build_dilation(&pair.phi, &pair.big_phi, &tols()).unwrap();
            let (r1, r2) = dil.reconstruction_residual();
            assert!(r1 < 1e-9 && r2 < 1e-9, "seed {seed}: {r1:e} {r2:e}");
            assert!(dil.stine.minimality_check(&tols()));
            assert!(
                dil.stine.representation_report().max() < 1e-8,
                "seed {seed}: report {:?}",
                dil.stine.representation_report()
            );
            // the generator's witness also reconstructs, but need not be minimal
            let (w1, w2) = pair.witness.reconstruction_residual(&pair.phi, &pair.big_phi);
            assert!(w1 < 1e-12 && w2 < 1e-12);
        }
    }

    #[test]
    fn corrupted_witness_has_large_residual() {
        let alg = CStarAlgebra::matrix(2);
        let module = HilbertModule::new(Arc::clone(&alg), ModuleKind::SelfModule).unwrap();
        let pair = canonical_pair::<f64>(&alg, &module).unwrap();
        let mut bad = pair.witness.clone();
        bad.s_ops[0] = CMatrix::zeros(2, 2);
        let (r1, _) = bad.reconstruction_residual(&pair.phi, &pair.big_phi);
        assert!(r1 >= 1.0, "zeroing S must break reconstruction, got {r1:e}");
    }

    #[test]
    fn padded_dilation_is_not_minimal() {
        let alg = CStarAlgebra::matrix(2);
        let module = HilbertModule::new(Arc::clone(&alg), ModuleKind::SelfModule).unwrap();
        let pair = canonical_pair::<f64>(&alg, &module).unwrap();
        let dil = build_dilation(&pair.phi, &pair.big_phi, &tols()).unwrap();
        assert!(dil.stine.minimality_check(&tols()));
        // pad the H side with an unreachable direction
        let mut padded = dil.stine.clone();
        padded.dim_h += 1;
        padded.pi_phi = padded
            .pi_phi
            .iter()
            .map(|m| {
                let mut big = CMatrix::zeros(m.rows() + 1, m.cols() + 1);
                big.set_block(0, 0, m);
                big
            })
            .collect();
        padded.pi_mod = padded
            .pi_mod
            .iter()
            .map(|m| {
                let mut big = CMatrix::zeros(m.rows(), m.cols() + 1);
                big.set_block(0, 0, m);
                big
            })
            .collect();
        padded.s_ops = padded
            .s_ops
            .iter()
            .map(|s| {
                let mut big = CMatrix::zeros(s.rows() + 1, s.cols());
                big.set_block(0, 0, s);
                big
            })
            .collect();
        assert!(!padded.minimality_check(&tols()));
    }

    #[test]
    fn equivalence_of_identical_and_conjugated_dilations() {
        let alg = CStarAlgebra::matrix(2);
        let module = HilbertModule::new(Arc::clone(&alg), ModuleKind::SelfModule).unwrap();
        let pair = random_cp_pair::<f64>(
            &alg,
            &module,
            &FlagSpace::trivial(2),
            &FlagSpace::trivial(2),
            2,
            2,
            None,
            3,
        )
        .unwrap();
        let dil = build_dilation(&pair.phi, &pair.big_phi, &tols()).unwrap();
        let w = unitary_equivalence(&dil.stine, &dil.stine, &tols()).unwrap();
        assert!(w.residuals.diagram_w < 1e-9);
        assert!(w.u1.dist_max(&CMatrix::identity(dil.stine.dim_h)) < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let u1 = crate::linalg::random_unitary::<f64>(&mut rng, dil.stine.dim_h);
        let u2 = crate::linalg::random_unitary::<f64>(&mut rng, dil.stine.dim_k);
        let rotated = dil.stine.conjugate(&u1, &u2);
        let w = unitary_equivalence(&dil.stine, &rotated, &tols()).unwrap();
        assert!(w.residuals.decision_max() < 1e-9);
        assert!(w.residuals.diagram_s < 1e-8);
        assert!(w.residuals.diagram_pi < 1e-8);
        assert!(w.residuals.diagram_pi_mod < 1e-8);
        assert!(w.residuals.diagram_w < 1e-8);
    }

    #[test]
    fn scaled_pair_is_not_equivalent() {
        let alg = CStarAlgebra::matrix(2);
        let module = HilbertModule::new(Arc::clone(&alg), ModuleKind::SelfModule).unwrap();
        let pair = random_cp_pair::<f64>(
            &alg,
            &module,
            &FlagSpace::trivial(2),
            &FlagSpace::trivial(2),
            2,
            2,
            None,
            8,
        )
        .unwrap();
        let dil = build_dilation(&pair.phi, &pair.big_phi, &tols()).unwrap();
        let scaled = pair.big_phi.scale_maps(Complex::new(2.0, 0.0));
        let dil2 = build_dilation(scaled.scalar_part(), &scaled, &tols()).unwrap();
        assert!(matches!(
            unitary_equivalence(&dil.stine, &dil2.stine, &tols()),
            Err(CpError::NotEquivalent { .. })
        ));
    }

    #[test]
    fn direct_sum_is_not_minimal_for_identical_summands() {
        let alg = CStarAlgebra::matrix(2);
        let module = HilbertModule::new(Arc::clone(&alg), ModuleKind::SelfModule).unwrap();
        let pair = canonical_pair::<f64>(&alg, &module).unwrap();
        let dil = build_dilation(&pair.phi, &pair.big_phi, &tols()).unwrap();
        let doubled = dil.stine.direct_sum(&dil.stine).unwrap();
        assert_eq!(doubled.dim_h, 4);
        assert!(!doubled.minimality_check(&tols()));
        // w_sum is 2I for the doubled family, so the report flags it
        assert!(doubled.representation_report().w_sum > 0.5);
    }
}

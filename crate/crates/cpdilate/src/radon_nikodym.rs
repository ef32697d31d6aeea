//! Radon-Nikodym calculus on the dominated maps of a fixed dilation.
//!
//! Module maps with the same scalar-form behaviour are *equivalent*; a map is
//! *dominated* by another when its forms are pointwise below the other's.
//! Inside a fixed minimal dilation these notions become operator-theoretic:
//! the commutant of the module representation parametrizes deformations
//! `Φ^{T⊕N}`, every dominated map has a Radon-Nikodym derivative `Δ₁ ⊕ Δ₂`
//! in that commutant, and `T ↦ Φ^{√T⊕√N}` / `Ψ ↦ Δ(Ψ)` are mutually inverse
//! order isomorphisms.

use crate::cpmatrix::{ModuleCPMatrix, NPositiveMatrixMap};
use crate::error::{CpError, Result};
use crate::ksgns::{build_dilation, DilationData, StinespringData};
use crate::linalg::{herm_eig, lsq_define, psd_sqrt, rank_from_eigs, CMatrix, Tolerances};
use crate::module::random_module_element;
use crate::scalar::{c_re, c_std_normal, c_zero, Real};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// An element `T ⊕ N` of the commutant of the module representation:
/// `Π(x) T = N Π(x)` and `Π(x)* N = T Π(x)*` for every `x`.
#[derive(Debug, Clone)]
pub struct CommutantElement<R: Real> {
    /// Acts on the dilated `H` space; `dim_h x dim_h`.
    pub t_op: CMatrix<R>,
    /// Acts on the dilated `K` space; `dim_k x dim_k`.
    pub n_op: CMatrix<R>,
}

impl<R: Real> CommutantElement<R> {
    pub fn identity(stine: &StinespringData<R>) -> Self {
        CommutantElement {
            t_op: CMatrix::identity(stine.dim_h),
            n_op: CMatrix::identity(stine.dim_k),
        }
    }

    pub fn scaled_identity(stine: &StinespringData<R>, c: R) -> Self {
        CommutantElement {
            t_op: CMatrix::identity(stine.dim_h).scale(c_re(c)),
            n_op: CMatrix::identity(stine.dim_k).scale(c_re(c)),
        }
    }

    /// Max-entry violation of the two intertwining identities over the
    /// module basis.
    pub fn residual(&self, stine: &StinespringData<R>) -> R {
        let mut res = R::zero();
        for p in &stine.pi_mod {
            res = res.max(p.mul(&self.t_op).dist_max(&self.n_op.mul(p)));
            res = res.max(
                p.adjoint()
                    .mul(&self.n_op)
                    .dist_max(&self.t_op.mul(&p.adjoint())),
            );
        }
        res
    }

    pub fn hermitize(&self) -> Self {
        CommutantElement {
            t_op: self.t_op.hermitize(),
            n_op: self.n_op.hermitize(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        CommutantElement {
            t_op: self.t_op.add(&other.t_op),
            n_op: self.n_op.add(&other.n_op),
        }
    }

    pub fn scale(&self, s: Complex<R>) -> Self {
        CommutantElement {
            t_op: self.t_op.scale(s),
            n_op: self.n_op.scale(s),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        CommutantElement {
            t_op: self.t_op.mul(&other.t_op),
            n_op: self.n_op.mul(&other.n_op),
        }
    }

    /// Entrywise square root of a PSD pair; stays in the commutant because
    /// the square root is a polynomial in the operator on its spectrum.
    pub fn psd_sqrt(&self, tol: &Tolerances<R>) -> Result<Self> {
        Ok(CommutantElement {
            t_op: psd_sqrt(&self.t_op, tol)?,
            n_op: psd_sqrt(&self.n_op, tol)?,
        })
    }

    /// Joint spectrum bounds (min, max) over both components.
    pub fn spectrum_bounds(&self, tol: &Tolerances<R>) -> Result<(R, R)> {
        let mut lo = R::infinity();
        let mut hi = R::neg_infinity();
        for m in [&self.t_op, &self.n_op] {
            if m.rows() == 0 {
                continue;
            }
            let eig = herm_eig(&m.hermitize(), tol)?;
            hi = hi.max(eig.values[0]);
            lo = lo.min(*eig.values.last().unwrap());
        }
        if !lo.is_finite() {
            lo = R::zero();
            hi = R::zero();
        }
        Ok((lo, hi))
    }

    fn joint_vec(&self) -> Vec<Complex<R>> {
        let mut v = Vec::with_capacity(self.t_op.data().len() + self.n_op.data().len());
        v.extend_from_slice(self.t_op.data());
        v.extend_from_slice(self.n_op.data());
        v
    }

    fn from_joint_vec(dim_h: usize, dim_k: usize, v: &[Complex<R>]) -> Self {
        CommutantElement {
            t_op: CMatrix::new(dim_h, dim_h, v[..dim_h * dim_h].to_vec()),
            n_op: CMatrix::new(dim_k, dim_k, v[dim_h * dim_h..].to_vec()),
        }
    }
}

/// Orthonormal basis (in the joint Frobenius inner product) of the commutant
/// of `Π`, computed as the null space of the stacked intertwining equations.
pub fn commutant_basis<R: Real>(
    stine: &StinespringData<R>,
    tol: &Tolerances<R>,
) -> Result<Vec<CommutantElement<R>>> {
    let dh = stine.dim_h;
    let dk = stine.dim_k;
    let unknowns = dh * dh + dk * dk;
    if unknowns == 0 {
        return Ok(Vec::new());
    }
    let dim_m = stine.module.dim();
    let rows = 2 * dim_m * dh * dk;
    let mut a = CMatrix::zeros(rows.max(1), unknowns);
    let t_idx = |r: usize, c: usize| r * dh + c;
    let n_idx = |r: usize, c: usize| dh * dh + r * dk + c;
    let mut row = 0;
    for p in &stine.pi_mod {
        // (Π T - N Π)[q, c] = Σ_r Π[q,r] T[r,c] - Σ_r N[q,r] Π[r,c]
        for q in 0..dk {
            for c in 0..dh {
                for r in 0..dh {
                    a.set(row, t_idx(r, c), p.get(q, r));
                }
                for r in 0..dk {
                    let v = a.get(row, n_idx(q, r)) - p.get(r, c);
                    a.set(row, n_idx(q, r), v);
                }
                row += 1;
            }
        }
        // (Π* N - T Π*)[q, c] = Σ_r conj(Π[r,q]) N[r,c] - Σ_r T[q,r] conj(Π[c,r])
        for q in 0..dh {
            for c in 0..dk {
                for r in 0..dk {
                    a.set(row, n_idx(r, c), p.get(r, q).conj());
                }
                for r in 0..dh {
                    let v = a.get(row, t_idx(q, r)) - p.get(c, r).conj();
                    a.set(row, t_idx(q, r), v);
                }
                row += 1;
            }
        }
    }
    let gram = a.adjoint().mul(&a).hermitize();
    let eig = herm_eig(&gram, tol)?;
    let r = rank_from_eigs(&eig.values, tol);
    let mut basis = Vec::with_capacity(unknowns - r);
    for e in r..unknowns {
        basis.push(CommutantElement::from_joint_vec(
            dh,
            dk,
            &eig.vectors.column(e),
        ));
    }
    Ok(basis)
}

/// Max Frobenius distance of pairwise basis products to the span of the
/// basis — the commutant is an algebra, so this is a consistency residual.
pub fn commutant_closure_residual<R: Real>(basis: &[CommutantElement<R>]) -> R {
    let mut res = R::zero();
    for p in basis {
        for q in basis {
            let prod = p.mul(q);
            let v = prod.joint_vec();
            let mut proj = vec![c_zero(); v.len()];
            for b in basis {
                let bv = b.joint_vec();
                let coeff: Complex<R> = bv
                    .iter()
                    .zip(&v)
                    .fold(c_zero(), |acc, (x, y)| acc + x.conj() * *y);
                for (pz, bz) in proj.iter_mut().zip(&bv) {
                    *pz += coeff * *bz;
                }
            }
            let dev = v
                .iter()
                .zip(&proj)
                .fold(R::zero(), |acc, (x, y)| acc.max((*x - *y).norm()));
            res = res.max(dev);
        }
    }
    res
}

/// How far the `H`-component fails to determine the `K`-component: the max
/// norm of `N`-parts over combinations whose `T`-part vanishes. Zero for
/// nondegenerate representations.
pub fn t_determines_n_residual<R: Real>(
    basis: &[CommutantElement<R>],
    tol: &Tolerances<R>,
) -> Result<R> {
    if basis.is_empty() {
        return Ok(R::zero());
    }
    let dh2 = basis[0].t_op.data().len();
    let mut m = CMatrix::zeros(dh2.max(1), basis.len());
    for (p, b) in basis.iter().enumerate() {
        m.set_column(p, b.t_op.data());
    }
    let gram = m.adjoint().mul(&m).hermitize();
    let eig = herm_eig(&gram, tol)?;
    let r = rank_from_eigs(&eig.values, tol);
    let mut res = R::zero();
    for e in r..basis.len() {
        let combo = eig.vectors.column(e);
        let mut n_part = CMatrix::zeros(basis[0].n_op.rows(), basis[0].n_op.cols());
        for (p, b) in basis.iter().enumerate() {
            n_part = n_part.add(&b.n_op.scale(combo[p]));
        }
        res = res.max(n_part.max_abs());
    }
    Ok(res)
}

/// Max-entry distance between the form families `Σ_r Φ_ri(x)* Φ_rj(y)` of
/// two module maps over all basis pairs and indices.
pub fn form_distance<R: Real>(a: &ModuleCPMatrix<R>, b: &ModuleCPMatrix<R>) -> Result<R> {
    a.same_shape(b)?;
    let n = a.n();
    let dim_m = a.module().dim();
    let h = a.source().ambient_dim();
    let mut res = R::zero();
    for i in 0..n {
        for j in 0..n {
            for xb in 0..dim_m {
                for yc in 0..dim_m {
                    let mut fa = CMatrix::zeros(h, h);
                    let mut fb = fa.clone();
                    for r in 0..n {
                        fa = fa.add(&a.basis_image(r, i, xb).adjoint().mul(&a.basis_image(r, j, yc)));
                        fb = fb.add(&b.basis_image(r, i, xb).adjoint().mul(&b.basis_image(r, j, yc)));
                    }
                    res = res.max(fa.dist_max(&fb));
                }
            }
        }
    }
    Ok(res)
}

/// Residual of the equivalence relation `Φ ∼ Ψ`: equality of all forms
/// `Σ_r Φ_ri(x)* Φ_rj(y)` on module basis pairs. Errors `NOT_EQUIVALENT`
/// when the residual exceeds `residual_tol`.
pub fn equivalence_check<R: Real>(
    a: &ModuleCPMatrix<R>,
    b: &ModuleCPMatrix<R>,
    tol: &Tolerances<R>,
) -> Result<R> {
    let res = form_distance(a, b)?;
    if res > tol.residual_tol {
        return Err(CpError::NotEquivalent {
            context: format!("form residual {:e}", res.to_f64_lossy()),
        });
    }
    Ok(res)
}

/// Outcome of a domination test `sub ⪯ sup`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DominationVerdict<R: Real> {
    /// The scalar-part difference is completely positive, which certifies
    /// domination of the forms at every module element.
    Certified { min_choi_eigenvalue: R },
    /// A sampled module element witnesses a non-PSD form difference.
    Refuted { witness_min_eigenvalue: R, sample: usize },
    /// Neither certificate nor counterexample was found.
    Undecided { min_choi_eigenvalue: R, sampled_min: R },
}

impl<R: Real> DominationVerdict<R> {
    pub fn label(&self) -> &'static str {
        match self {
            DominationVerdict::Certified { .. } => "CERTIFIED",
            DominationVerdict::Refuted { .. } => "REFUTED",
            DominationVerdict::Undecided { .. } => "UNDECIDED",
        }
    }
}

/// Re-derive the module element examined at `sample` by
/// [`domination_check`] run with the same `seed`.
pub fn domination_witness_element<R: Real>(
    module: &std::sync::Arc<crate::module::HilbertModule>,
    seed: u64,
    sample: usize,
) -> crate::module::ModuleElement<R> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = random_module_element(module, &mut rng);
    for _ in 0..sample {
        x = random_module_element(module, &mut rng);
    }
    x
}

/// Smallest eigenvalue of the `n x n` form-difference matrix
/// `[⟨sup(x), sup(x)⟩_ij - ⟨sub(x), sub(x)⟩_ij]` at a single module element.
pub fn domination_form_min_eigenvalue<R: Real>(
    sub: &ModuleCPMatrix<R>,
    sup: &ModuleCPMatrix<R>,
    x: &crate::module::ModuleElement<R>,
    tol: &Tolerances<R>,
) -> Result<R> {
    let n = sub.n();
    let h = sub.source().ambient_dim();
    let mut form = CMatrix::zeros(n * h, n * h);
    for i in 0..n {
        for j in 0..n {
            let mut block = CMatrix::zeros(h, h);
            for r in 0..n {
                let sup_ri = sup.evaluate_matrix(r, i, x)?;
                let sup_rj = sup.evaluate_matrix(r, j, x)?;
                let sub_ri = sub.evaluate_matrix(r, i, x)?;
                let sub_rj = sub.evaluate_matrix(r, j, x)?;
                block = block
                    .add(&sup_ri.adjoint().mul(&sup_rj))
                    .sub(&sub_ri.adjoint().mul(&sub_rj));
            }
            form.set_block(i * h, j * h, &block);
        }
    }
    let eig = herm_eig(&form.hermitize(), tol)?;
    Ok(eig.values.last().copied().unwrap_or(R::zero()))
}

/// Test `sub ⪯ sup`, i.e. `[⟨sub(x), sub(x)⟩] ≤ [⟨sup(x), sup(x)⟩]` as
/// `n x n` form matrices for every module element `x`. Complete positivity
/// of the scalar difference certifies; otherwise `samples` random elements
/// are tried as counterexamples.
pub fn domination_check<R: Real>(
    sub: &ModuleCPMatrix<R>,
    sup: &ModuleCPMatrix<R>,
    samples: usize,
    seed: u64,
    tol: &Tolerances<R>,
) -> Result<DominationVerdict<R>> {
    sub.same_shape(sup)?;
    let diff = sup.scalar_part().sub_maps(sub.scalar_part())?;
    let report = diff.cp_report(tol);
    let min_choi = match report.min_choi_eigenvalue {
        Some(min) if report.hermiticity_residual <= tol.residual_tol => min,
        _ => R::neg_infinity(),
    };
    if min_choi >= -tol.psd_tol {
        return Ok(DominationVerdict::Certified {
            min_choi_eigenvalue: min_choi,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled_min = R::infinity();
    for s in 0..samples {
        let x = random_module_element(sub.module(), &mut rng);
        let min = domination_form_min_eigenvalue(sub, sup, &x, tol)?;
        sampled_min = sampled_min.min(min);
        if min < -tol.psd_tol {
            return Ok(DominationVerdict::Refuted {
                witness_min_eigenvalue: min,
                sample: s,
            });
        }
    }
    Ok(DominationVerdict::Undecided {
        min_choi_eigenvalue: min_choi,
        sampled_min,
    })
}

/// Deform a dilated pair by a PSD commutant element `T ⊕ N`:
/// `Φ^{T⊕N}_ij(x) = W_i* √N Π(x) √T S_j` with scalar part
/// `a ↦ S_i* T π(a) T S_j` (equal to `φ_{T²}` on the commutant).
///
/// Errors: `NOT_IN_COMMUTANT` when the intertwining residual exceeds
/// `residual_tol`; `NOT_PSD` when either component is not PSD.
pub fn deform<R: Real>(
    stine: &StinespringData<R>,
    elem: &CommutantElement<R>,
    tol: &Tolerances<R>,
) -> Result<ModuleCPMatrix<R>> {
    if elem.t_op.rows() != stine.dim_h || elem.n_op.rows() != stine.dim_k {
        return Err(CpError::DimensionMismatch {
            context: "commutant element does not match the dilation dimensions".into(),
        });
    }
    let res = elem.residual(stine);
    if res > tol.residual_tol {
        return Err(CpError::NotInCommutant {
            residual: res.to_f64_lossy(),
        });
    }
    let herm_dev = elem.t_op.hermitian_deviation().max(elem.n_op.hermitian_deviation());
    if herm_dev > tol.residual_tol {
        return Err(CpError::NonHermitian {
            residual: herm_dev.to_f64_lossy(),
        });
    }
    let sqrt = elem.psd_sqrt(tol)?;
    let n = stine.n;
    // T S_i and √N W_i, precomputed per slot
    let ts: Vec<CMatrix<R>> = stine.s_ops.iter().map(|s| elem.t_op.mul(s)).collect();
    let sqrt_ts: Vec<CMatrix<R>> = stine.s_ops.iter().map(|s| sqrt.t_op.mul(s)).collect();
    let nw: Vec<CMatrix<R>> = stine.w_ops.iter().map(|w| sqrt.n_op.mul(w)).collect();
    let phi = NPositiveMatrixMap::from_images(
        n,
        std::sync::Arc::clone(&stine.algebra),
        stine.space_h.clone(),
        |i, j, b| {
            ts[i]
                .adjoint()
                .mul(&stine.pi_phi[b])
                .mul(&ts[j])
        },
    )?;
    ModuleCPMatrix::from_images(
        std::sync::Arc::clone(&stine.module),
        stine.space_k.clone(),
        phi,
        |i, j, b| {
            nw[i]
                .adjoint()
                .mul(&stine.pi_mod[b])
                .mul(&sqrt_ts[j])
        },
    )
}

/// A Radon-Nikodym derivative `Δ₁ ⊕ Δ₂` of a dominated map inside a fixed
/// minimal dilation, with the residuals of its defining properties.
#[derive(Debug, Clone)]
pub struct RnData<R: Real> {
    pub delta: CommutantElement<R>,
    /// Consistency of the intertwiner definitions on the generating families.
    pub welldef_r: R,
    pub welldef_q: R,
    /// Joint spectrum bounds of `Δ₁ ⊕ Δ₂`; in `[0, 1]` up to tolerance.
    pub spectrum_lo: R,
    pub spectrum_hi: R,
    /// Intertwining residual of `Δ₁ ⊕ Δ₂` against the dilation.
    pub commutant_residual: R,
    /// Form residual of `Ψ ∼ Φ^{√Δ₁ ⊕ √Δ₂}`.
    pub roundtrip_residual: R,
}

/// Radon-Nikodym derivative of `psi ⪯ Φ` with respect to the minimal
/// dilation of `Φ`: `Δ₁ = R*R`, `Δ₂ = Q*Q` for the contractions carrying
/// the Φ-generators onto the Ψ-generators.
///
/// Errors: `NOT_MINIMAL` when the dilation is not minimal; `NOT_DOMINATED`
/// when domination is not certified; dilation errors for `psi` itself.
pub fn rn_derivative<R: Real>(
    dil: &DilationData<R>,
    psi: &ModuleCPMatrix<R>,
    samples: usize,
    seed: u64,
    tol: &Tolerances<R>,
) -> Result<RnData<R>> {
    psi.same_shape(&dil.source_big_phi)?;
    if !dil.stine.minimality_check(tol) {
        return Err(CpError::NotMinimal);
    }
    let verdict = domination_check(psi, &dil.source_big_phi, samples, seed, tol)?;
    if !matches!(verdict, DominationVerdict::Certified { .. }) {
        return Err(CpError::NotDominated {
            verdict: verdict.label().to_string(),
        });
    }
    let dil_psi = build_dilation(psi.scalar_part(), psi, tol)?;
    let (r_map, welldef_r) = lsq_define(
        &dil.stine.generator_matrix_h(),
        &dil_psi.stine.generator_matrix_h(),
        tol,
    )?;
    let (q_map, welldef_q) = lsq_define(
        &dil.stine.generator_matrix_k(),
        &dil_psi.stine.generator_matrix_k(),
        tol,
    )?;
    let welldef = welldef_r.max(welldef_q);
    if welldef > tol.residual_tol {
        return Err(CpError::NotWellDefined {
            residual: welldef.to_f64_lossy(),
        });
    }
    let delta = CommutantElement {
        t_op: r_map.adjoint().mul(&r_map).hermitize(),
        n_op: q_map.adjoint().mul(&q_map).hermitize(),
    };
    let (lo, hi) = delta.spectrum_bounds(tol)?;
    let commutant_residual = delta.residual(&dil.stine);
    let roundtrip = deform(&dil.stine, &delta.psd_sqrt(tol)?, tol)?;
    let roundtrip_residual = form_distance(psi, &roundtrip)?;
    Ok(RnData {
        delta,
        welldef_r,
        welldef_q,
        spectrum_lo: lo,
        spectrum_hi: hi,
        commutant_residual,
        roundtrip_residual,
    })
}

/// One round-trip trial: the sampled element, the derivative recovered from
/// its deformation, and the residuals tying them together.
#[derive(Debug, Clone)]
pub struct IsoTrial<R: Real> {
    pub elem: CommutantElement<R>,
    pub delta: CommutantElement<R>,
    pub t_deviation: R,
    pub n_deviation: R,
    pub roundtrip_residual: R,
    pub monotone: DominationVerdict<R>,
}

/// Statistics of [`order_iso_roundtrip`].
#[derive(Debug, Clone)]
pub struct IsoRoundtripReport<R: Real> {
    pub trials: usize,
    /// Max `||Δ₁ - T||` over trials deforming by `√T ⊕ √N`.
    pub max_t_deviation: R,
    /// Max `||Δ₂ - N||`.
    pub max_n_deviation: R,
    /// Max form residual of `Ψ ∼ Φ^{√Δ₁ ⊕ √Δ₂}`.
    pub max_roundtrip_residual: R,
    pub monotone_certified: usize,
    pub monotone_refuted: usize,
    pub monotone_undecided: usize,
    pub trial_data: Vec<IsoTrial<R>>,
}

/// Sample a Hermitian commutant element with joint spectrum in
/// `[margin, 1 - margin]` by affinely rescaling a Gaussian combination of
/// the basis (affine maps with the identity preserve the commutant).
pub fn sample_commutant_interval<R: Real>(
    stine: &StinespringData<R>,
    basis: &[CommutantElement<R>],
    rng: &mut impl rand::Rng,
    tol: &Tolerances<R>,
) -> Result<CommutantElement<R>> {
    let mut elem = CommutantElement {
        t_op: CMatrix::zeros(stine.dim_h, stine.dim_h),
        n_op: CMatrix::zeros(stine.dim_k, stine.dim_k),
    };
    for b in basis {
        elem = elem.add(&b.scale(c_std_normal(rng)));
    }
    let elem = elem.hermitize();
    let (lo, hi) = elem.spectrum_bounds(tol)?;
    let margin = R::of(0.05);
    if hi - lo < tol.psd_tol {
        return Ok(CommutantElement::scaled_identity(stine, R::of(0.5)));
    }
    let scale = (R::one() - margin - margin) / (hi - lo);
    let shift = margin - lo * scale;
    Ok(CommutantElement {
        t_op: elem
            .t_op
            .scale(c_re(scale))
            .add(&CMatrix::identity(stine.dim_h).scale(c_re(shift))),
        n_op: elem
            .n_op
            .scale(c_re(scale))
            .add(&CMatrix::identity(stine.dim_k).scale(c_re(shift))),
    })
}

/// Round-trip the order isomorphism on random commutant elements:
/// `T ⊕ N ∈ [0, I] ↦ Ψ = Φ^{√T⊕√N} ↦ Δ(Ψ)` must recover `T ⊕ N`, and
/// deformations of ordered elements must stay ordered (never `REFUTED`,
/// counted `CERTIFIED` when the scalar certificate is found).
pub fn order_iso_roundtrip<R: Real>(
    dil: &DilationData<R>,
    trials: usize,
    seed: u64,
    tol: &Tolerances<R>,
) -> Result<IsoRoundtripReport<R>> {
    if !dil.stine.minimality_check(tol) {
        return Err(CpError::NotMinimal);
    }
    if !dil.stine.nondegeneracy_check(tol) {
        return Err(CpError::NotNondegenerate);
    }
    let basis = commutant_basis(&dil.stine, tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = IsoRoundtripReport {
        trials,
        max_t_deviation: R::zero(),
        max_n_deviation: R::zero(),
        max_roundtrip_residual: R::zero(),
        monotone_certified: 0,
        monotone_refuted: 0,
        monotone_undecided: 0,
        trial_data: Vec::with_capacity(trials),
    };
    for t in 0..trials {
        let elem = sample_commutant_interval(&dil.stine, &basis, &mut rng, tol)?;
        let psi = deform(&dil.stine, &elem.psd_sqrt(tol)?, tol)?;
        let rn = rn_derivative(dil, &psi, 0, seed ^ (t as u64), tol)?;
        let t_deviation = rn.delta.t_op.dist_max(&elem.t_op);
        let n_deviation = rn.delta.n_op.dist_max(&elem.n_op);
        report.max_t_deviation = report.max_t_deviation.max(t_deviation);
        report.max_n_deviation = report.max_n_deviation.max(n_deviation);
        report.max_roundtrip_residual = report.max_roundtrip_residual.max(rn.roundtrip_residual);

        // monotone pair: X₁ = λZ ≤ X₂ = λZ + (1-λ)W
        let z = sample_commutant_interval(&dil.stine, &basis, &mut rng, tol)?;
        let w = sample_commutant_interval(&dil.stine, &basis, &mut rng, tol)?;
        let lambda = R::of(rng.gen_range(0.1..0.9));
        let x1 = z.scale(c_re(lambda));
        let x2 = x1.add(&w.scale(c_re(R::one() - lambda)));
        let psi1 = deform(&dil.stine, &x1.psd_sqrt(tol)?, tol)?;
        let psi2 = deform(&dil.stine, &x2.psd_sqrt(tol)?, tol)?;
        let monotone = domination_check(&psi1, &psi2, 5, seed ^ (0x9e3779b9 + t as u64), tol)?;
        match monotone {
            DominationVerdict::Certified { .. } => report.monotone_certified += 1,
            DominationVerdict::Refuted { .. } => report.monotone_refuted += 1,
            DominationVerdict::Undecided { .. } => report.monotone_undecided += 1,
        }
        report.trial_data.push(IsoTrial {
            elem,
            delta: rn.delta,
            t_deviation,
            n_deviation,
            roundtrip_residual: rn.roundtrip_residual,
            monotone,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::CStarAlgebra;
    use crate::cpmatrix::{canonical_pair, random_cp_pair};
    use crate::flag::FlagSpace;
    use crate::module::{HilbertModule, ModuleKind};
    use std::sync::Arc;

    fn tols() -> Tolerances<f64> {
        Tolerances::default()
    }

    fn canonical_dilation() -> DilationData<f64> {
        let alg = CStarAlgebra::matrix(2);
        let module = HilbertModule::new(Arc::clone(&alg), ModuleKind::SelfModule).unwrap();
        let pair = canonical_pair::<f64>(&alg, &module).unwrap();
        build_dilation(&pair.phi, &pair.big_phi, &tols()).unwrap()
    }

    fn random_dilation(seed: u64) -> DilationData<f64> {
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
            seed,
        )
        .unwrap();
        build_dilation(&pair.phi, &pair.big_phi, &tols()).unwrap()
    }

    #[test]
    fn commutant_of_identity_representation_is_scalars() {
        let dil = canonical_dilation();
        let basis = commutant_basis(&dil.stine, &tols()).unwrap();
        assert_eq!(basis.len(), 1);
        assert!(basis[0].residual(&dil.stine) < 1e-12);
        // the single element is a multiple of I ⊕ I
        let e = &basis[0];
        let c = e.t_op.get(0, 0);
        assert!(e.t_op.dist_max(&CMatrix::identity(2).scale(c)) < 1e-10);
        assert!(e.n_op.dist_max(&CMatrix::identity(2).scale(c)) < 1e-10);
        assert!(commutant_closure_residual(&basis) < 1e-10);
        assert!(t_determines_n_residual(&basis, &tols()).unwrap() < 1e-10);
    }

    #[test]
    fn two_copy_commutant_has_dimension_four() {
        let dil = canonical_dilation();
        let doubled = dil.stine.direct_sum(&dil.stine).unwrap();
        let basis = commutant_basis(&doubled, &tols()).unwrap();
        assert_eq!(basis.len(), 4);
        for e in &basis {
            assert!(e.residual(&doubled) < 1e-10);
        }
        assert!(commutant_closure_residual(&basis) < 1e-9);
        assert!(t_determines_n_residual(&basis, &tols()).unwrap() < 1e-9);
    }

    #[test]
    fn equivalence_accepts_phase_and_rejects_scaling() {
        let dil = random_dilation(11);
        let phi = &dil.source_big_phi;
        assert!(equivalence_check(phi, phi, &tols()).unwrap() < 1e-14);
        let phased = phi.scale_maps(num_complex::Complex::new(0.0, 1.0));
        assert!(equivalence_check(phi, &phased, &tols()).unwrap() < 1e-12);
        let scaled = phi.scale_maps(num_complex::Complex::new(2.0, 0.0));
        assert!(matches!(
            equivalence_check(phi, &scaled, &tols()),
            Err(CpError::NotEquivalent { .. })
        ));
    }

    #[test]
    fn domination_of_scaled_maps() {
        let dil = random_dilation(13);
        let phi = &dil.source_big_phi;
        let half = phi.scale_maps(num_complex::Complex::new(0.5, 0.0));
        match domination_check(&half, phi, 10, 1, &tols()).unwrap() {
            DominationVerdict::Certified { min_choi_eigenvalue } => {
                assert!(min_choi_eigenvalue > -1e-10)
            }
            v => panic!("expected certified, got {v:?}"),
        }
        match domination_check(phi, &half, 10, 1, &tols()).unwrap() {
            DominationVerdict::Refuted { witness_min_eigenvalue, .. } => {
                assert!(witness_min_eigenvalue < -1e-6)
            }
            v => panic!("expected refuted, got {v:?}"),
        }
    }

    #[test]
    fn deform_by_identity_zero_and_scalar() {
        let dil = canonical_dilation();
        let id = CommutantElement::identity(&dil.stine);
        let same = deform(&dil.stine, &id, &tols()).unwrap();
        assert!(same.dist_max(&dil.source_big_phi) < 1e-12);
        assert!(same.scalar_part().dist_max(&dil.source_phi) < 1e-12);

        let zero = CommutantElement::scaled_identity(&dil.stine, 0.0);
        let z = deform(&dil.stine, &zero, &tols()).unwrap();
        assert!(z.dist_max(&dil.source_big_phi.scale_maps(c_zero())) < 1e-14);

        // c·(I ⊕ I) gives (c²φ, cΦ)
        let c = 0.6;
        let scaled = deform(
            &dil.stine,
            &CommutantElement::scaled_identity(&dil.stine, c),
            &tols(),
        )
        .unwrap();
        assert!(scaled.dist_max(&dil.source_big_phi.scale_maps(c_re(c))) < 1e-12);
        assert!(
            scaled
                .scalar_part()
                .dist_max(&dil.source_phi.scale_maps(c_re(c * c)))
                < 1e-12
        );
    }

    #[test]
    fn deform_rejects_bad_elements() {
        let dil = canonical_dilation();
        // diag(1, 2) does not commute with the identity representation of M_2
        let bad = CommutantElement {
            t_op: CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            n_op: CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 2.0]),
        };
        assert!(bad.residual(&dil.stine) > 0.5);
        assert!(matches!(
            deform(&dil.stine, &bad, &tols()),
            Err(CpError::NotInCommutant { .. })
        ));
        let neg = CommutantElement::scaled_identity(&dil.stine, -1.0);
        assert!(matches!(
            deform(&dil.stine, &neg, &tols()),
            Err(CpError::NotPsd { .. })
        ));
    }

    #[test]
    fn rn_derivative_of_self_and_scaled() {
        let dil = random_dilation(17);
        let rn = rn_derivative(&dil, &dil.source_big_phi, 5, 2, &tols()).unwrap();
        assert!(rn.delta.t_op.dist_max(&CMatrix::identity(dil.stine.dim_h)) < 1e-9);
        assert!(rn.delta.n_op.dist_max(&CMatrix::identity(dil.stine.dim_k)) < 1e-9);
        assert!(rn.roundtrip_residual < 1e-9);
        assert!(rn.commutant_residual < 1e-9);
        assert!(rn.spectrum_lo > -1e-9 && rn.spectrum_hi < 1.0 + 1e-9);

        let c = 0.7f64;
        let psi = dil.source_big_phi.scale_maps(c_re(c));
        let rn = rn_derivative(&dil, &psi, 5, 2, &tols()).unwrap();
        let expect = CMatrix::identity(dil.stine.dim_h).scale(c_re(c * c));
        assert!(rn.delta.t_op.dist_max(&expect) < 1e-9, "Δ₁ should be c²I");
        assert!(rn.roundtrip_residual < 1e-9);
    }

    #[test]
    fn rn_derivative_requires_domination() {
        let dil = random_dilation(19);
        let psi = dil.source_big_phi.scale_maps(c_re(2.0f64));
        assert!(matches!(
            rn_derivative(&dil, &psi, 10, 3, &tols()),
            Err(CpError::NotDominated { .. })
        ));
    }

    #[test]
    fn order_iso_roundtrips_on_random_dilation() {
        let dil = random_dilation(23);
        let report = order_iso_roundtrip(&dil, 3, 5, &tols()).unwrap();
        assert!(report.max_t_deviation < 1e-8, "{report:?}");
        assert!(report.max_n_deviation < 1e-8, "{report:?}");
        assert!(report.max_roundtrip_residual < 1e-8, "{report:?}");
        assert_eq!(report.monotone_refuted, 0);
        assert_eq!(report.monotone_certified, 3);
    }

    #[test]
    fn sampling_respects_commutant_and_interval_on_two_copy_fixture() {
        let dil = canonical_dilation();
        let doubled = dil.stine.direct_sum(&dil.stine).unwrap();
        let basis = commutant_basis(&doubled, &tols()).unwrap();
        assert_eq!(basis.len(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..5 {
            let elem = sample_commutant_interval(&doubled, &basis, &mut rng, &tols()).unwrap();
            assert!(elem.residual(&doubled) < 1e-10);
            assert!(elem.t_op.hermitian_deviation() < 1e-14);
            let (lo, hi) = elem.spectrum_bounds(&tols()).unwrap();
            assert!(lo >= 0.049 && hi <= 0.951, "spectrum [{lo}, {hi}]");
        }
    }
}

//! Canonical flags of finite-dimensional spaces and the operators compatible
//! with them.
//!
//! A flag is a nested family of leading-coordinate subspaces
//! `C^{h_1} ⊆ ... ⊆ C^{h_m}`. An operator `T: H -> K` between flagged spaces
//! (same number of levels) is flag compatible when `T(H_α) ⊆ K_α` and
//! `T*(K_α) ⊆ H_α` for every level — equivalently, when its matrix is block
//! diagonal with respect to the consecutive level differences.

use crate::error::{CpError, Result};
use crate::linalg::{op_norm, CMatrix, Tolerances};
use crate::scalar::{c_std_normal, Real};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlagSpace {
    dims: Vec<usize>,
}

impl FlagSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(CpError::InvalidInput {
                context: "flag must have at least one level".into(),
            });
        }
        if dims.windows(2).any(|w| w[0] > w[1]) {
            return Err(CpError::InvalidInput {
                context: format!("flag dimensions must be nondecreasing, got {dims:?}"),
            });
        }
        Ok(FlagSpace { dims })
    }

    /// Single-level flag: the whole space.
    pub fn trivial(dim: usize) -> Self {
        FlagSpace { dims: vec![dim] }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn levels(&self) -> usize {
        self.dims.len()
    }

    pub fn ambient_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn level_dim(&self, level: usize) -> Result<usize> {
        self.dims.get(level).copied().ok_or(CpError::LevelOutOfRange {
            level,
            levels: self.dims.len(),
        })
    }

    /// Sizes of the consecutive level differences (first entry is level 0).
    pub fn diff_dims(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dims.len());
        let mut prev = 0;
        for &d in &self.dims {
            out.push(d - prev);
            prev = d;
        }
        out
    }

    /// Level of coordinate `i`: the first level whose subspace contains it.
    pub fn coord_level(&self, i: usize) -> usize {
        self.dims.iter().position(|&d| i < d).expect("coord in ambient")
    }
}

/// Largest off-block entry of `m` violating flag compatibility; zero means
/// compatible. Errors on shape/level mismatches.
pub fn flag_violation<R: Real>(
    m: &CMatrix<R>,
    source: &FlagSpace,
    target: &FlagSpace,
) -> Result<R> {
    if source.levels() != target.levels() {
        return Err(CpError::ShapeMismatch {
            context: format!(
                "source has {} flag levels, target has {}",
                source.levels(),
                target.levels()
            ),
        });
    }
    if m.rows() != target.ambient_dim() || m.cols() != source.ambient_dim() {
        return Err(CpError::DimensionMismatch {
            context: format!(
                "operator is {}x{}, flags demand {}x{}",
                m.rows(),
                m.cols(),
                target.ambient_dim(),
                source.ambient_dim()
            ),
        });
    }
    let mut worst = R::zero();
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            if target.coord_level(r) != source.coord_level(c) {
                worst = worst.max(m.get(r, c).norm());
            }
        }
    }
    Ok(worst)
}

/// Whether `m` is flag compatible within `residual_tol`.
pub fn flag_compat_check<R: Real>(
    m: &CMatrix<R>,
    source: &FlagSpace,
    target: &FlagSpace,
    tol: &Tolerances<R>,
) -> Result<bool> {
    Ok(flag_violation(m, source, target)? <= tol.residual_tol)
}

/// An operator between flagged spaces, validated at construction.
#[derive(Debug, Clone)]
pub struct FlagOperator<R: Real> {
    source: FlagSpace,
    target: FlagSpace,
    matrix: CMatrix<R>,
}

impl<R: Real> FlagOperator<R> {
    pub fn new(
        source: FlagSpace,
        target: FlagSpace,
        matrix: CMatrix<R>,
        tol: &Tolerances<R>,
    ) -> Result<Self> {
        let v = flag_violation(&matrix, &source, &target)?;
        if v > tol.residual_tol {
            return Err(CpError::NotFlagCompatible {
                residual: v.to_f64_lossy(),
            });
        }
        Ok(FlagOperator {
            source,
            target,
            matrix,
        })
    }

    pub fn source(&self) -> &FlagSpace {
        &self.source
    }

    pub fn target(&self) -> &FlagSpace {
        &self.target
    }

    pub fn matrix(&self) -> &CMatrix<R> {
        &self.matrix
    }

    /// Adjoint swaps source and target; compatibility is preserved exactly.
    pub fn adjoint(&self) -> Self {
        FlagOperator {
            source: self.target.clone(),
            target: self.source.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    /// Operator norm of the restriction to level `level` (the top-left
    /// `k_α x h_α` corner; flag compatibility makes this the norm of the
    /// operator `H_α -> K_α`).
    pub fn seminorm(&self, level: usize, tol: &Tolerances<R>) -> Result<R> {
        let rows = self.target.level_dim(level)?;
        let cols = self.source.level_dim(level)?;
        Ok(op_norm(&self.matrix.block(0, 0, rows, cols), tol))
    }
}

/// Random flag-compatible operator: independent standard complex Gaussians
/// on the compatible (level-diagonal) entries, zero elsewhere.
pub fn random_flag_compatible<R: Real>(
    rng: &mut impl rand::Rng,
    source: &FlagSpace,
    target: &FlagSpace,
) -> CMatrix<R> {
    assert_eq!(source.levels(), target.levels());
    CMatrix::from_fn(target.ambient_dim(), source.ambient_dim(), |r, c| {
        if target.coord_level(r) == source.coord_level(c) {
            c_std_normal(rng)
        } else {
            crate::scalar::c_zero()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flag_space_validation() {
        assert!(FlagSpace::new(vec![]).is_err());
        assert!(FlagSpace::new(vec![2, 1]).is_err());
        let f = FlagSpace::new(vec![1, 2, 4]).unwrap();
        assert_eq!(f.levels(), 3);
        assert_eq!(f.ambient_dim(), 4);
        assert_eq!(f.diff_dims(), vec![1, 1, 2]);
        assert_eq!(f.coord_level(0), 0);
        assert_eq!(f.coord_level(1), 1);
        assert_eq!(f.coord_level(3), 2);
        assert!(f.level_dim(3).is_err());
    }

    #[test]
    fn compat_examples() {
        let t = Tolerances::default();
        let f = FlagSpace::new(vec![1, 2]).unwrap();
        // identity and any matrix on a trivial flag are compatible
        let triv = FlagSpace::trivial(2);
        let any = CMatrix::from_real(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(flag_compat_check(&any, &triv, &triv, &t).unwrap());
        // block-diagonal is compatible on (1,2)
        let bd = CMatrix::from_real(2, 2, &[5.0, 0.0, 0.0, 7.0]);
        assert!(flag_compat_check(&bd, &f, &f, &t).unwrap());
        // triangular matrices are not: one triangle violates the direct
        // inclusion, the other violates the adjoint inclusion
        let lower = CMatrix::from_real(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        assert!(!flag_compat_check(&lower, &f, &f, &t).unwrap());
        let upper = CMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(!flag_compat_check(&upper, &f, &f, &t).unwrap());
        // level-count mismatch errors
        assert!(flag_compat_check(&any, &triv, &f, &t).is_err());
    }

    #[test]
    fn operator_construction_and_adjoint() {
        let t = Tolerances::default();
        let f = FlagSpace::new(vec![1, 2]).unwrap();
        let g = FlagSpace::new(vec![2, 3]).unwrap();
        let mut m = CMatrix::<f64>::zeros(3, 2);
        m.set(0, 0, Complex::new(1.0, 0.0));
        m.set(1, 0, Complex::new(2.0, 0.0));
        m.set(2, 1, Complex::new(3.0, 0.0));
        let op = FlagOperator::new(f.clone(), g.clone(), m, &t).unwrap();
        let adj = op.adjoint();
        assert_eq!(adj.source().dims(), g.dims());
        assert_eq!(adj.target().dims(), f.dims());
        // incompatible construction errors
        let mut bad = CMatrix::<f64>::zeros(3, 2);
        bad.set(2, 0, Complex::new(1.0, 0.0));
        assert!(matches!(
            FlagOperator::new(f, g, bad, &t),
            Err(CpError::NotFlagCompatible { .. })
        ));
    }

    #[test]
    fn seminorm_examples() {
        let t: Tolerances<f64> = Tolerances::default();
        let f = FlagSpace::new(vec![1, 2]).unwrap();
        // 2·I has every level seminorm 2
        let two_i = CMatrix::identity(2).scale(Complex::new(2.0, 0.0));
        let op = FlagOperator::new(f.clone(), f.clone(), two_i, &t).unwrap();
        assert!((op.seminorm(0, &t).unwrap() - 2.0).abs() < 1e-12);
        assert!((op.seminorm(1, &t).unwrap() - 2.0).abs() < 1e-12);
        // diag(1, 3): level seminorms 1 then 3
        let d = CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let op = FlagOperator::new(f.clone(), f.clone(), d, &t).unwrap();
        assert!((op.seminorm(0, &t).unwrap() - 1.0).abs() < 1e-12);
        assert!((op.seminorm(1, &t).unwrap() - 3.0).abs() < 1e-12);
        assert!(op.seminorm(2, &t).is_err());
        // seminorms are nondecreasing in the level on random compatible ops
        let f3 = FlagSpace::new(vec![1, 3, 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let m = random_flag_compatible::<f64>(&mut rng, &f3, &f3);
            let op = FlagOperator::new(f3.clone(), f3.clone(), m, &t).unwrap();
            let s0 = op.seminorm(0, &t).unwrap();
            let s1 = op.seminorm(1, &t).unwrap();
            let s2 = op.seminorm(2, &t).unwrap();
            assert!(s0 <= s1 + 1e-10 && s1 <= s2 + 1e-10);
        }
    }

    #[test]
    fn random_compatible_is_compatible() {
        let f = FlagSpace::new(vec![2, 3]).unwrap();
        let g = FlagSpace::new(vec![1, 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let m = random_flag_compatible::<f64>(&mut rng, &f, &g);
            assert_eq!(flag_violation(&m, &f, &g).unwrap(), 0.0);
        }
    }
}

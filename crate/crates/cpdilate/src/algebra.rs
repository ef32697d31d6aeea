//! Finite-dimensional C*-algebras: direct sums of full matrix blocks with a
//! nested chain of block subsets supplying the defining seminorms.

use crate::error::{CpError, Result};
use crate::linalg::{herm_eig, op_norm, CMatrix, Tolerances};
use crate::scalar::{c_one, Real, C};
use std::sync::Arc;

/// A direct sum of matrix blocks `M_{d_1} ⊕ ... ⊕ M_{d_B}` together with a
/// nested chain of block subsets. Level `α` of the chain induces the
/// seminorm "max operator norm over blocks in the subset"; the last level
/// contains every block, so the final seminorm is the C*-norm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CStarAlgebra {
    block_dims: Vec<usize>,
    chain: Vec<Vec<usize>>,
}

impl CStarAlgebra {
    pub fn new(block_dims: Vec<usize>, chain: Vec<Vec<usize>>) -> Result<Self> {
        if block_dims.is_empty() || block_dims.iter().any(|&d| d == 0) {
            return Err(CpError::InvalidInput {
                context: "block dimensions must be nonempty and positive".into(),
            });
        }
        if chain.is_empty() {
            return Err(CpError::InvalidInput {
                context: "seminorm chain must have at least one level".into(),
            });
        }
        let b = block_dims.len();
        for (lvl, subset) in chain.iter().enumerate() {
            if subset.iter().any(|&k| k >= b) {
                return Err(CpError::InvalidInput {
                    context: format!("chain level {lvl} references a block out of range"),
                });
            }
            if subset.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CpError::InvalidInput {
                    context: format!("chain level {lvl} must be strictly increasing"),
                });
            }
        }
        for lvl in 1..chain.len() {
            if !chain[lvl - 1].iter().all(|k| chain[lvl].contains(k)) {
                return Err(CpError::InvalidInput {
                    context: format!("chain level {} is not contained in level {lvl}", lvl - 1),
                });
            }
        }
        if chain.last().unwrap().len() != b {
            return Err(CpError::InvalidInput {
                context: "final chain level must contain every block".into(),
            });
        }
        Ok(CStarAlgebra { block_dims, chain })
    }

    /// Single full matrix block with the trivial one-level chain.
    pub fn matrix(d: usize) -> Arc<Self> {
        Arc::new(Self::new(vec![d], vec![vec![0]]).expect("valid"))
    }

    /// Direct sum of blocks with the trivial one-level chain.
    pub fn with_trivial_chain(block_dims: Vec<usize>) -> Result<Arc<Self>> {
        let b = block_dims.len();
        Ok(Arc::new(Self::new(block_dims, vec![(0..b).collect()])?))
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    pub fn chain(&self) -> &[Vec<usize>] {
        &self.chain
    }

    pub fn levels(&self) -> usize {
        self.chain.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.block_dims.len()
    }

    /// Linear dimension, `Σ d_k²`.
    pub fn dim(&self) -> usize {
        self.block_dims.iter().map(|d| d * d).sum()
    }

    /// Dimension of the defining representation, `Σ d_k`.
    pub fn rep_dim(&self) -> usize {
        self.block_dims.iter().sum()
    }

    pub fn chain_level(&self, level: usize) -> Result<&[usize]> {
        self.chain
            .get(level)
            .map(|v| v.as_slice())
            .ok_or(CpError::LevelOutOfRange {
                level,
                levels: self.chain.len(),
            })
    }

    /// Offset of block `k` in the vectorized coordinates.
    pub fn vec_offset(&self, k: usize) -> usize {
        self.block_dims[..k].iter().map(|d| d * d).sum()
    }

    /// Offset of block `k` in the defining representation.
    pub fn rep_offset(&self, k: usize) -> usize {
        self.block_dims[..k].iter().sum()
    }

    /// Decode a basis index into (block, row, col) of a matrix unit.
    pub fn basis_coords(&self, idx: usize) -> Result<(usize, usize, usize)> {
        let mut rest = idx;
        for (k, &d) in self.block_dims.iter().enumerate() {
            if rest < d * d {
                return Ok((k, rest / d, rest % d));
            }
            rest -= d * d;
        }
        Err(CpError::IndexOutOfRange {
            index: idx,
            len: self.dim(),
        })
    }

    pub fn basis_index(&self, block: usize, row: usize, col: usize) -> usize {
        let d = self.block_dims[block];
        self.vec_offset(block) + row * d + col
    }

    /// Basis index of the adjoint of basis element `idx` (matrix units map to
    /// matrix units under the adjoint).
    pub fn basis_adjoint(&self, idx: usize) -> usize {
        let (k, r, s) = self.basis_coords(idx).expect("valid basis index");
        self.basis_index(k, s, r)
    }

    /// Product of two matrix-unit basis elements: `Some(index)` when nonzero.
    pub fn basis_product(&self, left: usize, right: usize) -> Option<usize> {
        let (k, r, s) = self.basis_coords(left).expect("valid basis index");
        let (k2, t, u) = self.basis_coords(right).expect("valid basis index");
        (k == k2 && s == t).then(|| self.basis_index(k, r, u))
    }
}

/// Element of a [`CStarAlgebra`]: one dense matrix per block.
#[derive(Debug, Clone)]
pub struct AlgElement<R: Real> {
    algebra: Arc<CStarAlgebra>,
    blocks: Vec<CMatrix<R>>,
}

impl<R: Real> AlgElement<R> {
    pub fn new(algebra: Arc<CStarAlgebra>, blocks: Vec<CMatrix<R>>) -> Result<Self> {
        if blocks.len() != algebra.num_blocks() {
            return Err(CpError::DimensionMismatch {
                context: format!(
                    "expected {} blocks, got {}",
                    algebra.num_blocks(),
                    blocks.len()
                ),
            });
        }
        for (k, b) in blocks.iter().enumerate() {
            let d = algebra.block_dims()[k];
            if b.rows() != d || b.cols() != d {
                return Err(CpError::DimensionMismatch {
                    context: format!(
                        "block {k} is {}x{}, expected {d}x{d}",
                        b.rows(),
                        b.cols()
                    ),
                });
            }
        }
        Ok(AlgElement { algebra, blocks })
    }

    pub fn zero(algebra: &Arc<CStarAlgebra>) -> Self {
        let blocks = algebra
            .block_dims()
            .iter()
            .map(|&d| CMatrix::zeros(d, d))
            .collect();
        AlgElement {
            algebra: Arc::clone(algebra),
            blocks,
        }
    }

    pub fn unit(algebra: &Arc<CStarAlgebra>) -> Self {
        let blocks = algebra
            .block_dims()
            .iter()
            .map(|&d| CMatrix::identity(d))
            .collect();
        AlgElement {
            algebra: Arc::clone(algebra),
            blocks,
        }
    }

    /// Matrix-unit basis element for flat index `idx`.
    pub fn basis(algebra: &Arc<CStarAlgebra>, idx: usize) -> Result<Self> {
        let (k, r, s) = algebra.basis_coords(idx)?;
        let mut e = Self::zero(algebra);
        e.blocks[k].set(r, s, c_one());
        Ok(e)
    }

    pub fn algebra(&self) -> &Arc<CStarAlgebra> {
        &self.algebra
    }

    pub fn block(&self, k: usize) -> &CMatrix<R> {
        &self.blocks[k]
    }

    pub fn blocks(&self) -> &[CMatrix<R>] {
        &self.blocks
    }

    fn same_algebra(&self, other: &Self) -> Result<()> {
        if self.algebra == other.algebra {
            Ok(())
        } else {
            Err(CpError::AlgebraMismatch)
        }
    }

    pub fn product(&self, other: &Self) -> Result<Self> {
        self.same_algebra(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.mul(b))
            .collect();
        Ok(AlgElement {
            algebra: Arc::clone(&self.algebra),
            blocks,
        })
    }

    pub fn adjoint(&self) -> Self {
        AlgElement {
            algebra: Arc::clone(&self.algebra),
            blocks: self.blocks.iter().map(|b| b.adjoint()).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_algebra(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.add(b))
            .collect();
        Ok(AlgElement {
            algebra: Arc::clone(&self.algebra),
            blocks,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_algebra(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.sub(b))
            .collect();
        Ok(AlgElement {
            algebra: Arc::clone(&self.algebra),
            blocks,
        })
    }

    pub fn scale(&self, s: C<R>) -> Self {
        AlgElement {
            algebra: Arc::clone(&self.algebra),
            blocks: self.blocks.iter().map(|b| b.scale(s)).collect(),
        }
    }

    pub fn dist_max(&self, other: &Self) -> R {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.dist_max(b))
            .fold(R::zero(), |acc, d| acc.max(d))
    }

    pub fn is_hermitian(&self, tol: R) -> bool {
        self.blocks.iter().all(|b| b.is_hermitian(tol))
    }

    /// Positivity: every block Hermitian (within `residual_tol`) with
    /// spectrum above `-psd_tol`.
    pub fn positivity_check(&self, tol: &Tolerances<R>) -> bool {
        self.blocks.iter().all(|b| {
            if !b.is_hermitian(tol.residual_tol) {
                return false;
            }
            match herm_eig(b, tol) {
                Ok(eig) => eig.values.last().map_or(true, |&l| l >= -tol.psd_tol),
                Err(_) => false,
            }
        })
    }

    /// Seminorm at chain level `level`: max operator norm over the blocks in
    /// that level's subset.
    pub fn seminorm(&self, level: usize, tol: &Tolerances<R>) -> Result<R> {
        let subset = self.algebra.chain_level(level)?;
        Ok(subset
            .iter()
            .map(|&k| op_norm(&self.blocks[k], tol))
            .fold(R::zero(), |a, b| a.max(b)))
    }

    /// C*-norm (the final chain level).
    pub fn norm(&self, tol: &Tolerances<R>) -> R {
        self.seminorm(self.algebra.levels() - 1, tol)
            .expect("final level exists")
    }

    /// Coordinates in the matrix-unit basis, blocks concatenated row-major.
    pub fn vectorize(&self) -> Vec<C<R>> {
        let mut out = Vec::with_capacity(self.algebra.dim());
        for b in &self.blocks {
            out.extend_from_slice(b.data());
        }
        out
    }

    pub fn from_vector(algebra: &Arc<CStarAlgebra>, v: &[C<R>]) -> Result<Self> {
        if v.len() != algebra.dim() {
            return Err(CpError::DimensionMismatch {
                context: format!("expected {} coordinates, got {}", algebra.dim(), v.len()),
            });
        }
        let mut blocks = Vec::with_capacity(algebra.num_blocks());
        let mut off = 0;
        for &d in algebra.block_dims() {
            blocks.push(CMatrix::new(d, d, v[off..off + d * d].to_vec()));
            off += d * d;
        }
        Ok(AlgElement {
            algebra: Arc::clone(algebra),
            blocks,
        })
    }

    /// Block-diagonal matrix of the defining representation.
    pub fn represent(&self) -> CMatrix<R> {
        let n = self.algebra.rep_dim();
        let mut out = CMatrix::zeros(n, n);
        for (k, b) in self.blocks.iter().enumerate() {
            let o = self.algebra.rep_offset(k);
            out.set_block(o, o, b);
        }
        out
    }
}

/// Seeded random element with independent standard complex Gaussian entries.
pub fn random_element<R: Real>(
    algebra: &Arc<CStarAlgebra>,
    rng: &mut impl rand::Rng,
) -> AlgElement<R> {
    let blocks = algebra
        .block_dims()
        .iter()
        .map(|&d| CMatrix::from_fn(d, d, |_, _| crate::scalar::c_std_normal(rng)))
        .collect();
    AlgElement::new(Arc::clone(algebra), blocks).expect("dims valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m2() -> Arc<CStarAlgebra> {
        CStarAlgebra::matrix(2)
    }

    fn m1_plus_m2() -> Arc<CStarAlgebra> {
        Arc::new(CStarAlgebra::new(vec![1, 2], vec![vec![0], vec![0, 1]]).unwrap())
    }

    #[test]
    fn constructor_validates_chain() {
        assert!(CStarAlgebra::new(vec![2], vec![]).is_err());
        assert!(CStarAlgebra::new(vec![2, 1], vec![vec![0]]).is_err()); // last level incomplete
        assert!(CStarAlgebra::new(vec![2, 1], vec![vec![1], vec![0]]).is_err()); // not nested
        assert!(CStarAlgebra::new(vec![2, 1], vec![vec![2], vec![0, 1]]).is_err()); // out of range
        assert!(CStarAlgebra::new(vec![0], vec![vec![0]]).is_err());
        assert!(m1_plus_m2().levels() == 2);
    }

    #[test]
    fn matrix_unit_products() {
        let a = m2();
        let e12 = AlgElement::<f64>::basis(&a, a.basis_index(0, 0, 1)).unwrap();
        let e21 = AlgElement::<f64>::basis(&a, a.basis_index(0, 1, 0)).unwrap();
        let e11 = AlgElement::<f64>::basis(&a, a.basis_index(0, 0, 0)).unwrap();
        let p = e12.product(&e21).unwrap();
        assert!(p.dist_max(&e11) < 1e-15);
        // e12 * e12 = 0
        let z = e12.product(&e12).unwrap();
        assert!(z.dist_max(&AlgElement::zero(&a)) < 1e-15);
        // index-level product agrees
        assert_eq!(
            a.basis_product(a.basis_index(0, 0, 1), a.basis_index(0, 1, 0)),
            Some(a.basis_index(0, 0, 0))
        );
        assert_eq!(
            a.basis_product(a.basis_index(0, 0, 1), a.basis_index(0, 0, 1)),
            None
        );
    }

    #[test]
    fn star_algebra_laws_random() {
        let alg = m1_plus_m2();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let unit = AlgElement::<f64>::unit(&alg);
        for _ in 0..25 {
            let a = random_element::<f64>(&alg, &mut rng);
            let b = random_element::<f64>(&alg, &mut rng);
            let c = random_element::<f64>(&alg, &mut rng);
            // associativity
            let lhs = a.product(&b).unwrap().product(&c).unwrap();
            let rhs = a.product(&b.product(&c).unwrap()).unwrap();
            assert!(lhs.dist_max(&rhs) < 1e-10);
            // unit law
            assert!(a.product(&unit).unwrap().dist_max(&a) < 1e-15);
            assert!(unit.product(&a).unwrap().dist_max(&a) < 1e-15);
            // adjoint is an involution and antimultiplicative
            assert!(a.adjoint().adjoint().dist_max(&a) < 1e-15);
            let ab_star = a.product(&b).unwrap().adjoint();
            let b_star_a_star = b.adjoint().product(&a.adjoint()).unwrap();
            assert!(ab_star.dist_max(&b_star_a_star) < 1e-12);
        }
    }

    #[test]
    fn cstar_identity_random() {
        let alg = m1_plus_m2();
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let a = random_element::<f64>(&alg, &mut rng);
            let n1 = a.norm(&tol);
            let n2 = a.adjoint().product(&a).unwrap().norm(&tol);
            assert!((n1 * n1 - n2).abs() < 1e-8 * (1.0 + n2));
        }
    }

    #[test]
    fn positivity_examples() {
        let a = m2();
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_element::<f64>(&a, &mut rng);
        let pos = x.adjoint().product(&x).unwrap();
        assert!(pos.positivity_check(&tol));
        let e12 = AlgElement::<f64>::basis(&a, a.basis_index(0, 0, 1)).unwrap();
        assert!(!e12.positivity_check(&tol));
        let ind = AlgElement::new(
            Arc::clone(&a),
            vec![CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0])],
        )
        .unwrap();
        assert!(!ind.positivity_check(&tol));
        // positivity is stable under conjugation
        let y = random_element::<f64>(&a, &mut rng);
        let conj = y.adjoint().product(&pos).unwrap().product(&y).unwrap();
        assert!(conj.positivity_check(&tol));
    }

    #[test]
    fn seminorm_chain_examples() {
        let alg = m1_plus_m2();
        let tol = Tolerances::default();
        // a = (3, I_2): level-0 seminorm 3, level-1 norm 3
        let a: AlgElement<f64> = AlgElement::new(
            Arc::clone(&alg),
            vec![CMatrix::from_real(1, 1, &[3.0]), CMatrix::identity(2)],
        )
        .unwrap();
        assert!((a.seminorm(0, &tol).unwrap() - 3.0).abs() < 1e-12);
        assert!((a.seminorm(1, &tol).unwrap() - 3.0).abs() < 1e-12);
        // b = (0, 2 I_2): level-0 seminorm 0, level-1 norm 2
        let b: AlgElement<f64> = AlgElement::new(
            Arc::clone(&alg),
            vec![
                CMatrix::zeros(1, 1),
                CMatrix::identity(2).scale(num_complex::Complex::new(2.0, 0.0)),
            ],
        )
        .unwrap();
        assert!(b.seminorm(0, &tol).unwrap().abs() < 1e-12);
        assert!((b.seminorm(1, &tol).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(
            b.seminorm(2, &tol),
            Err(CpError::LevelOutOfRange { .. })
        ));
        // seminorms are nondecreasing along the chain
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x = random_element::<f64>(&alg, &mut rng);
            let s0 = x.seminorm(0, &tol).unwrap();
            let s1 = x.seminorm(1, &tol).unwrap();
            assert!(s0 <= s1 + 1e-12);
        }
    }

    #[test]
    fn vectorize_roundtrip() {
        let alg = m1_plus_m2();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_element::<f64>(&alg, &mut rng);
        let v = a.vectorize();
        assert_eq!(v.len(), alg.dim());
        let back = AlgElement::from_vector(&alg, &v).unwrap();
        assert!(back.dist_max(&a) < 1e-15);
        // basis elements vectorize to unit coordinate vectors
        for idx in 0..alg.dim() {
            let e = AlgElement::<f64>::basis(&alg, idx).unwrap();
            let v = e.vectorize();
            for (j, z) in v.iter().enumerate() {
                let expect = if j == idx { 1.0 } else { 0.0 };
                assert!((z.re - expect).abs() < 1e-15 && z.im.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn represent_is_multiplicative() {
        let alg = m1_plus_m2();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_element::<f64>(&alg, &mut rng);
        let b = random_element::<f64>(&alg, &mut rng);
        let lhs = a.represent().mul(&b.represent());
        let rhs = a.product(&b).unwrap().represent();
        assert!(lhs.dist_max(&rhs) < 1e-12);
        assert!(a.represent().adjoint().dist_max(&a.adjoint().represent()) < 1e-15);
    }
}

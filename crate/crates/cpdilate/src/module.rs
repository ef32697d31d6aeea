//! Hilbert C*-modules over a block algebra.
//!
//! Every module here is a direct sum of "rows over blocks": an element
//! assigns to block `k` (of size `d_k`) a matrix with `r_k` rows and `d_k`
//! columns. The inner product is `⟨x, y⟩_k = x_k* y_k` and the right action
//! is `x_k · a_k`. The self module has `r_k = d_k`, the free module of rank
//! `p` has `r_k = p · d_k`, and a rectangular module prescribes arbitrary
//! `r_k` (possibly zero, which makes the module non-full).

use crate::algebra::{AlgElement, CStarAlgebra};
use crate::error::{CpError, Result};
use crate::linalg::{herm_eig, rank_from_eigs, CMatrix, Tolerances};
use crate::scalar::{c_one, c_std_normal, Real, C};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModuleKind {
    /// The algebra as a module over itself.
    SelfModule,
    /// Direct sum of `p` copies of the self module.
    Free(usize),
    /// Prescribed row counts per block.
    Rect(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertModule {
    algebra: Arc<CStarAlgebra>,
    kind: ModuleKind,
    row_dims: Vec<usize>,
}

impl HilbertModule {
    pub fn new(algebra: Arc<CStarAlgebra>, kind: ModuleKind) -> Result<Arc<Self>> {
        let row_dims: Vec<usize> = match &kind {
            ModuleKind::SelfModule => algebra.block_dims().to_vec(),
            ModuleKind::Free(p) => {
                if *p == 0 {
                    return Err(CpError::InvalidInput {
                        context: "free module rank must be positive".into(),
                    });
                }
                algebra.block_dims().iter().map(|&d| p * d).collect()
            }
            ModuleKind::Rect(rows) => {
                if rows.len() != algebra.num_blocks() {
                    return Err(CpError::DimensionMismatch {
                        context: format!(
                            "rectangular module has {} row counts for {} blocks",
                            rows.len(),
                            algebra.num_blocks()
                        ),
                    });
                }
                rows.clone()
            }
        };
        Ok(Arc::new(HilbertModule {
            algebra,
            kind,
            row_dims,
        }))
    }

    pub fn algebra(&self) -> &Arc<CStarAlgebra> {
        &self.algebra
    }

    pub fn kind(&self) -> &ModuleKind {
        &self.kind
    }

    pub fn row_dims(&self) -> &[usize] {
        &self.row_dims
    }

    /// Linear dimension, `Σ r_k · d_k`.
    pub fn dim(&self) -> usize {
        self.row_dims
            .iter()
            .zip(self.algebra.block_dims())
            .map(|(&r, &d)| r * d)
            .sum()
    }

    /// Total row count `Σ r_k` (dimension of the space the module acts into
    /// in its defining left representation).
    pub fn rep_row_dim(&self) -> usize {
        self.row_dims.iter().sum()
    }

    pub fn vec_offset(&self, k: usize) -> usize {
        self.row_dims[..k]
            .iter()
            .zip(self.algebra.block_dims())
            .map(|(&r, &d)| r * d)
            .sum()
    }

    pub fn rep_row_offset(&self, k: usize) -> usize {
        self.row_dims[..k].iter().sum()
    }

    pub fn basis_coords(&self, idx: usize) -> Result<(usize, usize, usize)> {
        let mut rest = idx;
        for (k, (&r, &d)) in self
            .row_dims
            .iter()
            .zip(self.algebra.block_dims())
            .enumerate()
        {
            if rest < r * d {
                return Ok((k, rest / d, rest % d));
            }
            rest -= r * d;
        }
        Err(CpError::IndexOutOfRange {
            index: idx,
            len: self.dim(),
        })
    }

    pub fn basis_index(&self, block: usize, row: usize, col: usize) -> usize {
        self.vec_offset(block) + row * self.algebra.block_dims()[block] + col
    }
}

/// Element of a [`HilbertModule`].
#[derive(Debug, Clone)]
pub struct ModuleElement<R: Real> {
    module: Arc<HilbertModule>,
    blocks: Vec<CMatrix<R>>,
}

impl<R: Real> ModuleElement<R> {
    pub fn new(module: Arc<HilbertModule>, blocks: Vec<CMatrix<R>>) -> Result<Self> {
        if blocks.len() != module.row_dims().len() {
            return Err(CpError::DimensionMismatch {
                context: format!(
                    "expected {} blocks, got {}",
                    module.row_dims().len(),
                    blocks.len()
                ),
            });
        }
        for (k, b) in blocks.iter().enumerate() {
            let r = module.row_dims()[k];
            let d = module.algebra().block_dims()[k];
            if b.rows() != r || b.cols() != d {
                return Err(CpError::DimensionMismatch {
                    context: format!(
                        "module block {k} is {}x{}, expected {r}x{d}",
                        b.rows(),
                        b.cols()
                    ),
                });
            }
        }
        Ok(ModuleElement { module, blocks })
    }

    pub fn zero(module: &Arc<HilbertModule>) -> Self {
        let blocks = module
            .row_dims()
            .iter()
            .zip(module.algebra().block_dims())
            .map(|(&r, &d)| CMatrix::zeros(r, d))
            .collect();
        ModuleElement {
            module: Arc::clone(module),
            blocks,
        }
    }

    pub fn basis(module: &Arc<HilbertModule>, idx: usize) -> Result<Self> {
        let (k, r, s) = module.basis_coords(idx)?;
        let mut e = Self::zero(module);
        e.blocks[k].set(r, s, c_one());
        Ok(e)
    }

    pub fn module(&self) -> &Arc<HilbertModule> {
        &self.module
    }

    pub fn block(&self, k: usize) -> &CMatrix<R> {
        &self.blocks[k]
    }

    fn same_module(&self, other: &Self) -> Result<()> {
        if self.module == other.module {
            Ok(())
        } else {
            Err(CpError::ModuleMismatch)
        }
    }

    /// A-valued inner product `⟨x, y⟩ = x* y`, conjugate linear in `x`.
    pub fn inner_product(&self, other: &Self) -> Result<AlgElement<R>> {
        self.same_module(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(x, y)| x.adjoint().mul(y))
            .collect();
        AlgElement::new(Arc::clone(self.module.algebra()), blocks)
    }

    /// Right action `x · a`.
    pub fn right_action(&self, a: &AlgElement<R>) -> Result<Self> {
        if a.algebra() != self.module.algebra() {
            return Err(CpError::AlgebraMismatch);
        }
        let blocks = self
            .blocks
            .iter()
            .zip(a.blocks())
            .map(|(x, ak)| x.mul(ak))
            .collect();
        Ok(ModuleElement {
            module: Arc::clone(&self.module),
            blocks,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_module(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.add(b))
            .collect();
        Ok(ModuleElement {
            module: Arc::clone(&self.module),
            blocks,
        })
    }

    pub fn scale(&self, s: C<R>) -> Self {
        ModuleElement {
            module: Arc::clone(&self.module),
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

    pub fn vectorize(&self) -> Vec<C<R>> {
        let mut out = Vec::with_capacity(self.module.dim());
        for b in &self.blocks {
            out.extend_from_slice(b.data());
        }
        out
    }

    pub fn from_vector(module: &Arc<HilbertModule>, v: &[C<R>]) -> Result<Self> {
        if v.len() != module.dim() {
            return Err(CpError::DimensionMismatch {
                context: format!("expected {} coordinates, got {}", module.dim(), v.len()),
            });
        }
        let mut blocks = Vec::new();
        let mut off = 0;
        for (&r, &d) in module.row_dims().iter().zip(module.algebra().block_dims()) {
            blocks.push(CMatrix::new(r, d, v[off..off + r * d].to_vec()));
            off += r * d;
        }
        Ok(ModuleElement {
            module: Arc::clone(module),
            blocks,
        })
    }

    /// Rectangular block-diagonal matrix of the defining left representation
    /// `C^{rep_dim(A)} -> C^{rep_row_dim(M)}`.
    pub fn rep_matrix(&self) -> CMatrix<R> {
        let mut out = CMatrix::zeros(self.module.rep_row_dim(), self.module.algebra().rep_dim());
        for (k, b) in self.blocks.iter().enumerate() {
            out.set_block(
                self.module.rep_row_offset(k),
                self.module.algebra().rep_offset(k),
                b,
            );
        }
        out
    }
}

/// Seeded random module element with standard complex Gaussian entries.
pub fn random_module_element<R: Real>(
    module: &Arc<HilbertModule>,
    rng: &mut impl rand::Rng,
) -> ModuleElement<R> {
    let blocks = module
        .row_dims()
        .iter()
        .zip(module.algebra().block_dims())
        .map(|(&r, &d)| CMatrix::from_fn(r, d, |_, _| c_std_normal(rng)))
        .collect();
    ModuleElement::new(Arc::clone(module), blocks).expect("dims valid")
}

/// Fullness: the inner products of basis pairs span the whole algebra.
pub fn fullness_check<R: Real>(module: &Arc<HilbertModule>, tol: &Tolerances<R>) -> bool {
    let dim_a = module.algebra().dim();
    let dim_m = module.dim();
    if dim_m == 0 {
        return dim_a == 0;
    }
    let mut span = CMatrix::<R>::zeros(dim_a, dim_m * dim_m);
    let mut col = 0;
    for b in 0..dim_m {
        let x = ModuleElement::<R>::basis(module, b).expect("basis index in range");
        for c in 0..dim_m {
            let y = ModuleElement::<R>::basis(module, c).expect("basis index in range");
            let ip = x.inner_product(&y).expect("same module");
            span.set_column(col, &ip.vectorize());
            col += 1;
        }
    }
    let gram = span.mul(&span.adjoint());
    let eig = herm_eig(&gram, tol).expect("Gram matrix is Hermitian by construction");
    rank_from_eigs(&eig.values, tol) == dim_a
}

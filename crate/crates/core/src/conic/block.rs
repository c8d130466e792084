//! Block-diagonal symmetric matrices: the variable space of the solver.
//!
//! A variable lives in a product of cones. Each factor is either a PSD cone
//! of `n × n` symmetric matrices or a nonnegative orthant of dimension `q`
//! (stored as a vector, i.e. a diagonal block).

use nalgebra::{DMatrix, DVector};

use crate::numerics::{eig_sym, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Psd(usize),
    NonNeg(usize),
}

impl Cone {
    /// Side length of the block when embedded in a dense matrix.
    pub fn size(&self) -> usize {
        match *self {
            Cone::Psd(n) | Cone::NonNeg(n) => n,
        }
    }

    /// Number of free coordinates (length of `svec`).
    pub fn svec_len(&self) -> usize {
        match *self {
            Cone::Psd(n) => n * (n + 1) / 2,
            Cone::NonNeg(q) => q,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Psd(DMatrix<f64>),
    NonNeg(DVector<f64>),
}

impl Block {
    pub fn cone(&self) -> Cone {
        match self {
            Block::Psd(m) => Cone::Psd(m.nrows()),
            Block::NonNeg(v) => Cone::NonNeg(v.len()),
        }
    }

    fn zeros(c: Cone) -> Block {
        match c {
            Cone::Psd(n) => Block::Psd(DMatrix::zeros(n, n)),
            Cone::NonNeg(q) => Block::NonNeg(DVector::zeros(q)),
        }
    }

    fn identity(c: Cone) -> Block {
        match c {
            Cone::Psd(n) => Block::Psd(DMatrix::identity(n, n)),
            Cone::NonNeg(q) => Block::NonNeg(DVector::from_element(q, 1.0)),
        }
    }

    fn dot(&self, other: &Block) -> f64 {
        match (self, other) {
            (Block::Psd(a), Block::Psd(b)) => a.dot(b),
            (Block::NonNeg(a), Block::NonNeg(b)) => a.dot(b),
            _ => panic!("block kinds differ"),
        }
    }

    fn axpy(&mut self, alpha: f64, other: &Block) {
        match (self, other) {
            (Block::Psd(a), Block::Psd(b)) => a.zip_apply(b, |x, y| *x += alpha * y),
            (Block::NonNeg(a), Block::NonNeg(b)) => a.axpy(alpha, b, 1.0),
            _ => panic!("block kinds differ"),
        }
    }

    fn scale_mut(&mut self, alpha: f64) {
        match self {
            Block::Psd(a) => *a *= alpha,
            Block::NonNeg(a) => *a *= alpha,
        }
    }

    fn norm_sq(&self) -> f64 {
        match self {
            Block::Psd(a) => a.norm_squared(),
            Block::NonNeg(a) => a.norm_squared(),
        }
    }

    /// Smallest eigenvalue (smallest entry for an orthant block).
    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            Block::Psd(a) => {
                if a.nrows() == 0 {
                    return f64::INFINITY;
                }
                match SymMatrix::from_dense(a.clone()).and_then(|s| eig_sym(&s)) {
                    Ok(e) => e.values[e.values.len() - 1],
                    Err(_) => f64::NAN,
                }
            }
            Block::NonNeg(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn max_eigenvalue(&self) -> f64 {
        match self {
            Block::Psd(a) => {
                if a.nrows() == 0 {
                    return f64::NEG_INFINITY;
                }
                match SymMatrix::from_dense(a.clone()).and_then(|s| eig_sym(&s)) {
                    Ok(e) => e.values[0],
                    Err(_) => f64::NAN,
                }
            }
            Block::NonNeg(v) => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// An element of a product of PSD and orthant blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMat {
    blocks: Vec<Block>,
}

impl BlockMat {
    pub fn from_blocks(blocks: Vec<Block>) -> Self {
        BlockMat { blocks }
    }

    /// A single dense PSD block.
    pub fn dense(m: &SymMatrix) -> Self {
        BlockMat {
            blocks: vec![Block::Psd(m.as_matrix().clone())],
        }
    }

    pub fn zeros(cones: &[Cone]) -> Self {
        BlockMat {
            blocks: cones.iter().map(|&c| Block::zeros(c)).collect(),
        }
    }

    pub fn identity(cones: &[Cone]) -> Self {
        BlockMat {
            blocks: cones.iter().map(|&c| Block::identity(c)).collect(),
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Block] {
        &mut self.blocks
    }

    pub fn cones(&self) -> Vec<Cone> {
        self.blocks.iter().map(Block::cone).collect()
    }

    pub fn dot(&self, other: &BlockMat) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(Block::norm_sq).sum::<f64>().sqrt()
    }

    /// `‖X S‖_F` taken blockwise.
    pub fn product_norm(&self, other: &BlockMat) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| match (a, b) {
                (Block::Psd(x), Block::Psd(s)) => (x * s).norm_squared(),
                (Block::NonNeg(x), Block::NonNeg(s)) => x.component_mul(s).norm_squared(),
                _ => f64::INFINITY,
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &BlockMat) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.axpy(alpha, b);
        }
    }

    pub fn scaled(&self, alpha: f64) -> BlockMat {
        let mut out = self.clone();
        for b in out.blocks.iter_mut() {
            b.scale_mut(alpha);
        }
        out
    }

    pub fn add(&self, other: &BlockMat) -> BlockMat {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &BlockMat) -> BlockMat {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(Block::min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(Block::max_eigenvalue)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Assembles the block-diagonal dense matrix (orthant blocks become
    /// diagonal blocks).
    pub fn to_dense(&self) -> SymMatrix {
        let n: usize = self.blocks.iter().map(|b| b.cone().size()).sum();
        let mut m = DMatrix::zeros(n, n);
        let mut off = 0;
        for b in &self.blocks {
            match b {
                Block::Psd(a) => {
                    m.view_mut((off, off), (a.nrows(), a.ncols())).copy_from(a);
                    off += a.nrows();
                }
                Block::NonNeg(v) => {
                    for (i, x) in v.iter().enumerate() {
                        m[(off + i, off + i)] = *x;
                    }
                    off += v.len();
                }
            }
        }
        SymMatrix::from_dense(m).expect("assembled block matrix is square")
    }

    /// The first block as a dense matrix. Panics if it is not a PSD block.
    pub fn psd_block(&self, k: usize) -> &DMatrix<f64> {
        match &self.blocks[k] {
            Block::Psd(m) => m,
            Block::NonNeg(_) => panic!("block {k} is an orthant block"),
        }
    }

    pub fn nonneg_block(&self, k: usize) -> &DVector<f64> {
        match &self.blocks[k] {
            Block::NonNeg(v) => v,
            Block::Psd(_) => panic!("block {k} is a PSD block"),
        }
    }

    /// Symmetric vectorization with `√2` on off-diagonal entries, so that
    /// `svec(A) · svec(B) = ⟨A, B⟩`.
    pub fn svec(&self) -> DVector<f64> {
        let len: usize = self.blocks.iter().map(|b| b.cone().svec_len()).sum();
        let mut out = DVector::zeros(len);
        let mut k = 0;
        for b in &self.blocks {
            match b {
                Block::Psd(a) => {
                    let n = a.nrows();
                    for j in 0..n {
                        for i in 0..=j {
                            out[k] = if i == j {
                                a[(i, i)]
                            } else {
                                std::f64::consts::SQRT_2 * 0.5 * (a[(i, j)] + a[(j, i)])
                            };
                            k += 1;
                        }
                    }
                }
                Block::NonNeg(v) => {
                    for x in v.iter() {
                        out[k] = *x;
                        k += 1;
                    }
                }
            }
        }
        out
    }

    /// Inverse of [`BlockMat::svec`].
    pub fn smat(v: &[f64], cones: &[Cone]) -> BlockMat {
        let mut k = 0;
        let blocks = cones
            .iter()
            .map(|c| match *c {
                Cone::Psd(n) => {
                    let mut a = DMatrix::zeros(n, n);
                    for j in 0..n {
                        for i in 0..=j {
                            if i == j {
                                a[(i, i)] = v[k];
                            } else {
                                let x = v[k] / std::f64::consts::SQRT_2;
                                a[(i, j)] = x;
                                a[(j, i)] = x;
                            }
                            k += 1;
                        }
                    }
                    Block::Psd(a)
                }
                Cone::NonNeg(q) => {
                    let b = DVector::from_column_slice(&v[k..k + q]);
                    k += q;
                    Block::NonNeg(b)
                }
            })
            .collect();
        BlockMat { blocks }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_is_an_isometry() {
        let cones = [Cone::Psd(3), Cone::NonNeg(2)];
        let a = BlockMat::from_blocks(vec![
            Block::Psd(DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0])),
            Block::NonNeg(DVector::from_vec(vec![0.5, -1.0])),
        ]);
        let b = BlockMat::identity(&cones).scaled(2.0);
        assert!((a.svec().dot(&b.svec()) - a.dot(&b)).abs() < 1e-14);
        assert!((a.svec().norm() - a.norm()).abs() < 1e-14);
        let back = BlockMat::smat(a.svec().as_slice(), &cones);
        assert!(back.sub(&a).norm() < 1e-14);
    }

    #[test]
    fn dense_assembly() {
        let a = BlockMat::from_blocks(vec![
            Block::NonNeg(DVector::from_vec(vec![1.0, 2.0])),
            Block::Psd(DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 3.0])),
        ]);
        let d = a.to_dense();
        assert_eq!(d.dim(), 4);
        assert_eq!(d.get(1, 1), 2.0);
        assert_eq!(d.get(2, 3), 1.0);
        assert_eq!(d.get(0, 3), 0.0);
        assert_eq!(a.min_eigenvalue(), 1.0);
    }
}

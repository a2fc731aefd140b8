//! Dense linear-operator form of the propagation step.
//!
//! `G` acts on the column-first vectorization of the depth map. It is built
//! entry by entry from the normalized kernel field and exists only to check
//! the convolutional engine on small grids.

use std::collections::BTreeSet;

use crate::affinity::{kernel_offsets, NormalizedKernelField};
use crate::error::{Error, Result};
use crate::grid::{grid_position, linear_index, DepthMap, SparseDepthMap};

pub mod suite;

/// Largest grid (in pixels) accepted by [`build_g`].
pub const MAX_DENSE_CELLS: usize = 4096;

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    size: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(size: usize) -> Self {
        DenseMatrix {
            size,
            data: vec![0.0; size * size],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size);
        for i in 0..size {
            m.data[i * size + i] = 1.0;
        }
        m
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }

    #[inline]
    fn add(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.size + col] += v;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.size..(row + 1) * self.size]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.size);
        (0..self.size)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.size).map(|r| self.row(r).iter().sum()).collect()
    }

    /// Maximum absolute row sum.
    pub fn infinity_norm(&self) -> f64 {
        (0..self.size)
            .map(|r| self.row(r).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Explicit transformation matrix of one propagation step.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMatrix {
    height: usize,
    width: usize,
    dense: DenseMatrix,
    /// Off-center weight sum per pixel, column-first.
    lambda: Vec<f64>,
    anchored_rows: BTreeSet<usize>,
}

impl TransformMatrix {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> usize {
        self.dense.size()
    }

    pub fn dense(&self) -> &DenseMatrix {
        &self.dense
    }

    /// Off-center weight sum of the pixel at column-first index `p`.
    pub fn lambda(&self, p: usize) -> f64 {
        self.lambda[p]
    }

    pub fn anchored_rows(&self) -> &BTreeSet<usize> {
        &self.anchored_rows
    }

    /// True when no entry is below `-tol` and every row sums to one within `tol`.
    pub fn is_row_stochastic(&self, tol: f64) -> bool {
        self.dense.data.iter().all(|&v| v >= -tol) && self.dense.row_sums().iter().all(|s| (s - 1.0).abs() <= tol)
    }
}

/// Builds `G` so that `G * vec(H)` equals one engine step on `H`.
///
/// Row `p = i + j*m` holds the center weight of pixel `(i, j)` on its diagonal
/// and each off-center weight in the column of the neighbor it reads.
pub fn build_g(kernels: &NormalizedKernelField) -> Result<TransformMatrix> {
    let (h, w) = kernels.dims();
    let cells = h * w;
    if cells > MAX_DENSE_CELLS {
        return Err(Error::GridTooLarge {
            cells,
            limit: MAX_DENSE_CELLS,
        });
    }
    let mut dense = DenseMatrix::zeros(cells);
    let mut lambda = vec![0.0; cells];
    for j in 0..w {
        for i in 0..h {
            let p = linear_index(i, j, h);
            for (a, b) in kernel_offsets(kernels.kernel_size()) {
                let wgt = kernels.weight(i, j, a, b);
                if (a, b) == (0, 0) {
                    dense.add(p, p, wgt);
                    continue;
                }
                lambda[p] += wgt;
                if let Some((ni, nj)) = kernels.neighbor(i, j, a, b) {
                    dense.add(p, linear_index(ni, nj, h), wgt);
                }
            }
        }
    }
    Ok(TransformMatrix {
        height: h,
        width: w,
        dense,
        lambda,
        anchored_rows: BTreeSet::new(),
    })
}

/// Replaces the row of every anchored pixel by its unit row vector.
pub fn anchor_g(g: &TransformMatrix, sparse: &SparseDepthMap) -> Result<TransformMatrix> {
    if sparse.dims() != (g.height, g.width) {
        return Err(Error::dims((g.height, g.width), sparse.dims()));
    }
    let mut out = g.clone();
    let n = out.size();
    for a in sparse.anchors() {
        let p = linear_index(a.row, a.col, g.height);
        out.dense.data[p * n..(p + 1) * n].fill(0.0);
        out.dense.data[p * n + p] = 1.0;
        out.anchored_rows.insert(p);
    }
    Ok(out)
}

/// `G = I - D + A` with `D` diagonal and `A` the off-diagonal part of `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Diagonal of `D`.
    pub degree: Vec<f64>,
    pub affinity: DenseMatrix,
    /// `L = D - A`.
    pub laplacian: DenseMatrix,
}

impl Decomposition {
    /// Rebuilds `I - D + A`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.degree.len();
        let mut m = self.affinity.clone();
        for i in 0..n {
            m.data[i * n + i] += 1.0 - self.degree[i];
        }
        m
    }
}

/// Splits `G` into its diagonal and affinity parts.
///
/// `D` is taken as `1 - diag(G)`. Under zero padding this is exactly the
/// per-pixel off-center sum; under clamp-to-edge, weights that land back on the
/// pixel itself move into the diagonal.
pub fn decompose(g: &TransformMatrix) -> Result<Decomposition> {
    if !g.anchored_rows.is_empty() {
        return Err(Error::InvalidParameter("decompose expects an unanchored G".into()));
    }
    let n = g.size();
    let degree: Vec<f64> = (0..n).map(|i| 1.0 - g.dense.get(i, i)).collect();
    let mut affinity = g.dense.clone();
    for i in 0..n {
        affinity.data[i * n + i] = 0.0;
    }
    let mut laplacian = DenseMatrix::zeros(n);
    for r in 0..n {
        for c in 0..n {
            let d = if r == c { degree[r] } else { 0.0 };
            laplacian.data[r * n + c] = d - affinity.get(r, c);
        }
    }
    Ok(Decomposition {
        degree,
        affinity,
        laplacian,
    })
}

/// Computes `G^steps * vec(state)` by repeated products.
pub fn oracle_propagate(g: &TransformMatrix, state: &DepthMap, steps: usize) -> Result<DepthMap> {
    state.check_dims(g.height, g.width)?;
    let mut v = state.to_column_vector();
    for _ in 0..steps {
        v = g.dense.matvec(&v);
    }
    DepthMap::from_column_vector(g.height, g.width, &v)
}

/// Iterates `G` from `start` until successive iterates differ by less than
/// `tol`, returning the iterate and the number of products taken.
pub fn oracle_fixed_point(
    g: &TransformMatrix,
    start: &DepthMap,
    tol: f64,
    max_steps: usize,
) -> Result<(DepthMap, usize)> {
    start.check_dims(g.height, g.width)?;
    let mut v = start.to_column_vector();
    for step in 1..=max_steps {
        let next = g.dense.matvec(&v);
        let change = next.iter().zip(&v).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        v = next;
        if change < tol {
            return Ok((DepthMap::from_column_vector(g.height, g.width, &v)?, step));
        }
    }
    Ok((DepthMap::from_column_vector(g.height, g.width, &v)?, max_steps))
}

/// Pixel coordinates of column-first index `p` in this matrix's grid.
pub fn position_of(g: &TransformMatrix, p: usize) -> (usize, usize) {
    grid_position(p, g.height)
}

//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

/// Max absolute value over all entries strictly above the block diagonal,
/// where rows are partitioned into `block_rows`-sized blocks and columns
/// into `block_cols`-sized blocks. Returns 0 for an empty selection.
pub fn upper_block_max_abs(m: &DMatrix<f64>, block_rows: usize, block_cols: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        let bi = i / block_rows;
        for j in 0..m.ncols() {
            if j / block_cols > bi {
                worst = worst.max(m[(i, j)].abs());
            }
        }
    }
    worst
}

/// Zero out everything strictly above the block diagonal, in place.
pub fn zero_upper_blocks(m: &mut DMatrix<f64>, block_rows: usize, block_cols: usize) {
    for i in 0..m.nrows() {
        let bi = i / block_rows;
        for j in 0..m.ncols() {
            if j / block_cols > bi {
                m[(i, j)] = 0.0;
            }
        }
    }
}

/// Symmetric part (M + Mᵀ)/2.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric PSD square root via eigendecomposition. Eigenvalues in
/// `[-neg_tol, 0)` are clamped to zero; anything below `-neg_tol` is an
/// error reported as the offending eigenvalue.
pub fn psd_sqrt(m: &DMatrix<f64>, neg_tol: f64) -> std::result::Result<DMatrix<f64>, f64> {
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -neg_tol {
            return Err(*v);
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&vals) * q.transpose())
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = symmetrize(m).symmetric_eigen();
    eig.eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = symmetrize(m).symmetric_eigen();
    eig.eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenvalue together with one unit eigenvector attaining it.
pub fn max_eigenpair(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = symmetrize(m).symmetric_eigen();
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).into())
}

/// Solve L·X = B where L is unit block-lower-triangular with square
/// diagonal blocks of size `block`, by forward block substitution.
/// The diagonal blocks of `l` are assumed to be identity.
pub fn unit_block_lower_solve(l: &DMatrix<f64>, b: &DMatrix<f64>, block: usize) -> DMatrix<f64> {
    let n = l.nrows();
    debug_assert_eq!(n % block, 0);
    let nb = n / block;
    let mut x = b.clone_owned();
    for bi in 0..nb {
        let rows = bi * block..(bi + 1) * block;
        // x[bi] = b[bi] - sum_{bj<bi} L[bi,bj] x[bj]
        for bj in 0..bi {
            let lblk = l.view((bi * block, bj * block), (block, block));
            let xblk = x.view((bj * block, 0), (block, x.ncols())).clone_owned();
            let update = lblk * xblk;
            let mut target = x.view_mut((rows.start, 0), (block, b.ncols()));
            target -= update;
        }
    }
    x
}

/// Max absolute entry of a matrix (0 for empty).
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

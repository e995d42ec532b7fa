//! Small dense linear-algebra helpers shared by the analysis modules.

use nalgebra::{DMatrix, DVector};

/// Numerical rank of a matrix together with the singular-value evidence.
#[derive(Debug, Clone)]
pub struct RankReport {
    pub rank: usize,
    /// Singular values in non-increasing order.
    pub singular_values: Vec<f64>,
    /// Absolute threshold used: `rel_tol * sigma_max`.
    pub threshold: f64,
    /// Ratio between the smallest kept and the largest dropped singular
    /// value; `f64::INFINITY` when nothing was dropped or the dropped value is 0.
    pub gap: f64,
}

pub fn rank_report(m: &DMatrix<f64>, rel_tol: f64) -> RankReport {
    let mut sv: Vec<f64> = if m.nrows() == 0 || m.ncols() == 0 {
        Vec::new()
    } else {
        m.singular_values().iter().copied().collect()
    };
    sv.sort_by(|a, b| b.total_cmp(a));
    let smax = sv.first().copied().unwrap_or(0.0);
    let threshold = rel_tol * smax;
    let rank = if smax == 0.0 {
        0
    } else {
        sv.iter().filter(|&&s| s > threshold).count()
    };
    let gap = match (rank.checked_sub(1).map(|i| sv[i]), sv.get(rank)) {
        (Some(kept), Some(&dropped)) if dropped > 0.0 => kept / dropped,
        _ => f64::INFINITY,
    };
    RankReport {
        rank,
        singular_values: sv,
        threshold,
        gap,
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted ascending
/// with matching eigenvector columns.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(m.nrows(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Orthonormal basis (as columns) of the numerical null space of a symmetric
/// positive semi-definite matrix.
pub fn psd_null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (values, vectors) = sorted_symmetric_eigen(m);
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let threshold = rel_tol * scale;
    let cols: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() <= threshold || scale == 0.0)
        .map(|(i, _)| i)
        .collect();
    DMatrix::from_fn(m.nrows(), cols.len(), |r, c| vectors[(r, cols[c])])
}

/// Reduction of the pencil `(M, L)` onto `range(L)` for a symmetric PSD `L`.
///
/// Holds `W = V D^{-1/2}` where the columns of `V` span `range(L)` and `D`
/// carries the matching positive eigenvalues, so that the smallest
/// generalized eigenvalue of `(M, L)` on `range(L)` is
/// `lambda_min(W^T M W)`.
#[derive(Debug, Clone)]
pub struct RangePencil {
    whitening: DMatrix<f64>,
}

impl RangePencil {
    pub fn new(l: &DMatrix<f64>, rel_tol: f64) -> Self {
        let (values, vectors) = sorted_symmetric_eigen(l);
        let lmax = values.iter().copied().fold(0.0_f64, f64::max);
        let keep: Vec<usize> = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > rel_tol * lmax)
            .map(|(i, _)| i)
            .collect();
        let whitening = DMatrix::from_fn(l.nrows(), keep.len(), |r, c| {
            let k = keep[c];
            vectors[(r, k)] / values[k].sqrt()
        });
        Self { whitening }
    }

    /// Dimension of `range(L)`.
    pub fn dim(&self) -> usize {
        self.whitening.ncols()
    }

    /// Smallest generalized eigenvalue of `(m, L)` restricted to `range(L)`.
    pub fn min_generalized_eigenvalue(&self, m: &DMatrix<f64>) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        let reduced = self.whitening.transpose() * m * &self.whitening;
        min_eigenvalue(&reduced)
    }
}

/// `A ⊗ I_d`.
pub fn kron_identity(a: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows() * d, a.ncols() * d, |r, c| {
        if r % d == c % d {
            a[(r / d, c / d)]
        } else {
            0.0
        }
    })
}

/// `U = 1_n ⊗ I_d`.
pub fn stacked_identity(n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n * d, d, |r, c| if r % d == c { 1.0 } else { 0.0 })
}

/// Mean of the `n` agent blocks of a stacked vector, i.e. `U^T x / n`.
pub fn block_mean(x: &DVector<f64>, d: usize) -> DVector<f64> {
    let n = x.len() / d;
    let mut mean = DVector::zeros(d);
    for i in 0..n {
        mean += x.rows(i * d, d);
    }
    mean / n as f64
}

/// `x - U * block_mean(x)`, the component of `x` orthogonal to `span{U}`.
pub fn remove_block_mean(x: &DVector<f64>, d: usize) -> DVector<f64> {
    let mean = block_mean(x, d);
    let mut out = x.clone();
    for i in 0..x.len() / d {
        let mut block = out.rows_mut(i * d, d);
        block -= &mean;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rank_of_diagonal_with_gap() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 1e-14]));
        let r = rank_report(&m, 1e-9);
        assert_eq!(r.rank, 2);
        assert!(r.gap > 1e12);
    }

    #[test]
    fn generalized_eigenvalue_on_range() {
        // L = diag(2, 0), M = diag(1, 5): only the first coordinate counts.
        let l = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 5.0]));
        let pencil = RangePencil::new(&l, 1e-9);
        assert_eq!(pencil.dim(), 1);
        assert_relative_eq!(pencil.min_generalized_eigenvalue(&m), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn kron_and_block_mean() {
        let a = DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]);
        let k = kron_identity(&a, 2);
        assert_eq!(k.shape(), (2, 4));
        assert_eq!(k[(1, 3)], 1.0);
        assert_eq!(k[(1, 2)], 0.0);
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 6.0]);
        assert_eq!(block_mean(&x, 2), DVector::from_vec(vec![2.0, 4.0]));
        let z = remove_block_mean(&x, 2);
        assert_relative_eq!(block_mean(&z, 2).norm(), 0.0);
        let u = stacked_identity(2, 2);
        assert_eq!(u.transpose() * &z, DVector::zeros(2));
    }
}

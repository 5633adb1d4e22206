//! Small dense symmetric-matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
///
/// Column `i` of the returned matrix is the unit eigenvector of value `i`.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let d = m.nrows();
    if d == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(d, d);
    for (c, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        // fix the sign so the largest-magnitude entry is positive
        let mut best = 0;
        for r in 1..d {
            if v[r].abs() > v[best].abs() + 1e-12 {
                best = r;
            }
        }
        if v[best] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(c, &v);
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Lower Cholesky factor, or `None` if the matrix is not positive definite.
pub fn cholesky(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(m)).map(|c| c.l())
}

/// `y^T m y`
pub fn quad_form(m: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    (y.transpose() * m * y)[(0, 0)]
}

/// Symmetric `m^{-1/2}` of a positive definite matrix.
pub fn inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(m);
    let d =
        DMatrix::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|&l| 1.0 / l.max(f64::MIN_POSITIVE).sqrt())));
    &vecs * d * vecs.transpose()
}

/// Rebuild `V diag(vals) V^T`.
pub fn compose(vals: &[f64], vecs: &DMatrix<f64>) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(vals));
    symmetrize(&(vecs * d * vecs.transpose()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_ascending_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let (vals, vecs) = sym_eigen(&m);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        assert!(max_abs_diff(&compose(&vals, &vecs), &m) < 1e-12);
        assert!((min_eigenvalue(&m) - vals[0]).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(cholesky(&m).is_none());
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let l = cholesky(&p).unwrap();
        assert!(max_abs_diff(&(&l * l.transpose()), &p) < 1e-12);
    }

    #[test]
    fn inv_sqrt_whitens() {
        let m = DMatrix::from_row_slice(2, 2, &[5.0, 2.0, 2.0, 3.0]);
        let w = inv_sqrt(&m);
        let id = &w * &m * &w;
        assert!(max_abs_diff(&id, &DMatrix::identity(2, 2)) < 1e-12);
    }
}

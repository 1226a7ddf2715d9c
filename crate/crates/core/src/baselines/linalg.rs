use nalgebra::{DMatrix, DVector};

/// Ordinary least squares through the normal equations, falling back to SVD when
/// the Gram matrix is not positive definite.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let xt = x.transpose();
    let gram = &xt * x;
    let rhs = &xt * y;
    if let Some(ch) = gram.clone().cholesky() {
        let beta = ch.solve(&rhs);
        if beta.iter().all(|b| b.is_finite()) {
            return Some(beta);
        }
    }
    x.clone().svd(true, true).solve(y, 1e-12).ok().filter(|b| b.iter().all(|v| v.is_finite()))
}

use g2p_core::Dataset;
use nalgebra::DMatrix;

/// Mean squared error of the best affine fit, from the normal equations.
pub fn least_squares_mse(data: &Dataset) -> f64 {
    let (n, d, m) = (data.len(), data.inputs(), data.outputs());
    let x = DMatrix::from_fn(n, d + 1, |i, j| if j < d { data.input(i)[j] } else { 1.0 });
    let y = DMatrix::from_fn(n, m, |i, k| data.target(i)[k]);
    let gram = x.transpose() * &x;
    let rhs = x.transpose() * &y;
    let beta = gram.cholesky().expect("full-rank design").solve(&rhs);
    let resid = &x * beta - y;
    resid.norm_squared() / (n * m) as f64
}

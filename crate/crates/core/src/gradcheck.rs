//! Central finite differences, used as the reference for `Tape::backward`.

use crate::tensor::Tensor;

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every coordinate of `x`.
pub fn finite_difference_grad<F>(f: F, x: &Tensor<f64>, h: f64) -> Tensor<f64>
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    let all: Vec<usize> = (0..x.len()).collect();
    let values = finite_difference_at(f, x, h, &all);
    Tensor::new(x.shape(), values).expect("same element count")
}

/// Central differences for a subset of coordinates only; returns one value
/// per requested index.
pub fn finite_difference_at<F>(mut f: F, x: &Tensor<f64>, h: f64, indices: &[usize]) -> Vec<f64>
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    assert!(h > 0.0, "finite difference step must be positive");
    let mut probe = x.clone();
    indices
        .iter()
        .map(|&i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + h;
            let plus = f(&probe);
            probe.data_mut()[i] = orig - h;
            let minus = f(&probe);
            probe.data_mut()[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Relative error with an absolute floor so that near-zero gradients are
/// compared on an absolute scale.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

//! Shared test oracles: central finite differences and scalar sweeps.

use fraudkit::linalg::Matrix;

/// Central finite-difference derivative of `f` at `x[i]`, h = 1e-6.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let h = 1e-6;
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Max relative error between an analytic gradient and finite differences of
/// a scalar function over a flat parameter vector.
pub fn max_rel_error(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let fd = central_diff(f, x, i);
        let denom = analytic[i].abs().max(fd.abs()).max(1e-4);
        worst = worst.max((analytic[i] - fd).abs() / denom);
    }
    worst
}

/// Frobenius inner product used to reduce a matrix output to a scalar loss.
pub fn project(m: &Matrix, proj: &Matrix) -> f64 {
    m.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
}

//! Test objectives, negated so that larger is better.

use std::convert::Infallible;

/// `-sum (x_i - 0.5)^2`, maximal at the centre of the unit cube.
pub fn negative_sphere(x: &[f64]) -> Result<f64, Infallible> {
    Ok(-x.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>())
}

/// Negated Rastrigin, `-(10 n + sum (x^2 - 10 cos 2 pi x))`, maximal at the origin.
pub fn negative_rastrigin(x: &[f64]) -> Result<f64, Infallible> {
    let n = x.len() as f64;
    Ok(-(10.0 * n
        + x.iter()
            .map(|v| v * v - 10.0 * (std::f64::consts::TAU * v).cos())
            .sum::<f64>()))
}

//! Modified anisotropic diffusion: Perona–Malik style explicit updates driven
//! by a two-term logistic diffusion coefficient and a threshold that is
//! re-estimated from the image on every iteration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{gradients_4dir, GrayImage};

/// Lower bound on the threshold so the coefficient stays defined on flat images.
pub const THRESHOLD_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum MadfError {
    #[error("threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
    #[error("invalid diffusion config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MadfConfig {
    pub iterations: usize,
    /// Explicit step size; at most 0.25 for the 4-neighbour stencil.
    pub lambda: f64,
    /// Weight applied to the mean absolute deviation of the gradient field.
    pub weight: f64,
}

impl Default for MadfConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            lambda: 0.2,
            weight: 2.0,
        }
    }
}

impl MadfConfig {
    pub fn validate(&self) -> Result<(), MadfError> {
        if self.iterations == 0 {
            return Err(MadfError::Config("iterations must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda <= 0.25) {
            return Err(MadfError::Config(format!(
                "lambda must lie in (0, 0.25], got {}",
                self.lambda
            )));
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(MadfError::Config(format!(
                "weight must be positive, got {}",
                self.weight
            )));
        }
        Ok(())
    }
}

/// `1/(1+exp(2|s/t|^2)) + 0.5/(1+exp(2|s^2/t|))`.
///
/// The second term divides by `t`, not `t^2`; the result lies in `(0, 0.75]`
/// wherever the exponentials do not underflow.
pub fn diffusion_coefficient(s: f64, t: f64) -> Result<f64, MadfError> {
    if t.is_nan() || t <= 0.0 {
        return Err(MadfError::NonPositiveThreshold(t));
    }
    Ok(coefficient(s, t))
}

#[inline]
fn coefficient(s: f64, t: f64) -> f64 {
    let r = s / t;
    logistic_tail(2.0 * r * r) + 0.5 * logistic_tail(2.0 * (s * s / t).abs())
}

/// `1 / (1 + e^x)` for `x >= 0`, written to avoid `inf/inf`.
#[inline]
fn logistic_tail(x: f64) -> f64 {
    let e = (-x).exp();
    e / (1.0 + e)
}

/// Weighted mean absolute deviation of the per-pixel gradient magnitude,
/// floored at [`THRESHOLD_FLOOR`].
pub fn estimate_threshold(img: &GrayImage, weight: f64) -> f64 {
    let mag = gradients_4dir(img).magnitude();
    threshold_from_magnitudes(&mag, weight)
}

pub(crate) fn threshold_from_magnitudes(mag: &[f64], weight: f64) -> f64 {
    let n = mag.len() as f64;
    let mean = mag.iter().sum::<f64>() / n;
    let mad = mag.iter().map(|m| (m - mean).abs()).sum::<f64>() / n;
    (weight * mad).max(THRESHOLD_FLOOR)
}

/// One explicit diffusion step at threshold `t`; returns the new image.
pub fn diffuse_step(img: &GrayImage, lambda: f64, t: f64) -> GrayImage {
    let g = gradients_4dir(img);
    let mut out = img.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let mut flux = 0.0;
        for plane in g.planes() {
            let d = plane[i];
            flux += coefficient(d.abs(), t) * d;
        }
        *v = (*v + lambda * flux).clamp(0.0, 1.0);
    }
    out
}

/// Runs the filter and also reports the threshold used on each iteration.
pub fn madf_denoise_traced(
    img: &GrayImage,
    cfg: &MadfConfig,
) -> Result<(GrayImage, Vec<f64>), MadfError> {
    cfg.validate()?;
    let mut current = img.clone();
    current.clamp_unit();
    let mut thresholds = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let t = estimate_threshold(&current, cfg.weight);
        thresholds.push(t);
        current = diffuse_step(&current, cfg.lambda, t);
    }
    Ok((current, thresholds))
}

pub fn madf_denoise(img: &GrayImage, cfg: &MadfConfig) -> Result<GrayImage, MadfError> {
    madf_denoise_traced(img, cfg).map(|(out, _)| out)
}

/// Anisotropic total variation: sum of `|east| + |south|` differences.
pub fn total_variation(img: &GrayImage) -> f64 {
    let g = gradients_4dir(img);
    g.east
        .iter()
        .zip(&g.south)
        .map(|(e, s)| e.abs() + s.abs())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn coefficient_at_zero_gradient() {
        for t in [1e-6, 0.3, 1.0, 50.0] {
            assert_eq!(diffusion_coefficient(0.0, t).unwrap(), 0.75);
        }
    }

    #[test]
    fn coefficient_unit_values() {
        let e2 = 2f64.exp();
        let expected = 1.5 / (1.0 + e2);
        let d = diffusion_coefficient(1.0, 1.0).unwrap();
        assert!((d - expected).abs() < 1e-15);
        assert!((d - 0.178804).abs() < 1e-6);
    }

    #[test]
    fn coefficient_saturates() {
        let d = diffusion_coefficient(10.0, 1.0).unwrap();
        assert!(d < 1e-8 && d > 0.0);
    }

    #[test]
    fn coefficient_rejects_bad_threshold() {
        assert_eq!(
            diffusion_coefficient(1.0, 0.0),
            Err(MadfError::NonPositiveThreshold(0.0))
        );
        assert!(diffusion_coefficient(1.0, -2.0).is_err());
        assert!(diffusion_coefficient(1.0, f64::NAN).is_err());
    }

    #[test]
    fn coefficient_is_even_in_s() {
        for s in [0.1, 0.7, 2.0] {
            assert_eq!(
                diffusion_coefficient(s, 0.4).unwrap(),
                diffusion_coefficient(-s, 0.4).unwrap()
            );
        }
    }

    #[test]
    fn threshold_of_constant_image_is_floor() {
        assert_eq!(estimate_threshold(&GrayImage::filled(8, 8, 0.3), 2.0), THRESHOLD_FLOOR);
    }

    #[test]
    fn threshold_from_known_magnitudes() {
        assert_eq!(threshold_from_magnitudes(&[0.0, 0.0, 1.0, 1.0], 1.0), 0.5);
    }

    #[test]
    fn threshold_matches_two_pass_naive_loops() {
        let mut rng = rng_from_seed(11);
        let (w, h) = (16usize, 16usize);
        let img = GrayImage::from_fn(w, h, |_, _| rng.random::<f64>());
        // independent two-pass evaluation straight off the pixel grid
        let at = |x: i64, y: i64| {
            img.get(x.clamp(0, w as i64 - 1) as usize, y.clamp(0, h as i64 - 1) as usize)
        };
        let mut mags = Vec::new();
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let c = at(x, y);
                let m = ((at(x, y - 1) - c).abs()
                    + (at(x, y + 1) - c).abs()
                    + (at(x + 1, y) - c).abs()
                    + (at(x - 1, y) - c).abs())
                    / 4.0;
                mags.push(m);
            }
        }
        let mut mean = 0.0;
        for m in &mags {
            mean += m;
        }
        mean /= mags.len() as f64;
        let mut dev = 0.0;
        for m in &mags {
            dev += (m - mean).abs();
        }
        let expected = 2.0 * dev / mags.len() as f64;
        let got = estimate_threshold(&img, 2.0);
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn constant_image_is_fixed_point() {
        let img = GrayImage::filled(9, 7, 0.61);
        let out = madf_denoise(&img, &MadfConfig::default()).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn config_validation() {
        let bad = [
            MadfConfig { iterations: 0, ..Default::default() },
            MadfConfig { lambda: 0.3, ..Default::default() },
            MadfConfig { lambda: 0.0, ..Default::default() },
            MadfConfig { weight: 0.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(MadfError::Config(_))), "{cfg:?}");
        }
        assert!(MadfConfig::default().validate().is_ok());
    }

    #[test]
    fn threshold_changes_between_iterations() {
        let mut rng = rng_from_seed(5);
        let img = GrayImage::from_fn(24, 24, |_, _| rng.random::<f64>());
        let cfg = MadfConfig { iterations: 5, ..Default::default() };
        let (_, ts) = madf_denoise_traced(&img, &cfg).unwrap();
        for pair in ts.windows(2) {
            assert_ne!(pair[0], pair[1]);
        }
    }

    proptest! {
        #[test]
        fn coefficient_bounded_and_decreasing(
            s in 0.0f64..1.0,
            delta in 1e-3f64..0.5,
            t in 0.1f64..1.0,
        ) {
            let a = diffusion_coefficient(s, t).unwrap();
            let b = diffusion_coefficient(s + delta, t).unwrap();
            prop_assert!(a > 0.0 && a <= 0.75);
            prop_assert!(b > 0.0 && b <= 0.75);
            prop_assert!(b < a);
        }

        #[test]
        fn output_stays_in_unit_range(seed in any::<u64>(), iters in 1usize..6) {
            let mut rng = rng_from_seed(seed);
            let img = GrayImage::from_fn(12, 10, |_, _| rng.random::<f64>());
            let cfg = MadfConfig { iterations: iters, lambda: 0.25, weight: 1.0 };
            let out = madf_denoise(&img, &cfg).unwrap();
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn single_iteration_does_not_raise_total_variation(seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let img = GrayImage::from_fn(16, 16, |_, _| rng.random::<f64>());
            let t = estimate_threshold(&img, 2.0);
            let next = diffuse_step(&img, 0.2, t);
            prop_assert!(total_variation(&next) <= total_variation(&img) + 1e-12);
        }
    }
}

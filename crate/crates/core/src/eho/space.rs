use serde::{Deserialize, Serialize};

use super::EhoError;

/// One search dimension. Candidates carry a normalized coordinate in `[0, 1]`
/// per dimension; decoding maps it into the dimension's legal values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Dimension {
    Continuous { min: f64, max: f64 },
    /// Ordered, duplicate-free candidate values.
    Discrete { values: Vec<f64> },
}

impl Dimension {
    /// Integers `lo..=hi` as a discrete dimension.
    pub fn integers(lo: i64, hi: i64) -> Self {
        Dimension::Discrete {
            values: (lo..=hi).map(|v| v as f64).collect(),
        }
    }

    pub fn decode(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            Dimension::Continuous { min, max } => min + u * (max - min),
            Dimension::Discrete { values } => values[self.index_of(u)],
        }
    }

    fn index_of(&self, u: f64) -> usize {
        match self {
            Dimension::Continuous { .. } => 0,
            Dimension::Discrete { values } => ((u * values.len() as f64).floor() as usize).min(values.len() - 1),
        }
    }

    /// Bounds of the dimension in its own units: values for continuous
    /// dimensions, indices for discrete ones.
    pub fn native_bounds(&self) -> (f64, f64) {
        match self {
            Dimension::Continuous { min, max } => (*min, *max),
            Dimension::Discrete { values } => (0.0, (values.len() - 1) as f64),
        }
    }

    /// Inverse of the native-unit encoding used by [`Dimension::native_bounds`].
    pub fn normalize_native(&self, v: f64) -> f64 {
        match self {
            Dimension::Continuous { min, max } => ((v - min) / (max - min)).clamp(0.0, 1.0),
            Dimension::Discrete { values } => (v / values.len() as f64).clamp(0.0, 1.0),
        }
    }

    fn validate(&self, name: &str) -> Result<(), EhoError> {
        match self {
            Dimension::Continuous { min, max } => {
                if !(min.is_finite() && max.is_finite() && min < max) {
                    return Err(EhoError::Space(format!("{name}: need finite min < max, got [{min}, {max}]")));
                }
            }
            Dimension::Discrete { values } => {
                if values.is_empty() {
                    return Err(EhoError::Space(format!("{name}: empty value list")));
                }
                for (i, v) in values.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(EhoError::Space(format!("{name}: non-finite value")));
                    }
                    if values[..i].contains(v) {
                        return Err(EhoError::Space(format!("{name}: duplicate value {v}")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    names: Vec<String>,
    dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<(String, Dimension)>) -> Result<Self, EhoError> {
        if dims.is_empty() {
            return Err(EhoError::Space("search space has no dimensions".into()));
        }
        for (name, d) in &dims {
            d.validate(name)?;
        }
        let (names, dims) = dims.into_iter().unzip();
        Ok(Self { names, dims })
    }

    /// `n` unnamed continuous dimensions over `[min, max]`.
    pub fn uniform(n: usize, min: f64, max: f64) -> Result<Self, EhoError> {
        Self::new(
            (0..n)
                .map(|i| (format!("x{i}"), Dimension::Continuous { min, max }))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn decode(&self, position: &[f64]) -> Vec<f64> {
        assert_eq!(position.len(), self.dims.len(), "position length differs from space");
        self.dims.iter().zip(position).map(|(d, &u)| d.decode(u)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_examples() {
        let lr = Dimension::Continuous { min: 0.005, max: 0.2 };
        assert_eq!(lr.decode(0.0), 0.005);
        assert!((lr.decode(1.0) - 0.2).abs() < 1e-15);
        let k = Dimension::Discrete { values: vec![3.0, 5.0, 7.0] };
        assert_eq!(k.decode(0.5), 5.0);
        assert_eq!(k.decode(1.0), 7.0);
        assert_eq!(k.decode(0.0), 3.0);
        assert_eq!(k.decode(0.34), 5.0);
    }

    #[test]
    fn native_round_trip_for_discrete() {
        let k = Dimension::Discrete { values: vec![3.0, 5.0, 7.0] };
        for idx in 0..3 {
            assert_eq!(k.decode(k.normalize_native(idx as f64)), [3.0, 5.0, 7.0][idx]);
        }
    }

    #[test]
    fn invalid_dimensions_rejected() {
        let bad = [
            Dimension::Continuous { min: 1.0, max: 1.0 },
            Dimension::Discrete { values: vec![] },
            Dimension::Discrete { values: vec![1.0, 2.0, 1.0] },
        ];
        for d in bad {
            assert!(SearchSpace::new(vec![("d".into(), d)]).is_err());
        }
        assert!(SearchSpace::new(vec![]).is_err());
    }
}

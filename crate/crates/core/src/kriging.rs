//! Ordinary kriging over 2-D node coordinates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::lu_solve_many;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KrigingError {
    #[error("kriging system is singular (duplicate sample coordinates?)")]
    SingularSystem,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid variogram: {0}")]
    InvalidVariogram(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariogramModel {
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variogram {
    pub model: VariogramModel,
    pub nugget: f64,
    pub sill: f64,
    pub range: f64,
}

impl Variogram {
    pub fn exponential(nugget: f64, sill: f64, range: f64) -> Result<Self, KrigingError> {
        let v = Self { model: VariogramModel::Exponential, nugget, sill, range };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), KrigingError> {
        if !(self.nugget >= 0.0) || !(self.sill > 0.0) || !(self.range > 0.0) || self.sill < self.nugget {
            return Err(KrigingError::InvalidVariogram(format!("{self:?}")));
        }
        Ok(())
    }

    /// γ(h); zero at h = 0, nugget jump for h > 0.
    pub fn gamma(&self, h: f64) -> f64 {
        if h == 0.0 {
            return 0.0;
        }
        match self.model {
            VariogramModel::Exponential => self.nugget + (self.sill - self.nugget) * (1.0 - (-h / self.range).exp()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrigedValue {
    pub value: f64,
    pub weights: Vec<f64>,
    /// Set when any weight is negative, so the estimate may leave the sample range.
    pub negative_weights: bool,
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Ordinary kriging estimates at `targets` from `samples`.
pub fn krige(
    samples: &[((f64, f64), f64)],
    targets: &[(f64, f64)],
    v: &Variogram,
) -> Result<Vec<KrigedValue>, KrigingError> {
    v.validate()?;
    let k = samples.len();
    if k < 2 {
        return Err(KrigingError::TooFewSamples(k));
    }
    let n = k + 1;
    let mut system = vec![0.0; n * n];
    for i in 0..k {
        for j in 0..k {
            system[i * n + j] = v.gamma(dist(samples[i].0, samples[j].0));
        }
        system[i * n + k] = 1.0;
        system[k * n + i] = 1.0;
    }
    // duplicate coordinates make two rows identical
    for i in 0..k {
        for j in i + 1..k {
            if samples[i].0 == samples[j].0 {
                return Err(KrigingError::SingularSystem);
            }
        }
    }

    let m = targets.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut rhs = vec![0.0; n * m];
    for (j, &t) in targets.iter().enumerate() {
        for (i, s) in samples.iter().enumerate() {
            rhs[i * m + j] = v.gamma(dist(s.0, t));
        }
        rhs[k * m + j] = 1.0;
    }
    lu_solve_many(&mut system, &mut rhs, n, m, 1e-13).ok_or(KrigingError::SingularSystem)?;
    Ok((0..m)
        .map(|j| {
            let weights: Vec<f64> = (0..k).map(|i| rhs[i * m + j]).collect();
            let value = weights.iter().zip(samples).map(|(w, s)| w * s.1).sum();
            let negative_weights = weights.iter().any(|&w| w < -1e-12);
            KrigedValue { value, weights, negative_weights }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_at_samples() {
        let v = Variogram::exponential(0.0, 1.0, 2.0).unwrap();
        let samples = [((0.0, 0.0), 1.5), ((1.0, 0.0), 2.5), ((0.0, 3.0), -1.0)];
        let out = krige(&samples, &[(1.0, 0.0)], &v).unwrap();
        assert!((out[0].value - 2.5).abs() < 1e-10);
    }

    #[test]
    fn symmetric_pair_gives_mean() {
        let v = Variogram::exponential(0.0, 1.0, 1.0).unwrap();
        let samples = [((0.0, 0.0), 10.0), ((2.0, 0.0), 20.0)];
        let out = krige(&samples, &[(1.0, 5.0)], &v).unwrap();
        assert!((out[0].weights[0] - 0.5).abs() < 1e-12);
        assert!((out[0].value - 15.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_coordinates_are_singular() {
        let v = Variogram::exponential(0.0, 1.0, 1.0).unwrap();
        let samples = [((0.0, 0.0), 1.0), ((0.0, 0.0), 2.0)];
        assert_eq!(krige(&samples, &[(1.0, 1.0)], &v).unwrap_err(), KrigingError::SingularSystem);
    }

    #[test]
    fn invalid_variogram() {
        assert!(Variogram::exponential(2.0, 1.0, 1.0).is_err());
        assert!(Variogram::exponential(0.0, 0.0, 1.0).is_err());
        assert!(Variogram::exponential(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn too_few_samples() {
        let v = Variogram::exponential(0.0, 1.0, 1.0).unwrap();
        assert_eq!(krige(&[((0.0, 0.0), 1.0)], &[(1.0, 1.0)], &v).unwrap_err(), KrigingError::TooFewSamples(1));
    }
}

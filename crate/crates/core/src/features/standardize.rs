use serde::{Deserialize, Serialize};

use super::{FeatureKind, FeatureVector, FEATURE_COUNT};
use crate::error::{Error, Result};

/// Per-feature z-scoring fitted on the training split.
///
/// Population standard deviation. A constant feature keeps stddev 0 and
/// standardizes to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; FEATURE_COUNT],
    pub stddev: [f64; FEATURE_COUNT],
    pub fitted_on: String,
}

impl Standardizer {
    pub fn fit(vectors: &[FeatureVector], fitted_on: impl Into<String>) -> Result<Self> {
        if vectors.len() < 2 {
            return Err(Error::invalid(format!(
                "standardizer needs at least 2 vectors, got {}",
                vectors.len()
            )));
        }
        let n = vectors.len() as f64;
        let mut mean = [0.0; FEATURE_COUNT];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v.0) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut stddev = [0.0; FEATURE_COUNT];
        for v in vectors {
            for ((s, x), m) in stddev.iter_mut().zip(v.0).zip(mean) {
                *s += (x - m) * (x - m);
            }
        }
        for s in &mut stddev {
            *s = (*s / n).sqrt();
            // treat rounding residue on a constant column as exactly constant
            if *s < 1e-12 {
                *s = 0.0;
            }
        }
        Ok(Standardizer { mean, stddev, fitted_on: fitted_on.into() })
    }

    pub fn apply(&self, v: &FeatureVector) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        for i in 0..FEATURE_COUNT {
            out[i] = if self.stddev[i] > 0.0 { (v.0[i] - self.mean[i]) / self.stddev[i] } else { 0.0 };
        }
        out
    }

    pub fn apply_one(&self, kind: FeatureKind, value: f64) -> f64 {
        let i = kind.index();
        if self.stddev[i] > 0.0 {
            (value - self.mean[i]) / self.stddev[i]
        } else {
            0.0
        }
    }
}

/// Reference feature vector for attributions: mean for continuous features,
/// majority value for binary ones (ties go to 0).
pub fn fit_reference(vectors: &[FeatureVector]) -> Result<FeatureVector> {
    if vectors.is_empty() {
        return Err(Error::invalid("reference vector needs at least one example"));
    }
    let n = vectors.len() as f64;
    let mut out = FeatureVector::default();
    for kind in FeatureKind::ALL {
        let sum: f64 = vectors.iter().map(|v| v[kind]).sum();
        out[kind] = if kind.is_binary() {
            if sum * 2.0 > n {
                1.0
            } else {
                0.0
            }
        } else {
            sum / n
        };
    }
    Ok(out)
}

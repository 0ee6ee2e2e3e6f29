use serde::{Deserialize, Serialize};

use super::Attribution;
use crate::features::{FeatureKind, FeatureVector, FEATURE_COUNT};
use crate::scalar::Scalar;

/// (raw feature value, phi) pairs for one feature, one per instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScatter {
    pub feature: FeatureKind,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub instances: usize,
    pub mean_abs_phi: [f64; FEATURE_COUNT],
    pub scatter: Vec<FeatureScatter>,
}

impl GlobalImportance {
    /// Features by descending mean |phi|, canonical order on ties.
    pub fn ranking(&self) -> Vec<FeatureKind> {
        let mut kinds = FeatureKind::ALL.to_vec();
        kinds.sort_by(|a, b| {
            self.mean_abs_phi[b.index()]
                .partial_cmp(&self.mean_abs_phi[a.index()])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(b))
        });
        kinds
    }
}

/// Aggregates per-instance attributions.
pub fn global_importance<T: Scalar>(items: &[(FeatureVector, Attribution<T>)]) -> GlobalImportance {
    let n = items.len();
    let mut mean_abs_phi = [0.0; FEATURE_COUNT];
    let mut scatter: Vec<FeatureScatter> =
        FeatureKind::ALL.iter().map(|&feature| FeatureScatter { feature, points: Vec::with_capacity(n) }).collect();
    for (x, a) in items {
        for k in FeatureKind::ALL {
            let phi = a.phi[k.index()].as_f64();
            mean_abs_phi[k.index()] += phi.abs();
            scatter[k.index()].points.push((x[k], phi));
        }
    }
    if n > 0 {
        mean_abs_phi.iter_mut().for_each(|m| *m /= n as f64);
    }
    GlobalImportance { instances: n, mean_abs_phi, scatter }
}

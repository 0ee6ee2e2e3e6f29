//! Post-hoc explanations: feature-level Shapley attributions and word-level
//! local surrogates.
//!
//! Feature attributions use interventional values with a single reference:
//! a coalition keeps its features at the instance values and moves the rest
//! to the baseline vector. The explained quantity is the model probability.

mod global;
mod highlight;
mod lime;
pub mod shapley;

use serde::{Deserialize, Serialize};

pub use global::{global_importance, FeatureScatter, GlobalImportance};
pub use highlight::{render_highlights, NEGATIVE_RGB, POSITIVE_RGB};
pub use lime::{fit_surrogate, lime_explain, lime_masks, LimeConfig, Surrogate, WordExplanation};
pub use shapley::{kernel_weight, shapley_exact, shapley_kernel, ShapleyValues, MAX_EXACT_PLAYERS};

use crate::error::Result;
use crate::features::{FeatureKind, FEATURE_COUNT};
use crate::scalar::Scalar;

/// A model viewed as a function of its (standardized) feature vector alone.
pub trait FeatureModel<T: Scalar> {
    fn included(&self) -> Vec<FeatureKind>;
    fn predict_features(&self, features: &[T; FEATURE_COUNT]) -> T;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Attribution<T> {
    pub base_value: T,
    /// Canonical feature order; zero outside the model's variant.
    pub phi: [T; FEATURE_COUNT],
    pub output: T,
}

impl<T: Scalar> Attribution<T> {
    /// `|base + sum(phi) - output|`.
    pub fn efficiency_gap(&self) -> T {
        (self.base_value + self.phi.iter().copied().sum::<T>() - self.output).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapMethod {
    Exact,
    Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapConfig {
    pub method: ShapMethod,
    /// Kernel method only.
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for ShapConfig {
    fn default() -> Self {
        ShapConfig { method: ShapMethod::Exact, n_samples: 2048, seed: 0 }
    }
}

/// Payoff of a coalition: included features listed in `coalition` take the
/// instance values, all others the baseline.
pub fn value_function<T: Scalar, M: FeatureModel<T> + ?Sized>(
    model: &M,
    instance: &[T; FEATURE_COUNT],
    baseline: &[T; FEATURE_COUNT],
    coalition: &[FeatureKind],
) -> T {
    let mut x = *baseline;
    for &k in coalition {
        x[k.index()] = instance[k.index()];
    }
    model.predict_features(&x)
}

fn masked_game<'a, T: Scalar, M: FeatureModel<T> + ?Sized>(
    model: &'a M,
    included: &'a [FeatureKind],
    instance: &'a [T; FEATURE_COUNT],
    baseline: &'a [T; FEATURE_COUNT],
) -> impl FnMut(u32) -> T + 'a {
    move |mask| {
        let mut x = *baseline;
        for (j, k) in included.iter().enumerate() {
            if mask >> j & 1 == 1 {
                x[k.index()] = instance[k.index()];
            }
        }
        model.predict_features(&x)
    }
}

fn to_attribution<T: Scalar>(included: &[FeatureKind], values: ShapleyValues<T>) -> Attribution<T> {
    let mut phi = [T::zero(); FEATURE_COUNT];
    for (k, p) in included.iter().zip(values.phi) {
        phi[k.index()] = p;
    }
    Attribution { base_value: values.base, phi, output: values.output }
}

pub fn shap_exact<T: Scalar, M: FeatureModel<T> + ?Sized>(
    model: &M,
    instance: &[T; FEATURE_COUNT],
    baseline: &[T; FEATURE_COUNT],
) -> Result<Attribution<T>> {
    let included = model.included();
    let values = shapley_exact(included.len(), masked_game(model, &included, instance, baseline))?;
    Ok(to_attribution(&included, values))
}

pub fn shap_kernel<T: Scalar, M: FeatureModel<T> + ?Sized>(
    model: &M,
    instance: &[T; FEATURE_COUNT],
    baseline: &[T; FEATURE_COUNT],
    n_samples: usize,
    seed: u64,
) -> Result<Attribution<T>> {
    let included = model.included();
    let values = shapley_kernel(included.len(), n_samples, seed, masked_game(model, &included, instance, baseline))?;
    Ok(to_attribution(&included, values))
}

pub fn shap<T: Scalar, M: FeatureModel<T> + ?Sized>(
    model: &M,
    instance: &[T; FEATURE_COUNT],
    baseline: &[T; FEATURE_COUNT],
    config: &ShapConfig,
) -> Result<Attribution<T>> {
    match config.method {
        ShapMethod::Exact => shap_exact(model, instance, baseline),
        ShapMethod::Kernel => shap_kernel(model, instance, baseline, config.n_samples, config.seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `p = w . x + c` over all features.
    struct Linear {
        w: [f64; FEATURE_COUNT],
        c: f64,
    }

    impl FeatureModel<f64> for Linear {
        fn included(&self) -> Vec<FeatureKind> {
            FeatureKind::ALL.to_vec()
        }
        fn predict_features(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
            self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.c
        }
    }

    fn linear() -> Linear {
        let mut w = [0.0; FEATURE_COUNT];
        for (i, v) in w.iter_mut().enumerate() {
            *v = (i as f64 - 4.0) * 0.3;
        }
        w[6] = 0.0;
        Linear { w, c: 0.2 }
    }

    #[test]
    fn linear_closed_form() {
        let m = linear();
        let x: [f64; FEATURE_COUNT] = std::array::from_fn(|i| (i as f64).sin() * 2.0);
        let b: [f64; FEATURE_COUNT] = std::array::from_fn(|i| (i as f64).cos());
        let a = shap_exact(&m, &x, &b).unwrap();
        for i in 0..FEATURE_COUNT {
            assert!((a.phi[i] - m.w[i] * (x[i] - b[i])).abs() < 1e-12);
        }
        // dummy feature
        assert!(a.phi[6].abs() < 1e-15);
        assert!(a.efficiency_gap() < 1e-12);
    }

    #[test]
    fn value_function_endpoints_and_monotonicity() {
        let m = linear();
        let x = [1.0; FEATURE_COUNT];
        let b = [0.0; FEATURE_COUNT];
        assert_eq!(value_function(&m, &x, &b, &[]), m.predict_features(&b));
        assert_eq!(value_function(&m, &x, &b, &FeatureKind::ALL), m.predict_features(&x));
        // pos_valence has a positive weight and sits above its baseline
        let s = [FeatureKind::Identity];
        let t = [FeatureKind::Identity, FeatureKind::PosValence];
        assert!(value_function(&m, &x, &b, &s) <= value_function(&m, &x, &b, &t));
    }

    #[test]
    fn kernel_default_config_matches_exact() {
        let m = linear();
        let x: [f64; FEATURE_COUNT] = std::array::from_fn(|i| i as f64 * 0.1);
        let b = [0.5; FEATURE_COUNT];
        let e = shap_exact(&m, &x, &b).unwrap();
        let k = shap(&m, &x, &b, &ShapConfig { method: ShapMethod::Kernel, ..Default::default() }).unwrap();
        for i in 0..FEATURE_COUNT {
            assert!((e.phi[i] - k.phi[i]).abs() < 1e-9);
        }
    }
}

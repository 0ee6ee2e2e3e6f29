//! Forward pass against values computed by a separate NumPy implementation.

use triage_core::fusion::{forward, AttentionConfig, FusionParams, TextInput};
use triage_core::linalg::Matrix;
use triage_core::{Variant, FEATURE_COUNT};

fn wave(rows: usize, cols: usize, offset: f64) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |r, c| 0.8 * (0.7 * (r * cols + c) as f64 + offset).sin())
}

fn fixture(variant: Variant) -> FusionParams<f64> {
    let attention = AttentionConfig { feature_dim: 3, key_dim: 4, value_dim: 2 };
    let mut p = FusionParams::zeros(variant, 5, attention, None);
    p.feature_tokens = wave(FEATURE_COUNT, 3, 0.0);
    p.w_query = wave(5, 4, 1.0);
    p.w_key = wave(3, 4, 2.0);
    p.w_value = wave(3, 2, 3.0);
    p.head = wave(1, 7, 4.0).as_slice().to_vec();
    p.bias = -0.25;
    p
}

#[test]
fn matches_reference_implementation() {
    let x: [f64; FEATURE_COUNT] = std::array::from_fn(|i| 1.5 * (i as f64).cos());
    let e: Vec<f64> = (0..5).map(|j| 0.3 * j as f64 - 0.5).collect();
    let cases = [
        (Variant::All, 0.5808319721856477, 0.08784939970494919),
        (Variant::Reviewer, 0.4177610339912098, 0.3188189958639688),
        (Variant::Review, 0.6402666162708408, 0.12105544961968755),
    ];
    for (variant, p, a0) in cases {
        let params = fixture(variant);
        params.validate().unwrap();
        let text = params.text_embedding(&TextInput::Embedded(e.clone()));
        let out = forward(&text, &x, &params);
        approx::assert_abs_diff_eq!(out.probability, p, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(out.weights[0], a0, epsilon = 1e-12);
        assert_eq!(out.weights.len(), variant.included().len());
    }
}

#[test]
fn f32_tracks_f64() {
    let params = fixture(Variant::All);
    let x: [f64; FEATURE_COUNT] = std::array::from_fn(|i| 1.5 * (i as f64).cos());
    let e: Vec<f64> = (0..5).map(|j| 0.3 * j as f64 - 0.5).collect();
    let p64 = forward(&e, &x, &params).probability;
    let small = params.map(|v| v as f32);
    let p32 = forward(&e.iter().map(|&v| v as f32).collect::<Vec<_>>(), &x.map(|v| v as f32), &small).probability;
    assert!((p32 as f64 - p64).abs() < 1e-5);
}

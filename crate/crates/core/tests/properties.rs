use proptest::prelude::*;
use triage_core::encoder::{detokenize, hash_ngrams, tokenize, EncoderConfig};
use triage_core::explain::{lime_masks, shap_exact, FeatureModel};
use triage_core::features::{FeatureKind, FeatureVector, Standardizer};
use triage_core::respond::{split_sentences, truncate_sentences};
use triage_core::FEATURE_COUNT;

struct Linear([f64; FEATURE_COUNT]);

impl FeatureModel<f64> for Linear {
    fn included(&self) -> Vec<FeatureKind> {
        FeatureKind::ALL.to_vec()
    }
    fn predict_features(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        self.0.iter().zip(x).map(|(w, v)| w * v).sum::<f64>().tanh()
    }
}

fn features() -> impl Strategy<Value = [f64; FEATURE_COUNT]> {
    prop::array::uniform11(-3.0..3.0f64)
}

proptest! {
    #[test]
    fn detokenize_round_trips(text in "[a-z 很好服务。!,]{0,40}") {
        let tokens = tokenize(&text);
        let joined = detokenize(&tokens);
        prop_assert_eq!(tokenize(&joined), tokens);
    }

    #[test]
    fn buckets_stay_in_range(words in prop::collection::vec("[a-z]{1,6}", 0..12), buckets in 1usize..5000) {
        let cfg = EncoderConfig { hash_buckets: buckets, ..Default::default() };
        let idx = hash_ngrams(&words, &cfg);
        prop_assert!(idx.iter().all(|&i| i < buckets));
        let expected: usize = cfg.ngram_orders.iter().map(|&n| words.len().saturating_sub(n - 1)).sum();
        prop_assert_eq!(idx.len(), expected);
    }

    #[test]
    fn shapley_values_sum_to_prediction_gap(w in features(), x in features(), base in features()) {
        let model = Linear(w);
        let a = shap_exact(&model, &x, &base).unwrap();
        prop_assert!(a.efficiency_gap() < 1e-10);
        for j in 0..FEATURE_COUNT {
            if x[j] == base[j] {
                prop_assert!(a.phi[j].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lime_masks_start_with_everything_kept(d in 1usize..12, n in 10usize..300, seed in any::<u64>(), exhaustive in any::<bool>()) {
        let masks = lime_masks(d, n, seed, exhaustive);
        prop_assert!(masks[0].iter().all(|&b| b));
        prop_assert!(masks.iter().all(|m| m.len() == d));
        prop_assert!(masks.len() <= n.max(1 << d.min(20)));
    }

    #[test]
    fn truncation_respects_limit(parts in prop::collection::vec("[A-Za-z ]{1,12}[.!?]", 0..6), max in 1usize..4) {
        let text = parts.join(" ");
        let (cut, truncated) = truncate_sentences(&text, max);
        let n = split_sentences(&cut).len();
        prop_assert!(n <= max);
        prop_assert_eq!(truncated, split_sentences(&text).len() > max);
        prop_assert_eq!(truncate_sentences(&cut, max).0, cut);
    }

    #[test]
    fn standardized_training_features_are_centred(rows in prop::collection::vec(features(), 2..40)) {
        let vectors: Vec<FeatureVector> = rows.iter().map(|r| FeatureVector(*r)).collect();
        let s = Standardizer::fit(&vectors, "train").unwrap();
        let z: Vec<[f64; FEATURE_COUNT]> = vectors.iter().map(|v| s.apply(v)).collect();
        for j in 0..FEATURE_COUNT {
            let mean = z.iter().map(|r| r[j]).sum::<f64>() / z.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!(z.iter().all(|r| r[j].is_finite()));
        }
    }
}

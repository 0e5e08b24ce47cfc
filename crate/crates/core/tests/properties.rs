//! Property-based invariants across the embedding, confidence and ranking
//! layers.

use proptest::prelude::*;
use wordspot_core::confidence::{conf_entropy, conf_sigmoid, select_top_fraction};
use wordspot_core::estimator::AttributeVector;
use wordspot_core::image::{normalize, WordImage};
use wordspot_core::phoc::{phoc_of_string, PhocConfig};
use wordspot_core::spotting::rank_gallery;

fn word_strategy() -> impl Strategy<Value = String> {
    proptest::collection::vec(prop_oneof![prop::char::range('a', 'z'), prop::char::range('0', '9')], 1..12)
        .prop_map(|cs| cs.into_iter().collect())
}

fn unit_open() -> impl Strategy<Value = f32> {
    (0.01f32..0.99).prop_map(|v| v)
}

proptest! {
    #[test]
    fn phoc_is_deterministic_and_case_invariant(word in word_strategy()) {
        let cfg = PhocConfig::default();
        let a = phoc_of_string(&word, &cfg).unwrap();
        let b = phoc_of_string(&word.to_uppercase(), &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn level_one_block_is_the_character_set(word in word_strategy()) {
        let cfg = PhocConfig::default();
        let v = phoc_of_string(&word, &cfg).unwrap();
        let abc = cfg.alphabet.len();
        for (i, &c) in cfg.alphabet.symbols().iter().enumerate() {
            let expected = word.contains(c) as u8;
            prop_assert_eq!(v.bits()[i], expected, "symbol {}", c);
        }
        // every deeper-level bit implies the level-1 bit for that symbol
        for (pos, &bit) in v.bits().iter().enumerate().skip(abc) {
            if bit == 1 {
                prop_assert_eq!(v.bits()[pos % abc], 1);
            }
        }
    }

    #[test]
    fn ranking_is_invariant_to_positive_query_scale(
        query in proptest::collection::vec(0.01f64..1.0, 6),
        scale in 0.1f64..50.0,
        gallery in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 6), 1..8),
    ) {
        let base = rank_gallery("q", &query, &gallery).unwrap();
        let scaled_q: Vec<f64> = query.iter().map(|&v| v * scale).collect();
        let scaled = rank_gallery("q", &scaled_q, &gallery).unwrap();
        let order_a: Vec<usize> = base.items.iter().map(|&(id, _)| id).collect();
        let order_b: Vec<usize> = scaled.items.iter().map(|&(id, _)| id).collect();
        prop_assert_eq!(order_a, order_b);
    }

    #[test]
    fn entropy_is_symmetric_under_complement(values in proptest::collection::vec(unit_open(), 1..40)) {
        let a = conf_entropy(&AttributeVector::new(values.clone()));
        let complement: Vec<f32> = values.iter().map(|&v| 1.0 - v).collect();
        let b = conf_entropy(&AttributeVector::new(complement));
        prop_assert!((a.value - b.value).abs() < 1e-6);
        prop_assert!(a.value <= 0.0);
    }

    #[test]
    fn sigmoid_confidence_never_decreases_when_an_activation_grows(
        mut values in proptest::collection::vec(unit_open(), 1..40),
        idx in 0usize..40,
        bump in 0.0f32..0.4,
    ) {
        let before = conf_sigmoid(&AttributeVector::new(values.clone()));
        let i = idx % values.len();
        values[i] = (values[i] + bump).min(0.999).max(values[i]);
        let after = conf_sigmoid(&AttributeVector::new(values));
        prop_assert!(after.value >= before.value - 1e-6);
    }

    #[test]
    fn selection_size_is_always_the_ceiling(n in 1usize..60, frac in 0.01f64..1.0) {
        let items: Vec<_> = (0..n)
            .map(|i| (i, conf_sigmoid(&AttributeVector::new(vec![0.3 + 0.4 * (i as f32 / n as f32)]))))
            .collect();
        let picked = select_top_fraction(&items, frac).unwrap();
        prop_assert_eq!(picked.len(), (frac * n as f64).ceil() as usize);
        let mut unique = picked.clone();
        unique.sort_unstable();
        unique.dedup();
        prop_assert_eq!(unique.len(), picked.len());
    }

    #[test]
    fn normalize_always_fits_the_target_box(
        h in 1usize..40,
        w in 1usize..60,
        fill in 0.0f32..1.0,
    ) {
        let img = WordImage::new(vec![fill; h * w], h, w).unwrap();
        let out = normalize(&img, 32, 96, false);
        prop_assert_eq!(out.height(), 32);
        prop_assert_eq!(out.width(), 96);
        prop_assert!(out.pixels().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}

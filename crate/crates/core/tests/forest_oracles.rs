use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sickle_core::forest::*;

mod common;
use common::{direct_gain, fixture_forest, forest_fixture, random_partition, rewalk_predict};

#[test]
fn predictions_match_rewalk_of_serialized_trees() {
    let forest = fixture_forest();
    let json: serde_json::Value = serde_json::from_str(&forest.to_json()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-0.1..1.1)).collect();
        assert_eq!(
            forest.predict(&x).unwrap(),
            rewalk_predict(&json, &x),
            "at {x:?}"
        );
    }
}

#[test]
fn gain_matches_definition_on_random_partitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let (parent, children) = random_partition(&mut rng);
        let ours = information_gain(&parent, &children).unwrap();
        let oracle = direct_gain(&parent, &children);
        assert!(
            (ours - oracle).abs() <= 1e-12,
            "{parent:?} {children:?}: {ours} vs {oracle}"
        );
    }
}

#[test]
fn fixture_is_learned() {
    let (rows, labels) = forest_fixture();
    let forest = fixture_forest();
    let correct = rows
        .iter()
        .zip(&labels)
        .filter(|(x, &k)| forest.predict(x).unwrap() == k)
        .count();
    // about 10% of labels are noise
    assert!(correct >= 170, "{correct}/200");
}

#[test]
fn model_file_roundtrip_preserves_predictions() {
    let forest = fixture_forest();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("forest.json");
    forest.save(&path).unwrap();
    let back = Forest::load(&path).unwrap();
    assert_eq!(back, forest);
    assert_eq!(back.to_json(), forest.to_json());
}

fn dataset_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (2usize..=4, 8usize..=40).prop_flat_map(|(nf, n)| {
        (
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, nf), n),
            prop::collection::vec(0usize..3, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forest_invariants((rows, labels) in dataset_strategy(), depth in 1usize..=4, seed in 0u64..50) {
        prop_assume!(labels.iter().any(|&l| l != labels[0]));
        let data = Dataset::new(&rows, &labels, 3).unwrap();
        let config = ForestConfig { tree_count: 5, max_depth: depth, seed, ..Default::default() };
        let a = train_forest(&data, &config).unwrap();
        let b = train_forest(&data, &config).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
        for t in a.trees() {
            prop_assert!(t.depth() <= depth);
        }
        for x in &rows {
            let p = a.predict_proba(x).unwrap();
            let s: f64 = p.probabilities().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gain_is_bounded_by_parent_entropy(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (parent, children) = random_partition(&mut rng);
        let g = information_gain(&parent, &children).unwrap();
        prop_assert!(g >= 0.0);
        prop_assert!(g <= entropy(&parent).unwrap() + 1e-12);
    }
}

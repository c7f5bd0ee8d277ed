//! Random forest over fixed-length feature vectors with axis-aligned
//! threshold splits chosen by Shannon information gain.
//!
//! The same learner backs pixel segmentation (3 pixel classes, 441 patch
//! features) and sample classification (3 sample classes, histogram bins).

mod data;
mod split;
mod tree;

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use data::{Dataset, Samples};
pub use split::{
    best_split, best_split_with_min_leaf, entropy, information_gain, SplitCandidate, MIN_GAIN,
};
pub use tree::{grow, GrowParams, TreeNode};

use crate::error::{Error, Result};
use crate::seed;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    pub tree_count: usize,
    pub max_depth: usize,
    /// `None` resolves to ⌈√N⌉ for N features.
    pub features_per_node: Option<usize>,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            tree_count: 50,
            max_depth: 5,
            features_per_node: None,
            min_samples_leaf: 1,
            bootstrap: true,
            seed: 0,
        }
    }
}

/// ⌈√n⌉ computed in integers.
pub fn ceil_sqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}

impl ForestConfig {
    pub fn resolved_features_per_node(&self, feature_count: usize) -> usize {
        self.features_per_node
            .unwrap_or_else(|| ceil_sqrt(feature_count))
    }

    fn validate(&self, feature_count: usize) -> Result<()> {
        if self.tree_count == 0 {
            return Err(Error::InvalidArgument(
                "tree_count must be at least 1".into(),
            ));
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidArgument(
                "max_depth must be at least 1".into(),
            ));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidArgument(
                "min_samples_leaf must be at least 1".into(),
            ));
        }
        let m = self.resolved_features_per_node(feature_count);
        if m == 0 || m > feature_count {
            return Err(Error::InvalidArgument(format!(
                "features_per_node {m} outside 1..={feature_count}"
            )));
        }
        Ok(())
    }
}

/// Class probabilities summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Trained ensemble. Immutable; safe to share across threads for prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Forest {
    format_version: u32,
    kind: String,
    class_count: usize,
    feature_count: usize,
    config: ForestConfig,
    trees: Vec<TreeNode>,
}

/// Trains one tree per `config.tree_count`. Tree `t` uses the random stream
/// derived from `(config.seed, t)`; with bootstrap it first draws a resample
/// of the dataset's size with replacement from that stream.
pub fn train_forest<S: Samples + ?Sized>(samples: &S, config: &ForestConfig) -> Result<Forest> {
    let n = samples.len();
    let feature_count = samples.feature_count();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "forest training needs at least two samples".into(),
        ));
    }
    config.validate(feature_count)?;
    let mut present = vec![false; samples.class_count()];
    for i in 0..n {
        present[samples.label(i)] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::SingleClass);
    }
    let params = GrowParams {
        max_depth: config.max_depth,
        features_per_node: config.resolved_features_per_node(feature_count),
        min_samples_leaf: config.min_samples_leaf,
    };
    let trees = (0..config.tree_count)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::derive(config.seed, &[t as u64]));
            let indices: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow(samples, &indices, &params, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        format_version: MODEL_FORMAT_VERSION,
        kind: "forest".into(),
        class_count: samples.class_count(),
        feature_count,
        config: config.clone(),
        trees,
    })
}

impl Forest {
    /// Assembles a forest from explicit trees (used by tests and tooling).
    pub fn from_trees(
        class_count: usize,
        feature_count: usize,
        config: ForestConfig,
        trees: Vec<TreeNode>,
    ) -> Result<Self> {
        let forest = Forest {
            format_version: MODEL_FORMAT_VERSION,
            kind: "forest".into(),
            class_count,
            feature_count,
            config,
            trees,
        };
        forest.validate()?;
        Ok(forest)
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    /// Mean of the trees' normalized leaf histograms, reading features lazily.
    pub fn predict_proba_with(&self, value: impl Fn(usize) -> f64) -> ClassDistribution {
        let mut acc = vec![0.0; self.class_count];
        for tree in &self.trees {
            let leaf = tree.leaf_for(&value);
            let total: u64 = leaf.iter().sum();
            let total = total as f64;
            for (a, &c) in acc.iter_mut().zip(leaf) {
                *a += c as f64 / total;
            }
        }
        let t = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= t);
        ClassDistribution(acc)
    }

    pub fn predict_with(&self, value: impl Fn(usize) -> f64) -> usize {
        self.predict_proba_with(value).argmax()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_count {
            return Err(Error::dims(
                format!("{} features", self.feature_count),
                format!("{} features", x.len()),
            ));
        }
        Ok(())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<ClassDistribution> {
        self.check_len(x)?;
        Ok(self.predict_proba_with(|f| x[f]))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.predict_proba(x)?.argmax())
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != "forest" {
            return Err(Error::MalformedModel(format!(
                "kind {:?} is not \"forest\"",
                self.kind
            )));
        }
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::MalformedModel(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if self.class_count == 0 || self.feature_count == 0 {
            return Err(Error::MalformedModel(
                "class_count and feature_count must be positive".into(),
            ));
        }
        if self.trees.is_empty() {
            return Err(Error::MalformedModel("forest has no trees".into()));
        }
        self.trees
            .iter()
            .try_for_each(|t| t.validate(self.class_count, self.feature_count))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let forest: Forest =
            serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
        forest.validate()?;
        Ok(forest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Serializes to the JSON model format and parses it back.
pub fn model_roundtrip(forest: &Forest) -> Result<Forest> {
    Forest::from_json(&forest.to_json())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(counts: &[u64]) -> TreeNode {
        TreeNode::Leaf(counts.to_vec())
    }

    fn stump(feature: usize, threshold: f64, l: &[u64], r: &[u64]) -> TreeNode {
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(leaf(l)),
            right: Box::new(leaf(r)),
        }
    }

    fn line() -> Dataset {
        let rows: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|&v| vec![v]).collect();
        Dataset::new(&rows, &[0, 0, 1, 1], 2).unwrap()
    }

    #[test]
    fn ceil_sqrt_values() {
        assert_eq!(ceil_sqrt(441), 21);
        assert_eq!(ceil_sqrt(20), 5);
        assert_eq!(ceil_sqrt(5), 3);
        assert_eq!(ceil_sqrt(1), 1);
        assert_eq!(ceil_sqrt(16), 4);
    }

    #[test]
    fn depth_one_is_a_leaf() {
        let d = line();
        let params = GrowParams {
            max_depth: 1,
            features_per_node: 1,
            min_samples_leaf: 1,
        };
        let t = grow(&d, &[0, 1, 2, 3], &params, &mut seed::rng(0)).unwrap();
        assert_eq!(t, leaf(&[2, 2]));
    }

    #[test]
    fn separable_line_gives_one_split() {
        let d = line();
        let params = GrowParams {
            max_depth: 2,
            features_per_node: 1,
            min_samples_leaf: 1,
        };
        let t = grow(&d, &[0, 1, 2, 3], &params, &mut seed::rng(0)).unwrap();
        assert_eq!(t, stump(0, 2.5, &[2, 0], &[0, 2]));
    }

    #[test]
    fn growth_is_seeded() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i % 7) as f64, (i % 5) as f64, (i * 3 % 11) as f64])
            .collect();
        let labels: Vec<usize> = (0..40).map(|i| (i % 3 == 0) as usize).collect();
        let d = Dataset::new(&rows, &labels, 2).unwrap();
        let params = GrowParams {
            max_depth: 6,
            features_per_node: 1,
            min_samples_leaf: 1,
        };
        let idx: Vec<usize> = (0..40).collect();
        let a = grow(&d, &idx, &params, &mut seed::rng(3)).unwrap();
        let b = grow(&d, &idx, &params, &mut seed::rng(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.depth() <= 6);
    }

    #[test]
    fn mean_of_two_trees() {
        let f = Forest::from_trees(
            3,
            1,
            ForestConfig::default(),
            vec![leaf(&[4, 0, 0]), leaf(&[0, 2, 0])],
        )
        .unwrap();
        let p = f.predict_proba(&[0.0]).unwrap();
        assert_eq!(p.probabilities(), &[0.5, 0.5, 0.0]);
        assert_eq!(p.argmax(), 0);
        assert_eq!(f.predict(&[0.0]).unwrap(), 0);
    }

    #[test]
    fn identical_trees_match_single_tree() {
        let t = stump(0, 0.5, &[3, 1, 0], &[0, 1, 5]);
        let one = Forest::from_trees(3, 1, ForestConfig::default(), vec![t.clone()]).unwrap();
        let many = Forest::from_trees(3, 1, ForestConfig::default(), vec![t; 7]).unwrap();
        for x in [0.0, 1.0] {
            let a = one.predict_proba(&[x]).unwrap();
            let b = many.predict_proba(&[x]).unwrap();
            for (p, q) in a.probabilities().iter().zip(b.probabilities()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_tree_forest_matches_its_tree() {
        let d = line();
        let cfg = ForestConfig {
            tree_count: 1,
            max_depth: 3,
            bootstrap: false,
            ..Default::default()
        };
        let f = train_forest(&d, &cfg).unwrap();
        for x in [0.0, 1.5, 2.5, 3.0, 9.0] {
            let leaf = f.trees()[0].leaf_for(|_| x);
            let total: u64 = leaf.iter().sum();
            let expected: Vec<f64> = leaf.iter().map(|&c| c as f64 / total as f64).collect();
            assert_eq!(
                f.predict_proba(&[x]).unwrap().probabilities(),
                expected.as_slice()
            );
        }
    }

    #[test]
    fn pure_class_two_region() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let labels = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2];
        let d = Dataset::new(&rows, &labels, 3).unwrap();
        let cfg = ForestConfig {
            tree_count: 5,
            max_depth: 4,
            bootstrap: false,
            ..Default::default()
        };
        let f = train_forest(&d, &cfg).unwrap();
        assert_eq!(f.predict(&[8.5]).unwrap(), 2);
    }

    #[test]
    fn training_errors() {
        let rows = vec![vec![1.0], vec![2.0]];
        let d = Dataset::new(&rows, &[1, 1], 2).unwrap();
        assert!(matches!(
            train_forest(&d, &ForestConfig::default()),
            Err(Error::SingleClass)
        ));
        let d = Dataset::new(&rows, &[0, 1], 2).unwrap();
        let bad = ForestConfig {
            features_per_node: Some(2),
            ..Default::default()
        };
        assert!(train_forest(&d, &bad).is_err());
        assert!(f_err(ForestConfig {
            tree_count: 0,
            ..Default::default()
        }));
    }

    fn f_err(cfg: ForestConfig) -> bool {
        let d = line();
        train_forest(&d, &cfg).is_err()
    }

    #[test]
    fn different_seeds_differ() {
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                vec![
                    (i * 7 % 13) as f64,
                    (i * 5 % 17) as f64,
                    (i * 11 % 19) as f64,
                    i as f64,
                ]
            })
            .collect();
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let d = Dataset::new(&rows, &labels, 3).unwrap();
        let a = train_forest(
            &d,
            &ForestConfig {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let b = train_forest(
            &d,
            &ForestConfig {
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_ne!(a.to_json(), b.to_json());
        let a2 = train_forest(
            &d,
            &ForestConfig {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.to_json(), a2.to_json());
    }

    #[test]
    fn json_layout() {
        let f = Forest::from_trees(
            2,
            1,
            ForestConfig::default(),
            vec![stump(0, 2.5, &[2, 0], &[0, 2])],
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&f.to_json()).unwrap();
        assert_eq!(v["kind"], "forest");
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["class_count"], 2);
        assert_eq!(v["feature_count"], 1);
        assert_eq!(v["config"]["tree_count"], 50);
        assert_eq!(v["trees"][0]["split"]["f"], 0);
        assert_eq!(v["trees"][0]["split"]["theta"], 2.5);
        assert_eq!(
            v["trees"][0]["split"]["left"]["leaf"],
            serde_json::json!([2, 0])
        );
    }

    #[test]
    fn roundtrip_and_load_errors() {
        let d = line();
        let f = train_forest(
            &d,
            &ForestConfig {
                tree_count: 4,
                ..Default::default()
            },
        )
        .unwrap();
        let g = model_roundtrip(&f).unwrap();
        assert_eq!(f, g);
        let json = f.to_json();
        assert!(matches!(
            Forest::from_json(&json[..json.len() / 2]),
            Err(Error::MalformedModel(_))
        ));
        assert!(matches!(
            g.predict(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let wrong_kind = json.replace("\"kind\":\"forest\"", "\"kind\":\"svm_ovo\"");
        assert!(Forest::from_json(&wrong_kind).is_err());
    }

    #[test]
    fn shortest_roundtrip_thresholds() {
        let t = stump(0, 0.1 + 0.2, &[1, 0], &[0, 1]);
        let f = Forest::from_trees(2, 1, ForestConfig::default(), vec![t]).unwrap();
        let g = model_roundtrip(&f).unwrap();
        assert_eq!(f, g);
        assert!(f.to_json().contains("0.30000000000000004"));
    }
}

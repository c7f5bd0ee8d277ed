//! Run configuration: defaults, then a JSON file, then dotted overrides such
//! as `svm.gamma=2`. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classifier::{ClassifierConfig, ClassifierKind, DescriptorKind, FeatureConfig};
use crate::error::{Error, Result};
use crate::forest::ForestConfig;
use crate::geometry::{DEFAULT_MIN_REGION_AREA, DEFAULT_SOLIDITY_THRESHOLD};
use crate::seed;
use crate::segmenter::SegmenterConfig;
use crate::svm::SvmConfig;
use crate::synthgen::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            model_dir: "models".into(),
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmenterParams {
    pub trees: usize,
    pub depth: usize,
    pub patch_side: usize,
    /// Patches sampled per class from each training image.
    pub per_class: usize,
    /// `None` means ⌈√(side²)⌉.
    pub features_per_node: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for SegmenterParams {
    fn default() -> Self {
        Self {
            trees: 50,
            depth: 5,
            patch_side: 21,
            per_class: 2000,
            features_per_node: None,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RfParams {
    pub trees: usize,
    pub depth: usize,
    /// `None` means ⌈√bins⌉.
    pub features_per_node: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for RfParams {
    fn default() -> Self {
        Self {
            trees: 100,
            depth: 3,
            features_per_node: None,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmParams {
    #[serde(rename = "C", alias = "c")]
    pub c: f64,
    pub gamma: f64,
    pub tol: f64,
    pub max_passes: usize,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        let d = SvmConfig::default();
        Self {
            c: d.c,
            gamma: d.gamma,
            tol: d.tol,
            max_passes: d.max_passes,
            max_iter: d.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureParams {
    pub kind: DescriptorKind,
    pub bins: usize,
    pub range: [f64; 2],
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            kind: DescriptorKind::Roundness,
            bins: 20,
            range: [0.0, 1.1],
        }
    }
}

/// Every tunable of a run. `seed` drives segmenter and classifier training;
/// `synth.seed` drives corpus generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub synth: SynthConfig,
    pub segmenter: SegmenterParams,
    pub classifier: ClassifierKind,
    pub rf: RfParams,
    pub svm: SvmParams,
    pub features: FeatureParams,
    pub solidity_threshold: f64,
    pub min_region_area: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            paths: PathsConfig::default(),
            synth: SynthConfig::default(),
            segmenter: SegmenterParams::default(),
            classifier: ClassifierKind::Rf,
            rf: RfParams::default(),
            svm: SvmParams::default(),
            features: FeatureParams::default(),
            solidity_threshold: DEFAULT_SOLIDITY_THRESHOLD,
            min_region_area: DEFAULT_MIN_REGION_AREA,
        }
    }
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("{name} must be at least 1")));
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.synth
            .validate()
            .map_err(|e| Error::Config(format!("synth: {e}")))?;
        let s = &self.segmenter;
        positive("segmenter.trees", s.trees)?;
        positive("segmenter.depth", s.depth)?;
        positive("segmenter.per_class", s.per_class)?;
        positive("segmenter.min_samples_leaf", s.min_samples_leaf)?;
        if s.patch_side % 2 == 0 || s.patch_side > 101 {
            return Err(Error::Config(format!(
                "segmenter.patch_side {} must be odd and at most 101",
                s.patch_side
            )));
        }
        if let Some(m) = s.features_per_node {
            if m == 0 || m > s.patch_side * s.patch_side {
                return Err(Error::Config(format!(
                    "segmenter.features_per_node {m} outside 1..=side²"
                )));
            }
        }
        positive("rf.trees", self.rf.trees)?;
        positive("rf.depth", self.rf.depth)?;
        positive("rf.min_samples_leaf", self.rf.min_samples_leaf)?;
        if let Some(m) = self.rf.features_per_node {
            if m == 0 || m > self.features.bins {
                return Err(Error::Config(format!(
                    "rf.features_per_node {m} outside 1..=bins"
                )));
            }
        }
        self.svm_config()
            .validate()
            .map_err(|e| Error::Config(format!("svm: {e}")))?;
        self.feature_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn segmenter_config(&self) -> SegmenterConfig {
        let s = &self.segmenter;
        SegmenterConfig {
            forest: ForestConfig {
                tree_count: s.trees,
                max_depth: s.depth,
                features_per_node: s.features_per_node,
                min_samples_leaf: s.min_samples_leaf,
                bootstrap: true,
                seed: seed::derive(self.seed, &[1]),
            },
            patch_side: s.patch_side,
            per_class: s.per_class,
            seed: seed::derive(self.seed, &[2]),
        }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            kind: self.features.kind,
            bins: self.features.bins,
            range: self.features.range,
            solidity_threshold: self.solidity_threshold,
            min_region_area: self.min_region_area,
        }
    }

    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            c: self.svm.c,
            gamma: self.svm.gamma,
            tol: self.svm.tol,
            max_passes: self.svm.max_passes,
            max_iter: self.svm.max_iter,
            seed: seed::derive(self.seed, &[4]),
        }
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        ClassifierConfig {
            kind: self.classifier,
            rf: ForestConfig {
                tree_count: self.rf.trees,
                max_depth: self.rf.depth,
                features_per_node: self.rf.features_per_node,
                min_samples_leaf: self.rf.min_samples_leaf,
                bootstrap: true,
                seed: seed::derive(self.seed, &[3]),
            },
            svm: self.svm_config(),
        }
    }

    /// Resolves defaults, then `file` (if any), then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match file {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
            None => None,
        };
        Self::resolve_str(text.as_deref(), overrides)
    }

    /// As [`RunConfig::resolve`] with the file contents given directly. An
    /// empty or whitespace-only file means no settings.
    pub fn resolve_str(file: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut value = serde_json::to_value(Self::default()).expect("config serializes");
        if let Some(text) = file.filter(|t| !t.trim().is_empty()) {
            let patch: Value = serde_json::from_str(text)
                .map_err(|e| Error::Config(format!("config file: {e}")))?;
            if !patch.is_object() {
                return Err(Error::Config("config file must hold a JSON object".into()));
            }
            merge(&mut value, patch, "")?;
        }
        for (key, raw) in overrides {
            set_path(&mut value, key, parse_scalar(raw))?;
        }
        let config: Self =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()))
}

fn merge(base: &mut Value, patch: Value, prefix: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                let slot = b
                    .get_mut(&k)
                    .ok_or_else(|| Error::Config(format!("unknown key {key:?}")))?;
                merge(slot, v, &key)?;
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    for part in key.split('.') {
        node = node
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| Error::Config(format!("unknown key {key:?}")))?;
    }
    *node = value;
    Ok(())
}

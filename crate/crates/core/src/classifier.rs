//! Sample-level classification from descriptor histograms, evaluation
//! metrics, and two-concentration subject fusion.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{train_forest, Dataset, Forest, ForestConfig};
use crate::geometry::{
    build_histogram, measure_cells, DEFAULT_MIN_REGION_AREA, DEFAULT_SOLIDITY_THRESHOLD,
};
use crate::imaging::{GrayImage, LabelMask};
use crate::segmenter::{segment_image, SegmenterModel};
use crate::svm::{svm_predict, train_ovo, MulticlassSvmModel, SvmConfig};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SampleLabel {
    #[serde(rename = "diseased")]
    Sickled = 0,
    #[serde(rename = "trait")]
    Trait = 1,
    #[serde(rename = "normal")]
    Normal = 2,
}

impl SampleLabel {
    pub const ALL: [SampleLabel; 3] = [
        SampleLabel::Sickled,
        SampleLabel::Trait,
        SampleLabel::Normal,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SampleLabel::Sickled => "diseased",
            SampleLabel::Trait => "trait",
            SampleLabel::Normal => "normal",
        }
    }

    pub fn is_abnormal(self) -> bool {
        self != SampleLabel::Normal
    }
}

impl fmt::Display for SampleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SampleLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown label {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorKind {
    Roundness,
    FormFactor,
}

/// How a segmented sample is turned into a feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub kind: DescriptorKind,
    pub bins: usize,
    pub range: [f64; 2],
    pub solidity_threshold: f64,
    pub min_region_area: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            kind: DescriptorKind::Roundness,
            bins: 20,
            range: [0.0, 1.1],
            solidity_threshold: DEFAULT_SOLIDITY_THRESHOLD,
            min_region_area: DEFAULT_MIN_REGION_AREA,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 || self.bins > 1000 {
            return Err(Error::InvalidArgument(format!(
                "bins {} outside 1..=1000",
                self.bins
            )));
        }
        if !(self.range[0].is_finite()
            && self.range[1].is_finite()
            && self.range[0] < self.range[1])
        {
            return Err(Error::InvalidArgument(format!(
                "histogram range {:?} is empty",
                self.range
            )));
        }
        if !(0.0..=1.0).contains(&self.solidity_threshold) {
            return Err(Error::InvalidArgument(format!(
                "solidity threshold {} outside [0, 1]",
                self.solidity_threshold
            )));
        }
        if self.min_region_area == 0 {
            return Err(Error::InvalidArgument(
                "min_region_area must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Normalized descriptor histogram of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFeature {
    pub kind: DescriptorKind,
    pub histogram: Vec<f64>,
    pub cell_count: usize,
}

/// Histogram of the chosen descriptor over cells with solidity at or above
/// the threshold.
pub fn feature_from_mask(mask: &LabelMask, config: &FeatureConfig) -> Result<SampleFeature> {
    config.validate()?;
    let values: Vec<f64> = measure_cells(mask, config.min_region_area)
        .iter()
        .filter(|c| c.descriptors.solidity >= config.solidity_threshold)
        .map(|c| match config.kind {
            DescriptorKind::Roundness => c.descriptors.roundness,
            DescriptorKind::FormFactor => c.descriptors.form_factor,
        })
        .collect();
    let histogram = build_histogram(&values, config.bins, config.range[0], config.range[1])?;
    Ok(SampleFeature {
        kind: config.kind,
        histogram,
        cell_count: values.len(),
    })
}

pub fn extract_sample_feature(
    image: &GrayImage,
    seg: &SegmenterModel,
    config: &FeatureConfig,
) -> Result<SampleFeature> {
    feature_from_mask(&segment_image(seg, image)?, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Rf,
    Svm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub rf: ForestConfig,
    pub svm: SvmConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Rf,
            rf: ForestConfig {
                tree_count: 100,
                max_depth: 3,
                ..ForestConfig::default()
            },
            svm: SvmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierBackend {
    Forest(Forest),
    Svm(MulticlassSvmModel),
}

/// A trained sample classifier together with the feature settings it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub feature: FeatureConfig,
    pub backend: ClassifierBackend,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifierFile {
    format_version: u32,
    kind: String,
    feature: FeatureConfig,
    backend: ClassifierKind,
    model: serde_json::Value,
}

impl ClassifierModel {
    pub fn kind(&self) -> ClassifierKind {
        match self.backend {
            ClassifierBackend::Forest(_) => ClassifierKind::Rf,
            ClassifierBackend::Svm(_) => ClassifierKind::Svm,
        }
    }

    pub fn predict(&self, feature: &SampleFeature) -> Result<SampleLabel> {
        if feature.kind != self.feature.kind || feature.histogram.len() != self.feature.bins {
            return Err(Error::InvalidArgument(format!(
                "feature {:?}/{} bins does not match model {:?}/{} bins",
                feature.kind,
                feature.histogram.len(),
                self.feature.kind,
                self.feature.bins
            )));
        }
        let k = match &self.backend {
            ClassifierBackend::Forest(f) => f.predict(&feature.histogram)?,
            ClassifierBackend::Svm(m) => svm_predict(m, &feature.histogram)?,
        };
        SampleLabel::from_index(k)
            .ok_or_else(|| Error::MalformedModel(format!("class {k} out of range")))
    }

    pub fn to_json(&self) -> String {
        let (backend, model) = match &self.backend {
            ClassifierBackend::Forest(f) => (ClassifierKind::Rf, f.to_json()),
            ClassifierBackend::Svm(m) => (ClassifierKind::Svm, m.to_json()),
        };
        let file = ClassifierFile {
            format_version: MODEL_FORMAT_VERSION,
            kind: "classifier".into(),
            feature: self.feature.clone(),
            backend,
            model: serde_json::from_str(&model).expect("inner model is JSON"),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ClassifierFile =
            serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION || file.kind != "classifier" {
            return Err(Error::MalformedModel("not a classifier model".into()));
        }
        file.feature.validate()?;
        let inner = file.model.to_string();
        let backend = match file.backend {
            ClassifierKind::Rf => ClassifierBackend::Forest(Forest::from_json(&inner)?),
            ClassifierKind::Svm => ClassifierBackend::Svm(MulticlassSvmModel::from_json(&inner)?),
        };
        Ok(Self {
            feature: file.feature,
            backend,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Trains on histogram vectors. All features must share the kind and bin
/// count of `feature`.
pub fn train_classifier(
    samples: &[(SampleFeature, SampleLabel)],
    feature: &FeatureConfig,
    config: &ClassifierConfig,
) -> Result<ClassifierModel> {
    feature.validate()?;
    if let Some((f, _)) = samples
        .iter()
        .find(|(f, _)| f.kind != feature.kind || f.histogram.len() != feature.bins)
    {
        return Err(Error::InvalidArgument(format!(
            "mixed features: {:?} with {} bins among {:?} with {} bins",
            f.kind,
            f.histogram.len(),
            feature.kind,
            feature.bins
        )));
    }
    let mut present = [false; 3];
    samples.iter().for_each(|(_, l)| present[l.index()] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::SingleClass);
    }
    let rows: Vec<Vec<f64>> = samples.iter().map(|(f, _)| f.histogram.clone()).collect();
    let labels: Vec<usize> = samples.iter().map(|(_, l)| l.index()).collect();
    let backend = match config.kind {
        ClassifierKind::Rf => {
            let data = Dataset::new(&rows, &labels, 3)?;
            ClassifierBackend::Forest(train_forest(&data, &config.rf)?)
        }
        ClassifierKind::Svm => ClassifierBackend::Svm(train_ovo(&rows, &labels, 3, &config.svm)?),
    };
    Ok(ClassifierModel {
        feature: feature.clone(),
        backend,
    })
}

pub fn classify_sample(
    model: &ClassifierModel,
    image: &GrayImage,
    seg: &SegmenterModel,
) -> Result<SampleLabel> {
    model.predict(&extract_sample_feature(image, seg, &model.feature)?)
}

/// Confusion matrix (rows truth, columns prediction, in label order) and the
/// scores derived from it. Sensitivity and specificity treat Sickled and
/// Trait as positive and Normal as negative; they are `None` when the truth
/// has no positives or no negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: [[usize; 3]; 3],
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub rejected_count: usize,
}

impl Metrics {
    /// Builds metrics from `(truth, prediction)` pairs; `None` predictions
    /// are unreadable samples and only counted as rejected.
    pub fn from_outcomes(outcomes: &[(SampleLabel, Option<SampleLabel>)]) -> Self {
        let mut confusion = [[0usize; 3]; 3];
        let mut rejected_count = 0;
        for &(truth, pred) in outcomes {
            match pred {
                Some(p) => confusion[truth.index()][p.index()] += 1,
                None => rejected_count += 1,
            }
        }
        Self::from_confusion(confusion, rejected_count)
    }

    pub fn from_confusion(confusion: [[usize; 3]; 3], rejected_count: usize) -> Self {
        let total: usize = confusion.iter().flatten().sum();
        let trace: usize = (0..3).map(|k| confusion[k][k]).sum();
        let (mut tp, mut fn_, mut tn, mut fp) = (0, 0, 0, 0);
        for truth in SampleLabel::ALL {
            for pred in SampleLabel::ALL {
                let n = confusion[truth.index()][pred.index()];
                match (truth.is_abnormal(), pred.is_abnormal()) {
                    (true, true) => tp += n,
                    (true, false) => fn_ += n,
                    (false, false) => tn += n,
                    (false, true) => fp += n,
                }
            }
        }
        let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
        Self {
            confusion,
            accuracy: if total > 0 {
                trace as f64 / total as f64
            } else {
                0.0
            },
            sensitivity: ratio(tp, fn_),
            specificity: ratio(tn, fp),
            rejected_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub path: String,
    pub truth: SampleLabel,
    /// `None` when the sample was unreadable.
    pub predicted: Option<SampleLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(flatten)]
    pub metrics: Metrics,
    pub per_sample: Vec<SampleOutcome>,
}

/// Predicts every sample from its precomputed feature. A feature error marks
/// the sample as rejected; any other error aborts.
pub fn evaluate_features(
    model: &ClassifierModel,
    samples: &[(String, SampleLabel, Result<SampleFeature>)],
) -> Result<EvaluationReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let per_sample = samples
        .iter()
        .map(|(path, truth, feature)| {
            let predicted = match feature {
                Ok(f) => Some(model.predict(f)?),
                Err(Error::NoMeasurableCells) => None,
                Err(e) => return Err(Error::InvalidArgument(format!("{path}: {e}"))),
            };
            Ok(SampleOutcome {
                path: path.clone(),
                truth: *truth,
                predicted,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let outcomes: Vec<_> = per_sample.iter().map(|s| (s.truth, s.predicted)).collect();
    Ok(EvaluationReport {
        metrics: Metrics::from_outcomes(&outcomes),
        per_sample,
    })
}

/// Segments and classifies each image, in parallel.
pub fn evaluate(
    model: &ClassifierModel,
    seg: &SegmenterModel,
    test: &[(String, GrayImage, SampleLabel)],
) -> Result<EvaluationReport> {
    let features: Vec<_> = test
        .par_iter()
        .map(|(path, image, truth)| {
            (
                path.clone(),
                *truth,
                extract_sample_feature(image, seg, &model.feature),
            )
        })
        .collect();
    evaluate_features(model, &features)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SubjectDecision {
    Normal,
    Trait,
    Diseased,
}

/// Combines the prediction at 0.1 (`p1`) and at 0.3 (`p2`). Sickling at the
/// low concentration means disease. Trait at the low concentration means
/// disease if the high one is abnormal too, and trait otherwise. A normal
/// low-concentration sample is trait when the high one is abnormal.
pub fn fuse_decisions(p1: SampleLabel, p2: SampleLabel) -> SubjectDecision {
    use SampleLabel::*;
    match (p1, p2) {
        (Sickled, _) => SubjectDecision::Diseased,
        (Trait, Sickled | Trait) => SubjectDecision::Diseased,
        (Trait, Normal) => SubjectDecision::Trait,
        (Normal, Sickled | Trait) => SubjectDecision::Trait,
        (Normal, Normal) => SubjectDecision::Normal,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub subject_id: String,
    pub p1: SampleLabel,
    pub p2: SampleLabel,
    pub decision: SubjectDecision,
}

/// Classifies both samples of a subject and fuses the two labels.
pub fn screen_subject(
    subject_id: &str,
    low: &GrayImage,
    high: &GrayImage,
    model: &ClassifierModel,
    seg: &SegmenterModel,
) -> Result<ScreeningReport> {
    let p1 = classify_sample(model, low, seg)?;
    let p2 = classify_sample(model, high, seg)?;
    Ok(ScreeningReport {
        subject_id: subject_id.to_owned(),
        p1,
        p2,
        decision: fuse_decisions(p1, p2),
    })
}

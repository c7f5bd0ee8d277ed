//! Corpus-level building blocks and the full synthetic experiment: train the
//! segmenter on the train split, segment everything, fit the sample
//! classifiers, score the test split and screen fresh subject pairs.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::classifier::{
    evaluate_features, feature_from_mask, fuse_decisions, train_classifier, ClassifierConfig,
    ClassifierKind, ClassifierModel, DescriptorKind, EvaluationReport, FeatureConfig,
    SampleFeature, SampleLabel, SubjectDecision,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::imaging::{
    mask_path_for, read_manifest, read_pgm, resolve, Concentration, GrayImage, LabelMask,
    ManifestRow, Split,
};
use crate::seed;
use crate::segmenter::{
    pixel_accuracy, segment_image, train_segmenter, SegmenterModel, SegmenterTraining,
};
use crate::svm::SvmConfig;
use crate::synthgen::synth_image;

pub const DEFAULT_GRID_C: [f64; 5] = [1.0, 10.0, 100.0, 250.0, 1000.0];
pub const DEFAULT_GRID_GAMMA: [f64; 4] = [0.1, 0.5, 1.0, 2.0];

/// A manifest row with its image and, when requested, its truth mask.
#[derive(Debug, Clone)]
pub struct CorpusSample {
    pub row: ManifestRow,
    pub image: GrayImage,
    pub truth: Option<LabelMask>,
}

pub fn load_corpus(manifest: &Path, with_masks: bool) -> Result<Vec<CorpusSample>> {
    read_manifest(manifest)?
        .into_par_iter()
        .map(|row| {
            let image = read_pgm(resolve(manifest, &row.path))?;
            let truth = if with_masks {
                Some(LabelMask::read(resolve(
                    manifest,
                    &mask_path_for(&row.path),
                ))?)
            } else {
                None
            };
            Ok(CorpusSample { row, image, truth })
        })
        .collect()
}

fn truth_of(s: &CorpusSample) -> Result<&LabelMask> {
    s.truth
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("{}: truth mask not loaded", s.row.path)))
}

/// Trains the segmenter on every train-split sample.
pub fn train_segmenter_on_corpus(
    samples: &[CorpusSample],
    config: &RunConfig,
) -> Result<SegmenterTraining> {
    let pairs = samples
        .iter()
        .filter(|s| s.row.split == Split::Train)
        .map(|s| Ok((s.image.clone(), truth_of(s)?.clone())))
        .collect::<Result<Vec<_>>>()?;
    train_segmenter(&pairs, &config.segmenter_config())
}

/// Segments every sample, in order.
pub fn segment_corpus(model: &SegmenterModel, samples: &[CorpusSample]) -> Result<Vec<LabelMask>> {
    samples
        .par_iter()
        .map(|s| segment_image(model, &s.image))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentationScore {
    pub images: usize,
    /// Correct pixels over all pixels of all images.
    pub pooled_accuracy: f64,
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
}

pub fn score_segmentation(
    predicted: &[&LabelMask],
    truth: &[&LabelMask],
) -> Result<SegmentationScore> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return Err(Error::InvalidArgument(
            "need equal, non-empty mask lists".into(),
        ));
    }
    let mut correct = 0.0;
    let mut total = 0usize;
    let mut accs = Vec::with_capacity(predicted.len());
    for (p, t) in predicted.iter().zip(truth) {
        let a = pixel_accuracy(p, t)?;
        let n = t.width() * t.height();
        correct += a * n as f64;
        total += n;
        accs.push(a);
    }
    Ok(SegmentationScore {
        images: accs.len(),
        pooled_accuracy: correct / total as f64,
        mean_accuracy: accs.iter().sum::<f64>() / accs.len() as f64,
        min_accuracy: accs.iter().cloned().fold(f64::INFINITY, f64::min),
    })
}

pub type LabeledFeature = (String, SampleLabel, Result<SampleFeature>);

pub fn corpus_features(
    samples: &[CorpusSample],
    masks: &[LabelMask],
    config: &FeatureConfig,
) -> Vec<LabeledFeature> {
    samples
        .par_iter()
        .zip(masks)
        .map(|(s, m)| {
            (
                s.row.path.clone(),
                s.row.label,
                feature_from_mask(m, config),
            )
        })
        .collect()
}

/// Readable samples only; unreadable ones cannot contribute to training.
pub fn readable(features: &[LabeledFeature]) -> Vec<(SampleFeature, SampleLabel)> {
    features
        .iter()
        .filter_map(|(_, l, f)| f.as_ref().ok().map(|f| (f.clone(), *l)))
        .collect()
}

pub fn training_accuracy(
    model: &ClassifierModel,
    data: &[(SampleFeature, SampleLabel)],
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument(
            "no readable training samples".into(),
        ));
    }
    let mut correct = 0;
    for (f, l) in data {
        correct += usize::from(model.predict(f)? == *l);
    }
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: f64,
    pub val_accuracy: f64,
}

/// Trains an SVM for each `(C, γ)` and scores it on the validation features.
pub fn grid_search(
    train: &[(SampleFeature, SampleLabel)],
    val: &[(SampleFeature, SampleLabel)],
    feature: &FeatureConfig,
    base: &SvmConfig,
    cs: &[f64],
    gammas: &[f64],
) -> Result<Vec<GridCell>> {
    if val.is_empty() {
        return Err(Error::InvalidArgument("empty validation set".into()));
    }
    let cells: Vec<(f64, f64)> = cs
        .iter()
        .flat_map(|&c| gammas.iter().map(move |&g| (c, g)))
        .collect();
    cells
        .into_par_iter()
        .map(|(c, gamma)| {
            let cfg = ClassifierConfig {
                kind: ClassifierKind::Svm,
                svm: SvmConfig {
                    c,
                    gamma,
                    ..base.clone()
                },
                ..ClassifierConfig::default()
            };
            let model = train_classifier(train, feature, &cfg)?;
            Ok(GridCell {
                c,
                gamma,
                val_accuracy: training_accuracy(&model, val)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierResult {
    pub feature: DescriptorKind,
    pub classifier: ClassifierKind,
    pub train_samples: usize,
    pub train_accuracy: f64,
    pub test: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeningOutcome {
    pub subject_id: String,
    pub truth: SubjectDecision,
    /// `None` entries are unreadable samples.
    pub p1: Option<SampleLabel>,
    pub p2: Option<SampleLabel>,
    pub decision: Option<SubjectDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmenterReport {
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub train_patches: usize,
    pub val_patches: usize,
    pub majority_baseline: f64,
    pub test_images: SegmentationScore,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: Value,
    pub segmenter: SegmenterReport,
    pub classifiers: Vec<ClassifierResult>,
    pub screening: Vec<ScreeningOutcome>,
}

/// The report together with every trained model.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: ExperimentReport,
    pub segmenter: SegmenterModel,
    pub classifiers: Vec<ClassifierModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    /// Fresh subject pairs generated per class for the screening check.
    pub screening_subjects: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            screening_subjects: 5,
        }
    }
}

fn subject_truth(label: SampleLabel) -> SubjectDecision {
    match label {
        SampleLabel::Sickled => SubjectDecision::Diseased,
        SampleLabel::Trait => SubjectDecision::Trait,
        SampleLabel::Normal => SubjectDecision::Normal,
    }
}

fn screen_synthetic(
    config: &RunConfig,
    seg: &SegmenterModel,
    model: &ClassifierModel,
    per_class: usize,
) -> Result<Vec<ScreeningOutcome>> {
    let subjects: Vec<(SampleLabel, usize)> = SampleLabel::ALL
        .into_iter()
        .flat_map(|l| (0..per_class).map(move |i| (l, i)))
        .collect();
    subjects
        .into_par_iter()
        .map(|(label, i)| {
            let mut preds = [None, None];
            for conc in Concentration::ALL {
                let s = seed::derive(
                    config.synth.seed,
                    &[0x5c, label as u64, i as u64, conc.index() as u64],
                );
                let sample = synth_image(label, conc, s, &config.synth)?;
                let mask = segment_image(seg, &sample.image)?;
                preds[conc.index()] = match feature_from_mask(&mask, &model.feature) {
                    Ok(f) => Some(model.predict(&f)?),
                    Err(Error::NoMeasurableCells) => None,
                    Err(e) => return Err(e),
                };
            }
            let [p1, p2] = preds;
            Ok(ScreeningOutcome {
                subject_id: format!("{label}_{i:03}"),
                truth: subject_truth(label),
                p1,
                p2,
                decision: p1.zip(p2).map(|(a, b)| fuse_decisions(a, b)),
            })
        })
        .collect()
}

/// Runs the whole experiment on the corpus behind `manifest`. Classifiers are
/// trained on the train split for both descriptors and both backends, and
/// scored on the test split.
pub fn run_experiment(
    manifest: &Path,
    config: &RunConfig,
    options: &ExperimentOptions,
) -> Result<Experiment> {
    config.validate()?;
    let samples = load_corpus(manifest, true)?;
    let training = train_segmenter_on_corpus(&samples, config)?;
    let seg = training.model.clone();
    let masks = segment_corpus(&seg, &samples)?;

    let test_idx: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].row.split == Split::Test)
        .collect();
    let predicted: Vec<&LabelMask> = test_idx.iter().map(|&i| &masks[i]).collect();
    let truth = test_idx
        .iter()
        .map(|&i| truth_of(&samples[i]))
        .collect::<Result<Vec<_>>>()?;
    let test_images = score_segmentation(&predicted, &truth)?;

    let mut results = Vec::new();
    let mut models = Vec::new();
    for kind in [DescriptorKind::Roundness, DescriptorKind::FormFactor] {
        let feature = FeatureConfig {
            kind,
            ..config.feature_config()
        };
        let all = corpus_features(&samples, &masks, &feature);
        let (train, test): (Vec<_>, Vec<_>) = all
            .into_iter()
            .zip(&samples)
            .filter(|(_, s)| s.row.split != Split::Val)
            .partition(|(_, s)| s.row.split == Split::Train);
        let train: Vec<LabeledFeature> = train.into_iter().map(|(f, _)| f).collect();
        let test: Vec<LabeledFeature> = test.into_iter().map(|(f, _)| f).collect();
        let train = readable(&train);
        for backend in [ClassifierKind::Rf, ClassifierKind::Svm] {
            let cfg = ClassifierConfig {
                kind: backend,
                ..config.classifier_config()
            };
            let model = train_classifier(&train, &feature, &cfg)?;
            results.push(ClassifierResult {
                feature: kind,
                classifier: backend,
                train_samples: train.len(),
                train_accuracy: training_accuracy(&model, &train)?,
                test: evaluate_features(&model, &test)?,
            });
            models.push(model);
        }
    }

    let chosen = models
        .iter()
        .find(|m| m.feature.kind == config.features.kind && m.kind() == config.classifier)
        .expect("every combination was trained");
    let screening = screen_synthetic(config, &seg, chosen, options.screening_subjects)?;

    Ok(Experiment {
        report: ExperimentReport {
            config: config.to_json_value(),
            segmenter: SegmenterReport {
                train_accuracy: training.train_accuracy,
                val_accuracy: training.val_accuracy,
                train_patches: training.train_patches,
                val_patches: training.val_patches,
                majority_baseline: training.majority_baseline,
                test_images,
            },
            classifiers: results,
            screening,
        },
        segmenter: seg,
        classifiers: models,
    })
}

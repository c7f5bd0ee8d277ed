//! Patch-based three-class pixel segmentation with a random forest.
//!
//! Training pools class-stratified pixel samples from every image, shuffles
//! the pool, and trains on the first 70%. The remaining 30% is held out for
//! validation. Patch features are read lazily from the source images, so the
//! pool stores only coordinates.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{train_forest, Forest, ForestConfig, Samples};
use crate::imaging::{sample_training_pixels, GrayImage, LabelMask, PatchLayout, PixelClass};
use crate::seed;

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const TRAIN_FRACTION: f64 = 0.7;

/// Segmentation training parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmenterConfig {
    pub forest: ForestConfig,
    pub patch_side: usize,
    pub per_class: usize,
    /// Seed for pixel sampling and the train/val shuffle.
    pub seed: u64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            forest: ForestConfig::default(),
            patch_side: 21,
            per_class: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PatchRef {
    image: u32,
    x: u32,
    y: u32,
    class: u8,
}

/// Lazily evaluated patch dataset over a set of images.
struct PatchSamples<'a> {
    images: Vec<&'a GrayImage>,
    layout: &'a PatchLayout,
    refs: Vec<PatchRef>,
}

impl PatchSamples<'_> {
    #[inline]
    fn byte(&self, sample: usize, feature: usize) -> u8 {
        let r = self.refs[sample];
        self.layout.byte_at(
            self.images[r.image as usize],
            r.x as usize,
            r.y as usize,
            feature,
        )
    }
}

impl Samples for PatchSamples<'_> {
    fn len(&self) -> usize {
        self.refs.len()
    }

    fn feature_count(&self) -> usize {
        self.layout.len()
    }

    fn class_count(&self) -> usize {
        PixelClass::ALL.len()
    }

    fn label(&self, sample: usize) -> usize {
        self.refs[sample].class as usize
    }

    fn value(&self, sample: usize, feature: usize) -> f64 {
        f64::from(self.byte(sample, feature)) / 255.0
    }

    fn level(&self, sample: usize, feature: usize) -> Option<u8> {
        Some(self.byte(sample, feature))
    }
}

/// A trained segmenter: a 3-class forest over `patch_side²` intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmenterModel {
    format_version: u32,
    kind: String,
    patch_side: usize,
    forest: Forest,
    #[serde(skip)]
    layout: Option<PatchLayout>,
}

impl SegmenterModel {
    pub fn new(forest: Forest, patch_side: usize) -> Result<Self> {
        let layout = PatchLayout::new(patch_side)?;
        if forest.feature_count() != layout.len() {
            return Err(Error::MalformedModel(format!(
                "forest has {} features but patch side {patch_side} gives {}",
                forest.feature_count(),
                layout.len()
            )));
        }
        if forest.class_count() != PixelClass::ALL.len() {
            return Err(Error::MalformedModel(format!(
                "segmenter forest must have 3 classes, found {}",
                forest.class_count()
            )));
        }
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            kind: "segmenter".into(),
            patch_side,
            forest,
            layout: Some(layout),
        })
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    fn layout(&self) -> &PatchLayout {
        self.layout
            .as_ref()
            .expect("layout is set by every constructor")
    }

    /// Class of the pixel at `(x, y)`.
    #[inline]
    pub fn classify_pixel(&self, image: &GrayImage, x: usize, y: usize) -> PixelClass {
        let layout = self.layout();
        let k = self
            .forest
            .predict_with(|f| f64::from(layout.byte_at(image, x, y, f)) / 255.0);
        PixelClass::from_index(k).expect("forest has three classes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SegmenterModel =
            serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
        if raw.format_version != MODEL_FORMAT_VERSION || raw.kind != "segmenter" {
            return Err(Error::MalformedModel(format!(
                "expected segmenter format {MODEL_FORMAT_VERSION}, found {} {}",
                raw.kind, raw.format_version
            )));
        }
        raw.forest.validate()?;
        Self::new(raw.forest, raw.patch_side)
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

/// Result of [`train_segmenter`], serializable as the training report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmenterTraining {
    #[serde(skip)]
    pub model: SegmenterModel,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub train_patches: usize,
    pub val_patches: usize,
    /// Fraction of the most common class in the whole patch pool.
    pub majority_baseline: f64,
    pub config: SegmenterConfig,
}

/// Trains a segmenter on `(image, truth)` pairs. Pair `i` is sampled with the
/// stream derived from `(config.seed, i)`.
pub fn train_segmenter(
    pairs: &[(GrayImage, LabelMask)],
    config: &SegmenterConfig,
) -> Result<SegmenterTraining> {
    if pairs.is_empty() {
        return Err(Error::EmptyPatchPool);
    }
    let layout = PatchLayout::new(config.patch_side)?;
    let mut refs = Vec::new();
    for (i, (image, mask)) in pairs.iter().enumerate() {
        if image.width() != mask.width() || image.height() != mask.height() {
            return Err(Error::dims(
                format!("{}x{}", image.width(), image.height()),
                format!("{}x{}", mask.width(), mask.height()),
            ));
        }
        let pixels = sample_training_pixels(
            mask,
            config.per_class,
            seed::derive(config.seed, &[i as u64]),
        )?;
        refs.extend(pixels.into_iter().map(|p| PatchRef {
            image: i as u32,
            x: p.x as u32,
            y: p.y as u32,
            class: p.class.index() as u8,
        }));
    }
    if refs.is_empty() {
        return Err(Error::EmptyPatchPool);
    }
    let mut class_totals = [0usize; 3];
    for r in &refs {
        class_totals[r.class as usize] += 1;
    }
    let majority_baseline = *class_totals.iter().max().unwrap() as f64 / refs.len() as f64;

    let mut rng = seed::rng(seed::derive(config.seed, &[u64::MAX]));
    refs.shuffle(&mut rng);
    let n_train = ((refs.len() as f64 * TRAIN_FRACTION).round() as usize).clamp(1, refs.len());
    let val_refs = refs.split_off(n_train);
    let images: Vec<&GrayImage> = pairs.iter().map(|(img, _)| img).collect();
    let train = PatchSamples {
        images: images.clone(),
        layout: &layout,
        refs,
    };
    let val = PatchSamples {
        images,
        layout: &layout,
        refs: val_refs,
    };
    let forest = train_forest(&train, &config.forest)?;
    let model = SegmenterModel::new(forest, config.patch_side)?;
    let train_accuracy = patch_accuracy(&model, &train);
    let val_accuracy = if val.is_empty() {
        train_accuracy
    } else {
        patch_accuracy(&model, &val)
    };
    Ok(SegmenterTraining {
        model,
        train_accuracy,
        val_accuracy,
        train_patches: train.len(),
        val_patches: val.len(),
        majority_baseline,
        config: config.clone(),
    })
}

fn patch_accuracy(model: &SegmenterModel, samples: &PatchSamples<'_>) -> f64 {
    let correct: usize = (0..samples.len())
        .into_par_iter()
        .filter(|&i| model.forest.predict_with(|f| samples.value(i, f)) == samples.label(i))
        .count();
    correct as f64 / samples.len() as f64
}

/// Predicts a class for every pixel. Rows are processed in parallel.
pub fn segment_image(model: &SegmenterModel, image: &GrayImage) -> Result<LabelMask> {
    let (w, h) = (image.width(), image.height());
    let rows: Vec<Vec<PixelClass>> = (0..h)
        .into_par_iter()
        .map(|y| (0..w).map(|x| model.classify_pixel(image, x, y)).collect())
        .collect();
    LabelMask::new(w, h, rows.into_iter().flatten().collect())
}

/// Fraction of pixels whose classes agree.
pub fn pixel_accuracy(predicted: &LabelMask, truth: &LabelMask) -> Result<f64> {
    if predicted.width() != truth.width() || predicted.height() != truth.height() {
        return Err(Error::dims(
            format!("{}x{}", truth.width(), truth.height()),
            format!("{}x{}", predicted.width(), predicted.height()),
        ));
    }
    let same = predicted
        .classes()
        .iter()
        .zip(truth.classes())
        .filter(|(a, b)| a == b)
        .count();
    Ok(same as f64 / truth.classes().len() as f64)
}

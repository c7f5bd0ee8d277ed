use crate::error::{Error, Result};

/// Labeled training samples with a fixed number of features.
///
/// Implementations may compute feature values lazily (the segmenter reads
/// patch pixels straight from the source image instead of materializing
/// 441-float vectors).
pub trait Samples: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn feature_count(&self) -> usize;

    fn class_count(&self) -> usize;

    fn label(&self, sample: usize) -> usize;

    fn value(&self, sample: usize, feature: usize) -> f64;

    /// Returns `Some(level)` when `value(sample, feature)` is exactly
    /// `level as f64 / 255.0`. Split search then uses a 256-bin counting scan
    /// instead of sorting; both scans produce identical splits.
    fn level(&self, _sample: usize, _feature: usize) -> Option<u8> {
        None
    }
}

/// Dense row-major feature matrix with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_count: usize,
    class_count: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(rows: &[Vec<f64>], labels: &[usize], class_count: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::dims(format!("{} labels", rows.len()), labels.len()));
        }
        let feature_count = rows.first().map_or(0, Vec::len);
        if feature_count == 0 {
            return Err(Error::InvalidArgument(
                "dataset needs at least one feature".into(),
            ));
        }
        let mut features = Vec::with_capacity(rows.len() * feature_count);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != feature_count {
                return Err(Error::dims(feature_count, row.len()));
            }
            if let Some(f) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    sample: i,
                    feature: f,
                });
            }
            features.extend_from_slice(row);
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Self {
            feature_count,
            class_count,
            features,
            labels: labels.to_vec(),
        })
    }

    pub fn row(&self, sample: usize) -> &[f64] {
        &self.features[sample * self.feature_count..(sample + 1) * self.feature_count]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

impl Samples for Dataset {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn class_count(&self) -> usize {
        self.class_count
    }

    fn label(&self, sample: usize) -> usize {
        self.labels[sample]
    }

    fn value(&self, sample: usize, feature: usize) -> f64 {
        self.features[sample * self.feature_count + feature]
    }
}

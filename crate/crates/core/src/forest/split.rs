//! Shannon entropy, information gain, and the exhaustive threshold search that
//! picks each node's split.

use super::data::Samples;
use crate::error::{Error, Result};

/// Shannon entropy in bits of a class histogram.
pub fn entropy(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument(
            "entropy of an all-zero histogram".into(),
        ));
    }
    Ok(entropy_unchecked(counts, total))
}

#[inline]
fn entropy_unchecked(counts: &[u64], total: u64) -> f64 {
    let n = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    // -0.0 and rounding dust below zero for pure nodes
    h.max(0.0)
}

/// `H(parent) − Σ (nᵢ/n)·H(childᵢ)`. Children must partition the parent.
pub fn information_gain(parent: &[u64], children: &[Vec<u64>]) -> Result<f64> {
    let total: u64 = parent.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument(
            "information gain of an empty parent".into(),
        ));
    }
    for (k, &p) in parent.iter().enumerate() {
        let sum: u64 = children
            .iter()
            .map(|c| c.get(k).copied().unwrap_or(0))
            .sum();
        if sum != p {
            return Err(Error::InconsistentPartition);
        }
    }
    if children.iter().any(|c| c.len() != parent.len()) {
        return Err(Error::InconsistentPartition);
    }
    Ok(gain_unchecked(
        parent,
        total,
        children.iter().map(Vec::as_slice),
    ))
}

fn gain_unchecked<'a>(
    parent: &[u64],
    total: u64,
    children: impl Iterator<Item = &'a [u64]>,
) -> f64 {
    let n = total as f64;
    let weighted: f64 = children
        .filter_map(|c| {
            let m: u64 = c.iter().sum();
            (m > 0).then(|| m as f64 / n * entropy_unchecked(c, m))
        })
        .sum();
    (entropy_unchecked(parent, total) - weighted).max(0.0)
}

/// Gains at or below this are treated as zero.
pub const MIN_GAIN: f64 = 1e-12;

/// A chosen axis-aligned split: samples with `value < threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Midpoint threshold strictly above `lo` and at most `hi`.
#[inline]
fn midpoint(lo: f64, hi: f64) -> f64 {
    let t = lo + (hi - lo) / 2.0;
    if t > lo {
        t
    } else {
        hi
    }
}

struct Scan<'a> {
    parent: &'a [u64],
    total: u64,
    min_leaf: u64,
    left: Vec<u64>,
    right: Vec<u64>,
}

impl Scan<'_> {
    fn gain(&mut self) -> Option<f64> {
        let nl: u64 = self.left.iter().sum();
        let nr = self.total - nl;
        if nl < self.min_leaf || nr < self.min_leaf {
            return None;
        }
        for k in 0..self.parent.len() {
            self.right[k] = self.parent[k] - self.left[k];
        }
        Some(gain_unchecked(
            self.parent,
            self.total,
            [self.left.as_slice(), self.right.as_slice()].into_iter(),
        ))
    }
}

/// Exhaustive threshold search over `features` for the samples in `indices`.
///
/// Candidate thresholds are the midpoints between consecutive distinct sorted
/// values of each feature. The split with the highest information gain wins;
/// ties go to the lowest feature index, then the lowest threshold. Returns
/// `None` when no candidate has positive gain.
pub fn best_split<S: Samples + ?Sized>(
    samples: &S,
    indices: &[usize],
    features: &[usize],
) -> Result<Option<SplitCandidate>> {
    best_split_with_min_leaf(samples, indices, features, 1)
}

pub fn best_split_with_min_leaf<S: Samples + ?Sized>(
    samples: &S,
    indices: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Result<Option<SplitCandidate>> {
    if features.is_empty() {
        return Err(Error::InvalidArgument("empty feature subset".into()));
    }
    if indices.len() < 2 {
        return Err(Error::InvalidArgument(
            "best_split needs at least two samples".into(),
        ));
    }
    let k = samples.class_count();
    let mut parent = vec![0u64; k];
    for &i in indices {
        parent[samples.label(i)] += 1;
    }
    let mut ordered: Vec<usize> = features.to_vec();
    ordered.sort_unstable();
    ordered.dedup();

    let mut scan = Scan {
        parent: &parent,
        total: indices.len() as u64,
        min_leaf: min_leaf.max(1) as u64,
        left: vec![0; k],
        right: vec![0; k],
    };
    let mut best: Option<SplitCandidate> = None;
    let mut consider = |feature: usize, threshold: f64, gain: f64| {
        if gain > MIN_GAIN && best.is_none_or(|b| gain > b.gain) {
            best = Some(SplitCandidate {
                feature,
                threshold,
                gain,
            });
        }
    };

    let mut pairs: Vec<(f64, usize)> = Vec::new();
    let mut histogram: Vec<u64> = Vec::new();
    for &f in &ordered {
        if f >= samples.feature_count() {
            return Err(Error::InvalidArgument(format!("feature {f} out of range")));
        }
        scan.left.iter_mut().for_each(|c| *c = 0);
        if samples.level(indices[0], f).is_some() {
            histogram.clear();
            histogram.resize(256 * k, 0);
            for &i in indices {
                let level = samples
                    .level(i, f)
                    .expect("a feature is either quantized for every sample or for none");
                histogram[level as usize * k + samples.label(i)] += 1;
            }
            let mut prev: Option<usize> = None;
            for level in 0..256 {
                let row = &histogram[level * k..(level + 1) * k];
                if row.iter().all(|&c| c == 0) {
                    continue;
                }
                if let Some(p) = prev {
                    let threshold = midpoint(p as f64 / 255.0, level as f64 / 255.0);
                    if let Some(g) = scan.gain() {
                        consider(f, threshold, g);
                    }
                }
                for (c, &add) in scan.left.iter_mut().zip(row) {
                    *c += add;
                }
                prev = Some(level);
            }
        } else {
            pairs.clear();
            pairs.extend(
                indices
                    .iter()
                    .map(|&i| (samples.value(i, f), samples.label(i))),
            );
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for w in 0..pairs.len() - 1 {
                scan.left[pairs[w].1] += 1;
                let (lo, hi) = (pairs[w].0, pairs[w + 1].0);
                if lo < hi {
                    if let Some(g) = scan.gain() {
                        consider(f, midpoint(lo, hi), g);
                    }
                }
            }
        }
    }
    Ok(best)
}

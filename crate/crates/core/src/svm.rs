//! RBF-kernel support vector machine trained by simplified SMO, with a
//! one-vs-one multiclass wrapper.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Multipliers at or below this are treated as zero.
pub const ALPHA_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    #[serde(rename = "C", alias = "c")]
    pub c: f64,
    pub gamma: f64,
    pub tol: f64,
    pub max_passes: usize,
    /// Hard cap on full sweeps over the training set.
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 250.0,
            gamma: 1.0,
            tol: 1e-3,
            max_passes: 20,
            max_iter: 100_000,
            seed: 0,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_passes == 0 || self.max_iter == 0 {
            return Err(Error::InvalidArgument(
                "max_passes and max_iter must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(-gamma * |x - y|²)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dims(x.len(), y.len()));
    }
    Ok((-gamma * squared_distance(x, y)).exp())
}

/// Full symmetric kernel matrix of `points`.
pub fn gram_matrix(points: &[Vec<f64>], gamma: f64) -> Result<Vec<Vec<f64>>> {
    let n = points.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        k[i][i] = 1.0;
        for j in 0..i {
            let v = rbf_kernel(&points[i], &points[j], gamma)?;
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    Ok(k)
}

/// `Σα − ½ ΣΣ αᵢαⱼyᵢyⱼKᵢⱼ`.
pub fn dual_objective(alphas: &[f64], labels: &[f64], gram: &[Vec<f64>]) -> f64 {
    let n = alphas.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alphas[i] * alphas[j] * labels[i] * labels[j] * gram[i][j];
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinarySvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub labels: Vec<i8>,
    pub bias: f64,
    #[serde(skip)]
    pub gamma: f64,
}

impl BinarySvmModel {
    pub fn dimension(&self) -> Option<usize> {
        self.support_vectors.first().map(Vec::len)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        match self.dimension() {
            Some(d) if d != x.len() => Err(Error::dims(d, x.len())),
            _ => Ok(()),
        }
    }
}

/// `Σ αᵢyᵢK(x, xᵢ) + b`.
pub fn decision_value(model: &BinarySvmModel, x: &[f64]) -> Result<f64> {
    model.check(x)?;
    let mut sum = 0.0;
    for ((sv, &a), &y) in model
        .support_vectors
        .iter()
        .zip(&model.alphas)
        .zip(&model.labels)
    {
        sum += a * f64::from(y) * (-model.gamma * squared_distance(x, sv)).exp();
    }
    Ok(sum + model.bias)
}

/// Full solver output, including multipliers of non-support vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub sweeps: usize,
    /// False when `max_iter` stopped the solver.
    pub converged: bool,
}

fn check_binary(points: &[Vec<f64>], labels: &[f64]) -> Result<()> {
    if points.len() != labels.len() {
        return Err(Error::dims(points.len(), labels.len()));
    }
    if points.len() < 2 {
        return Err(Error::InvalidArgument(
            "SVM training needs at least two samples".into(),
        ));
    }
    let d = points[0].len();
    for (i, p) in points.iter().enumerate() {
        if p.len() != d {
            return Err(Error::dims(d, p.len()));
        }
        if let Some(f) = p.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                sample: i,
                feature: f,
            });
        }
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidArgument(format!(
            "binary labels must be ±1, got {bad}"
        )));
    }
    if !(labels.contains(&1.0) && labels.contains(&-1.0)) {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Bias from the free support vectors, or the midpoint of the feasible
/// interval implied by the bound ones when none are free.
fn final_bias(alphas: &[f64], labels: &[f64], f_nobias: &[f64], c: f64) -> f64 {
    let mut free_sum = 0.0;
    let mut free_n = 0usize;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..alphas.len() {
        let target = labels[i] - f_nobias[i];
        if alphas[i] > ALPHA_EPS && alphas[i] < c - ALPHA_EPS {
            free_sum += target;
            free_n += 1;
            continue;
        }
        // yᵢf(xᵢ) ≥ 1 at α = 0 and ≤ 1 at α = C, turned into bounds on b.
        let at_zero = alphas[i] <= ALPHA_EPS;
        if (labels[i] > 0.0) == at_zero {
            lo = lo.max(target);
        } else {
            hi = hi.min(target);
        }
    }
    if free_n > 0 {
        return free_sum / free_n as f64;
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo + hi) / 2.0,
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

fn violates(y: f64, err: f64, alpha: f64, c: f64, tol: f64) -> bool {
    (y * err < -tol && alpha < c - ALPHA_EPS) || (y * err > tol && alpha > ALPHA_EPS)
}

/// Simplified SMO. Each sweep visits every index `i`. An `i` that violates
/// KKT is paired with a uniformly random `j ≠ i`. After `max_passes`
/// consecutive sweeps without an update, the bias is recomputed from the
/// free support vectors and KKT is re-checked with that bias. Any remaining
/// violation restarts the pass counter.
pub fn smo_solve(points: &[Vec<f64>], labels: &[f64], config: &SvmConfig) -> Result<SmoSolution> {
    config.validate()?;
    check_binary(points, labels)?;
    let n = points.len();
    let c = config.c;
    let tol = config.tol;
    let gram = gram_matrix(points, config.gamma)?;
    let mut rng = seed::rng(config.seed);
    let mut alphas = vec![0.0; n];
    let mut b = 0.0;
    // f_nobias[i] = Σ αⱼyⱼKᵢⱼ, updated incrementally.
    let mut f_nobias = vec![0.0; n];
    let mut passes = 0;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < config.max_iter {
        sweeps += 1;
        let mut changed = 0;
        for i in 0..n {
            let ei = f_nobias[i] + b - labels[i];
            if !violates(labels[i], ei, alphas[i], c, tol) {
                continue;
            }
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let ej = f_nobias[j] + b - labels[j];
            let (ai_old, aj_old) = (alphas[i], alphas[j]);
            let (lo, hi) = if labels[i] != labels[j] {
                ((aj_old - ai_old).max(0.0), (c + aj_old - ai_old).min(c))
            } else {
                ((ai_old + aj_old - c).max(0.0), (ai_old + aj_old).min(c))
            };
            if hi - lo < 1e-12 {
                continue;
            }
            let eta = 2.0 * gram[i][j] - gram[i][i] - gram[j][j];
            if eta >= 0.0 {
                continue;
            }
            let aj = (aj_old - labels[j] * (ei - ej) / eta).clamp(lo, hi);
            if (aj - aj_old).abs() < 1e-12 * (1.0 + aj_old.abs()) {
                continue;
            }
            // The clamp only absorbs roundoff; the equality constraint keeps ai in range.
            let ai = (ai_old + labels[i] * labels[j] * (aj_old - aj)).clamp(0.0, c);
            let (di, dj) = (labels[i] * (ai - ai_old), labels[j] * (aj - aj_old));
            let b1 = b - ei - di * gram[i][i] - dj * gram[i][j];
            let b2 = b - ej - di * gram[i][j] - dj * gram[j][j];
            b = if ai > ALPHA_EPS && ai < c - ALPHA_EPS {
                b1
            } else if aj > ALPHA_EPS && aj < c - ALPHA_EPS {
                b2
            } else {
                (b1 + b2) / 2.0
            };
            alphas[i] = ai;
            alphas[j] = aj;
            for (k, f) in f_nobias.iter_mut().enumerate() {
                *f += di * gram[i][k] + dj * gram[j][k];
            }
            changed += 1;
        }
        if changed > 0 {
            passes = 0;
            continue;
        }
        passes += 1;
        if passes >= config.max_passes {
            let fb = final_bias(&alphas, labels, &f_nobias, c);
            let clean = (0..n)
                .all(|i| !violates(labels[i], f_nobias[i] + fb - labels[i], alphas[i], c, tol));
            b = fb;
            if clean {
                converged = true;
                break;
            }
            passes = 0;
        }
    }
    if !converged {
        b = final_bias(&alphas, labels, &f_nobias, c);
    }
    Ok(SmoSolution {
        alphas,
        bias: b,
        sweeps,
        converged,
    })
}

/// Trains a binary model on labels ±1 and keeps vectors with α > 1e-8.
pub fn smo_train(
    points: &[Vec<f64>],
    labels: &[f64],
    config: &SvmConfig,
) -> Result<BinarySvmModel> {
    let solution = smo_solve(points, labels, config)?;
    Ok(model_from_solution(points, labels, &solution, config.gamma))
}

pub fn model_from_solution(
    points: &[Vec<f64>],
    labels: &[f64],
    solution: &SmoSolution,
    gamma: f64,
) -> BinarySvmModel {
    let keep: Vec<usize> = (0..points.len())
        .filter(|&i| solution.alphas[i] > ALPHA_EPS)
        .collect();
    BinarySvmModel {
        support_vectors: keep.iter().map(|&i| points[i].clone()).collect(),
        alphas: keep.iter().map(|&i| solution.alphas[i]).collect(),
        labels: keep.iter().map(|&i| labels[i] as i8).collect(),
        bias: solution.bias,
        gamma,
    }
}

/// A training point that breaks a KKT condition.
#[derive(Debug, Clone, PartialEq)]
pub struct KktViolation {
    pub index: usize,
    pub alpha: f64,
    pub margin: f64,
}

/// Checks the three KKT cases for every training point, with `yᵢf(xᵢ)`
/// computed from the model: α = 0 needs a margin of at least 1 − tol, a free
/// α needs |margin − 1| ≤ tol, and α = C needs a margin of at most 1 + tol.
pub fn kkt_audit(
    model: &BinarySvmModel,
    points: &[Vec<f64>],
    labels: &[f64],
    alphas: &[f64],
    c: f64,
    tol: f64,
) -> Result<Vec<KktViolation>> {
    let mut out = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let margin = labels[i] * decision_value(model, p)?;
        let a = alphas[i];
        let ok = if a <= ALPHA_EPS {
            margin >= 1.0 - tol
        } else if a >= c - ALPHA_EPS {
            margin <= 1.0 + tol
        } else {
            (margin - 1.0).abs() <= tol
        };
        if !ok {
            out.push(KktViolation {
                index: i,
                alpha: a,
                margin,
            });
        }
    }
    Ok(out)
}

/// Checks `0 ≤ αᵢ ≤ C` and `|Σαᵢyᵢ| ≤ 1e-6·C`.
pub fn constraints_hold(alphas: &[f64], labels: &[f64], c: f64) -> bool {
    let boxed = alphas.iter().all(|&a| (0.0..=c).contains(&a));
    let balance: f64 = alphas.iter().zip(labels).map(|(a, y)| a * y).sum();
    boxed && balance.abs() <= 1e-6 * c
}

/// Pairwise model between `class_a < class_b`; `class_a` is the −1 side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairModel {
    pub class_a: usize,
    pub class_b: usize,
    #[serde(flatten)]
    pub model: BinarySvmModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MulticlassSvmModel {
    format_version: u32,
    kind: String,
    gamma: f64,
    #[serde(rename = "C")]
    c: f64,
    models: Vec<PairModel>,
    #[serde(skip)]
    class_count: usize,
}

/// Trains one binary model per class pair, in parallel. Pair `(a, b)` uses
/// the seed derived from `(config.seed, a, b)`.
pub fn train_ovo(
    points: &[Vec<f64>],
    classes: &[usize],
    class_count: usize,
    config: &SvmConfig,
) -> Result<MulticlassSvmModel> {
    config.validate()?;
    if points.len() != classes.len() {
        return Err(Error::dims(points.len(), classes.len()));
    }
    if class_count < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    if let Some(&bad) = classes.iter().find(|&&k| k >= class_count) {
        return Err(Error::InvalidArgument(format!(
            "class {bad} out of range {class_count}"
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..class_count)
        .flat_map(|a| (a + 1..class_count).map(move |b| (a, b)))
        .collect();
    let models = pairs
        .par_iter()
        .map(|&(a, b)| {
            let idx: Vec<usize> = (0..points.len())
                .filter(|&i| classes[i] == a || classes[i] == b)
                .collect();
            let pts: Vec<Vec<f64>> = idx.iter().map(|&i| points[i].clone()).collect();
            let ys: Vec<f64> = idx
                .iter()
                .map(|&i| if classes[i] == a { -1.0 } else { 1.0 })
                .collect();
            let pair_config = SvmConfig {
                seed: seed::derive(config.seed, &[a as u64, b as u64]),
                ..config.clone()
            };
            let model = smo_train(&pts, &ys, &pair_config)?;
            Ok(PairModel {
                class_a: a,
                class_b: b,
                model,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MulticlassSvmModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: "svm_ovo".into(),
        gamma: config.gamma,
        c: config.c,
        models,
        class_count,
    })
}

impl MulticlassSvmModel {
    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn models(&self) -> &[PairModel] {
        &self.models
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Per-pair decision values, in model order.
    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.models
            .iter()
            .map(|m| decision_value(&m.model, x))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: Self =
            serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
        if m.format_version != MODEL_FORMAT_VERSION || m.kind != "svm_ovo" {
            return Err(Error::MalformedModel(format!(
                "expected svm_ovo format {MODEL_FORMAT_VERSION}, found {} {}",
                m.kind, m.format_version
            )));
        }
        // K(K-1)/2 pair models with every pair present once.
        let k = (2..=64)
            .find(|k| k * (k - 1) / 2 == m.models.len())
            .ok_or_else(|| {
                Error::MalformedModel(format!("{} pair models is not K(K-1)/2", m.models.len()))
            })?;
        let expected: Vec<(usize, usize)> = (0..k)
            .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
            .collect();
        let found: Vec<(usize, usize)> = m.models.iter().map(|p| (p.class_a, p.class_b)).collect();
        if expected != found {
            return Err(Error::MalformedModel(format!(
                "pair list {found:?} does not cover {k} classes"
            )));
        }
        for p in &mut m.models {
            let b = &p.model;
            let n = b.support_vectors.len();
            if b.alphas.len() != n || b.labels.len() != n {
                return Err(Error::MalformedModel(
                    "support vector arrays differ in length".into(),
                ));
            }
            if b.labels.iter().any(|&y| y != 1 && y != -1)
                || b.alphas.iter().any(|&a| !(0.0..=m.c).contains(&a))
            {
                return Err(Error::MalformedModel(
                    "labels must be ±1 and alphas within [0, C]".into(),
                ));
            }
            p.model.gamma = m.gamma;
        }
        m.class_count = k;
        Ok(m)
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

/// Resolves pairwise decisions into one class. A positive value votes for
/// `class_b`, otherwise `class_a`. Vote ties are broken by the larger sum of
/// |value| over the votes a class won, then by the lowest class index.
pub fn vote(pairs: &[(usize, usize)], values: &[f64], class_count: usize) -> usize {
    let mut votes = vec![0usize; class_count];
    let mut margin = vec![0.0f64; class_count];
    for (&(a, b), &v) in pairs.iter().zip(values) {
        let winner = if v > 0.0 { b } else { a };
        votes[winner] += 1;
        margin[winner] += v.abs();
    }
    let mut best = 0;
    for k in 1..class_count {
        if votes[k] > votes[best] || (votes[k] == votes[best] && margin[k] > margin[best]) {
            best = k;
        }
    }
    best
}

pub fn svm_predict(model: &MulticlassSvmModel, x: &[f64]) -> Result<usize> {
    let values = model.decision_values(x)?;
    let pairs: Vec<(usize, usize)> = model
        .models
        .iter()
        .map(|p| (p.class_a, p.class_b))
        .collect();
    Ok(vote(&pairs, &values, model.class_count))
}

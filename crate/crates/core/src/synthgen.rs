//! Seeded synthetic blood-smear generator.
//!
//! Each image is a set of non-overlapping cells drawn over a linear
//! illumination ramp with Gaussian noise. The ground-truth mask comes from the
//! same rasterization, so it is exact.
//!
//! Cells come in three kinds. A *disc* is an ellipse. A *crenated* cell is a
//! disc with a sinusoidal radial ripple. A *sickle* is a disc minus an offset
//! cutter disc. A sample's sickle fraction comes from the shape-mix table.
//! The same fraction also flattens its non-sickle cells: their mean aspect
//! ratio is `1 - elongation * fraction`. Without that, crescents would be
//! removed by the solidity filter and leave nothing to tell diseased from
//! trait samples apart.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::SampleLabel;
use crate::error::{Error, Result};
use crate::imaging::{
    mask_path_for, write_manifest, write_pgm, Concentration, GrayImage, LabelMask, ManifestRow,
    PixelClass, Split, MAX_DIMENSION,
};
use crate::seed;

pub const MIN_RADIUS: f64 = 8.0;
pub const MAX_RADIUS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Disc,
    Crenated,
    Sickle,
}

/// A parametric cell. Discs and crenated cells use `aspect` (minor/major
/// axis, `radius` is the major semi-axis). Sickles use `crescent_offset` (the
/// cutter center distance as a fraction of `radius`) and `cutter_ratio`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellShape {
    pub kind: CellKind,
    pub center: (f64, f64),
    pub radius: f64,
    pub orientation: f64,
    pub aspect: f64,
    pub crenation_amplitude: f64,
    pub crenation_frequency: u32,
    pub crenation_phase: f64,
    pub crescent_offset: f64,
    pub cutter_ratio: f64,
}

impl CellShape {
    pub fn disc(center: (f64, f64), radius: f64) -> Self {
        Self {
            kind: CellKind::Disc,
            center,
            radius,
            orientation: 0.0,
            aspect: 1.0,
            crenation_amplitude: 0.0,
            crenation_frequency: 0,
            crenation_phase: 0.0,
            crescent_offset: 0.0,
            cutter_ratio: 0.0,
        }
    }

    pub fn sickle(
        center: (f64, f64),
        radius: f64,
        orientation: f64,
        offset: f64,
        cutter_ratio: f64,
    ) -> Self {
        Self {
            kind: CellKind::Sickle,
            orientation,
            crescent_offset: offset,
            cutter_ratio,
            ..Self::disc(center, radius)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_RADIUS..=MAX_RADIUS).contains(&self.radius) {
            return Err(Error::InvalidArgument(format!(
                "cell radius {} outside [{MIN_RADIUS}, {MAX_RADIUS}]",
                self.radius
            )));
        }
        if !(self.crenation_amplitude >= 0.0 && self.crenation_amplitude < self.radius / 3.0) {
            return Err(Error::InvalidArgument(format!(
                "crenation amplitude {} must be below radius/3",
                self.crenation_amplitude
            )));
        }
        if !(self.aspect > 0.0 && self.aspect <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "aspect {} outside (0, 1]",
                self.aspect
            )));
        }
        Ok(())
    }

    /// Half-width of a square around the center that contains the shape.
    fn extent(&self) -> f64 {
        self.radius + self.crenation_amplitude + 1.0
    }

    /// Whether the point `(x, y)` lies inside the shape.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = self.orientation.sin_cos();
        // Rotate into the cell frame; u runs along the major axis.
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        match self.kind {
            CellKind::Sickle => {
                let r = self.radius;
                let cut = self.cutter_ratio * r;
                let du = u - self.crescent_offset * r;
                u * u + v * v <= r * r && du * du + v * v > cut * cut
            }
            CellKind::Disc | CellKind::Crenated => {
                let (nu, nv) = (u / self.radius, v / (self.radius * self.aspect));
                let rho = nu.hypot(nv);
                let mut limit = 1.0;
                if self.kind == CellKind::Crenated {
                    let theta = nv.atan2(nu);
                    limit += self.crenation_amplitude / self.radius
                        * (self.crenation_frequency as f64 * theta + self.crenation_phase).sin();
                }
                rho <= limit
            }
        }
    }

    /// Pixels whose centers fall inside the shape, in row-major order. Pixel
    /// `(x, y)` has its center at `(x, y)`.
    pub fn rasterize(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        let e = self.extent();
        let x0 = (self.center.0 - e).floor().max(0.0) as usize;
        let y0 = (self.center.1 - e).floor().max(0.0) as usize;
        let x1 = ((self.center.0 + e).ceil() as usize).min(width.saturating_sub(1));
        let y1 = ((self.center.1 + e).ceil() as usize).min(height.saturating_sub(1));
        let mut out = Vec::new();
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.contains(x as f64, y as f64) {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

/// Sickle fraction per label at concentrations 0.1 and 0.3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeMix {
    pub diseased: [f64; 2],
    #[serde(rename = "trait")]
    pub trait_: [f64; 2],
    pub normal: [f64; 2],
}

impl Default for ShapeMix {
    fn default() -> Self {
        Self {
            diseased: [0.7, 0.8],
            trait_: [0.05, 0.5],
            normal: [0.02, 0.02],
        }
    }
}

impl ShapeMix {
    pub fn sickle_fraction(&self, label: SampleLabel, concentration: Concentration) -> f64 {
        let row = match label {
            SampleLabel::Sickled => self.diseased,
            SampleLabel::Trait => self.trait_,
            SampleLabel::Normal => self.normal,
        };
        row[concentration.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// Inclusive range of cells per image.
    pub cells: [usize; 2],
    /// Range of cell (major) radii in pixels.
    pub radius: [f64; 2],
    pub sickle_fraction: ShapeMix,
    /// Probability that a non-sickle cell is crenated.
    pub crenated_fraction: f64,
    /// Mean aspect ratio of non-sickle cells is `1 - elongation * sickle_fraction`.
    pub elongation: f64,
    /// Standard deviation of the per-cell aspect ratio.
    pub aspect_jitter: f64,
    /// Cutter center offset as a fraction of the radius.
    pub crescent_offset: [f64; 2],
    pub cutter_ratio: f64,
    /// Crenation amplitude as a fraction of the radius.
    pub crenation_amplitude: [f64; 2],
    pub crenation_frequency: [u32; 2],
    pub background: f64,
    pub cell_delta: f64,
    /// Extra intensity change on Boundary pixels (the darker membrane outline).
    pub rim_delta: f64,
    /// Half the peak-to-peak illumination ramp across the image.
    pub gradient: f64,
    pub noise_sigma: f64,
    /// Placement attempts per cell before giving up.
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            cells: [40, 50],
            radius: [8.0, 10.0],
            sickle_fraction: ShapeMix::default(),
            crenated_fraction: 0.05,
            elongation: 0.6,
            aspect_jitter: 0.04,
            crescent_offset: [0.4, 0.5],
            cutter_ratio: 0.9,
            crenation_amplitude: [0.08, 0.15],
            crenation_frequency: [6, 10],
            background: 150.0,
            cell_delta: -20.0,
            rim_delta: -15.0,
            gradient: 30.0,
            noise_sigma: 6.0,
            max_attempts: 2000,
            seed: 7,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], lo: f64, hi: f64) -> Result<()> {
    if !(lo <= r[0] && r[0] <= r[1] && r[1] <= hi) {
        return Err(Error::InvalidArgument(format!(
            "{name} {r:?} must satisfy {lo} <= min <= max <= {hi}"
        )));
    }
    Ok(())
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0
            || self.height == 0
            || self.width > MAX_DIMENSION
            || self.height > MAX_DIMENSION
        {
            return Err(Error::DimensionOverflow {
                width: self.width,
                height: self.height,
            });
        }
        if self.cells[0] > self.cells[1] {
            return Err(Error::InvalidArgument(format!(
                "cells range {:?} is empty",
                self.cells
            )));
        }
        check_range("radius", self.radius, MIN_RADIUS, MAX_RADIUS)?;
        let mix = &self.sickle_fraction;
        for f in mix.diseased.iter().chain(&mix.trait_).chain(&mix.normal) {
            if !(0.0..=1.0).contains(f) {
                return Err(Error::InvalidArgument(format!(
                    "sickle fraction {f} outside [0, 1]"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.crenated_fraction) {
            return Err(Error::InvalidArgument(
                "crenated_fraction outside [0, 1]".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.elongation) || !(0.0..=0.2).contains(&self.aspect_jitter) {
            return Err(Error::InvalidArgument(
                "elongation must be in [0, 1), aspect_jitter in [0, 0.2]".into(),
            ));
        }
        check_range("crescent_offset", self.crescent_offset, 0.1, 1.0)?;
        if !(0.5..1.0).contains(&self.cutter_ratio) {
            return Err(Error::InvalidArgument(
                "cutter_ratio outside [0.5, 1)".into(),
            ));
        }
        // Strictly below a third of the radius.
        if !(0.0 <= self.crenation_amplitude[0]
            && self.crenation_amplitude[0] <= self.crenation_amplitude[1]
            && self.crenation_amplitude[1] < 1.0 / 3.0)
        {
            return Err(Error::InvalidArgument(
                "crenation_amplitude must lie in [0, 1/3)".into(),
            ));
        }
        if self.crenation_frequency[0] < 2
            || self.crenation_frequency[0] > self.crenation_frequency[1]
        {
            return Err(Error::InvalidArgument(
                "crenation_frequency must be an increasing range from 2".into(),
            ));
        }
        if self.cell_delta.abs() < 5.0 {
            return Err(Error::InvalidArgument(format!(
                "cell_delta {} below the visibility floor of 5",
                self.cell_delta
            )));
        }
        let finite = [
            self.background,
            self.cell_delta,
            self.rim_delta,
            self.gradient,
            self.noise_sigma,
        ];
        if finite.iter().any(|v| !v.is_finite()) || self.gradient < 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::InvalidArgument(
                "intensity parameters must be finite and non-negative".into(),
            ));
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidArgument(
                "max_attempts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One generated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub image: GrayImage,
    pub mask: LabelMask,
    pub label: SampleLabel,
    pub cells: Vec<CellShape>,
}

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn draw_shape<R: Rng>(
    rng: &mut R,
    config: &SynthConfig,
    sickle_fraction: f64,
    center: (f64, f64),
) -> CellShape {
    let radius = uniform(rng, config.radius);
    let orientation = rng.random_range(0.0..PI);
    if rng.random::<f64>() < sickle_fraction {
        let offset = uniform(rng, config.crescent_offset);
        return CellShape::sickle(center, radius, orientation, offset, config.cutter_ratio);
    }
    let mean = 1.0 - config.elongation * sickle_fraction;
    let jitter: f64 = rng.sample(rand_distr::StandardNormal);
    let mut cell = CellShape {
        orientation,
        aspect: (mean + config.aspect_jitter * jitter).clamp(0.3, 1.0),
        ..CellShape::disc(center, radius)
    };
    if rng.random::<f64>() < config.crenated_fraction {
        cell.kind = CellKind::Crenated;
        cell.crenation_amplitude = uniform(rng, config.crenation_amplitude) * radius;
        cell.crenation_frequency =
            rng.random_range(config.crenation_frequency[0]..=config.crenation_frequency[1]);
        cell.crenation_phase = rng.random_range(0.0..TAU);
    }
    cell
}

/// Generates one image, its exact truth mask, and the list of cells.
///
/// Cells are placed by rejection sampling. A candidate must lie at least one
/// pixel inside the image, and no pixel of it may touch another cell, even
/// diagonally. Cells may still sit two pixels apart. A foreground pixel is
/// Boundary when any in-image 8-neighbour is background.
pub fn synth_image(
    label: SampleLabel,
    concentration: Concentration,
    seed: u64,
    config: &SynthConfig,
) -> Result<SynthSample> {
    config.validate()?;
    let (w, h) = (config.width, config.height);
    let mut rng = seed::rng(seed);
    let sickle_fraction = config.sickle_fraction.sickle_fraction(label, concentration);
    let n_cells = rng.random_range(config.cells[0]..=config.cells[1]);

    // 0 = free, otherwise 1 + cell index.
    let mut owner = vec![0u32; w * h];
    let mut cells = Vec::with_capacity(n_cells);
    for cell_index in 0..n_cells {
        let mut placed = false;
        for _ in 0..config.max_attempts {
            let center = (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
            );
            let shape = draw_shape(&mut rng, config, sickle_fraction, center);
            let support = shape.rasterize(w, h);
            if support.is_empty() || !fits(&support, &owner, w, h) {
                continue;
            }
            for &(x, y) in &support {
                owner[y * w + x] = cell_index as u32 + 1;
            }
            cells.push(shape);
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::CanvasTooCrowded {
                cell: cell_index,
                attempts: config.max_attempts,
            });
        }
    }

    let mut classes = vec![PixelClass::Background; w * h];
    for y in 0..h {
        for x in 0..w {
            if owner[y * w + x] == 0 {
                continue;
            }
            let edge = neighbours(x, y, w, h).any(|(nx, ny)| owner[ny * w + nx] == 0);
            classes[y * w + x] = if edge {
                PixelClass::Boundary
            } else {
                PixelClass::Interior
            };
        }
    }
    let mask = LabelMask::new(w, h, classes)?;

    // Illumination ramp along a random direction, scaled so the corners reach ±gradient.
    let phi = rng.random_range(0.0..TAU);
    let (s, c) = phi.sin_cos();
    let (mx, my) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let reach = (mx * c.abs() + my * s.abs()).max(1e-9);
    let noise =
        Normal::new(0.0, config.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let ramp = config.gradient * ((x as f64 - mx) * c + (y as f64 - my) * s) / reach;
            let cell = match mask.get(x, y) {
                PixelClass::Background => 0.0,
                PixelClass::Interior => config.cell_delta,
                PixelClass::Boundary => config.cell_delta + config.rim_delta,
            };
            let v = config.background + ramp + cell + noise.sample(&mut rng);
            data.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    let image = GrayImage::new(w, h, data)?;
    Ok(SynthSample {
        image,
        mask,
        label,
        cells,
    })
}

fn neighbours(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    (-1isize..=1)
        .flat_map(|dy| (-1isize..=1).map(move |dx| (dx, dy)))
        .filter(|&d| d != (0, 0))
        .filter_map(move |(dx, dy)| {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            (nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize)
                .then_some((nx as usize, ny as usize))
        })
}

fn fits(support: &[(usize, usize)], owner: &[u32], w: usize, h: usize) -> bool {
    support.iter().all(|&(x, y)| {
        x > 0
            && y > 0
            && x + 1 < w
            && y + 1 < h
            && neighbours(x, y, w, h).all(|(nx, ny)| owner[ny * w + nx] == 0)
            && owner[y * w + x] == 0
    })
}

/// Sample counts for one (label, concentration, split) cell of the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCount {
    pub label: SampleLabel,
    pub concentration: Concentration,
    pub split: Split,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCounts(pub Vec<CorpusCount>);

impl CorpusCounts {
    /// 28 diseased, 91 normal and 37 trait samples. 5/15/7 of them are test
    /// and the remaining 129 are split 70/30 train/val within each label.
    /// Diseased samples are imaged at 0.1 and trait samples at 0.3. Normal
    /// samples alternate between the two, with the odd one going to 0.1.
    pub fn standard() -> Self {
        let mut out = Vec::new();
        let mut push = |label, concentration, split, count| {
            if count > 0 {
                out.push(CorpusCount {
                    label,
                    concentration,
                    split,
                    count,
                });
            }
        };
        let table = [
            (SampleLabel::Sickled, 28, 5),
            (SampleLabel::Trait, 37, 7),
            (SampleLabel::Normal, 91, 15),
        ];
        for (label, total, test) in table {
            let rest: usize = total - test;
            let train = (rest as f64 * 0.7).round() as usize;
            let val = rest - train;
            for (split, n) in [
                (Split::Train, train),
                (Split::Val, val),
                (Split::Test, test),
            ] {
                match label {
                    SampleLabel::Sickled => push(label, Concentration::Low, split, n),
                    SampleLabel::Trait => push(label, Concentration::High, split, n),
                    SampleLabel::Normal => {
                        push(label, Concentration::Low, split, n.div_ceil(2));
                        push(label, Concentration::High, split, n / 2);
                    }
                }
            }
        }
        Self(out)
    }

    pub fn zero() -> Self {
        Self(Vec::new())
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|c| c.count).sum()
    }
}

/// One planned corpus entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub label: SampleLabel,
    pub concentration: Concentration,
    /// Running index within (label, concentration).
    pub index: usize,
    pub split: Split,
    pub seed: u64,
}

impl CorpusEntry {
    pub fn file_name(&self) -> String {
        let conc = match self.concentration {
            Concentration::Low => "c01",
            Concentration::High => "c03",
        };
        let label = serde_json::to_value(self.label)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        format!("{label}_{conc}_{:03}.pgm", self.index)
    }
}

/// Seed of one sample, derived from the corpus seed and its identity.
pub fn sample_seed(
    base: u64,
    label: SampleLabel,
    concentration: Concentration,
    index: usize,
) -> u64 {
    seed::derive(
        base,
        &[label as u64, concentration.index() as u64, index as u64],
    )
}

/// Expands counts into entries in manifest order.
pub fn plan_corpus(config: &SynthConfig, counts: &CorpusCounts) -> Vec<CorpusEntry> {
    let mut next_index = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(counts.total());
    for c in &counts.0 {
        for _ in 0..c.count {
            let slot = next_index
                .entry((c.label, c.concentration))
                .or_insert(0usize);
            let index = *slot;
            *slot += 1;
            out.push(CorpusEntry {
                label: c.label,
                concentration: c.concentration,
                index,
                split: c.split,
                seed: sample_seed(config.seed, c.label, c.concentration, index),
            });
        }
    }
    out
}

pub const MANIFEST_NAME: &str = "manifest.csv";

/// Writes `images/`, `masks/` and `manifest.csv` under `out_dir`; returns the
/// manifest path. All files are taken at the 30 min timepoint.
pub fn synth_corpus(
    config: &SynthConfig,
    counts: &CorpusCounts,
    out_dir: impl AsRef<Path>,
) -> Result<PathBuf> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    for sub in ["images", "masks"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let plan = plan_corpus(config, counts);
    let rows = plan
        .par_iter()
        .map(|entry| {
            let sample = synth_image(entry.label, entry.concentration, entry.seed, config)?;
            let rel = format!("images/{}", entry.file_name());
            write_pgm(&sample.image, out_dir.join(&rel))?;
            sample.mask.write(out_dir.join(mask_path_for(&rel)))?;
            Ok(ManifestRow {
                path: rel,
                label: entry.label,
                concentration: entry.concentration,
                timepoint: 30,
                split: entry.split,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = out_dir.join(MANIFEST_NAME);
    write_manifest(&rows, &manifest)?;
    Ok(manifest)
}

//! Grayscale image I/O, label masks, patch extraction and the dataset manifest.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::classifier::SampleLabel;
use crate::error::{Error, Result};
use crate::seed;

pub const MAX_DIMENSION: usize = 8192;

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || width > MAX_DIMENSION || height > MAX_DIMENSION {
        return Err(Error::DimensionOverflow { width, height });
    }
    Ok(())
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::dims(width * height, data.len()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        check_dims(width, height)?;
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

/// Per-pixel segmentation class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum PixelClass {
    Background = 0,
    Boundary = 1,
    Interior = 2,
}

impl PixelClass {
    pub const ALL: [PixelClass; 3] = [
        PixelClass::Background,
        PixelClass::Boundary,
        PixelClass::Interior,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Gray level used when a mask is stored as PGM.
    pub fn gray(self) -> u8 {
        match self {
            PixelClass::Background => 0,
            PixelClass::Boundary => 128,
            PixelClass::Interior => 255,
        }
    }

    pub fn from_gray(v: u8) -> Option<Self> {
        match v {
            0 => Some(PixelClass::Background),
            128 => Some(PixelClass::Boundary),
            255 => Some(PixelClass::Interior),
            _ => None,
        }
    }
}

/// Per-pixel 3-class map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    classes: Vec<PixelClass>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, classes: Vec<PixelClass>) -> Result<Self> {
        check_dims(width, height)?;
        if classes.len() != width * height {
            return Err(Error::dims(width * height, classes.len()));
        }
        Ok(Self {
            width,
            height,
            classes,
        })
    }

    pub fn filled(width: usize, height: usize, class: PixelClass) -> Result<Self> {
        Self::new(width, height, vec![class; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> &[PixelClass] {
        &self.classes
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> PixelClass {
        self.classes[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, class: PixelClass) {
        self.classes[y * self.width + x] = class;
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.classes.iter().map(|c| c.gray()).collect(),
        }
    }

    /// Decodes the {0, 128, 255} mask encoding.
    pub fn from_image(image: &GrayImage) -> Result<Self> {
        let classes = image
            .data
            .iter()
            .map(|&v| {
                PixelClass::from_gray(v).ok_or_else(|| {
                    Error::InvalidArgument(format!("mask value {v} not in {{0,128,255}}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(image.width, image.height, classes)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_image(&read_pgm(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_pgm(&self.to_image(), path)
    }
}

// ---------------------------------------------------------------------------
// PGM

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u64> {
        let tok = self
            .token()
            .ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| {
                Error::MalformedHeader(format!("bad {what} {:?}", String::from_utf8_lossy(tok)))
            })
    }
}

/// Decodes a P2 or P5 graymap with maxval at most 255.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut r = HeaderReader { bytes, pos: 0 };
    let binary = match r.token() {
        Some(b"P5") => true,
        Some(b"P2") => false,
        other => {
            return Err(Error::MalformedHeader(format!(
                "bad magic {:?}",
                other.map(String::from_utf8_lossy)
            )))
        }
    };
    let width = r.number("width")?;
    let height = r.number("height")?;
    let maxval = r.number("maxval")?;
    if width == 0 || height == 0 || width > MAX_DIMENSION as u64 || height > MAX_DIMENSION as u64 {
        return Err(Error::DimensionOverflow {
            width: width.min(usize::MAX as u64) as usize,
            height: height.min(usize::MAX as u64) as usize,
        });
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedMaxval(maxval.min(u32::MAX as u64) as u32));
    }
    let (width, height) = (width as usize, height as usize);
    let expected = width * height;

    let data = if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        let start = r.pos + 1;
        let raster = bytes.get(start..).unwrap_or(&[]);
        if raster.len() < expected {
            return Err(Error::TruncatedData {
                expected,
                found: raster.len(),
            });
        }
        raster[..expected].to_vec()
    } else {
        let mut data = Vec::with_capacity(expected);
        while data.len() < expected {
            match r.token() {
                Some(tok) => {
                    let v = std::str::from_utf8(tok)
                        .ok()
                        .and_then(|s| s.parse::<u64>().ok())
                        .ok_or_else(|| {
                            Error::MalformedHeader(format!(
                                "bad sample {:?}",
                                String::from_utf8_lossy(tok)
                            ))
                        })?;
                    if v > maxval {
                        return Err(Error::MalformedHeader(format!(
                            "sample {v} exceeds maxval {maxval}"
                        )));
                    }
                    data.push(v as u8);
                }
                None => {
                    return Err(Error::TruncatedData {
                        expected,
                        found: data.len(),
                    })
                }
            }
        }
        data
    };
    GrayImage::new(width, height, data)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes)
}

/// Binary P5 encoding: `P5\n<w> <h>\n255\n` followed by the raw bytes.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.data);
    out
}

pub fn write_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_pgm(image))
        .map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Patches

/// Half-sample symmetric reflection of `i` into `0..n` (edge pixels repeat).
#[inline]
pub fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Flat vector of normalized intensities from a square, odd-sided patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchVector {
    side: usize,
    values: Vec<f64>,
}

impl PatchVector {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Row-major pixel offsets of a square patch, relative to its center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchLayout {
    side: usize,
    offsets: Vec<(isize, isize)>,
}

impl PatchLayout {
    pub fn new(side: usize) -> Result<Self> {
        if side % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "patch side {side} must be odd"
            )));
        }
        let r = (side / 2) as isize;
        let offsets = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .collect();
        Ok(Self { side, offsets })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Raw byte of patch feature `feature` for the patch centered at `(cx, cy)`.
    #[inline]
    pub fn byte_at(&self, image: &GrayImage, cx: usize, cy: usize, feature: usize) -> u8 {
        let (dx, dy) = self.offsets[feature];
        let x = mirror(cx as isize + dx, image.width);
        let y = mirror(cy as isize + dy, image.height);
        image.get(x, y)
    }
}

pub fn extract_patch(image: &GrayImage, cx: usize, cy: usize, side: usize) -> Result<PatchVector> {
    let layout = PatchLayout::new(side)?;
    if cx >= image.width || cy >= image.height {
        return Err(Error::InvalidArgument(format!(
            "patch center ({cx},{cy}) outside {}x{} image",
            image.width, image.height
        )));
    }
    let values = (0..layout.len())
        .map(|f| f64::from(layout.byte_at(image, cx, cy, f)) / 255.0)
        .collect();
    Ok(PatchVector { side, values })
}

/// A sampled training pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelSample {
    pub x: usize,
    pub y: usize,
    pub class: PixelClass,
}

/// Class-stratified uniform sampling without replacement of up to `per_class`
/// pixel coordinates per class. Classes are emitted in index order.
pub fn sample_training_pixels(
    truth: &LabelMask,
    per_class: usize,
    rng_seed: u64,
) -> Result<Vec<PixelSample>> {
    if per_class == 0 {
        return Err(Error::InvalidArgument(
            "per_class must be at least 1".into(),
        ));
    }
    let mut rng = seed::rng(rng_seed);
    let mut out = Vec::new();
    for class in PixelClass::ALL {
        let pool: Vec<usize> = truth
            .classes
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == class)
            .map(|(i, _)| i)
            .collect();
        let take = per_class.min(pool.len());
        out.extend(
            index::sample(&mut rng, pool.len(), take)
                .into_iter()
                .map(|k| {
                    let i = pool[k];
                    PixelSample {
                        x: i % truth.width,
                        y: i / truth.width,
                        class,
                    }
                }),
        );
    }
    Ok(out)
}

pub fn sample_training_patches(
    image: &GrayImage,
    truth: &LabelMask,
    per_class: usize,
    side: usize,
    rng_seed: u64,
) -> Result<Vec<(PatchVector, PixelClass)>> {
    if image.width != truth.width || image.height != truth.height {
        return Err(Error::dims(
            format!("{}x{}", image.width, image.height),
            format!("{}x{}", truth.width, truth.height),
        ));
    }
    sample_training_pixels(truth, per_class, rng_seed)?
        .into_iter()
        .map(|s| Ok((extract_patch(image, s.x, s.y, side)?, s.class)))
        .collect()
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Concentration {
    #[serde(rename = "0.1")]
    Low,
    #[serde(rename = "0.3")]
    High,
}

impl Concentration {
    pub const ALL: [Concentration; 2] = [Concentration::Low, Concentration::High];

    pub fn value(self) -> f64 {
        match self {
            Concentration::Low => 0.1,
            Concentration::High => 0.3,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Concentration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Concentration::Low => "0.1",
            Concentration::High => "0.3",
        })
    }
}

impl FromStr for Concentration {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "0.1" => Ok(Concentration::Low),
            "0.3" => Ok(Concentration::High),
            other => Err(Error::InvalidArgument(format!(
                "concentration {other:?} not in {{0.1, 0.3}}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One row of the dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub label: SampleLabel,
    pub concentration: Concentration,
    pub timepoint: u32,
    pub split: Split,
}

pub const MANIFEST_HEADER: &str = "path,label,concentration,timepoint,split";

pub fn write_manifest(rows: &[ManifestRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::MalformedManifest(format!("{other:?}")),
    };
    // Header is written by hand so that an empty manifest still carries it.
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(MANIFEST_HEADER.split(','))
        .map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::MalformedManifest(format!("{other:?}")),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedManifest(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if headers != MANIFEST_HEADER {
        return Err(Error::MalformedManifest(format!(
            "unexpected header {headers:?}"
        )));
    }
    let rows = reader
        .deserialize::<ManifestRow>()
        .map(|r| r.map_err(|e| Error::MalformedManifest(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    if let Some(bad) = rows.iter().find(|r| r.timepoint != 0 && r.timepoint != 30) {
        return Err(Error::MalformedManifest(format!(
            "timepoint {} not in {{0, 30}}",
            bad.timepoint
        )));
    }
    Ok(rows)
}

/// Truth masks live beside the images: `images/x.pgm` pairs with `masks/x.pgm`.
pub fn mask_path_for(image_rel_path: &str) -> String {
    let p = Path::new(image_rel_path);
    let name = p
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let parent = p.parent().and_then(|d| d.parent()).unwrap_or(Path::new(""));
    parent
        .join("masks")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

/// Resolves a manifest-relative path.
pub fn resolve(manifest: &Path, rel: &str) -> PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).join(rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_small_p5() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 128, 255, 7]);
        let img = parse_pgm(&bytes).unwrap();
        assert_eq!(img, GrayImage::new(2, 2, vec![0, 128, 255, 7]).unwrap());
    }

    #[test]
    fn decodes_p2_with_comments() {
        let text = b"P2\n# made by hand\n3 1 # trailing\n255\n1 2\n# mid\n 3\n";
        let img = parse_pgm(text).unwrap();
        assert_eq!(img.data(), &[1, 2, 3]);
    }

    #[test]
    fn p5_raster_may_start_with_whitespace_byte() {
        let mut bytes = b"P5\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[b'\n', b' ']);
        assert_eq!(parse_pgm(&bytes).unwrap().data(), &[10, 32]);
    }

    #[test]
    fn rejects_wide_maxval() {
        let err = parse_pgm(b"P5\n1 1\n65535\n\0\0").unwrap_err();
        assert!(matches!(err, Error::UnsupportedMaxval(65535)));
        assert!(err.to_string().contains("unsupported maxval"));
    }

    #[test]
    fn distinct_parse_errors() {
        assert!(matches!(
            parse_pgm(b"P6\n1 1\n255\n\0"),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_pgm(b"P5\n1 x\n255\n\0"),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_pgm(b"P5\n3 3\n255\n\0\0"),
            Err(Error::TruncatedData {
                expected: 9,
                found: 2
            })
        ));
        assert!(matches!(
            parse_pgm(b"P2\n2 1\n255\n4"),
            Err(Error::TruncatedData { .. })
        ));
        assert!(matches!(
            parse_pgm(b"P5\n9000 1\n255\n"),
            Err(Error::DimensionOverflow { .. })
        ));
        assert!(matches!(
            parse_pgm(b"P5\n0 1\n255\n"),
            Err(Error::DimensionOverflow { .. })
        ));
    }

    #[test]
    fn writer_emits_exact_bytes() {
        let img = GrayImage::new(1, 1, vec![42]).unwrap();
        assert_eq!(encode_pgm(&img), b"P5\n1 1\n255\n\x2A".to_vec());
    }

    #[test]
    fn write_to_unwritable_path_is_io_error() {
        let img = GrayImage::new(1, 1, vec![0]).unwrap();
        let err = write_pgm(&img, "/nonexistent-dir/sub/x.pgm").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn rejects_oversized_images() {
        assert!(GrayImage::new(8193, 1, vec![0; 8193]).is_err());
        assert!(GrayImage::new(2, 2, vec![0; 3]).is_err());
    }

    #[test]
    fn constant_patch() {
        let img = GrayImage::from_fn(30, 30, |_, _| 255).unwrap();
        let p = extract_patch(&img, 0, 29, 21).unwrap();
        assert_eq!(p.values().len(), 441);
        assert!(p.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn single_pixel_mirrors_everywhere() {
        let img = GrayImage::new(1, 1, vec![100]).unwrap();
        let p = extract_patch(&img, 0, 0, 3).unwrap();
        assert_eq!(p.values(), &[100.0 / 255.0; 9]);
    }

    #[test]
    fn ramp_corner_patch_matches_hand_mirrored_grid() {
        // value = 10*y + x
        let img = GrayImage::from_fn(3, 3, |x, y| (10 * y + x) as u8).unwrap();
        let p = extract_patch(&img, 0, 0, 3).unwrap();
        // x in {-1,0,1} -> {0,0,1}; y likewise.
        let expected: Vec<f64> = [0, 0, 1, 0, 0, 1, 10, 10, 11]
            .iter()
            .map(|&v| v as f64 / 255.0)
            .collect();
        assert_eq!(p.values(), expected.as_slice());
    }

    #[test]
    fn patch_argument_errors() {
        let img = GrayImage::new(2, 2, vec![0; 4]).unwrap();
        assert!(extract_patch(&img, 0, 0, 4).is_err());
        assert!(extract_patch(&img, 2, 0, 3).is_err());
    }

    #[test]
    fn mirror_reflects_far_outside() {
        assert_eq!(mirror(-1, 5), 0);
        assert_eq!(mirror(-2, 5), 1);
        assert_eq!(mirror(5, 5), 4);
        assert_eq!(mirror(6, 5), 3);
        assert_eq!(mirror(-12, 3), 0);
        assert_eq!(mirror(17, 1), 0);
    }

    fn striped_mask() -> LabelMask {
        // 6x6: rows 0-1 background, 2-3 boundary, 4-5 interior
        let classes = (0..36)
            .map(|i| PixelClass::from_index((i / 6) / 2).unwrap())
            .collect();
        LabelMask::new(6, 6, classes).unwrap()
    }

    #[test]
    fn stratified_sampling_counts() {
        let img = GrayImage::from_fn(6, 6, |x, y| (x * 6 + y) as u8).unwrap();
        let mask = striped_mask();
        let s = sample_training_patches(&img, &mask, 5, 3, 1).unwrap();
        assert_eq!(s.len(), 15);
        for class in PixelClass::ALL {
            assert_eq!(s.iter().filter(|(_, c)| *c == class).count(), 5);
        }
    }

    #[test]
    fn empty_stratum_is_absent() {
        let mut mask = striped_mask();
        for y in 2..4 {
            for x in 0..6 {
                mask.set(x, y, PixelClass::Background);
            }
        }
        let s = sample_training_pixels(&mask, 4, 3).unwrap();
        assert!(s.iter().all(|p| p.class != PixelClass::Boundary));
        assert_eq!(s.len(), 8);
    }

    #[test]
    fn sampling_is_seeded_and_labels_match_truth() {
        let mask = striped_mask();
        let a = sample_training_pixels(&mask, 7, 11).unwrap();
        assert_eq!(a, sample_training_pixels(&mask, 7, 11).unwrap());
        assert_ne!(a, sample_training_pixels(&mask, 7, 12).unwrap());
        for p in &a {
            assert_eq!(mask.get(p.x, p.y), p.class);
        }
        let img = GrayImage::new(5, 5, vec![0; 25]).unwrap();
        assert!(sample_training_patches(&img, &mask, 1, 3, 0).is_err());
    }

    #[test]
    fn mask_pgm_encoding() {
        let mask = striped_mask();
        let img = mask.to_image();
        assert_eq!(&img.data()[..6], &[0; 6]);
        assert_eq!(img.get(0, 2), 128);
        assert_eq!(img.get(0, 5), 255);
        assert_eq!(LabelMask::from_image(&img).unwrap(), mask);
        let bad = GrayImage::new(1, 1, vec![3]).unwrap();
        assert!(LabelMask::from_image(&bad).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let rows = vec![
            ManifestRow {
                path: "images/a.pgm".into(),
                label: SampleLabel::Sickled,
                concentration: Concentration::Low,
                timepoint: 30,
                split: Split::Train,
            },
            ManifestRow {
                path: "images/b.pgm".into(),
                label: SampleLabel::Normal,
                concentration: Concentration::High,
                timepoint: 0,
                split: Split::Test,
            },
        ];
        write_manifest(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "path,label,concentration,timepoint,split\n\
             images/a.pgm,diseased,0.1,30,train\n\
             images/b.pgm,normal,0.3,0,test\n"
        );
        assert_eq!(read_manifest(&path).unwrap(), rows);
        assert_eq!(mask_path_for("images/a.pgm"), "masks/a.pgm");
    }

    #[test]
    fn manifest_rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(
            &path,
            "path,label,concentration,timepoint,split\na.pgm,sick,0.1,30,train\n",
        )
        .unwrap();
        assert!(matches!(
            read_manifest(&path),
            Err(Error::MalformedManifest(_))
        ));
        std::fs::write(
            &path,
            "path,label,concentration,timepoint,split\na.pgm,trait,0.1,15,train\n",
        )
        .unwrap();
        assert!(matches!(
            read_manifest(&path),
            Err(Error::MalformedManifest(_))
        ));
        std::fs::write(&path, "path,label\na.pgm,trait\n").unwrap();
        assert!(matches!(
            read_manifest(&path),
            Err(Error::MalformedManifest(_))
        ));
    }
}

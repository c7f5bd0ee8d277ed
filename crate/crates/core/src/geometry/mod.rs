//! Binary morphology and shape measurement of segmented cells.
//!
//! The cell pipeline is `interior_binary → fill_holes → connected_components →
//! remove_border_components → area filter → descriptors`.
//!
//! Two convex hulls are measured per region. The *corner hull* spans the four
//! corners of every pixel square; its area bounds the pixel count from above
//! and it defines [`HullMetrics::hull_area`] and [`HullMetrics::max_feret`].
//! The *lattice hull* spans pixel centers. Shape descriptors use the lattice
//! hull. By Pick's theorem a convex digital region has more pixels than its
//! lattice-hull area, so its solidity clamps to exactly 1. Its lattice Feret
//! diameter is also unbiased enough that digitized discs score roundness
//! ≈ 1 at cell-sized radii, whereas corner extremes inflate the diameter by
//! about one pixel diagonal.

mod contour;
mod hull;

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

pub use contour::region_perimeter;
pub use hull::{convex_hull, max_squared_distance, twice_area};

use crate::error::{Error, Result};
use crate::imaging::{LabelMask, PixelClass};

/// Default minimum region area in pixels; smaller components are speckle.
pub const DEFAULT_MIN_REGION_AREA: usize = 20;

/// Default solidity threshold below which cells are excluded from histograms.
pub const DEFAULT_SOLIDITY_THRESHOLD: f64 = 0.8;

pub const ROUNDNESS_CLAMP: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(
                "mask dimensions must be positive".into(),
            ));
        }
        if bits.len() != width * height {
            return Err(Error::dims(width * height, bits.len()));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let bits = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Interior pixels only; boundary pixels separate touching cells.
pub fn interior_binary(mask: &LabelMask) -> BinaryMask {
    BinaryMask {
        width: mask.width(),
        height: mask.height(),
        bits: mask
            .classes()
            .iter()
            .map(|&c| c == PixelClass::Interior)
            .collect(),
    }
}

/// Axis-aligned pixel bounds, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

/// One connected foreground component. Pixels are stored in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pixels: Vec<(usize, usize)>,
    bbox: BoundingBox,
}

impl Region {
    pub fn from_pixels(mut pixels: Vec<(usize, usize)>) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::InvalidArgument(
                "region must contain at least one pixel".into(),
            ));
        }
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        pixels.dedup();
        let bbox = BoundingBox {
            min_x: pixels.iter().map(|p| p.0).min().unwrap(),
            min_y: pixels[0].1,
            max_x: pixels.iter().map(|p| p.0).max().unwrap(),
            max_y: pixels[pixels.len() - 1].1,
        };
        Ok(Self { pixels, bbox })
    }

    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn touches_border(&self, width: usize, height: usize) -> bool {
        self.bbox.min_x == 0
            || self.bbox.min_y == 0
            || self.bbox.max_x + 1 >= width
            || self.bbox.max_y + 1 >= height
    }

    pub fn measure(&self) -> Measurements {
        let hull = hull_metrics(&self.pixels);
        Measurements {
            area: self.area(),
            perimeter: region_perimeter(&self.pixels),
            hull,
        }
    }
}

const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];
const NEIGHBORS_4: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];

/// 8-connected flood labeling. Regions are ordered by their first pixel in a
/// row-major scan.
pub fn connected_components(mask: &BinaryMask) -> Vec<Region> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            pixels.push((x, y));
            for (dx, dy) in NEIGHBORS_8 {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.bits[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        regions
            .push(Region::from_pixels(pixels).expect("flood fill yields at least the seed pixel"));
    }
    regions
}

/// Background pixels not 4-connected to the image border become foreground.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            let border = x == 0 || y == 0 || x + 1 == w || y + 1 == h;
            let i = y * w + x;
            if border && !mask.bits[i] {
                outside[i] = true;
                queue.push_back(i);
            }
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        for (dx, dy) in NEIGHBORS_4 {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                continue;
            }
            let j = ny as usize * w + nx as usize;
            if !mask.bits[j] && !outside[j] {
                outside[j] = true;
                queue.push_back(j);
            }
        }
    }
    BinaryMask {
        width: w,
        height: h,
        bits: outside.iter().map(|&o| !o).collect(),
    }
}

/// Drops every region with a pixel on the outermost row or column.
pub fn remove_border_components(regions: Vec<Region>, width: usize, height: usize) -> Vec<Region> {
    regions
        .into_iter()
        .filter(|r| !r.touches_border(width, height))
        .collect()
}

/// Convex-hull measurements of a pixel region (see the module docs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullMetrics {
    /// Area of the hull of pixel-square corners.
    pub hull_area: f64,
    /// Largest distance between pixel-square corners.
    pub max_feret: f64,
    /// Area of the hull of pixel centers (0 for collinear regions).
    pub lattice_hull_area: f64,
    /// Largest distance between pixel centers.
    pub lattice_feret: f64,
}

/// Hull metrics of a non-empty pixel set. Only the leftmost and rightmost
/// pixel of each row can be hull vertices, so only those are fed to the hull.
pub fn hull_metrics(pixels: &[(usize, usize)]) -> HullMetrics {
    let mut rows: Vec<(i64, i64, i64)> = Vec::new(); // (y, min_x, max_x)
    let mut sorted: Vec<(usize, usize)> = pixels.to_vec();
    sorted.sort_unstable_by_key(|&(x, y)| (y, x));
    for &(x, y) in &sorted {
        let (x, y) = (x as i64, y as i64);
        match rows.last_mut() {
            Some(r) if r.0 == y => {
                r.1 = r.1.min(x);
                r.2 = r.2.max(x);
            }
            _ => rows.push((y, x, x)),
        }
    }
    let mut corners = Vec::with_capacity(rows.len() * 4);
    let mut centers = Vec::with_capacity(rows.len() * 2);
    for &(y, lo, hi) in &rows {
        corners.extend([(lo, y), (lo, y + 1), (hi + 1, y), (hi + 1, y + 1)]);
        centers.extend([(lo, y), (hi, y)]);
    }
    let (hull_area, max_feret) = hull::area_and_diameter(corners);
    let (lattice_hull_area, lattice_feret) = hull::area_and_diameter(centers);
    HullMetrics {
        hull_area,
        max_feret,
        lattice_hull_area,
        lattice_feret,
    }
}

/// Raw size measurements of a region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurements {
    pub area: usize,
    pub perimeter: f64,
    pub hull: HullMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Descriptors {
    pub form_factor: f64,
    pub roundness: f64,
    pub solidity: f64,
}

/// `form_factor = 4πA/P²`, `roundness = 4A/(πF²)` clamped to at most 1.1 with
/// F the lattice Feret diameter (at least 1), and `solidity = min(A/H, 1)`
/// with H the lattice-hull area (1 when the hull is degenerate).
pub fn descriptors(m: &Measurements) -> Descriptors {
    let area = m.area as f64;
    let feret = m.hull.lattice_feret.max(1.0);
    let solidity = if m.hull.lattice_hull_area > 0.0 {
        (area / m.hull.lattice_hull_area).min(1.0)
    } else {
        1.0
    };
    Descriptors {
        form_factor: 4.0 * PI * area / (m.perimeter * m.perimeter),
        roundness: (4.0 * area / (PI * feret * feret)).min(ROUNDNESS_CLAMP),
        solidity,
    }
}

/// A measured cell from a label mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub region_id: usize,
    pub measurements: Measurements,
    pub descriptors: Descriptors,
}

/// Runs the full measurement pipeline on a label mask.
pub fn measure_cells(mask: &LabelMask, min_region_area: usize) -> Vec<CellRecord> {
    let filled = fill_holes(&interior_binary(mask));
    let regions =
        remove_border_components(connected_components(&filled), mask.width(), mask.height());
    regions
        .iter()
        .filter(|r| r.area() >= min_region_area)
        .enumerate()
        .map(|(region_id, r)| {
            let measurements = r.measure();
            CellRecord {
                region_id,
                measurements,
                descriptors: descriptors(&measurements),
            }
        })
        .collect()
}

/// Normalized histogram over `bins` uniform bins on `[lo, hi]`. Values are
/// clamped into range; bins are half-open except the last, which is closed.
pub fn build_histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if bins == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "invalid histogram layout {bins} bins over [{lo}, {hi}]"
        )));
    }
    if values.is_empty() {
        return Err(Error::NoMeasurableCells);
    }
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v.is_nan() {
            return Err(Error::InvalidArgument("NaN in histogram input".into()));
        }
        let t = (v.clamp(lo, hi) - lo) / (hi - lo);
        let bin = ((t * bins as f64).floor() as usize).min(bins - 1);
        counts[bin] += 1;
    }
    let total = values.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

/// `region_id,area,perimeter,form_factor,roundness,solidity,kept` with `kept`
/// marking cells at or above the solidity threshold.
pub fn descriptor_csv(cells: &[CellRecord], solidity_threshold: f64) -> String {
    let mut out = String::from("region_id,area,perimeter,form_factor,roundness,solidity,kept\n");
    for c in cells {
        let d = &c.descriptors;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.region_id,
            c.measurements.area,
            c.measurements.perimeter,
            d.form_factor,
            d.roundness,
            d.solidity,
            u8::from(d.solidity >= solidity_threshold)
        );
    }
    out
}

pub fn write_descriptor_csv(
    cells: &[CellRecord],
    solidity_threshold: f64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, descriptor_csv(cells, solidity_threshold)).map_err(|e| Error::io(path, e))
}

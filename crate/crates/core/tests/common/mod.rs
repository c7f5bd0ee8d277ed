//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sickle_core::classifier::{SampleLabel, SubjectDecision};
use sickle_core::forest::{train_forest, Dataset, Forest, ForestConfig};
use sickle_core::geometry::{connected_components, fill_holes, BinaryMask};
use sickle_core::imaging::{LabelMask, PixelClass};
use sickle_core::svm::dual_objective;

// ---------------------------------------------------------------- forest

/// 200 samples, 5 features, 3 classes; class depends on features 0 and 2
/// with label noise, the rest is filler.
pub fn forest_fixture() -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut rows = Vec::with_capacity(200);
    let mut labels = Vec::with_capacity(200);
    for _ in 0..200 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut k = if x[0] < 0.4 {
            0
        } else if x[2] < 0.5 {
            1
        } else {
            2
        };
        if rng.random::<f64>() < 0.1 {
            k = rng.random_range(0..3);
        }
        rows.push(x);
        labels.push(k);
    }
    (rows, labels)
}

pub fn fixture_forest() -> Forest {
    let (rows, labels) = forest_fixture();
    let data = Dataset::new(&rows, &labels, 3).unwrap();
    train_forest(
        &data,
        &ForestConfig {
            tree_count: 25,
            max_depth: 5,
            seed: 3,
            ..Default::default()
        },
    )
    .unwrap()
}

/// Walks the serialized trees directly: `{"split":{f,theta,left,right}}` or
/// `{"leaf":[counts]}`, averaging per-tree class frequencies.
pub fn rewalk_predict(model: &Value, x: &[f64]) -> usize {
    let k = model["class_count"].as_u64().unwrap() as usize;
    let trees = model["trees"].as_array().unwrap();
    let mut votes = vec![0.0f64; k];
    for tree in trees {
        let mut node = tree;
        let leaf = loop {
            if let Some(counts) = node.get("leaf") {
                break counts
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|c| c.as_u64().unwrap())
                    .collect::<Vec<_>>();
            }
            let s = &node["split"];
            let f = s["f"].as_u64().unwrap() as usize;
            let theta = s["theta"].as_f64().unwrap();
            node = if x[f] < theta {
                &s["left"]
            } else {
                &s["right"]
            };
        };
        let n: u64 = leaf.iter().sum();
        for (v, c) in votes.iter_mut().zip(&leaf) {
            *v += *c as f64 / n as f64;
        }
    }
    for v in votes.iter_mut() {
        *v /= trees.len() as f64;
    }
    (0..k).fold(0, |best, i| if votes[i] > votes[best] { i } else { best })
}

/// Information gain written straight from the definition.
pub fn direct_gain(parent: &[u64], children: &[Vec<u64>]) -> f64 {
    fn h(counts: &[u64]) -> f64 {
        let n: u64 = counts.iter().sum();
        let mut s = 0.0;
        for &c in counts {
            if c > 0 {
                let p = c as f64 / n as f64;
                s -= p * p.ln() / std::f64::consts::LN_2;
            }
        }
        s
    }
    let n: u64 = parent.iter().sum();
    let mut rest = 0.0;
    for c in children {
        let m: u64 = c.iter().sum();
        if m > 0 {
            rest += m as f64 / n as f64 * h(c);
        }
    }
    h(parent) - rest
}

/// A random parent histogram split into 2..=4 children.
pub fn random_partition(rng: &mut ChaCha8Rng) -> (Vec<u64>, Vec<Vec<u64>>) {
    let k = rng.random_range(2..=4);
    let parts = rng.random_range(2..=4);
    let parent: Vec<u64> = (0..k).map(|_| rng.random_range(0..60)).collect();
    let mut children = vec![vec![0u64; k]; parts];
    for (class, &count) in parent.iter().enumerate() {
        for _ in 0..count {
            children[rng.random_range(0..parts)][class] += 1;
        }
    }
    if parent.iter().all(|&c| c == 0) {
        return random_partition(rng);
    }
    (parent, children)
}

// ---------------------------------------------------------------- geometry

pub fn mask_from_fn(w: usize, h: usize, inside: impl Fn(f64, f64) -> bool) -> LabelMask {
    let classes = (0..w * h)
        .map(|i| {
            if inside((i % w) as f64, (i / w) as f64) {
                PixelClass::Interior
            } else {
                PixelClass::Background
            }
        })
        .collect();
    LabelMask::new(w, h, classes).unwrap()
}

pub fn disc_mask(r: f64) -> LabelMask {
    let side = (2.0 * r).ceil() as usize + 7;
    let c = side as f64 / 2.0;
    mask_from_fn(side, side, |x, y| {
        (x - c).powi(2) + (y - c).powi(2) <= r * r
    })
}

/// Disc of radius `r` with a disc of radius `cut·r` removed at `offset·r`
/// from its centre.
pub fn crescent_mask(r: f64, offset: f64, cut: f64) -> LabelMask {
    let side = (2.0 * r).ceil() as usize + 7;
    let c = side as f64 / 2.0;
    mask_from_fn(side, side, |x, y| {
        let inside = (x - c).powi(2) + (y - c).powi(2) <= r * r;
        let cutter = (x - c - offset * r).powi(2) + (y - c).powi(2) <= (cut * r).powi(2);
        inside && !cutter
    })
}

/// Convex pixel shapes: rectangles, a diamond, an octagon and a disc.
pub fn convex_masks() -> Vec<(String, LabelMask)> {
    let mut out = Vec::new();
    for (w, h) in [(5, 5), (12, 7), (30, 4)] {
        out.push((
            format!("rect {w}x{h}"),
            mask_from_fn(w + 6, h + 6, |x, y| {
                (3.0..3.0 + w as f64).contains(&x) && (3.0..3.0 + h as f64).contains(&y)
            }),
        ));
    }
    out.push((
        "diamond".into(),
        mask_from_fn(31, 31, |x, y| (x - 15.0).abs() + (y - 15.0).abs() <= 11.0),
    ));
    out.push((
        "octagon".into(),
        mask_from_fn(31, 31, |x, y| {
            let (dx, dy) = ((x - 15.0).abs(), (y - 15.0).abs());
            dx <= 10.0 && dy <= 10.0 && dx + dy <= 14.0
        }),
    ));
    out.push(("disc".into(), disc_mask(12.0)));
    out
}

pub fn random_binary(rng: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> BinaryMask {
    BinaryMask::new(
        w,
        h,
        (0..w * h).map(|_| rng.random::<f64>() < density).collect(),
    )
    .unwrap()
}

/// Background pixels that cannot reach the image border through 4-connected
/// background, found by brute-force relaxation rather than a queue.
pub fn enclosed_background(mask: &BinaryMask) -> Vec<bool> {
    let (w, h) = (mask.width(), mask.height());
    let mut reach = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) && (x == 0 || y == 0 || x == w - 1 || y == h - 1) {
                reach[y * w + x] = true;
            }
        }
    }
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if reach[i] || mask.get(x, y) {
                    continue;
                }
                let near = (x > 0 && reach[i - 1])
                    || (x + 1 < w && reach[i + 1])
                    || (y > 0 && reach[i - w])
                    || (y + 1 < h && reach[i + w]);
                if near {
                    reach[i] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (0..w * h).map(|i| !mask.bits()[i] && !reach[i]).collect()
}

/// Extensive, idempotent, and equal to the mask plus its enclosed background.
pub fn check_fill_holes(mask: &BinaryMask) -> Result<(), String> {
    let filled = fill_holes(mask);
    if mask
        .bits()
        .iter()
        .zip(filled.bits())
        .any(|(a, b)| *a && !*b)
    {
        return Err("fill removed foreground".into());
    }
    if fill_holes(&filled).bits() != filled.bits() {
        return Err("fill is not idempotent".into());
    }
    let holes = enclosed_background(mask);
    for i in 0..mask.bits().len() {
        if filled.bits()[i] != (mask.bits()[i] || holes[i]) {
            return Err(format!("pixel {i} disagrees with the enclosure oracle"));
        }
    }
    Ok(())
}

fn eight_neighbours(
    x: usize,
    y: usize,
    w: usize,
    h: usize,
) -> impl Iterator<Item = (usize, usize)> {
    (-1i64..=1)
        .flat_map(|dy| (-1i64..=1).map(move |dx| (dx, dy)))
        .filter(|&d| d != (0, 0))
        .map(move |(dx, dy)| (x as i64 + dx, y as i64 + dy))
        .filter(move |&(nx, ny)| nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h)
        .map(|(nx, ny)| (nx as usize, ny as usize))
}

/// Regions are disjoint, cover the foreground, are each 8-connected, and no
/// two touch.
pub fn check_partition(mask: &BinaryMask) -> Result<(), String> {
    let (w, h) = (mask.width(), mask.height());
    let regions = connected_components(mask);
    let mut owner = vec![usize::MAX; w * h];
    for (id, r) in regions.iter().enumerate() {
        for &(x, y) in r.pixels() {
            if !mask.get(x, y) {
                return Err(format!("region {id} holds background ({x},{y})"));
            }
            if owner[y * w + x] != usize::MAX {
                return Err(format!("({x},{y}) in two regions"));
            }
            owner[y * w + x] = id;
        }
    }
    if owner.iter().filter(|&&o| o != usize::MAX).count() != mask.count() {
        return Err("foreground not covered".into());
    }
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            for (nx, ny) in eight_neighbours(x, y, w, h) {
                if mask.get(nx, ny) && owner[ny * w + nx] != owner[y * w + x] {
                    return Err(format!("({x},{y}) and ({nx},{ny}) touch across regions"));
                }
            }
        }
    }
    for (id, r) in regions.iter().enumerate() {
        let px = r.pixels();
        let mut seen = vec![false; px.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            let (x, y) = px[i];
            for (nx, ny) in eight_neighbours(x, y, w, h) {
                if let Some(j) = px.iter().position(|&p| p == (nx, ny)) {
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if !seen.iter().all(|&s| s) {
            return Err(format!("region {id} is not connected"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- fusion

/// The declared table, row by row: p1 then p2 in label order.
pub const FUSION_TABLE: [(SampleLabel, SampleLabel, SubjectDecision); 9] = {
    use SampleLabel::*;
    [
        (Sickled, Sickled, SubjectDecision::Diseased),
        (Sickled, Trait, SubjectDecision::Diseased),
        (Sickled, Normal, SubjectDecision::Diseased),
        (Trait, Sickled, SubjectDecision::Diseased),
        (Trait, Trait, SubjectDecision::Diseased),
        (Trait, Normal, SubjectDecision::Trait),
        (Normal, Sickled, SubjectDecision::Trait),
        (Normal, Trait, SubjectDecision::Trait),
        (Normal, Normal, SubjectDecision::Normal),
    ]
};

pub fn severity(l: SampleLabel) -> u8 {
    match l {
        SampleLabel::Normal => 0,
        SampleLabel::Trait => 1,
        SampleLabel::Sickled => 2,
    }
}

/// Pairs `(p1, p2) -> (q1, q2)` where one input got sicker and the decision
/// moved toward Normal.
pub fn monotonicity_violations(
    fuse: impl Fn(SampleLabel, SampleLabel) -> SubjectDecision,
) -> Vec<String> {
    let mut bad = Vec::new();
    for p1 in SampleLabel::ALL {
        for p2 in SampleLabel::ALL {
            let d = fuse(p1, p2);
            for q in SampleLabel::ALL {
                if severity(q) > severity(p1) && fuse(q, p2) < d {
                    bad.push(format!("p1 {p1} -> {q} with p2 {p2}"));
                }
                if severity(q) > severity(p2) && fuse(p1, q) < d {
                    bad.push(format!("p2 {p2} -> {q} with p1 {p1}"));
                }
            }
        }
    }
    bad
}

// ---------------------------------------------------------------- svm

pub fn xor() -> (Vec<Vec<f64>>, Vec<f64>) {
    (
        vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ],
        vec![-1.0, -1.0, 1.0, 1.0],
    )
}

/// Grid search over α1..α3 at step 0.01·C; α4 follows from Σαᵢyᵢ = 0 for the
/// XOR labels (−, −, +, +).
pub fn xor_grid_optimum(gram: &[Vec<f64>], labels: &[f64], c: f64) -> f64 {
    let step = 0.01 * c;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=100 {
        for j in 0..=100 {
            for k in 0..=100 {
                let (a1, a2, a3) = (i as f64 * step, j as f64 * step, k as f64 * step);
                let a4 = a1 + a2 - a3;
                if !(0.0..=c).contains(&a4) {
                    continue;
                }
                best = best.max(dual_objective(&[a1, a2, a3, a4], labels, gram));
            }
        }
    }
    best
}

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sickle_core::classifier::{feature_from_mask, FeatureConfig};
use sickle_core::error::Error;
use sickle_core::geometry::*;
use sickle_core::imaging::{LabelMask, PixelClass};

mod common;
use common::{
    check_fill_holes, check_partition, convex_masks, crescent_mask, disc_mask, mask_from_fn,
    random_binary,
};

fn single_cell(mask: &LabelMask) -> CellRecord {
    let cells = measure_cells(mask, DEFAULT_MIN_REGION_AREA);
    assert_eq!(cells.len(), 1);
    cells.into_iter().next().unwrap()
}

#[test]
fn disc_roundness_is_near_one() {
    for r in 10..=50 {
        let d = single_cell(&disc_mask(r as f64)).descriptors;
        assert!(
            (0.9..=1.05).contains(&d.roundness),
            "r={r}: {}",
            d.roundness
        );
    }
}

#[test]
fn convex_shapes_have_unit_solidity() {
    for (name, mask) in convex_masks() {
        assert_eq!(single_cell(&mask).descriptors.solidity, 1.0, "{name}");
    }
}

#[test]
fn crescents_fall_below_the_solidity_threshold() {
    for r in [10.0, 15.0, 20.0, 30.0] {
        for offset in [0.4, 0.45, 0.5] {
            let s = single_cell(&crescent_mask(r, offset, 0.9))
                .descriptors
                .solidity;
            assert!(s < DEFAULT_SOLIDITY_THRESHOLD, "r={r} offset={offset}: {s}");
        }
    }
}

#[test]
fn crescents_are_excluded_from_histograms() {
    let crescent = crescent_mask(15.0, 0.45, 0.9);
    let cfg = FeatureConfig::default();
    assert!(matches!(
        feature_from_mask(&crescent, &cfg),
        Err(Error::NoMeasurableCells)
    ));

    // a disc beside the crescent is the only contributor
    let disc = disc_mask(12.0);
    let w = crescent.width() + disc.width();
    let h = crescent.height().max(disc.height());
    let both = mask_from_fn(w, h, |x, y| {
        let (x, y) = (x as usize, y as usize);
        if x < crescent.width() {
            y < crescent.height() && crescent.get(x, y) == PixelClass::Interior
        } else {
            y < disc.height() && disc.get(x - crescent.width(), y) == PixelClass::Interior
        }
    });
    let f = feature_from_mask(&both, &cfg).unwrap();
    assert_eq!(f.cell_count, 1);
    let roundness = single_cell(&disc).descriptors.roundness;
    let bin = ((roundness / 1.1) * 20.0).floor().min(19.0) as usize;
    assert_eq!(f.histogram[bin], 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fill_holes_is_extensive_idempotent_and_exact(seed in any::<u64>(), w in 1usize..24, h in 1usize..24, density in 0.2f64..0.8) {
        let mask = random_binary(&mut ChaCha8Rng::seed_from_u64(seed), w, h, density);
        let r = check_fill_holes(&mask);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn components_partition_the_foreground(seed in any::<u64>(), w in 1usize..24, h in 1usize..24, density in 0.2f64..0.8) {
        let mask = random_binary(&mut ChaCha8Rng::seed_from_u64(seed), w, h, density);
        let r = check_partition(&mask);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn histogram_sums_to_one(values in prop::collection::vec(-1.0f64..2.5, 1..200), bins in 1usize..40) {
        let h = build_histogram(&values, bins, 0.0, 1.1).unwrap();
        prop_assert_eq!(h.len(), bins);
        prop_assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn descriptors_are_translation_invariant(dx in 0usize..5, dy in 0usize..5, r in 6.0f64..14.0) {
        let base = disc_mask(r);
        let (w, h) = (base.width() + 5, base.height() + 5);
        let shifted = mask_from_fn(w, h, |x, y| {
            let (x, y) = (x as usize, y as usize);
            x >= dx && y >= dy && x - dx < base.width() && y - dy < base.height()
                && base.get(x - dx, y - dy) == PixelClass::Interior
        });
        let a = single_cell(&base);
        let b = single_cell(&shifted);
        prop_assert_eq!(a.measurements, b.measurements);
    }
}

//! Property tests for the grid/box/ordering layer, checked against an
//! independent brute-force scan over every cell center.

use mmcot_core::geometry::{BBox, PatchGrid, VrtSet};
use proptest::prelude::*;

/// Independent oracle: scan all rows x cols centers with the half-open
/// membership predicate, computing centers from scratch.
fn brute_force_vrts(grid: &PatchGrid, bbox: &BBox) -> Vec<u32> {
    let ps = grid.patch_size() as f64;
    let mut hits = Vec::new();
    for i in 0..grid.num_patches() {
        let row = i / grid.cols();
        let col = i % grid.cols();
        let cx = col as f64 * ps + ps / 2.0;
        let cy = row as f64 * ps + ps / 2.0;
        if bbox.x_min() <= cx && cx < bbox.x_max() && bbox.y_min() <= cy && cy < bbox.y_max() {
            hits.push(i);
        }
    }
    hits
}

/// Grid plus a box clamped inside it, on a quarter-pixel lattice so exact
/// translation by one patch stays exact in f64.
fn arb_grid_and_box() -> impl Strategy<Value = (PatchGrid, BBox)> {
    (2u32..40, 2u32..40, 1u32..30).prop_flat_map(|(rc, cc, ps)| {
        let w = cc * ps;
        let h = rc * ps;
        let qw = (w * 4) as u64;
        let qh = (h * 4) as u64;
        (0..qw, 0..qh, 1..=qw, 1..=qh).prop_filter_map(
            "box must have positive extent inside the image",
            move |(x0, y0, dx, dy)| {
                let x_min = x0 as f64 / 4.0;
                let y_min = y0 as f64 / 4.0;
                let x_max = (x0 + dx).min(qw) as f64 / 4.0;
                let y_max = (y0 + dy).min(qh) as f64 / 4.0;
                if x_min >= x_max || y_min >= y_max {
                    return None;
                }
                let grid = PatchGrid::new(w, h, ps).unwrap();
                let bbox = BBox::new(x_min, y_min, x_max, y_max).unwrap();
                Some((grid, bbox))
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn membership_matches_brute_force((grid, bbox) in arb_grid_and_box()) {
        let got: Vec<u32> = grid.vrts_in_box(&bbox).ordered().into_vec();
        let want = brute_force_vrts(&grid, &bbox);
        prop_assert_eq!(got, want);
    }

    #[test]
    fn containment_implies_subset((grid, outer) in arb_grid_and_box(),
                                  shrink in (0.0f64..0.4, 0.0f64..0.4, 0.0f64..0.4, 0.0f64..0.4)) {
        let w = outer.width();
        let h = outer.height();
        let inner = BBox::new(
            outer.x_min() + shrink.0 * w,
            outer.y_min() + shrink.1 * h,
            outer.x_max() - shrink.2 * w,
            outer.y_max() - shrink.3 * h,
        );
        prop_assume!(inner.is_ok());
        let inner = inner.unwrap();
        prop_assert!(outer.contains_box(&inner));
        let big = grid.vrts_in_box(&outer);
        let small = grid.vrts_in_box(&inner);
        for idx in small.iter() {
            prop_assert!(big.contains(idx));
        }
    }

    #[test]
    fn ordering_ignores_permutation(mut indices in proptest::collection::vec(0u32..1000, 0..40),
                                    seed in any::<u64>()) {
        let baseline = VrtSet::from_indices(indices.iter().copied()).ordered();
        let mut rng = mmcot_core::rng::Rng::new(seed);
        for _ in 0..10 {
            // Fisher-Yates with the toolkit PRNG.
            for i in (1..indices.len()).rev() {
                let j = rng.next_below((i + 1) as u64) as usize;
                indices.swap(i, j);
            }
            let shuffled = VrtSet::from_indices(indices.iter().copied()).ordered();
            prop_assert_eq!(&shuffled, &baseline);
        }
    }

    #[test]
    fn ordering_is_idempotent(indices in proptest::collection::vec(0u32..5000, 0..60)) {
        let once = VrtSet::from_indices(indices.iter().copied()).ordered();
        let twice = VrtSet::from_indices(once.indices().iter().copied()).ordered();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn shifting_a_box_by_one_patch_shifts_columns((grid, bbox) in arb_grid_and_box()) {
        let ps = grid.patch_size() as f64;
        prop_assume!(bbox.x_max() + ps <= grid.image_width() as f64);
        let shifted = BBox::new(
            bbox.x_min() + ps,
            bbox.y_min(),
            bbox.x_max() + ps,
            bbox.y_max(),
        ).unwrap();
        let base = grid.vrts_in_box(&bbox).ordered().into_vec();
        let moved = grid.vrts_in_box(&shifted).ordered().into_vec();
        // No member may leave the grid: the box stayed inside the image and
        // only whole columns shift, so the sets correspond one-to-one.
        let expect: Vec<u32> = base.iter().map(|i| i + 1).collect();
        prop_assert_eq!(moved, expect);
    }
}

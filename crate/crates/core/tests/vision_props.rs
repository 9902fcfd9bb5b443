mod common;

use image::{Rgb, RgbImage};
use proptest::prelude::*;
use ringtower_core::flow::{flow_into_mask_sum, horn_schunck, FlowParams};
use ringtower_core::model::{DetectorConfig, Roi};
use ringtower_core::vision::{
    components, remove_small_components, restrict_roi, threshold_hsv, tower_mask, BinaryMask,
};

fn arb_image() -> impl Strategy<Value = RgbImage> {
    (4u32..24, 4u32..24).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<[u8; 3]>(), (w * h) as usize)
            .prop_map(move |px| RgbImage::from_fn(w, h, |x, y| Rgb(px[(y * w + x) as usize])))
    })
}

/// Green-dominated blocks so the size filter has something to keep.
fn arb_blocky_image() -> impl Strategy<Value = RgbImage> {
    prop::collection::vec(
        (0u32..40, 0u32..30, 1u32..16, 1u32..16, any::<bool>()),
        1..8,
    )
    .prop_map(|blocks| {
        let mut img = RgbImage::from_pixel(40, 30, Rgb([200, 190, 170]));
        for (x, y, w, h, tower) in blocks {
            let c = if tower { [22, 87, 100] } else { [30, 30, 30] };
            for yy in y..(y + h).min(30) {
                for xx in x..(x + w).min(40) {
                    img.put_pixel(xx, yy, Rgb(c));
                }
            }
        }
        img
    })
}

fn arb_mask() -> impl Strategy<Value = BinaryMask> {
    (1u32..30, 1u32..30).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<bool>(), (w * h) as usize)
            .prop_map(move |bits| BinaryMask::from_fn(w, h, |x, y| bits[(y * w + x) as usize]))
    })
}

fn subset(a: &BinaryMask, b: &BinaryMask) -> bool {
    a.bits().iter().zip(b.bits()).all(|(&x, &y)| !x || y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn threshold_is_monotone(img in arb_image(), widen in (0u8..40, 0u8..40, 0u8..90, 0u8..120)) {
        let base = DetectorConfig::default();
        let wide = DetectorConfig {
            hue_min: base.hue_min - widen.0.min(base.hue_min - 1),
            hue_max: (base.hue_max + widen.1).min(179),
            sat_min: base.sat_min - widen.2.min(base.sat_min - 1),
            val_max: base.val_max.saturating_add(widen.3),
            ..base.clone()
        };
        prop_assert!(subset(&threshold_hsv(&img, &base), &threshold_hsv(&img, &wide)));
    }

    #[test]
    fn size_filter_is_idempotent(mask in arb_mask(), min in 1usize..40) {
        let once = remove_small_components(&mask, min);
        prop_assert_eq!(&remove_small_components(&once, min), &once);
        prop_assert!(subset(&once, &mask));
        for blob in components(&once) {
            prop_assert!(blob.size() >= min);
        }
    }

    #[test]
    fn tower_mask_components_are_large(img in arb_blocky_image()) {
        let cfg = DetectorConfig::default();
        let m = tower_mask(&img, &cfg);
        prop_assert!(m.count() <= (img.width() * img.height()) as usize);
        for blob in components(&m) {
            prop_assert!(blob.size() >= cfg.min_blob_px);
        }
    }

    #[test]
    fn roi_restriction_is_idempotent(mask in arb_mask(), r in (0u32..30, 0u32..30, 1u32..30, 1u32..30)) {
        let (w, h) = mask.dimensions();
        let roi = Roi::new(r.0 % w, r.1 % h, 1 + r.2 % (w - r.0 % w), 1 + r.3 % (h - r.1 % h));
        let once = restrict_roi(&mask, &roi).unwrap();
        prop_assert_eq!(&restrict_roi(&once, &roi).unwrap(), &once);
        for (x, y) in once.iter_set() {
            prop_assert!(roi.contains(x, y));
        }
    }

    #[test]
    fn flow_sum_is_additive_over_disjoint_masks(
        a in arb_image(),
        seed in any::<u64>(),
        split in any::<Vec<bool>>(),
    ) {
        let (w, h) = a.dimensions();
        let b = RgbImage::from_fn(w, h, |x, y| {
            let p = a.get_pixel((x + 1) % w, y).0;
            Rgb([p[0], p[1].wrapping_add((seed % 7) as u8), p[2]])
        });
        let field = horn_schunck(&a, &b, FlowParams::default()).unwrap();
        let pick = |x: u32, y: u32| split.get(((y * w + x) as usize) % split.len().max(1)).copied().unwrap_or(false);
        let left = BinaryMask::from_fn(w, h, pick);
        let right = BinaryMask::from_fn(w, h, |x, y| !pick(x, y) && (x + y) % 3 != 0);
        let whole = left.union(&right);
        let sum = flow_into_mask_sum(&field, &left).unwrap() + flow_into_mask_sum(&field, &right).unwrap();
        let total = flow_into_mask_sum(&field, &whole).unwrap();
        prop_assert!((sum - total).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn identical_frames_have_zero_flow(img in arb_image(), alpha in 0.01f32..50.0, iters in 1usize..30) {
        let f = horn_schunck(&img, &img, FlowParams { smoothness: alpha, iterations: iters }).unwrap();
        prop_assert!(f.vx.iter().chain(&f.vy).all(|&v| v == 0.0));
    }

    #[test]
    fn flow_is_deterministic(a in arb_image(), b_shift in 0u32..3) {
        let (w, h) = a.dimensions();
        let b = RgbImage::from_fn(w, h, |x, y| *a.get_pixel((x + b_shift) % w, y));
        let p = FlowParams::default();
        prop_assert_eq!(horn_schunck(&a, &b, p).unwrap(), horn_schunck(&a, &b, p).unwrap());
    }
}

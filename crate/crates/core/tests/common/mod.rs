#![allow(dead_code)]

use proptest::prelude::*;
use ringtower_core::model::{
    runs_of, CrashInterval, DetectorConfig, ErrorIntervalSet, InteractionSegment, Provenance, Roi,
    Segmentation, TowerId,
};

pub const FRAME_W: u32 = 320;
pub const FRAME_H: u32 = 240;

fn arb_roi() -> impl Strategy<Value = Roi> {
    (0..FRAME_W - 20, 0..FRAME_H - 20).prop_flat_map(|(x, y)| {
        (1..=FRAME_W - x, 1..=FRAME_H - y).prop_map(move |(w, h)| Roi::new(x, y, w, h))
    })
}

/// Four consecutive segments with optional crashes inside them.
pub fn arb_segmentation() -> impl Strategy<Value = Segmentation> {
    (
        0usize..20,
        prop::array::uniform4((2usize..80, 0usize..15)),
        prop::array::uniform4(arb_roi()),
        prop::array::uniform4(any::<prop::sample::Index>()),
        prop::array::uniform4(prop::option::weighted(
            0.3,
            (any::<prop::sample::Index>(), 1usize..6),
        )),
    )
        .prop_map(|(lead, spans, rois, zones, crash_specs)| {
            let mut start = lead;
            let mut segments = Vec::new();
            let mut crashes = Vec::new();
            for (i, tower) in TowerId::ALL.into_iter().enumerate() {
                let (len, gap) = spans[i];
                let end = start + len;
                let roi = rois[i];
                let end_zone_x = (!tower.is_vertical())
                    .then(|| roi.x + zones[i].index(roi.width as usize) as u32);
                segments.push(InteractionSegment {
                    tower,
                    start_frame: start,
                    end_frame: end,
                    roi,
                    end_zone_x,
                });
                if let Some((at, clen)) = crash_specs[i] {
                    let c0 = start + at.index(len);
                    let c1 = (c0 + clen - 1).min(end);
                    crashes.push(CrashInterval {
                        start_frame: c0,
                        end_frame: c1,
                    });
                }
                start = end + 1 + gap;
            }
            Segmentation::new(segments, crashes).expect("generated segmentation is valid")
        })
}

/// Labels inside `seg`, avoiding crash frames.
pub fn arb_labels_for(
    seg: Segmentation,
) -> impl Strategy<Value = (Segmentation, ErrorIntervalSet)> {
    let lens: Vec<usize> = seg.segments.iter().map(|s| s.frame_count()).collect();
    let flags = lens
        .into_iter()
        .map(|n| prop::collection::vec(prop::bool::weighted(0.3), n))
        .collect::<Vec<_>>();
    (Just(seg), flags, any::<bool>()).prop_map(|(seg, flags, corrected)| {
        let provenance = if corrected {
            Provenance::Corrected
        } else {
            Provenance::Auto
        };
        let mut set = ErrorIntervalSet::empty(provenance);
        for (tower, f) in TowerId::ALL.into_iter().zip(flags) {
            let s = seg.segment(tower);
            let f: Vec<bool> = f
                .iter()
                .enumerate()
                .map(|(i, &v)| v && !seg.is_crash_frame(s.start_frame + i))
                .collect();
            set.set(tower, runs_of(&f, s.start_frame)).unwrap();
        }
        (seg, set)
    })
}

pub fn arb_segmentation_with_labels() -> impl Strategy<Value = (Segmentation, ErrorIntervalSet)> {
    arb_segmentation().prop_flat_map(arb_labels_for)
}

pub fn arb_config() -> impl Strategy<Value = DetectorConfig> {
    (
        (1u8..100, 1u8..79, 1u8..=255, 1u8..=255, 1usize..500),
        (0usize..4, 1usize..4, 0.5f64..60.0),
        (1usize..20, 1usize..10, 1usize..20, 1usize..10, 1usize..20),
        (1u8..=255, 1usize..60, 1u32..60, 0.01f32..20.0, 1usize..40),
    )
        .prop_map(|(hsv, win, rules, ring)| {
            let (hue_min, span, sat_min, val_max, min_blob_px) = hsv;
            DetectorConfig {
                hue_min,
                hue_max: (hue_min + span).min(179),
                sat_min,
                val_max,
                min_blob_px,
                ma_window: 2 * win.0 + 1,
                stft_window: 2 * win.1 + 1,
                db_threshold: win.2,
                head_frames: rules.0,
                head_confirm: rules.1,
                merge_gap: rules.2,
                lone_window: rules.3,
                tail_frames: rules.4,
                val_max_ring: ring.0,
                min_ring_px: ring.1,
                max_ring_tower_dist_px: ring.2,
                flow_smoothness: ring.3,
                flow_iterations: ring.4,
                ..DetectorConfig::default()
            }
        })
}

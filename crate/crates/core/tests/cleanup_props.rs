mod common;

use proptest::prelude::*;
use ringtower_core::detector::{cleanup, cleanup_stages};
use ringtower_core::model::{
    CrashInterval, DetectorConfig, InteractionSegment, Interval, Roi, TowerId,
};

fn arb_case() -> impl Strategy<Value = (Vec<bool>, InteractionSegment, Vec<CrashInterval>)> {
    (
        1usize..160,
        0usize..50,
        prop::sample::select(TowerId::ALL.to_vec()),
        0.0f64..1.0,
    )
        .prop_flat_map(|(n, start, tower, density)| {
            let segment = InteractionSegment {
                tower,
                start_frame: start,
                end_frame: start + n.max(2) - 1,
                roi: Roi::new(0, 0, 10, 10),
                end_zone_x: (!tower.is_vertical()).then_some(5),
            };
            let len = segment.frame_count();
            let crashes = prop::collection::vec((0..len, 1usize..8), 0..3).prop_map(move |cs| {
                let mut cs: Vec<CrashInterval> = cs
                    .into_iter()
                    .map(|(at, l)| CrashInterval {
                        start_frame: start + at,
                        end_frame: (start + at + l - 1).min(start + len - 1),
                    })
                    .collect();
                cs.sort_by_key(|c| c.start_frame);
                cs
            });
            (
                prop::collection::vec(prop::bool::weighted(density), len),
                Just(segment),
                crashes,
            )
        })
}

fn to_flags(intervals: &[Interval], seg: &InteractionSegment) -> Vec<bool> {
    (seg.start_frame..=seg.end_frame)
        .map(|f| intervals.iter().any(|iv| iv.contains(f)))
        .collect()
}

fn subset(a: &[bool], b: &[bool]) -> bool {
    a.iter().zip(b).all(|(&x, &y)| !x || y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn idempotent_with_defaults((flags, seg, crashes) in arb_case()) {
        let cfg = DetectorConfig::default();
        let once = cleanup(&flags, &seg, &crashes, &cfg);
        let twice = cleanup(&to_flags(&once, &seg), &seg, &crashes, &cfg);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn idempotent_with_random_rule_spans(
        (flags, seg, crashes) in arb_case(),
        cfg in common::arb_config(),
    ) {
        // the bridge used while confirming a head run must not exceed the merge gap
        prop_assume!(cfg.head_confirm <= cfg.merge_gap);
        prop_assume!(cfg.lone_window <= cfg.merge_gap);
        let once = cleanup(&flags, &seg, &crashes, &cfg);
        let twice = cleanup(&to_flags(&once, &seg), &seg, &crashes, &cfg);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn merge_never_shrinks_and_lone_removal_never_grows((flags, seg, crashes) in arb_case()) {
        let st = cleanup_stages(&flags, &seg, &crashes, &DetectorConfig::default());
        prop_assert!(subset(&st.head, &st.merged));
        prop_assert!(subset(&st.lone_removed, &st.merged));
        prop_assert!(subset(&st.head, &flags));
    }

    #[test]
    fn output_stays_inside_segment_and_off_crashes((flags, seg, crashes) in arb_case()) {
        let out = cleanup(&flags, &seg, &crashes, &DetectorConfig::default());
        for iv in &out {
            prop_assert!(iv.start >= seg.start_frame && iv.end <= seg.end_frame);
            for f in iv.frames() {
                prop_assert!(!crashes.iter().any(|c| c.contains(f)));
            }
        }
        for pair in out.windows(2) {
            let crash_between = crashes.iter().any(|c| c.start_frame > pair[0].end && c.start_frame < pair[1].start);
            prop_assert!(pair[1].start > pair[0].end + 1);
            prop_assert!(crash_between || pair[1].start - pair[0].end > 10);
        }
    }

    #[test]
    fn horizontal_towers_never_gain_frames_past_the_last_flag((flags, seg, crashes) in arb_case()) {
        let out = cleanup(&flags, &seg, &crashes, &DetectorConfig::default());
        let last_flag = flags.iter().rposition(|&f| f).map(|i| seg.start_frame + i);
        if let (false, Some(iv)) = (seg.tower.is_vertical(), out.last()) {
            prop_assert!(Some(iv.end) <= last_flag);
        }
    }
}

#[test]
fn larger_merge_gap_keeps_a_superset() {
    let seg = InteractionSegment {
        tower: TowerId::LV,
        start_frame: 0,
        end_frame: 99,
        roi: Roi::new(0, 0, 10, 10),
        end_zone_x: None,
    };
    let mut flags = vec![false; 100];
    for i in [30, 40, 41, 60, 75, 76, 77] {
        flags[i] = true;
    }
    let tight = DetectorConfig {
        merge_gap: 1,
        ..DetectorConfig::default()
    };
    let a = to_flags(&cleanup(&flags, &seg, &[], &tight), &seg);
    let b = to_flags(
        &cleanup(&flags, &seg, &[], &DetectorConfig::default()),
        &seg,
    );
    assert!(subset(&a, &b));
    assert_eq!(
        cleanup(&flags, &seg, &[], &DetectorConfig::default()),
        vec![Interval::new(30, 41), Interval::new(75, 77)]
    );
}

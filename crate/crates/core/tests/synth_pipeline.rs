use ringtower_core::detector::{
    detect_interaction, detect_visit, detect_visit_with, motion_signal,
};
use ringtower_core::model::{DetectorConfig, Frame, FrameSequence, Interval, TowerId};
use ringtower_core::synth::{default_corpus, render, SceneScript};
use ringtower_core::vision::{restrict_roi, ring_centroid, ring_mask, tower_mask};
use ringtower_core::Exec;

fn case(name: &str) -> SceneScript {
    default_corpus()
        .into_iter()
        .find(|s| s.name == name)
        .unwrap()
}

fn overlaps(a: &Interval, b: &Interval) -> bool {
    a.start <= b.end && b.start <= a.end
}

/// Renders without validation so scenes may hide the ring and instrument.
fn render_raw(script: &SceneScript) -> FrameSequence {
    let ts = script.timestamps();
    let frames = (0..script.frame_count)
        .map(|i| Frame {
            index: i,
            timestamp_s: ts[i],
            pixels: script.render_frame(i),
        })
        .collect();
    FrameSequence::new(script.name.clone(), frames).unwrap()
}

#[test]
fn static_tower_signal_is_negligible_next_to_a_collision() {
    let cfg = DetectorConfig::default();
    let mut quiet = SceneScript::standard("quiet", 1);
    quiet.ring_outer_radius = 0;
    quiet.ring_inner_radius = 0;
    quiet.instrument_rgb = quiet.background_rgb;
    let seq = render_raw(&quiet);
    let seg = *quiet.segmentation().unwrap().segment(TowerId::LV);
    let still = motion_signal(&seq, &seg, &cfg).unwrap();

    let hit = SceneScript::standard("hit", 1).with_jitter(TowerId::LV, 30, 20, 3, 0);
    let scene = render(&hit).unwrap();
    let moving =
        motion_signal(&scene.frames, scene.segmentation.segment(TowerId::LV), &cfg).unwrap();
    let peak = moving.values.iter().cloned().fold(0.0, f64::max);
    assert!(peak > 0.0);
    assert!(still.values.iter().all(|&v| v >= 0.0 && v < 0.01 * peak));
}

#[test]
fn jitter_peak_lands_inside_its_window() {
    let cfg = DetectorConfig::default();
    let script = SceneScript::standard("jit", 4);
    let rv = script.segment(TowerId::RV).start_frame;
    // frames 40..=45
    let script = script.with_jitter(TowerId::RV, 40 - rv, 6, 3, 0);
    let scene = render(&script).unwrap();
    let sig = motion_signal(&scene.frames, scene.segmentation.segment(TowerId::RV), &cfg).unwrap();
    let (i, _) = sig
        .values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let frame = sig.first_frame + i;
    assert!((39..=46).contains(&frame), "peak at {frame}");
    assert!(sig.values.iter().all(|&v| v >= 0.0));
    assert_eq!(
        sig.len(),
        scene.segmentation.segment(TowerId::RV).frame_count() - 1
    );
    assert_eq!(sig.timestamps[0], scene.frames.timestamp(sig.first_frame));
}

#[test]
fn two_frame_segment_gives_one_sample() {
    let script = SceneScript::standard("short", 2);
    let scene = render(&script).unwrap();
    let mut seg = *scene.segmentation.segment(TowerId::LH);
    seg.end_frame = seg.start_frame + 1;
    let sig = motion_signal(&scene.frames, &seg, &DetectorConfig::default()).unwrap();
    assert_eq!(sig.len(), 1);
}

#[test]
fn static_scene_has_no_intervals() {
    let scene = render(&case("static-a")).unwrap();
    let (labels, _) = detect_visit(
        &scene.frames,
        &scene.segmentation,
        &DetectorConfig::default(),
    )
    .unwrap();
    assert_eq!(labels.total_intervals(), 0);
}

#[test]
fn three_jitters_give_three_overlapping_intervals() {
    let script = case("multi-towers");
    assert_eq!(script.jitters.len(), 3);
    let scene = render(&script).unwrap();
    let (labels, traces) = detect_visit(
        &scene.frames,
        &scene.segmentation,
        &DetectorConfig::default(),
    )
    .unwrap();
    assert_eq!(labels.total_intervals(), 3);
    for j in &script.jitters {
        let window = Interval::new(j.start_frame, j.end_frame);
        let got = labels.get(j.tower);
        assert_eq!(got.len(), 1, "{}", j.tower);
        assert!(
            overlaps(&got[0], &window),
            "{} {:?} vs {:?}",
            j.tower,
            got[0],
            window
        );
    }
    for trace in &traces {
        assert_eq!(trace.rows.len(), trace.segment.frame_count());
        assert_eq!(trace.flags.len(), trace.segment.frame_count());
    }
}

#[test]
fn jitter_inside_a_crash_is_not_reported() {
    let script = case("crash-inside");
    let scene = render(&script).unwrap();
    assert_eq!(scene.truth.total_intervals(), 0);
    let seg = scene.segmentation.segment(TowerId::LV);
    let trace = detect_interaction(
        &scene.frames,
        seg,
        &scene.segmentation.crashes_in(TowerId::LV),
        &DetectorConfig::default(),
    )
    .unwrap();
    assert!(trace.intervals.is_empty());
    assert_eq!(trace.blocks.len(), 2);
    assert!(trace
        .rows
        .iter()
        .filter(|r| r.crash)
        .all(|r| r.raw.is_none() && !r.detected));
}

#[test]
fn placement_in_the_end_zone_is_ignored() {
    let script = case("end-zone-lh");
    let scene = render(&script).unwrap();
    let cfg = DetectorConfig::default();
    let seg = scene.segmentation.segment(TowerId::LH);
    let trace = detect_interaction(&scene.frames, seg, &[], &cfg).unwrap();
    assert!(
        trace.flags.iter().any(|&f| f),
        "placement motion is visible to the detector"
    );
    assert!(trace.intervals.is_empty());

    // the ring centroid seen by the detector enters the end zone on the scripted frame
    let crossing = script.end_zone_crossing(TowerId::LH).unwrap();
    let ez = seg.end_zone_x.unwrap() as f64;
    let centroid_x = |f: usize| {
        let px = &scene.frames.frame(f).pixels;
        let tower = restrict_roi(&tower_mask(px, &cfg), &seg.roi).unwrap();
        ring_centroid(&ring_mask(px, &tower, &cfg).unwrap())
            .unwrap()
            .0
    };
    assert!(centroid_x(crossing) >= ez);
    assert!(centroid_x(crossing - 1) < ez);
}

#[test]
fn occluder_leaves_ground_truth_unchanged() {
    let plain = SceneScript::standard("p", 5).with_jitter(TowerId::RV, 50, 64, 3, 0);
    let hidden = plain.clone().with_occluder(TowerId::RV);
    assert_eq!(
        plain.ground_truth().unwrap(),
        hidden.ground_truth().unwrap()
    );
    let a = plain.render_frame(100);
    let b = hidden.render_frame(100);
    let cfg = DetectorConfig::default();
    assert!(tower_mask(&b, &cfg).count() < tower_mask(&a, &cfg).count());
}

#[test]
fn detection_is_deterministic_across_strategies() {
    let script = case("mixed").with_noise(2.0);
    let scene = render(&script).unwrap();
    let again = render(&script).unwrap();
    assert_eq!(scene.frames, again.frames);
    let cfg = DetectorConfig::default();
    let (par, par_traces) =
        detect_visit_with(Exec::Parallel, &scene.frames, &scene.segmentation, &cfg).unwrap();
    let (seq, seq_traces) =
        detect_visit_with(Exec::Sequential, &scene.frames, &scene.segmentation, &cfg).unwrap();
    assert_eq!(par, seq);
    assert_eq!(par_traces, seq_traces);
}

//! Collision detection for one tower interaction: tower motion signal,
//! spectral thresholding, rule-based cleanup and placement-zone exclusion.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::flow::{flow_into_mask_sum_at, horn_schunck_luma, FlowParams, Luma};
use crate::model::{
    runs_of, CrashInterval, DetectorConfig, ErrorIntervalSet, FrameSequence, InteractionSegment,
    Interval, Provenance, Roi, Segmentation, TowerId,
};
use crate::signal::{derivative, moving_average, stft_db, threshold_movement, Spectrogram};
use crate::vision::{restrict_roi, ring_centroid, ring_mask, tower_mask, BinaryMask};

/// Summed tower flow magnitude per frame pair. `values[i]` belongs to frame
/// `first_frame + i`, the later frame of its pair; when the span starts the
/// video, the first pair compares frame 0 against a black image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MotionSignal {
    pub first_frame: usize,
    pub values: Vec<f64>,
    pub timestamps: Vec<f64>,
}

impl MotionSignal {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Signal stages for one crash-free block of an interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTrace {
    pub span: Interval,
    pub raw: MotionSignal,
    pub filtered: Vec<f64>,
    /// `derivative[i]` belongs to frame `raw.first_frame + i`.
    pub derivative: Vec<f64>,
    pub spectrogram: Option<Spectrogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub frame: usize,
    pub timestamp_s: f64,
    pub crash: bool,
    pub raw: Option<f64>,
    pub filtered: Option<f64>,
    pub derivative: Option<f64>,
    pub high_band_db: Option<f64>,
    pub flagged: bool,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTrace {
    pub segment: InteractionSegment,
    pub blocks: Vec<BlockTrace>,
    /// Thresholded movement per segment frame, before cleanup.
    pub flags: Vec<bool>,
    pub rows: Vec<TraceRow>,
    pub intervals: Vec<Interval>,
}

/// Per-frame tower and (optionally) ring information inside one segment.
struct FrameMasks {
    tower: BinaryMask,
    ring_centroid: Option<(f64, f64)>,
}

fn segment_masks(
    exec: Exec,
    seq: &FrameSequence,
    frames: &[usize],
    roi: &Roi,
    with_ring: bool,
    config: &DetectorConfig,
) -> Result<Vec<FrameMasks>> {
    exec.map_slice(frames, |&f| -> Result<FrameMasks> {
        let pixels = &seq.frame(f).pixels;
        let tower = restrict_roi(&tower_mask(pixels, config), roi)?;
        let ring_centroid = if with_ring {
            ring_centroid(&ring_mask(pixels, &tower, config)?)
        } else {
            None
        };
        Ok(FrameMasks {
            tower,
            ring_centroid,
        })
    })
    .into_iter()
    .collect()
}

/// Flow sums for the frame pairs of `span`, using the precomputed tower
/// masks of the later frame of each pair (`masks[i]` for `span.start + i`).
fn motion_values(
    exec: Exec,
    seq: &FrameSequence,
    span: Interval,
    roi: &Roi,
    masks: &[BinaryMask],
    config: &DetectorConfig,
) -> Result<MotionSignal> {
    let params = FlowParams {
        smoothness: config.flow_smoothness,
        iterations: config.flow_iterations,
    };
    let region = roi.expand(params.context_margin(), seq.width(), seq.height());
    let lumas: Vec<Luma> = exec.map_range(span.len(), |i| {
        Luma::from_rgb_region(&seq.frame(span.start + i).pixels, &region)
    });
    let black = span.start == 0;
    let first_frame = if black { span.start } else { span.start + 1 };
    let pairs: Vec<usize> = (first_frame..=span.end).collect();
    let black_luma = Luma::black(region.width, region.height);
    let values = exec
        .map_slice(&pairs, |&k| -> Result<f64> {
            let next = &lumas[k - span.start];
            let prev = if k == span.start {
                &black_luma
            } else {
                &lumas[k - 1 - span.start]
            };
            let field = horn_schunck_luma(Exec::Sequential, prev, next, params)?;
            flow_into_mask_sum_at(&field, (region.x, region.y), &masks[k - span.start])
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(MotionSignal {
        first_frame,
        timestamps: pairs.iter().map(|&k| seq.timestamp(k)).collect(),
        values,
    })
}

/// Tower motion over a whole interaction (crash frames must already be
/// excluded by the caller).
pub fn motion_signal(
    seq: &FrameSequence,
    segment: &InteractionSegment,
    config: &DetectorConfig,
) -> Result<MotionSignal> {
    let exec = Exec::default();
    let span = Interval::new(segment.start_frame, segment.end_frame);
    if span.end >= seq.len() {
        return Err(Error::Segmentation(format!(
            "{}: end_frame {} beyond sequence",
            segment.tower, segment.end_frame
        )));
    }
    let frames: Vec<usize> = span.frames().collect();
    let masks = segment_masks(exec, seq, &frames, &segment.roi, false, config)?;
    let towers: Vec<BinaryMask> = masks.into_iter().map(|m| m.tower).collect();
    motion_values(exec, seq, span, &segment.roi, &towers, config)
}

/// Crash-free maximal runs of the segment.
fn blocks(segment: &InteractionSegment, crashes: &[CrashInterval]) -> Vec<Interval> {
    let free: Vec<bool> = (segment.start_frame..=segment.end_frame)
        .map(|f| !crashes.iter().any(|c| c.contains(f)))
        .collect();
    runs_of(&free, segment.start_frame)
}

fn block_flags(
    raw: MotionSignal,
    span: Interval,
    config: &DetectorConfig,
) -> Result<(BlockTrace, Vec<bool>)> {
    let mut flags = vec![false; span.len()];
    let filtered = moving_average(&raw.values, config.ma_window)?;
    let deriv = if filtered.len() >= 2 {
        derivative(&filtered)?
    } else {
        Vec::new()
    };
    let spectrogram = if deriv.len() >= config.stft_window {
        Some(stft_db(&deriv, config.stft_window)?)
    } else {
        None
    };
    if let Some(spec) = &spectrogram {
        let sample_flags = threshold_movement(spec, config.db_threshold);
        let first = raw.first_frame;
        let last = first + sample_flags.len() - 1;
        for (i, flag) in flags.iter_mut().enumerate() {
            let frame = span.start + i;
            let sample = frame.clamp(first, last) - first;
            *flag = sample_flags[sample];
        }
    }
    Ok((
        BlockTrace {
            span,
            raw,
            filtered,
            derivative: deriv,
            spectrogram,
        },
        flags,
    ))
}

/// Flags after each cleanup rule, all aligned to the segment's frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanupStages {
    pub head: Vec<bool>,
    pub merged: Vec<bool>,
    pub lone_removed: Vec<bool>,
    pub tail: Vec<bool>,
}

impl CleanupStages {
    pub fn output(&self) -> &[bool] {
        &self.tail
    }
}

/// Rule-based cleanup of thresholded flags over one segment, in order:
///
/// 1. a detection starting in the first `head_frames` frames survives only
///    if detection carries on for `head_confirm` more frames (gaps of at
///    most `head_confirm` frames are bridged while following it);
/// 2. detections at most `merge_gap` frames apart are joined;
/// 3. single flagged frames with nothing else within `lone_window` frames
///    are dropped;
/// 4. on vertical towers a detection in the last `tail_frames` frames runs
///    to the end of the segment;
/// 5. crash frames are never flagged and no rule reaches across them.
///
/// `flags[i]` is frame `segment.start_frame + i`.
pub fn cleanup(
    flags: &[bool],
    segment: &InteractionSegment,
    crashes: &[CrashInterval],
    config: &DetectorConfig,
) -> Vec<Interval> {
    runs_of(
        cleanup_stages(flags, segment, crashes, config).output(),
        segment.start_frame,
    )
}

pub fn cleanup_stages(
    flags: &[bool],
    segment: &InteractionSegment,
    crashes: &[CrashInterval],
    config: &DetectorConfig,
) -> CleanupStages {
    let n = flags.len();
    let base = segment.start_frame;
    let crash: Vec<bool> = (0..n)
        .map(|i| crashes.iter().any(|c| c.contains(base + i)))
        .collect();
    // block id per frame; crash frames separate blocks
    let mut block = vec![0usize; n];
    let mut id = 0;
    for i in 0..n {
        if i > 0 && crash[i] != crash[i - 1] {
            id += 1;
        }
        block[i] = id;
    }
    let mut f: Vec<bool> = flags.iter().zip(&crash).map(|(&a, &c)| a && !c).collect();

    // 1. head confirmation, evaluated right to left against kept successors
    let runs = runs_of(&f, 0);
    let mut kept = vec![true; runs.len()];
    for r in (0..runs.len()).rev() {
        if runs[r].start >= config.head_frames {
            continue;
        }
        let mut chain_end = runs[r].end;
        for s in r + 1..runs.len() {
            if !kept[s] {
                continue;
            }
            if block[runs[s].start] == block[runs[r].start]
                && runs[s].start - chain_end <= config.head_confirm
            {
                chain_end = runs[s].end;
            } else {
                break;
            }
        }
        kept[r] = chain_end - runs[r].start >= config.head_confirm;
    }
    for (run, keep) in runs.iter().zip(&kept) {
        if !keep {
            run.frames().for_each(|i| f[i] = false);
        }
    }
    let head = f.clone();

    // 2. merge
    let runs = runs_of(&f, 0);
    for pair in runs.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if block[a.end] == block[b.start] && b.start - a.end <= config.merge_gap {
            (a.end..b.start).for_each(|i| f[i] = true);
        }
    }
    let merged = f.clone();

    // 3. lone samples
    let lone: Vec<usize> = runs_of(&f, 0)
        .into_iter()
        .filter(|r| r.start == r.end)
        .map(|r| r.start)
        .filter(|&i| {
            let lo = i.saturating_sub(config.lone_window);
            let hi = (i + config.lone_window).min(n - 1);
            !(lo..=hi).any(|j| j != i && f[j] && block[j] == block[i])
        })
        .collect();
    lone.into_iter().for_each(|i| f[i] = false);
    let lone_removed = f.clone();

    // 4. vertical tail
    if segment.tower.is_vertical() && n > 0 {
        let tail_start = n.saturating_sub(config.tail_frames);
        if let Some(last) = (tail_start..n).rev().find(|&i| f[i]) {
            (last..n)
                .take_while(|&i| block[i] == block[last])
                .for_each(|i| f[i] = true);
        }
    }

    // 5. crash excision
    for (v, &c) in f.iter_mut().zip(&crash) {
        if c {
            *v = false;
        }
    }
    CleanupStages {
        head,
        merged,
        lone_removed,
        tail: f,
    }
}

/// Cuts every interval at the frame where the ring centroid first passes
/// `end_zone_x` in its direction of travel. `centroids[i]` is frame
/// `segment.start_frame + i`; missing centroids carry the last known one
/// forward.
pub fn exclude_end_zone(
    intervals: &[Interval],
    centroids: &[Option<(f64, f64)>],
    segment: &InteractionSegment,
) -> Result<Vec<Interval>> {
    let Some(limit) = segment.end_zone_x.filter(|_| !segment.tower.is_vertical()) else {
        return Err(Error::InvalidParameter(format!(
            "end-zone exclusion needs a horizontal tower with end_zone_x, got {}",
            segment.tower
        )));
    };
    let known: Vec<f64> = centroids.iter().flatten().map(|c| c.0).collect();
    let (Some(&first), Some(&last)) = (known.first(), known.last()) else {
        return Ok(intervals.to_vec());
    };
    let forward = last >= first;
    let limit = limit as f64;
    let mut current = None;
    let mut crossing = None;
    for (i, c) in centroids.iter().enumerate() {
        if let Some(c) = c {
            current = Some(c.0);
        }
        if let Some(x) = current {
            let crossed = if forward { x >= limit } else { x <= limit };
            if crossed {
                crossing = Some(segment.start_frame + i);
                break;
            }
        }
    }
    let Some(cut) = crossing else {
        return Ok(intervals.to_vec());
    };
    Ok(intervals
        .iter()
        .filter(|iv| iv.start < cut)
        .map(|iv| Interval::new(iv.start, iv.end.min(cut - 1)))
        .collect())
}

pub fn detect_interaction(
    seq: &FrameSequence,
    segment: &InteractionSegment,
    crashes: &[CrashInterval],
    config: &DetectorConfig,
) -> Result<DetectionTrace> {
    detect_interaction_with(Exec::default(), seq, segment, crashes, config)
}

pub fn detect_interaction_with(
    exec: Exec,
    seq: &FrameSequence,
    segment: &InteractionSegment,
    crashes: &[CrashInterval],
    config: &DetectorConfig,
) -> Result<DetectionTrace> {
    config.validate()?;
    if segment.end_frame >= seq.len() || segment.start_frame >= segment.end_frame {
        return Err(Error::Segmentation(format!(
            "{}: span [{}, {}] invalid for {} frames",
            segment.tower,
            segment.start_frame,
            segment.end_frame,
            seq.len()
        )));
    }
    let horizontal = !segment.tower.is_vertical();
    let start = segment.start_frame;
    let n = segment.frame_count();
    let is_crash = |f: usize| crashes.iter().any(|c| c.contains(f));
    let live: Vec<usize> = (start..=segment.end_frame)
        .filter(|&f| !is_crash(f))
        .collect();
    let masks = segment_masks(exec, seq, &live, &segment.roi, horizontal, config)?;
    let mut tower_by_frame: Vec<Option<BinaryMask>> = vec![None; n];
    let mut centroids: Vec<Option<(f64, f64)>> = vec![None; n];
    for (&f, m) in live.iter().zip(masks) {
        centroids[f - start] = m.ring_centroid;
        tower_by_frame[f - start] = Some(m.tower);
    }

    let mut flags = vec![false; n];
    let mut block_traces = Vec::new();
    for span in blocks(segment, crashes) {
        let towers: Vec<BinaryMask> = span
            .frames()
            .map(|f| tower_by_frame[f - start].clone().expect("live frame"))
            .collect();
        let raw = motion_values(exec, seq, span, &segment.roi, &towers, config)?;
        let (trace, block) = block_flags(raw, span, config)?;
        flags[span.start - start..=span.end - start].copy_from_slice(&block);
        block_traces.push(trace);
    }

    let mut intervals = cleanup(&flags, segment, crashes, config);
    if horizontal {
        intervals = exclude_end_zone(&intervals, &centroids, segment)?;
    }

    let rows = trace_rows(seq, segment, crashes, &block_traces, &flags, &intervals);
    Ok(DetectionTrace {
        segment: *segment,
        blocks: block_traces,
        flags,
        rows,
        intervals,
    })
}

fn trace_rows(
    seq: &FrameSequence,
    segment: &InteractionSegment,
    crashes: &[CrashInterval],
    blocks: &[BlockTrace],
    flags: &[bool],
    intervals: &[Interval],
) -> Vec<TraceRow> {
    let start = segment.start_frame;
    let mut rows: Vec<TraceRow> = (start..=segment.end_frame)
        .map(|f| TraceRow {
            frame: f,
            timestamp_s: seq.timestamp(f),
            crash: crashes.iter().any(|c| c.contains(f)),
            raw: None,
            filtered: None,
            derivative: None,
            high_band_db: None,
            flagged: flags[f - start],
            detected: intervals.iter().any(|iv| iv.contains(f)),
        })
        .collect();
    for b in blocks {
        let first = b.raw.first_frame;
        for (i, (&r, &m)) in b.raw.values.iter().zip(&b.filtered).enumerate() {
            rows[first + i - start].raw = Some(r);
            rows[first + i - start].filtered = Some(m);
        }
        for (i, &d) in b.derivative.iter().enumerate() {
            rows[first + i - start].derivative = Some(d);
        }
        if let Some(spec) = &b.spectrogram {
            for col in &spec.columns {
                rows[first + col.center - start].high_band_db = Some(col.high_db());
            }
        }
    }
    rows
}

/// Runs all four interactions of a visit.
pub fn detect_visit(
    seq: &FrameSequence,
    segmentation: &Segmentation,
    config: &DetectorConfig,
) -> Result<(ErrorIntervalSet, Vec<DetectionTrace>)> {
    detect_visit_with(Exec::default(), seq, segmentation, config)
}

pub fn detect_visit_with(
    exec: Exec,
    seq: &FrameSequence,
    segmentation: &Segmentation,
    config: &DetectorConfig,
) -> Result<(ErrorIntervalSet, Vec<DetectionTrace>)> {
    segmentation.validate_for(seq)?;
    let traces = exec
        .map_slice(&TowerId::ALL, |&tower| {
            detect_interaction_with(
                exec,
                seq,
                segmentation.segment(tower),
                &segmentation.crashes_in(tower),
                config,
            )
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut labels = ErrorIntervalSet::empty(Provenance::Auto);
    for (tower, trace) in TowerId::ALL.into_iter().zip(&traces) {
        labels.set(tower, trace.intervals.clone())?;
    }
    Ok((labels, traces))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segment(tower: TowerId, start: usize, end: usize) -> InteractionSegment {
        InteractionSegment {
            tower,
            start_frame: start,
            end_frame: end,
            roi: Roi::new(0, 0, 100, 100),
            end_zone_x: (!tower.is_vertical()).then_some(50),
        }
    }

    fn flags_at(seg: &InteractionSegment, on: &[(usize, usize)]) -> Vec<bool> {
        (seg.start_frame..=seg.end_frame)
            .map(|f| on.iter().any(|&(a, b)| f >= a && f <= b))
            .collect()
    }

    #[test]
    fn merge_rule_joins_gap_of_four() {
        let cfg = DetectorConfig::default();
        let seg = segment(TowerId::RV, 0, 100);
        let out = cleanup(&flags_at(&seg, &[(5, 8), (12, 15)]), &seg, &[], &cfg);
        assert_eq!(out, vec![Interval::new(5, 15)]);
    }

    #[test]
    fn lone_sample_removed() {
        let cfg = DetectorConfig::default();
        let seg = segment(TowerId::RV, 0, 100);
        let out = cleanup(&flags_at(&seg, &[(20, 20)]), &seg, &[], &cfg);
        assert!(out.is_empty());
    }

    #[test]
    fn vertical_tail_extends_horizontal_does_not() {
        let cfg = DetectorConfig::default();
        let rv = segment(TowerId::RV, 10, 200);
        let out = cleanup(&flags_at(&rv, &[(193, 194)]), &rv, &[], &cfg);
        assert_eq!(out, vec![Interval::new(193, 200)]);
        let lh = segment(TowerId::LH, 10, 200);
        let out = cleanup(&flags_at(&lh, &[(193, 194)]), &lh, &[], &cfg);
        assert_eq!(out, vec![Interval::new(193, 194)]);
    }

    #[test]
    fn head_spike_dropped_unless_continued() {
        let cfg = DetectorConfig::default();
        let seg = segment(TowerId::LV, 0, 100);
        assert!(cleanup(&flags_at(&seg, &[(0, 3)]), &seg, &[], &cfg).is_empty());
        assert_eq!(
            cleanup(&flags_at(&seg, &[(2, 30)]), &seg, &[], &cfg),
            vec![Interval::new(2, 30)]
        );
        // a run outside the head window is not subject to the rule
        assert_eq!(
            cleanup(&flags_at(&seg, &[(40, 42)]), &seg, &[], &cfg),
            vec![Interval::new(40, 42)]
        );
    }

    #[test]
    fn crash_frames_excised_and_not_bridged() {
        let cfg = DetectorConfig::default();
        let seg = segment(TowerId::LH, 0, 100);
        let crash = [CrashInterval {
            start_frame: 40,
            end_frame: 44,
        }];
        let out = cleanup(&flags_at(&seg, &[(30, 41), (46, 60)]), &seg, &crash, &cfg);
        assert_eq!(out, vec![Interval::new(30, 39), Interval::new(46, 60)]);
    }

    #[test]
    fn end_zone_cut() {
        let seg = InteractionSegment {
            end_zone_x: Some(60),
            ..segment(TowerId::LH, 50, 160)
        };
        let centroid = |f: usize| Some((f as f64 - 60.0, 20.0));
        // x = frame - 60 reaches 60 at frame 120
        let cents: Vec<_> = (50..=160).map(centroid).collect();
        let out = exclude_end_zone(&[Interval::new(100, 140)], &cents, &seg).unwrap();
        assert_eq!(out, vec![Interval::new(100, 119)]);
        let out = exclude_end_zone(&[Interval::new(125, 140)], &cents, &seg).unwrap();
        assert!(out.is_empty());
        let still: Vec<_> = (50..=160).map(|_| Some((10.0, 20.0))).collect();
        let out = exclude_end_zone(&[Interval::new(100, 140)], &still, &seg).unwrap();
        assert_eq!(out, vec![Interval::new(100, 140)]);
        assert!(exclude_end_zone(&[], &cents, &segment(TowerId::RV, 0, 10)).is_err());
    }

    #[test]
    fn end_zone_reverse_direction_and_gaps() {
        let seg = InteractionSegment {
            end_zone_x: Some(30),
            ..segment(TowerId::RH, 0, 40)
        };
        // travelling towards smaller x, centroid missing for a while
        let cents: Vec<_> = (0..=40usize)
            .map(|f| {
                if (15..25).contains(&f) {
                    None
                } else {
                    Some((60.0 - f as f64, 5.0))
                }
            })
            .collect();
        // x <= 30 first at frame 30; frames 15..25 carry x = 46
        let out = exclude_end_zone(&[Interval::new(10, 35)], &cents, &seg).unwrap();
        assert_eq!(out, vec![Interval::new(10, 29)]);
    }
}

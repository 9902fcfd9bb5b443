//! Scripted synthetic ring-tower scenes with exact ground truth.
//!
//! A scene is a flat-shaded image of four green towers on a light
//! background, a black ring travelling along the active tower with a gray
//! instrument shaft attached, and scripted tower jitter. Ground truth is the
//! set of jitter windows minus crash frames.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{
    runs_of, save_frames, save_labels, save_segmentation, write_json, CrashInterval,
    DetectorConfig, ErrorIntervalSet, Frame, FrameSequence, InteractionSegment, Interval,
    Provenance, Roi, Segmentation, TowerId, SCHEMA_VERSION,
};
use crate::vision::rgb_to_hsv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TowerShape {
    pub tower: TowerId,
    pub rect: Roi,
    /// +1 or -1: direction the ring travels along the tower's long axis.
    pub direction: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSegment {
    pub tower: TowerId,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// Tower displacement over `[start_frame, end_frame]`: the tower sits at
/// `(dx, dy)` for two frames, at rest for two, and so on; the last frame is
/// always at rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterEvent {
    pub tower: TowerId,
    pub start_frame: usize,
    pub end_frame: usize,
    pub dx: i32,
    pub dy: i32,
}

impl JitterEvent {
    pub fn offset_at(&self, frame: usize) -> Option<(i32, i32)> {
        let displaced = frame >= self.start_frame
            && frame < self.end_frame
            && ((frame - self.start_frame) / 2).is_multiple_of(2);
        displaced.then_some((self.dx, self.dy))
    }

    fn window(&self) -> Interval {
        Interval::new(self.start_frame, self.end_frame)
    }
}

/// A static gray rectangle drawn over the scene for a frame span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Occluder {
    pub start_frame: usize,
    pub end_frame: usize,
    pub rect: Roi,
}

fn default_rate() -> f64 {
    35.0
}

fn default_rate_jitter() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneScript {
    pub name: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub frame_count: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_rate")]
    pub frame_rate_hz: f64,
    /// Relative bound on the per-frame interval deviation from `1/rate`.
    #[serde(default = "default_rate_jitter")]
    pub rate_jitter: f64,
    pub background_rgb: [u8; 3],
    pub tower_rgb: [u8; 3],
    pub ring_rgb: [u8; 3],
    pub instrument_rgb: [u8; 3],
    pub ring_outer_radius: u32,
    pub ring_inner_radius: u32,
    /// Frames the ring rests at the start of each segment before moving.
    pub ring_lead: usize,
    pub roi_margin: u32,
    /// Distance of the end-zone boundary from the far end of a horizontal
    /// tower.
    pub end_zone_depth: u32,
    pub towers: Vec<TowerShape>,
    pub segments: Vec<ScriptSegment>,
    #[serde(default)]
    pub jitters: Vec<JitterEvent>,
    /// Intentional tower motion from ring placement in the end zone; not
    /// part of the ground truth.
    #[serde(default)]
    pub placements: Vec<JitterEvent>,
    #[serde(default)]
    pub crashes: Vec<CrashInterval>,
    #[serde(default)]
    pub occluders: Vec<Occluder>,
}

pub const SEGMENT_FRAMES: usize = 160;
pub const TRANSFER_FRAMES: usize = 12;
pub const LEAD_FRAMES: usize = 6;

impl SceneScript {
    /// The standard four-tower layout with evenly spaced segments and no
    /// events.
    pub fn standard(name: impl Into<String>, seed: u64) -> Self {
        let towers = vec![
            TowerShape {
                tower: TowerId::RV,
                rect: Roi::new(170, 15, 12, 70),
                direction: 1,
            },
            TowerShape {
                tower: TowerId::LH,
                rect: Roi::new(20, 40, 100, 12),
                direction: 1,
            },
            TowerShape {
                tower: TowerId::LV,
                rect: Roi::new(50, 95, 12, 70),
                direction: 1,
            },
            TowerShape {
                tower: TowerId::RH,
                rect: Roi::new(120, 125, 100, 12),
                direction: -1,
            },
        ];
        let segments = TowerId::ALL
            .iter()
            .enumerate()
            .map(|(i, &tower)| {
                let start = LEAD_FRAMES + i * (SEGMENT_FRAMES + TRANSFER_FRAMES);
                ScriptSegment {
                    tower,
                    start_frame: start,
                    end_frame: start + SEGMENT_FRAMES - 1,
                }
            })
            .collect::<Vec<_>>();
        let frame_count = segments[3].end_frame + 1 + LEAD_FRAMES;
        Self {
            name: name.into(),
            seed,
            width: 240,
            height: 180,
            frame_count,
            noise_sigma: 0.0,
            frame_rate_hz: default_rate(),
            rate_jitter: default_rate_jitter(),
            background_rgb: [200, 190, 170],
            tower_rgb: [22, 87, 100],
            ring_rgb: [30, 30, 30],
            instrument_rgb: [140, 140, 140],
            ring_outer_radius: 7,
            ring_inner_radius: 4,
            ring_lead: 15,
            roi_margin: 10,
            end_zone_depth: 16,
            towers,
            segments,
            jitters: Vec::new(),
            placements: Vec::new(),
            crashes: Vec::new(),
            occluders: Vec::new(),
        }
    }

    pub fn segment(&self, tower: TowerId) -> &ScriptSegment {
        &self.segments[tower.index()]
    }

    pub fn shape(&self, tower: TowerId) -> &TowerShape {
        &self.towers[tower.index()]
    }

    /// Jitter window relative to the start of `tower`'s segment.
    pub fn with_jitter(
        mut self,
        tower: TowerId,
        offset: usize,
        len: usize,
        dx: i32,
        dy: i32,
    ) -> Self {
        let start = self.segment(tower).start_frame + offset;
        self.jitters.push(JitterEvent {
            tower,
            start_frame: start,
            end_frame: start + len - 1,
            dx,
            dy,
        });
        self
    }

    /// Placement motion starting `delay` frames after the ring enters the
    /// end zone.
    pub fn with_placement(
        mut self,
        tower: TowerId,
        delay: usize,
        len: usize,
        dx: i32,
        dy: i32,
    ) -> Self {
        let start = self.end_zone_crossing(tower).expect("horizontal tower") + delay;
        self.placements.push(JitterEvent {
            tower,
            start_frame: start,
            end_frame: start + len - 1,
            dx,
            dy,
        });
        self
    }

    pub fn with_crash(mut self, tower: TowerId, offset: usize, len: usize) -> Self {
        let start = self.segment(tower).start_frame + offset;
        self.crashes.push(CrashInterval {
            start_frame: start,
            end_frame: start + len - 1,
        });
        self
    }

    /// Gray block over the middle third of the tower for its whole segment.
    pub fn with_occluder(mut self, tower: TowerId) -> Self {
        let seg = *self.segment(tower);
        let r = self.shape(tower).rect;
        let rect = if tower.is_vertical() {
            Roi::new(r.x + r.width / 2, r.y + r.height / 3, r.width, r.height / 3)
        } else {
            Roi::new(r.x + r.width / 3, r.y + r.height / 2, r.width / 3, r.height)
        };
        self.occluders.push(Occluder {
            start_frame: seg.start_frame,
            end_frame: seg.end_frame,
            rect,
        });
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    fn ring_track(&self, tower: TowerId) -> (i64, i64, i64) {
        // (fixed cross-axis coordinate, first and last axis position)
        let shape = self.shape(tower);
        let r = shape.rect;
        let inset = 8i64;
        let (cross, lo, hi) = if tower.is_vertical() {
            (r.x as i64 - 1, r.y as i64, r.y_end() as i64 - 1)
        } else {
            (r.y as i64 - 1, r.x as i64, r.x_end() as i64 - 1)
        };
        if shape.direction >= 0 {
            (cross, lo + inset, hi - inset)
        } else {
            (cross, hi - inset, lo + inset)
        }
    }

    fn ring_at_segment(&self, seg: &ScriptSegment, frame: usize) -> (i64, i64) {
        let (cross, from, to) = self.ring_track(seg.tower);
        let steps = frame.saturating_sub(seg.start_frame + self.ring_lead) as i64;
        let along = if to >= from {
            (from + steps).min(to)
        } else {
            (from - steps).max(to)
        };
        if seg.tower.is_vertical() {
            (cross, along)
        } else {
            (along, cross)
        }
    }

    /// Ring centre at `frame`. Between segments the ring waits where it
    /// stopped; before the first it waits at the first start.
    pub fn ring_position(&self, frame: usize) -> ((i64, i64), TowerId) {
        let seg = self
            .segments
            .iter()
            .rev()
            .find(|s| s.start_frame <= frame)
            .unwrap_or(&self.segments[0]);
        (self.ring_at_segment(seg, frame), seg.tower)
    }

    /// Column of the end-zone boundary of a horizontal tower.
    pub fn end_zone_x(&self, tower: TowerId) -> Option<u32> {
        if tower.is_vertical() {
            return None;
        }
        let shape = self.shape(tower);
        let r = shape.rect;
        Some(if shape.direction >= 0 {
            r.x_end() - self.end_zone_depth
        } else {
            r.x + self.end_zone_depth - 1
        })
    }

    /// First frame at which the ring centre is inside the end zone.
    pub fn end_zone_crossing(&self, tower: TowerId) -> Option<usize> {
        let ez = self.end_zone_x(tower)? as i64;
        let seg = self.segment(tower);
        let forward = self.shape(tower).direction >= 0;
        (seg.start_frame..=seg.end_frame).find(|&f| {
            let x = self.ring_at_segment(seg, f).0;
            if forward {
                x >= ez
            } else {
                x <= ez
            }
        })
    }

    fn tower_offset(&self, tower: TowerId, frame: usize) -> (i32, i32) {
        self.jitters
            .iter()
            .chain(&self.placements)
            .filter(|j| j.tower == tower)
            .find_map(|j| j.offset_at(frame))
            .unwrap_or((0, 0))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Script(format!("{}: {msg}", self.name)));
        if self.width == 0 || self.height == 0 || self.frame_count < 2 {
            return fail("frame size and count must be positive (at least two frames)".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!(
                "noise_sigma {} must be finite and >= 0",
                self.noise_sigma
            ));
        }
        if self.frame_rate_hz.is_nan()
            || self.frame_rate_hz <= 0.0
            || !(0.0..1.0).contains(&self.rate_jitter)
        {
            return fail("frame rate must be positive and rate_jitter in [0, 1)".into());
        }
        if self.ring_inner_radius >= self.ring_outer_radius {
            return fail("ring inner radius must be below the outer radius".into());
        }
        let cfg = DetectorConfig::default();
        let passes = |rgb: [u8; 3]| {
            let hsv = rgb_to_hsv(rgb);
            hsv.h >= cfg.hue_min
                && hsv.h <= cfg.hue_max
                && hsv.s >= cfg.sat_min
                && hsv.v <= cfg.val_max
        };
        if !passes(self.tower_rgb) {
            return fail(format!(
                "tower colour {:?} fails the tower thresholds",
                self.tower_rgb
            ));
        }
        for (what, rgb) in [
            ("background", self.background_rgb),
            ("ring", self.ring_rgb),
            ("instrument", self.instrument_rgb),
        ] {
            if passes(rgb) {
                return fail(format!("{what} colour {rgb:?} passes the tower thresholds"));
            }
        }
        if rgb_to_hsv(self.ring_rgb).v > cfg.val_max_ring {
            return fail("ring colour is not dark enough for the ring mask".into());
        }
        if self.towers.len() != 4 || self.segments.len() != 4 {
            return fail("exactly four towers and four segments are required".into());
        }
        for (i, tower) in TowerId::ALL.into_iter().enumerate() {
            if self.towers[i].tower != tower || self.segments[i].tower != tower {
                return fail("towers and segments must follow the order RV, LH, LV, RH".into());
            }
            if self.segments[i].end_frame >= self.frame_count {
                return fail(format!("{tower} segment extends past the last frame"));
            }
        }
        for j in self.jitters.iter().chain(&self.placements) {
            let seg = self.segment(j.tower);
            if j.start_frame >= j.end_frame
                || j.start_frame < seg.start_frame
                || j.end_frame > seg.end_frame
            {
                return fail(format!(
                    "jitter [{}, {}] must lie inside the {} segment and span two frames",
                    j.start_frame, j.end_frame, j.tower
                ));
            }
            let r = self.shape(j.tower).rect;
            let x = r.x as i64 + j.dx as i64;
            let y = r.y as i64 + j.dy as i64;
            if x < 0
                || y < 0
                || x + r.width as i64 > self.width as i64
                || y + r.height as i64 > self.height as i64
            {
                return fail(format!(
                    "jitter on {} moves the tower out of the frame",
                    j.tower
                ));
            }
        }
        let mut events: Vec<&JitterEvent> = self.jitters.iter().chain(&self.placements).collect();
        events.sort_by_key(|j| (j.tower, j.start_frame));
        for pair in events.windows(2) {
            if pair[0].tower == pair[1].tower && pair[1].start_frame <= pair[0].end_frame {
                return fail(format!("overlapping jitter events on {}", pair[0].tower));
            }
        }
        for tower in [TowerId::LH, TowerId::RH] {
            let crossing = self.end_zone_crossing(tower);
            for j in self.jitters.iter().filter(|j| j.tower == tower) {
                if crossing.is_some_and(|c| j.end_frame >= c) {
                    return fail(format!(
                        "collision jitter on {tower} reaches into the end zone; script it as a placement"
                    ));
                }
            }
            for p in self.placements.iter().filter(|p| p.tower == tower) {
                if crossing.is_none_or(|c| p.start_frame < c) {
                    return fail(format!("placement on {tower} starts before the end zone"));
                }
            }
        }
        if self.placements.iter().any(|p| p.tower.is_vertical()) {
            return fail("placements are only defined on horizontal towers".into());
        }
        for o in &self.occluders {
            if o.start_frame > o.end_frame || !o.rect.fits_within(self.width, self.height) {
                return fail("occluder outside the frame".into());
            }
        }
        Ok(())
    }

    /// Segmentation with an ROI around each tower wide enough for its jitter.
    pub fn segmentation(&self) -> Result<Segmentation> {
        let segments = self
            .segments
            .iter()
            .map(|s| {
                let reach = self
                    .jitters
                    .iter()
                    .chain(&self.placements)
                    .filter(|j| j.tower == s.tower)
                    .map(|j| j.dx.unsigned_abs().max(j.dy.unsigned_abs()))
                    .max()
                    .unwrap_or(0);
                InteractionSegment {
                    tower: s.tower,
                    start_frame: s.start_frame,
                    end_frame: s.end_frame,
                    roi: self.shape(s.tower).rect.expand(
                        self.roi_margin + reach,
                        self.width,
                        self.height,
                    ),
                    end_zone_x: self.end_zone_x(s.tower),
                }
            })
            .collect();
        let mut crashes = self.crashes.clone();
        crashes.sort_by_key(|c| c.start_frame);
        Segmentation::new(segments, crashes)
    }

    /// Scripted jitter windows minus crash frames.
    pub fn ground_truth(&self) -> Result<ErrorIntervalSet> {
        let mut truth = ErrorIntervalSet::empty(Provenance::Corrected);
        for tower in TowerId::ALL {
            let seg = self.segment(tower);
            let flags: Vec<bool> = (seg.start_frame..=seg.end_frame)
                .map(|f| {
                    self.jitters
                        .iter()
                        .any(|j| j.tower == tower && j.window().contains(f))
                        && !self.crashes.iter().any(|c| c.contains(f))
                })
                .collect();
            truth.set(tower, runs_of(&flags, seg.start_frame))?;
        }
        Ok(truth)
    }

    /// Irregular capture times: intervals of `1/rate` scaled by a uniform
    /// factor in `[1 - rate_jitter, 1 + rate_jitter]`.
    pub fn timestamps(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let base = 1.0 / self.frame_rate_hz;
        let mut t = 0.0;
        (0..self.frame_count)
            .map(|i| {
                if i > 0 {
                    let u: f64 = rng.random_range(-1.0..=1.0);
                    t += base * (1.0 + self.rate_jitter * u);
                }
                t
            })
            .collect()
    }

    pub fn render_frame(&self, frame: usize) -> RgbImage {
        let mut img = RgbImage::from_pixel(self.width, self.height, Rgb(self.background_rgb));
        let fill = |img: &mut RgbImage, x0: i64, y0: i64, w: i64, h: i64, rgb: [u8; 3]| {
            let xs = x0.max(0)..(x0 + w).min(self.width as i64);
            for y in y0.max(0)..(y0 + h).min(self.height as i64) {
                for x in xs.clone() {
                    img.put_pixel(x as u32, y as u32, Rgb(rgb));
                }
            }
        };
        for shape in &self.towers {
            let (dx, dy) = self.tower_offset(shape.tower, frame);
            let r = shape.rect;
            fill(
                &mut img,
                r.x as i64 + dx as i64,
                r.y as i64 + dy as i64,
                r.width as i64,
                r.height as i64,
                self.tower_rgb,
            );
        }
        let ((cx, cy), tower) = self.ring_position(frame);
        let outer = self.ring_outer_radius as i64;
        let inner = self.ring_inner_radius as i64;
        for y in cy - outer..=cy + outer {
            for x in cx - outer..=cx + outer {
                let d2 = (x - cx).pow(2) + (y - cy).pow(2);
                if d2 <= outer * outer
                    && d2 > inner * inner
                    && (0..self.width as i64).contains(&x)
                    && (0..self.height as i64).contains(&y)
                {
                    img.put_pixel(x as u32, y as u32, Rgb(self.ring_rgb));
                }
            }
        }
        // the shaft leaves the ring away from the tower
        if tower.is_vertical() {
            fill(&mut img, 0, cy - 2, cx - outer, 5, self.instrument_rgb);
        } else {
            fill(&mut img, cx - 2, 0, 5, cy - outer, self.instrument_rgb);
        }
        for o in self
            .occluders
            .iter()
            .filter(|o| o.start_frame <= frame && frame <= o.end_frame)
        {
            let r = o.rect;
            fill(
                &mut img,
                r.x as i64,
                r.y as i64,
                r.width as i64,
                r.height as i64,
                self.instrument_rgb,
            );
        }
        if self.noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(frame as u64 + 1);
            let normal = Normal::new(0.0, self.noise_sigma).expect("sigma validated");
            for p in img.pixels_mut() {
                for c in p.0.iter_mut() {
                    let v = *c as f64 + normal.sample(&mut rng);
                    *c = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        img
    }
}

/// A rendered scene ready for the pipeline.
#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub frames: FrameSequence,
    pub truth: ErrorIntervalSet,
    pub segmentation: Segmentation,
}

pub fn render(script: &SceneScript) -> Result<RenderedScene> {
    render_with(Exec::default(), script)
}

pub fn render_with(exec: Exec, script: &SceneScript) -> Result<RenderedScene> {
    script.validate()?;
    let stamps = script.timestamps();
    let frames = exec.map_range(script.frame_count, |i| Frame {
        index: i,
        timestamp_s: stamps[i],
        pixels: script.render_frame(i),
    });
    Ok(RenderedScene {
        frames: FrameSequence::new(script.name.clone(), frames)?,
        truth: script.ground_truth()?,
        segmentation: script.segmentation()?,
    })
}

/// The 20-case benchmark: static scenes, single and multiple jitters,
/// occlusion, crashes and end-zone placement.
pub fn default_corpus() -> Vec<SceneScript> {
    use TowerId::*;
    let s = SceneScript::standard;
    vec![
        s("static-a", 101),
        s("static-b", 102),
        s("single-rv", 103).with_jitter(RV, 40, 64, 3, 0),
        s("single-lh", 104).with_jitter(LH, 15, 64, 0, 3),
        s("single-lv", 105).with_jitter(LV, 60, 70, -3, 0),
        s("single-rh", 106).with_jitter(RH, 20, 60, 0, -3),
        s("single-rv-diag", 107).with_jitter(RV, 70, 60, 2, 2),
        s("single-lh-small", 108).with_jitter(LH, 20, 60, 0, 2),
        s("multi-rv", 109)
            .with_jitter(RV, 12, 60, 3, 0)
            .with_jitter(RV, 90, 46, -3, 0),
        s("multi-towers", 110)
            .with_jitter(RV, 40, 64, 3, 0)
            .with_jitter(LH, 15, 64, 0, 3)
            .with_jitter(LV, 50, 70, 3, 0),
        s("multi-three", 111)
            .with_jitter(LV, 12, 56, 3, 0)
            .with_jitter(LV, 86, 50, -2, 0)
            .with_jitter(RH, 20, 64, 0, 3),
        s("multi-all", 112)
            .with_jitter(RV, 50, 64, 3, 0)
            .with_jitter(LH, 12, 64, 0, -3)
            .with_jitter(LV, 40, 80, 3, 0)
            .with_jitter(RH, 15, 64, 0, 3),
        s("occluded-rv", 113)
            .with_occluder(RV)
            .with_jitter(RV, 50, 64, 3, 0),
        s("occluded-lh", 114)
            .with_occluder(LH)
            .with_jitter(LH, 15, 64, 0, 3),
        s("crash-inside", 115)
            .with_crash(LV, 60, 50)
            .with_jitter(LV, 70, 30, 3, 0),
        s("crash-partial", 116)
            .with_crash(RV, 100, 20)
            .with_jitter(RV, 40, 70, 3, 0)
            .with_jitter(LH, 15, 64, 0, 3),
        s("end-zone-lh", 117).with_placement(LH, 10, 30, 0, 3),
        s("end-zone-rh", 118)
            .with_jitter(RH, 10, 64, 0, 3)
            .with_placement(RH, 12, 30, 0, -3),
        s("tail-lv", 119).with_jitter(LV, 100, 60, 3, 0),
        s("mixed", 120)
            .with_occluder(LV)
            .with_jitter(RV, 30, 64, -3, 0)
            .with_crash(LV, 20, 15)
            .with_jitter(LV, 70, 70, 3, 0)
            .with_placement(LH, 10, 24, 0, 3)
            .with_jitter(RH, 15, 64, 0, 3),
    ]
}

/// File locations of one written case, relative to the corpus root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestCase {
    pub name: String,
    pub frames: PathBuf,
    pub timestamps: PathBuf,
    pub segmentation: PathBuf,
    pub truth: PathBuf,
    pub script: PathBuf,
    pub frame_count: usize,
    pub ground_truth: BTreeMap<TowerId, Vec<Interval>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub cases: Vec<ManifestCase>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: Manifest = crate::model::read_json(path, "manifest")?;
        crate::model::check_schema(m.schema_version)?;
        Ok(m)
    }
}

/// Renders `script` into `root/<name>/` and returns its manifest entry.
pub fn write_case(exec: Exec, script: &SceneScript, root: &Path) -> Result<ManifestCase> {
    let scene = render_with(exec, script)?;
    let dir = root.join(&script.name);
    let frames_dir = dir.join("frames");
    let ts = save_frames(&scene.frames, &frames_dir)?;
    save_segmentation(&scene.segmentation, &dir.join("segmentation.json"))?;
    save_labels(&scene.truth, &dir.join("truth.json"))?;
    write_json(&dir.join("script.json"), script)?;
    let rel = |p: &Path| p.strip_prefix(root).unwrap_or(p).to_path_buf();
    Ok(ManifestCase {
        name: script.name.clone(),
        frames: rel(&frames_dir),
        timestamps: rel(&ts),
        segmentation: rel(&dir.join("segmentation.json")),
        truth: rel(&dir.join("truth.json")),
        script: rel(&dir.join("script.json")),
        frame_count: script.frame_count,
        ground_truth: TowerId::ALL
            .into_iter()
            .map(|t| (t, scene.truth.get(t).to_vec()))
            .collect(),
    })
}

/// Writes every case plus `manifest.json`; cases render in parallel.
pub fn write_corpus(exec: Exec, scripts: &[SceneScript], root: &Path) -> Result<Manifest> {
    let mut names = std::collections::HashSet::new();
    if let Some(dup) = scripts.iter().find(|s| !names.insert(s.name.as_str())) {
        return Err(Error::Script(format!("duplicate case name {}", dup.name)));
    }
    std::fs::create_dir_all(root).map_err(|source| Error::Io {
        path: root.to_path_buf(),
        source,
    })?;
    let cases = exec
        .map_slice(scripts, |s| write_case(Exec::Sequential, s, root))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        cases,
    };
    write_json(&root.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn load_script(path: &Path) -> Result<SceneScript> {
    let script: SceneScript = crate::model::read_json(path, "script")?;
    script.validate()?;
    Ok(script)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vision::tower_mask;

    #[test]
    fn standard_scene_is_valid() {
        let s = SceneScript::standard("s", 1);
        s.validate().unwrap();
        s.segmentation().unwrap();
        for script in default_corpus() {
            script.validate().unwrap();
        }
        assert_eq!(default_corpus().len(), 20);
    }

    #[test]
    fn ground_truth_is_the_jitter_window() {
        let s = SceneScript::standard("s", 1);
        assert_eq!(s.ground_truth().unwrap().total_intervals(), 0);
        let rv = s.segment(TowerId::RV).start_frame;
        let s = s.with_jitter(TowerId::RV, 34, 6, 3, 0);
        assert_eq!(
            s.ground_truth().unwrap().get(TowerId::RV),
            &[Interval::new(rv + 34, rv + 39)]
        );
        let s = s.with_crash(TowerId::RV, 36, 2);
        assert_eq!(
            s.ground_truth().unwrap().get(TowerId::RV),
            &[
                Interval::new(rv + 34, rv + 35),
                Interval::new(rv + 38, rv + 39)
            ]
        );
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = SceneScript::standard("s", 9).with_noise(2.0);
        assert_eq!(s.render_frame(40), s.render_frame(40));
        assert_ne!(s.render_frame(40), s.render_frame(41));
        assert_eq!(s.timestamps(), s.timestamps());
    }

    #[test]
    fn timestamps_stay_within_bounds() {
        let s = SceneScript::standard("s", 3);
        let ts = s.timestamps();
        assert_eq!(ts[0], 0.0);
        let base = 1.0 / 35.0;
        for w in ts.windows(2) {
            let d = w[1] - w[0];
            assert!(d >= 0.8 * base - 1e-12 && d <= 1.2 * base + 1e-12, "{d}");
        }
    }

    #[test]
    fn tower_pixels_pass_and_background_fails() {
        let s = SceneScript::standard("s", 1);
        // frame before the ring reaches any tower edge it could overlap
        let frame = 0;
        let img = s.render_frame(frame);
        let mask = tower_mask(&img, &DetectorConfig::default());
        let ((cx, cy), _) = s.ring_position(frame);
        let near_ring = |x: u32, y: u32| {
            (x as i64 - cx).abs() <= s.ring_outer_radius as i64
                && (y as i64 - cy).abs() <= s.ring_outer_radius as i64
        };
        for y in 0..s.height {
            for x in 0..s.width {
                let in_tower = s.towers.iter().any(|t| t.rect.contains(x, y));
                if in_tower && !near_ring(x, y) {
                    assert!(mask.get(x, y), "tower pixel ({x},{y})");
                }
                if !in_tower {
                    assert!(!mask.get(x, y), "background pixel ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn jitter_preserves_tower_pixel_count() {
        let s = SceneScript::standard("s", 1).with_jitter(TowerId::LV, 0, 20, 3, 0);
        let start = s.segment(TowerId::LV).start_frame;
        // lower part of the tower, clear of the resting ring
        let full = s.segmentation().unwrap().segment(TowerId::LV).roi;
        let roi = Roi::new(full.x, 120, full.width, full.y_end() - 120);
        let cfg = DetectorConfig::default();
        let count = |f: usize| {
            crate::vision::restrict_roi(&tower_mask(&s.render_frame(f), &cfg), &roi)
                .unwrap()
                .count() as f64
        };
        let rest = count(start + 2);
        let moved = count(start);
        assert!(s.jitters[0].offset_at(start).is_some());
        assert!((moved - rest).abs() <= 0.02 * rest, "{moved} vs {rest}");
    }

    #[test]
    fn invalid_scripts_rejected() {
        let s = SceneScript::standard("s", 1);
        let mut bad = s.clone();
        bad.tower_rgb = [200, 0, 0];
        assert!(bad.validate().is_err());
        let bad = s
            .clone()
            .with_jitter(TowerId::RV, 10, 10, 3, 0)
            .with_jitter(TowerId::RV, 15, 10, 3, 0);
        assert!(bad.validate().is_err());
        let bad = s.clone().with_jitter(TowerId::LH, 150, 5, 0, 3);
        assert!(bad.validate().is_err(), "jitter in the end zone");
        let mut bad = s.clone();
        bad.placements.push(JitterEvent {
            tower: TowerId::LH,
            start_frame: s.segment(TowerId::LH).start_frame + 1,
            end_frame: s.segment(TowerId::LH).start_frame + 5,
            dx: 0,
            dy: 2,
        });
        assert!(bad.validate().is_err(), "placement before the end zone");
    }

    #[test]
    fn end_zone_crossing_matches_ring_path() {
        let s = SceneScript::standard("s", 1);
        for tower in [TowerId::LH, TowerId::RH] {
            let c = s.end_zone_crossing(tower).unwrap();
            let ez = s.end_zone_x(tower).unwrap() as i64;
            assert_eq!(s.ring_position(c).0 .0, ez);
            assert_ne!(s.ring_position(c - 1).0 .0, ez);
        }
    }
}

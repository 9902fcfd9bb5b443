use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_schema, read_json, write_json, FrameSequence, Roi, TowerId, SCHEMA_VERSION};
use crate::error::{Error, Result};

/// One tower interaction: the manually segmented frame span, the pixel
/// neighbourhood the tower lives in, and for horizontal towers the column
/// where the straight placement section begins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionSegment {
    pub tower: TowerId,
    pub start_frame: usize,
    pub end_frame: usize,
    pub roi: Roi,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_zone_x: Option<u32>,
}

impl InteractionSegment {
    pub fn contains(&self, frame: usize) -> bool {
        frame >= self.start_frame && frame <= self.end_frame
    }

    pub fn frame_count(&self) -> usize {
        self.end_frame + 1 - self.start_frame
    }
}

/// Frames during a robot fault; excluded from every computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashInterval {
    pub start_frame: usize,
    pub end_frame: usize,
}

impl CrashInterval {
    pub fn contains(&self, frame: usize) -> bool {
        frame >= self.start_frame && frame <= self.end_frame
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub segments: Vec<InteractionSegment>,
    pub crashes: Vec<CrashInterval>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentationFile {
    schema_version: u32,
    segments: Vec<InteractionSegment>,
    #[serde(default)]
    crashes: Vec<CrashInterval>,
}

impl Segmentation {
    pub fn new(segments: Vec<InteractionSegment>, crashes: Vec<CrashInterval>) -> Result<Self> {
        let s = Self { segments, crashes };
        s.validate()?;
        Ok(s)
    }

    pub fn segment(&self, tower: TowerId) -> &InteractionSegment {
        &self.segments[tower.index()]
    }

    pub fn is_crash_frame(&self, frame: usize) -> bool {
        self.crashes.iter().any(|c| c.contains(frame))
    }

    pub fn crashes_in(&self, tower: TowerId) -> Vec<CrashInterval> {
        let seg = self.segment(tower);
        self.crashes
            .iter()
            .filter(|c| seg.contains(c.start_frame))
            .copied()
            .collect()
    }

    /// Checks the invariants that do not depend on the video.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Segmentation(m));
        if self.segments.len() != 4 {
            return err(format!(
                "expected 4 segments, found {}",
                self.segments.len()
            ));
        }
        for (i, (seg, expected)) in self.segments.iter().zip(TowerId::ALL).enumerate() {
            if seg.tower != expected {
                return err(format!(
                    "segment {i} is {} but tower order must be RV, LH, LV, RH",
                    seg.tower
                ));
            }
            if seg.start_frame >= seg.end_frame {
                return err(format!(
                    "{}: start_frame {} must be < end_frame {}",
                    seg.tower, seg.start_frame, seg.end_frame
                ));
            }
            if seg.roi.width == 0 || seg.roi.height == 0 {
                return err(format!("{}: empty roi", seg.tower));
            }
            match (seg.tower.is_vertical(), seg.end_zone_x) {
                (false, None) => {
                    return err(format!(
                        "{}: end_zone_x required on a horizontal tower",
                        seg.tower
                    ))
                }
                (true, Some(_)) => {
                    return err(format!(
                        "{}: end_zone_x not allowed on a vertical tower",
                        seg.tower
                    ))
                }
                (false, Some(x)) if x < seg.roi.x || x >= seg.roi.x_end() => {
                    return err(format!(
                        "{}: end_zone_x {x} outside roi x-range [{}, {})",
                        seg.tower,
                        seg.roi.x,
                        seg.roi.x_end()
                    ))
                }
                _ => {}
            }
            if i > 0 {
                let prev = &self.segments[i - 1];
                if seg.start_frame <= prev.end_frame {
                    return err(format!(
                        "segments {} and {} overlap ({}..={} vs {}..={})",
                        prev.tower,
                        seg.tower,
                        prev.start_frame,
                        prev.end_frame,
                        seg.start_frame,
                        seg.end_frame
                    ));
                }
            }
        }
        for (i, c) in self.crashes.iter().enumerate() {
            if c.start_frame > c.end_frame {
                return err(format!("crash {i}: start_frame > end_frame"));
            }
            if !self
                .segments
                .iter()
                .any(|s| s.contains(c.start_frame) && s.contains(c.end_frame))
            {
                return err(format!(
                    "crash {i} [{}, {}] does not lie inside one segment",
                    c.start_frame, c.end_frame
                ));
            }
        }
        Ok(())
    }

    /// Checks frame and pixel bounds against a loaded video.
    pub fn validate_for(&self, seq: &FrameSequence) -> Result<()> {
        self.validate()?;
        for seg in &self.segments {
            if seg.end_frame >= seq.len() {
                return Err(Error::Segmentation(format!(
                    "{}: end_frame {} beyond last frame {}",
                    seg.tower,
                    seg.end_frame,
                    seq.len() - 1
                )));
            }
            if !seg.roi.fits_within(seq.width(), seq.height()) {
                return Err(Error::RoiOutOfBounds {
                    roi: seg.roi,
                    width: seq.width(),
                    height: seq.height(),
                });
            }
        }
        Ok(())
    }
}

pub fn load_segmentation(path: &Path) -> Result<Segmentation> {
    let file: SegmentationFile = read_json(path, "segmentation")?;
    check_schema(file.schema_version)?;
    Segmentation::new(file.segments, file.crashes)
}

pub fn load_segmentation_for(path: &Path, seq: &FrameSequence) -> Result<Segmentation> {
    let seg = load_segmentation(path)?;
    seg.validate_for(seq)?;
    Ok(seg)
}

pub fn save_segmentation(seg: &Segmentation, path: &Path) -> Result<()> {
    seg.validate()?;
    write_json(
        path,
        &SegmentationFile {
            schema_version: SCHEMA_VERSION,
            segments: seg.segments.clone(),
            crashes: seg.crashes.clone(),
        },
    )
}

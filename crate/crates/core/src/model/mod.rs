//! On-disk artifacts and the domain types they carry.

mod config;
mod frames;
mod labels;
mod segmentation;

use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::{load_config, save_config, DetectorConfig};
pub use frames::{
    frame_file_name, load_frames, load_timestamps, save_frames, save_timestamps, Frame,
    FrameSequence,
};
pub use labels::{load_labels, load_labels_for, save_labels, ErrorIntervalSet, Provenance};
pub use segmentation::{
    load_segmentation, load_segmentation_for, save_segmentation, CrashInterval, InteractionSegment,
    Segmentation,
};

/// Version written into every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TowerId {
    RV,
    LH,
    LV,
    RH,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Vertical,
    Horizontal,
}

impl TowerId {
    /// Task order: extraction from RV, insertion on LH, extraction from LV,
    /// insertion on RH.
    pub const ALL: [TowerId; 4] = [TowerId::RV, TowerId::LH, TowerId::LV, TowerId::RH];

    pub fn orientation(self) -> Orientation {
        match self {
            TowerId::RV | TowerId::LV => Orientation::Vertical,
            TowerId::LH | TowerId::RH => Orientation::Horizontal,
        }
    }

    pub fn is_vertical(self) -> bool {
        self.orientation() == Orientation::Vertical
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TowerId::RV => "RV",
            TowerId::LH => "LH",
            TowerId::LV => "LV",
            TowerId::RH => "RH",
        }
    }
}

impl fmt::Display for TowerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TowerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "RV" => Ok(TowerId::RV),
            "LH" => Ok(TowerId::LH),
            "LV" => Ok(TowerId::LV),
            "RH" => Ok(TowerId::RH),
            other => Err(Error::InvalidParameter(format!("unknown tower {other:?}"))),
        }
    }
}

/// Axis-aligned pixel rectangle, `x..x+width` by `y..y+height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roi {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Roi {
    pub fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self::new(0, 0, width, height)
    }

    pub fn x_end(&self) -> u32 {
        self.x + self.width
    }

    pub fn y_end(&self) -> u32 {
        self.y + self.height
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x_end() && y >= self.y && y < self.y_end()
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.width >= 1 && self.height >= 1 && self.x_end() <= width && self.y_end() <= height
    }

    /// Grows the rectangle by `margin` on every side, clipped to the frame.
    pub fn expand(&self, margin: u32, width: u32, height: u32) -> Roi {
        let x = self.x.saturating_sub(margin);
        let y = self.y.saturating_sub(margin);
        let x_end = (self.x_end() + margin).min(width);
        let y_end = (self.y_end() + margin).min(height);
        Roi::new(x, y, x_end - x, y_end - y)
    }
}

/// Closed frame interval `[start, end]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        frame >= self.start && frame <= self.end
    }

    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

impl From<[usize; 2]> for Interval {
    fn from(v: [usize; 2]) -> Self {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [usize; 2] {
    fn from(v: Interval) -> Self {
        [v.start, v.end]
    }
}

/// Maximal runs of `true` in `flags`, offset by `base`.
pub fn runs_of(flags: &[bool], base: usize) -> Vec<Interval> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, open) {
            (true, None) => open = Some(i),
            (false, Some(s)) => {
                out.push(Interval::new(base + s, base + i - 1));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        out.push(Interval::new(base + s, base + flags.len() - 1));
    }
    out
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path, what: &'static str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, what, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn io_error(path: &Path, what: &'static str, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::NotFound {
            what,
            path: path.to_path_buf(),
        }
    } else {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
    }
}

pub(crate) fn check_schema(found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(())
}

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::io_error;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub timestamp_s: f64,
    pub pixels: RgbImage,
}

/// Ordered video frames with their (irregular) capture timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    source_id: String,
    frames: Vec<Frame>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TimestampRow {
    frame_index: usize,
    timestamp_s: f64,
}

impl FrameSequence {
    /// Validates index contiguity, strictly increasing timestamps and a
    /// common frame size.
    pub fn new(source_id: impl Into<String>, frames: Vec<Frame>) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptySequence)?;
        let size = first.pixels.dimensions();
        if size.0 == 0 || size.1 == 0 {
            return Err(Error::FrameSize {
                index: 0,
                expected: (1, 1),
                found: size,
            });
        }
        for (i, frame) in frames.iter().enumerate() {
            if frame.index != i {
                return Err(Error::FrameIndex {
                    index: i,
                    found: frame.index,
                });
            }
            if frame.pixels.dimensions() != size {
                return Err(Error::FrameSize {
                    index: i,
                    expected: size,
                    found: frame.pixels.dimensions(),
                });
            }
            if !frame.timestamp_s.is_finite() {
                return Err(Error::NonIncreasingTimestamp { index: i });
            }
            if i > 0 && frame.timestamp_s <= frames[i - 1].timestamp_s {
                return Err(Error::NonIncreasingTimestamp { index: i });
            }
        }
        Ok(Self {
            source_id: source_id.into(),
            frames,
        })
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> &Frame {
        &self.frames[index]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> u32 {
        self.frames[0].pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.frames[0].pixels.height()
    }

    pub fn timestamp(&self, index: usize) -> f64 {
        self.frames[index].timestamp_s
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.timestamp_s).collect()
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

fn is_frame_file(name: &str) -> bool {
    name.len() == "frame_000000.png".len()
        && name.starts_with("frame_")
        && name.ends_with(".png")
        && name[6..12].bytes().all(|b| b.is_ascii_digit())
}

/// Reads `frame_index,timestamp_s` rows, checking contiguity and strict
/// increase.
pub fn load_timestamps(path: &Path) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path).map_err(|e| io_error(path, "timestamps", e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers().map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    if headers.len() != 2 || &headers[0] != "frame_index" || &headers[1] != "timestamp_s" {
        return Err(Error::InvalidParameter(format!(
            "timestamps: expected header frame_index,timestamp_s, found {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<TimestampRow>().enumerate() {
        let row = row.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        if row.frame_index != i {
            return Err(Error::FrameIndex {
                index: i,
                found: row.frame_index,
            });
        }
        if !row.timestamp_s.is_finite() || (i > 0 && row.timestamp_s <= out[i - 1]) {
            return Err(Error::NonIncreasingTimestamp { index: i });
        }
        out.push(row.timestamp_s);
    }
    Ok(out)
}

/// Reads `frame_NNNNNN.png` files from `dir`, pairing file `i` with row `i`
/// of the timestamps CSV.
pub fn load_frames(dir: &Path, timestamps: &Path) -> Result<FrameSequence> {
    let stamps = load_timestamps(timestamps)?;
    let entries = std::fs::read_dir(dir).map_err(|e| io_error(dir, "frames", e))?;
    let mut count = 0usize;
    for entry in entries {
        let entry = entry.map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        if entry.file_name().to_str().is_some_and(is_frame_file) {
            count += 1;
        }
    }
    if count != stamps.len() {
        return Err(Error::CountMismatch {
            frames: count,
            timestamps: stamps.len(),
        });
    }
    let mut frames = Vec::with_capacity(stamps.len());
    for (index, &timestamp_s) in stamps.iter().enumerate() {
        let path: PathBuf = dir.join(frame_file_name(index));
        if !path.is_file() {
            return Err(Error::MissingFrame { index, path });
        }
        let pixels = image::open(&path)
            .map_err(|source| Error::Image { index, source })?
            .into_rgb8();
        frames.push(Frame {
            index,
            timestamp_s,
            pixels,
        });
    }
    let source_id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("frames")
        .to_string();
    FrameSequence::new(source_id, frames)
}

/// Writes frames as PNG plus `timestamps.csv` into `dir` (created if needed).
/// Returns the timestamps path.
pub fn save_frames(seq: &FrameSequence, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for frame in seq.frames() {
        frame
            .pixels
            .save(dir.join(frame_file_name(frame.index)))
            .map_err(|source| Error::Image {
                index: frame.index,
                source,
            })?;
    }
    let ts_path = dir.join("timestamps.csv");
    save_timestamps(&ts_path, &seq.timestamps())?;
    Ok(ts_path)
}

pub fn save_timestamps(path: &Path, stamps: &[f64]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for (frame_index, &timestamp_s) in stamps.iter().enumerate() {
        w.serialize(TimestampRow {
            frame_index,
            timestamp_s,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

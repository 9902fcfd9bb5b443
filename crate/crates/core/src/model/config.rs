use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_schema, read_json, write_json, SCHEMA_VERSION};
use crate::error::{Error, Result};

/// Detector thresholds. Hue is on the 0..180 scale, saturation and value on
/// 0..=255. Window lengths and rule spans are in frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub schema_version: u32,
    pub hue_min: u8,
    pub hue_max: u8,
    pub sat_min: u8,
    pub val_max: u8,
    pub min_blob_px: usize,
    pub ma_window: usize,
    pub stft_window: usize,
    /// Amplitude decibels, `20 * log10(|X|)`.
    pub db_threshold: f64,
    pub head_frames: usize,
    pub head_confirm: usize,
    pub merge_gap: usize,
    pub lone_window: usize,
    pub tail_frames: usize,
    pub val_max_ring: u8,
    pub min_ring_px: usize,
    /// Chebyshev distance in pixels.
    pub max_ring_tower_dist_px: u32,
    pub flow_smoothness: f32,
    pub flow_iterations: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            hue_min: 70,
            hue_max: 130,
            sat_min: 90,
            val_max: 120,
            min_blob_px: 100,
            ma_window: 5,
            stft_window: 3,
            db_threshold: 20.0,
            head_frames: 10,
            head_confirm: 5,
            merge_gap: 10,
            lone_window: 5,
            tail_frames: 10,
            val_max_ring: 50,
            min_ring_px: 20,
            max_ring_tower_dist_px: 30,
            flow_smoothness: 1.0,
            flow_iterations: 10,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)?;
        let err = |m: &str| Err(Error::Config(m.to_string()));
        if self.hue_max >= 180 {
            return err("hue_max must be below 180");
        }
        if self.hue_min >= self.hue_max {
            return err("hue_min must be < hue_max (wrap-around hue ranges are not supported)");
        }
        let positive = [
            ("hue_min", self.hue_min as usize),
            ("sat_min", self.sat_min as usize),
            ("val_max", self.val_max as usize),
            ("min_blob_px", self.min_blob_px),
            ("ma_window", self.ma_window),
            ("head_frames", self.head_frames),
            ("head_confirm", self.head_confirm),
            ("merge_gap", self.merge_gap),
            ("lone_window", self.lone_window),
            ("tail_frames", self.tail_frames),
            ("val_max_ring", self.val_max_ring as usize),
            ("min_ring_px", self.min_ring_px),
            (
                "max_ring_tower_dist_px",
                self.max_ring_tower_dist_px as usize,
            ),
            ("flow_iterations", self.flow_iterations),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.db_threshold > 0.0 && self.db_threshold.is_finite()) {
            return err("db_threshold must be positive");
        }
        if !(self.flow_smoothness > 0.0 && self.flow_smoothness.is_finite()) {
            return err("flow_smoothness must be positive");
        }
        if self.ma_window.is_multiple_of(2) {
            return err("ma_window must be odd");
        }
        if self.stft_window < 3 || self.stft_window.is_multiple_of(2) {
            return err("stft_window must be odd and at least 3");
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<DetectorConfig> {
    let cfg: DetectorConfig = read_json(path, "config")?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn save_config(cfg: &DetectorConfig, path: &Path) -> Result<()> {
    cfg.validate()?;
    write_json(path, cfg)
}

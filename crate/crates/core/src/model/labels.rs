use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_schema, read_json, write_json, Interval, Segmentation, TowerId, SCHEMA_VERSION};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Auto,
    Corrected,
}

/// Collision intervals for the four interactions of one visit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorIntervalSet {
    pub provenance: Provenance,
    intervals: [Vec<Interval>; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct TowerLists {
    RV: Vec<Interval>,
    LH: Vec<Interval>,
    LV: Vec<Interval>,
    RH: Vec<Interval>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelsFile {
    schema_version: u32,
    provenance: Provenance,
    towers: TowerLists,
}

impl ErrorIntervalSet {
    pub fn empty(provenance: Provenance) -> Self {
        Self {
            provenance,
            intervals: Default::default(),
        }
    }

    pub fn from_parts(provenance: Provenance, intervals: [Vec<Interval>; 4]) -> Result<Self> {
        let set = Self {
            provenance,
            intervals,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn get(&self, tower: TowerId) -> &[Interval] {
        &self.intervals[tower.index()]
    }

    /// Replaces one tower's intervals, checking sortedness and overlap.
    pub fn set(&mut self, tower: TowerId, intervals: Vec<Interval>) -> Result<()> {
        check_sorted(tower, &intervals)?;
        self.intervals[tower.index()] = intervals;
        Ok(())
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn total_intervals(&self) -> usize {
        self.intervals.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, tower: TowerId, frame: usize) -> bool {
        self.get(tower).iter().any(|iv| iv.contains(frame))
    }

    /// Per-frame membership over `start..=end`.
    pub fn flags(&self, tower: TowerId, start: usize, end: usize) -> Vec<bool> {
        let mut out = vec![false; end + 1 - start];
        for iv in self.get(tower) {
            for f in iv.frames() {
                if f >= start && f <= end {
                    out[f - start] = true;
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for tower in TowerId::ALL {
            check_sorted(tower, self.get(tower))?;
        }
        Ok(())
    }

    /// Every interval inside its tower's segment and clear of crash frames.
    pub fn validate_for(&self, seg: &Segmentation) -> Result<()> {
        self.validate()?;
        for tower in TowerId::ALL {
            let s = seg.segment(tower);
            for iv in self.get(tower) {
                if iv.start < s.start_frame || iv.end > s.end_frame {
                    return Err(Error::Labels {
                        tower,
                        reason: format!(
                            "interval [{}, {}] outside segment [{}, {}]",
                            iv.start, iv.end, s.start_frame, s.end_frame
                        ),
                    });
                }
                if let Some(c) = seg
                    .crashes
                    .iter()
                    .find(|c| c.start_frame <= iv.end && c.end_frame >= iv.start)
                {
                    return Err(Error::Labels {
                        tower,
                        reason: format!(
                            "interval [{}, {}] covers crash frames [{}, {}]",
                            iv.start, iv.end, c.start_frame, c.end_frame
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Auto labels keep neighbouring intervals more than `merge_gap` frames
    /// apart unless a crash separates them.
    pub fn validate_auto_gap(&self, seg: &Segmentation, merge_gap: usize) -> Result<()> {
        for tower in TowerId::ALL {
            for pair in self.get(tower).windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let crash_between = seg
                    .crashes
                    .iter()
                    .any(|c| c.start_frame > a.end && c.end_frame < b.start);
                if !crash_between && b.start - a.end <= merge_gap {
                    return Err(Error::Labels {
                        tower,
                        reason: format!(
                            "intervals [{}, {}] and [{}, {}] closer than merge gap {merge_gap}",
                            a.start, a.end, b.start, b.end
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

fn check_sorted(tower: TowerId, intervals: &[Interval]) -> Result<()> {
    for (i, iv) in intervals.iter().enumerate() {
        if iv.start > iv.end {
            return Err(Error::Labels {
                tower,
                reason: format!("interval {i} has start {} > end {}", iv.start, iv.end),
            });
        }
        if i > 0 && iv.start <= intervals[i - 1].end {
            return Err(Error::Labels {
                tower,
                reason: format!("intervals {} and {i} overlap or are unsorted", i - 1),
            });
        }
    }
    Ok(())
}

pub fn save_labels(set: &ErrorIntervalSet, path: &Path) -> Result<()> {
    set.validate()?;
    let [rv, lh, lv, rh] = set.intervals.clone();
    write_json(
        path,
        &LabelsFile {
            schema_version: SCHEMA_VERSION,
            provenance: set.provenance,
            towers: TowerLists {
                RV: rv,
                LH: lh,
                LV: lv,
                RH: rh,
            },
        },
    )
}

pub fn load_labels(path: &Path) -> Result<ErrorIntervalSet> {
    let file: LabelsFile = read_json(path, "labels")?;
    check_schema(file.schema_version)?;
    let t = file.towers;
    ErrorIntervalSet::from_parts(file.provenance, [t.RV, t.LH, t.LV, t.RH])
}

/// Loads and additionally checks the intervals against a segmentation.
pub fn load_labels_for(path: &Path, seg: &Segmentation) -> Result<ErrorIntervalSet> {
    let set = load_labels(path)?;
    set.validate_for(seg)?;
    Ok(set)
}

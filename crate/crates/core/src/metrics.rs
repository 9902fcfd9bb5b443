//! Performance metrics per visit (completion time, number of errors, error
//! percentage), frame-level detector confusion, and the tidy per-visit
//! aggregation table.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ErrorIntervalSet, InteractionSegment, Segmentation, TowerId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timing {
    Before,
    During,
    After,
}

impl fmt::Display for Timing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Timing::Before => "before",
            Timing::During => "during",
            Timing::After => "after",
        })
    }
}

impl std::str::FromStr for Timing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "before" => Ok(Timing::Before),
            "during" => Ok(Timing::During),
            "after" => Ok(Timing::After),
            other => Err(Error::InvalidParameter(format!(
                "timing must be before, during or after, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub source_id: String,
    pub resident: String,
    pub shift: u8,
    pub timing: Timing,
    pub completion_time_s: f64,
    pub number_of_errors: usize,
    pub error_percentage: f64,
}

fn stamp(timestamps: &[f64], frame: usize) -> Result<f64> {
    timestamps.get(frame).copied().ok_or_else(|| {
        Error::Metrics(format!(
            "frame {frame} has no timestamp ({} recorded)",
            timestamps.len()
        ))
    })
}

/// Sum over the four towers of `t(end_frame) - t(start_frame)`; the
/// transfer time between towers is not included.
pub fn completion_time(segments: &[InteractionSegment], timestamps: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for tower in TowerId::ALL {
        let seg = segments
            .iter()
            .find(|s| s.tower == tower)
            .ok_or_else(|| Error::Metrics(format!("missing segment for {tower}")))?;
        total += stamp(timestamps, seg.end_frame)? - stamp(timestamps, seg.start_frame)?;
    }
    Ok(total)
}

pub fn count_errors(labels: &ErrorIntervalSet) -> usize {
    labels.total_intervals()
}

/// Per tower, the sum over intervals of last minus first error timestamp.
pub fn error_time(labels: &ErrorIntervalSet, tower: TowerId, timestamps: &[f64]) -> Result<f64> {
    labels
        .get(tower)
        .iter()
        .map(|iv| Ok(stamp(timestamps, iv.end)? - stamp(timestamps, iv.start)?))
        .sum()
}

pub fn error_percentage(
    labels: &ErrorIntervalSet,
    timestamps: &[f64],
    completion_time_s: f64,
) -> Result<f64> {
    if completion_time_s.is_nan() || completion_time_s <= 0.0 {
        return Err(Error::Metrics(format!(
            "completion time must be positive, got {completion_time_s}"
        )));
    }
    let mut total = 0.0;
    for tower in TowerId::ALL {
        total += error_time(labels, tower, timestamps)?;
    }
    Ok(total / completion_time_s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitTag {
    pub resident: String,
    pub shift: u8,
    pub timing: Timing,
}

pub fn compute_metrics(
    source_id: &str,
    visit: &VisitTag,
    labels: &ErrorIntervalSet,
    segmentation: &Segmentation,
    timestamps: &[f64],
) -> Result<MetricsRecord> {
    if !(1..=6).contains(&visit.shift) {
        return Err(Error::Metrics(format!(
            "shift must be 1..=6, got {}",
            visit.shift
        )));
    }
    labels.validate_for(segmentation)?;
    let completion_time_s = completion_time(&segmentation.segments, timestamps)?;
    Ok(MetricsRecord {
        source_id: source_id.to_string(),
        resident: visit.resident.clone(),
        shift: visit.shift,
        timing: visit.timing,
        completion_time_s,
        number_of_errors: count_errors(labels),
        error_percentage: error_percentage(labels, timestamps, completion_time_s)?,
    })
}

/// Frame-level confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn tnr(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    /// Absent when there is no positive frame in either labelling.
    pub fn f1(&self) -> Option<f64> {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionReport {
    pub per_tower: [ConfusionCounts; 4],
    pub pooled: ConfusionCounts,
}

/// Counts over every in-segment, non-crash frame of the four interactions.
pub fn confusion(
    pred: &ErrorIntervalSet,
    truth: &ErrorIntervalSet,
    segmentation: &Segmentation,
) -> Result<ConfusionReport> {
    pred.validate_for(segmentation)
        .map_err(|e| Error::Metrics(format!("predicted labels do not match segmentation: {e}")))?;
    truth
        .validate_for(segmentation)
        .map_err(|e| Error::Metrics(format!("reference labels do not match segmentation: {e}")))?;
    let mut per_tower = [ConfusionCounts::default(); 4];
    let mut pooled = ConfusionCounts::default();
    for tower in TowerId::ALL {
        let seg = segmentation.segment(tower);
        let p = pred.flags(tower, seg.start_frame, seg.end_frame);
        let t = truth.flags(tower, seg.start_frame, seg.end_frame);
        let c = &mut per_tower[tower.index()];
        for (i, (&p, &t)) in p.iter().zip(&t).enumerate() {
            if segmentation.is_crash_frame(seg.start_frame + i) {
                continue;
            }
            match (p, t) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        pooled.add(c);
    }
    Ok(ConfusionReport { per_tower, pooled })
}

pub const METRICS: [&str; 3] = ["completion_time_s", "number_of_errors", "error_percentage"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub resident: String,
    pub shift: u8,
    pub timing: Timing,
    pub metric: &'static str,
    pub value: f64,
}

/// Mean and normal-approximation 95% interval for one (shift, timing,
/// metric) cell; the interval is absent for single observations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub shift: u8,
    pub timing: Timing,
    pub metric: &'static str,
    pub n: usize,
    pub mean: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AggregateTable {
    pub observations: Vec<Observation>,
    pub cells: Vec<CellSummary>,
}

pub fn aggregate_visits(records: &[MetricsRecord]) -> Result<AggregateTable> {
    let mut seen = std::collections::HashSet::new();
    for r in records {
        if !seen.insert((r.resident.as_str(), r.shift, r.timing)) {
            return Err(Error::Metrics(format!(
                "duplicate visit: resident {} shift {} {}",
                r.resident, r.shift, r.timing
            )));
        }
    }
    let mut table = AggregateTable::default();
    let mut groups: BTreeMap<(u8, Timing, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        let values = [
            r.completion_time_s,
            r.number_of_errors as f64,
            r.error_percentage,
        ];
        for (m, (&metric, value)) in METRICS.iter().zip(values).enumerate() {
            table.observations.push(Observation {
                resident: r.resident.clone(),
                shift: r.shift,
                timing: r.timing,
                metric,
                value,
            });
            groups
                .entry((r.shift, r.timing, m))
                .or_default()
                .push(value);
        }
    }
    for ((shift, timing, m), values) in groups {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let (ci_low, ci_high) = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let half = 1.96 * var.sqrt() / (n as f64).sqrt();
            (Some(mean - half), Some(mean + half))
        } else {
            (None, None)
        };
        table.cells.push(CellSummary {
            shift,
            timing,
            metric: METRICS[m],
            n,
            mean,
            ci_low,
            ci_high,
        });
    }
    Ok(table)
}

fn create(path: &Path, header_comment: &str) -> Result<csv::Writer<std::fs::File>> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io)?;
    writeln!(file, "# {header_comment}").map_err(io)?;
    Ok(csv::Writer::from_writer(file))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub const METRICS_HEADER: &str = "ringtower metrics v1";
pub const CONFUSION_HEADER: &str = "ringtower confusion v1";
pub const AGGREGATE_HEADER: &str =
    "ringtower aggregate v1; ci = mean +/- 1.96*sd/sqrt(n) (normal approximation, sample sd)";

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = create(path, METRICS_HEADER)?;
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// One row per tower plus a pooled `ALL` row.
pub fn write_confusion_csv(path: &Path, rows: &[(String, ConfusionReport)]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = create(path, CONFUSION_HEADER)?;
    w.write_record([
        "source_id",
        "tower",
        "tp",
        "tn",
        "fp",
        "fn",
        "accuracy",
        "tpr",
        "tnr",
        "f1",
    ])
    .map_err(csv_err)?;
    let mut write = |source: &str, tower: &str, c: &ConfusionCounts| {
        w.write_record([
            source.to_string(),
            tower.to_string(),
            c.tp.to_string(),
            c.tn.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            fmt_opt(c.accuracy()),
            fmt_opt(c.tpr()),
            fmt_opt(c.tnr()),
            fmt_opt(c.f1()),
        ])
        .map_err(csv_err)
    };
    let mut total = ConfusionCounts::default();
    for (source, report) in rows {
        for tower in TowerId::ALL {
            write(source, tower.as_str(), &report.per_tower[tower.index()])?;
        }
        write(source, "ALL", &report.pooled)?;
        total.add(&report.pooled);
    }
    if rows.len() > 1 {
        write("ALL", "ALL", &total)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_aggregate_csv(path: &Path, table: &AggregateTable) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = create(path, AGGREGATE_HEADER)?;
    w.write_record([
        "kind", "resident", "shift", "timing", "metric", "value", "n", "ci_low", "ci_high",
    ])
    .map_err(csv_err)?;
    for o in &table.observations {
        w.write_record([
            "observation".to_string(),
            o.resident.clone(),
            o.shift.to_string(),
            o.timing.to_string(),
            o.metric.to_string(),
            o.value.to_string(),
            String::new(),
            String::new(),
            String::new(),
        ])
        .map_err(csv_err)?;
    }
    for c in &table.cells {
        w.write_record([
            "cell_mean".to_string(),
            String::new(),
            c.shift.to_string(),
            c.timing.to_string(),
            c.metric.to_string(),
            c.mean.to_string(),
            c.n.to_string(),
            fmt_opt(c.ci_low),
            fmt_opt(c.ci_high),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Interval, Provenance, Roi};

    fn segmentation(bounds: [(usize, usize); 4]) -> Segmentation {
        let segs = TowerId::ALL
            .into_iter()
            .zip(bounds)
            .map(|(tower, (s, e))| InteractionSegment {
                tower,
                start_frame: s,
                end_frame: e,
                roi: Roi::new(0, 0, 10, 10),
                end_zone_x: (!tower.is_vertical()).then_some(5),
            })
            .collect();
        Segmentation::new(segs, vec![]).unwrap()
    }

    #[test]
    fn completion_time_sums_tower_durations() {
        // one frame per second, durations 10 + 12 + 9 + 11
        let ts: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let seg = segmentation([(0, 10), (15, 27), (30, 39), (50, 61)]);
        assert_eq!(completion_time(&seg.segments, &ts).unwrap(), 42.0);
        assert!(completion_time(&seg.segments[..3], &ts).is_err());
    }

    #[test]
    fn completion_time_uses_recorded_stamps() {
        let ts = [0.0, 0.02, 0.07, 0.08, 0.15, 0.16, 0.3, 0.31];
        let seg = segmentation([(0, 1), (2, 3), (4, 5), (6, 7)]);
        let t = completion_time(&seg.segments, &ts).unwrap();
        assert!((t - (0.02 + 0.01 + 0.01 + 0.01)).abs() < 1e-12);
        assert!((t - 4.0 / 35.0).abs() > 1e-3);
    }

    #[test]
    fn counts_and_percentage() {
        let ts: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let mut labels = ErrorIntervalSet::empty(Provenance::Auto);
        assert_eq!(count_errors(&labels), 0);
        assert_eq!(error_percentage(&labels, &ts, 42.0).unwrap(), 0.0);
        labels
            .set(
                TowerId::RV,
                vec![Interval::new(1, 5), Interval::new(20, 30)],
            )
            .unwrap();
        labels
            .set(TowerId::LH, vec![Interval::new(40, 46)])
            .unwrap();
        labels
            .set(TowerId::RH, vec![Interval::new(60, 60)])
            .unwrap();
        assert_eq!(count_errors(&labels), 4);
        // 4 + 10 + 6 + 0 = 20 s of 40 s
        assert_eq!(error_percentage(&labels, &ts, 40.0).unwrap(), 0.5);
        assert!(error_percentage(&labels, &ts, 0.0).is_err());
    }

    #[test]
    fn hand_enumerated_confusion() {
        // ten frames 0..=9 on RV; pred {2,3}, truth {3,4}
        let seg = segmentation([(0, 9), (20, 21), (30, 31), (40, 41)]);
        let mut pred = ErrorIntervalSet::empty(Provenance::Auto);
        pred.set(TowerId::RV, vec![Interval::new(2, 3)]).unwrap();
        let mut truth = ErrorIntervalSet::empty(Provenance::Corrected);
        truth.set(TowerId::RV, vec![Interval::new(3, 4)]).unwrap();
        let report = confusion(&pred, &truth, &seg).unwrap();
        let rv = report.per_tower[0];
        assert_eq!((rv.tp, rv.fp, rv.fn_, rv.tn), (1, 1, 1, 7));
        assert_eq!(rv.accuracy(), Some(0.8));
        assert_eq!(report.pooled.total(), 10 + 2 + 2 + 2);

        let same = confusion(&truth, &truth, &seg).unwrap().pooled;
        assert_eq!(same.accuracy(), Some(1.0));
        assert_eq!(same.f1(), Some(1.0));
        let empty = ErrorIntervalSet::empty(Provenance::Auto);
        assert_eq!(confusion(&empty, &empty, &seg).unwrap().pooled.f1(), None);
    }

    #[test]
    fn confusion_rejects_foreign_labels() {
        let seg = segmentation([(0, 9), (20, 21), (30, 31), (40, 41)]);
        let mut pred = ErrorIntervalSet::empty(Provenance::Auto);
        pred.set(TowerId::LH, vec![Interval::new(50, 55)]).unwrap();
        let truth = ErrorIntervalSet::empty(Provenance::Corrected);
        assert!(confusion(&pred, &truth, &seg).is_err());
    }

    fn record(resident: &str, shift: u8, timing: Timing, t: f64) -> MetricsRecord {
        MetricsRecord {
            source_id: format!("{resident}-{shift}-{timing}"),
            resident: resident.into(),
            shift,
            timing,
            completion_time_s: t,
            number_of_errors: 2,
            error_percentage: 0.1,
        }
    }

    #[test]
    fn aggregate_cells() {
        let one = aggregate_visits(&[record("a", 1, Timing::Before, 30.0)]).unwrap();
        let c = &one.cells[0];
        assert_eq!((c.mean, c.ci_low, c.ci_high), (30.0, None, None));

        let two = aggregate_visits(&[
            record("a", 2, Timing::During, 10.0),
            record("b", 2, Timing::During, 20.0),
        ])
        .unwrap();
        let c = two
            .cells
            .iter()
            .find(|c| c.metric == "completion_time_s")
            .unwrap();
        assert_eq!(c.mean, 15.0);
        // sd = 7.0710678, half width = 1.96 * sd / sqrt(2) = 9.8
        assert!((c.ci_high.unwrap() - 24.8).abs() < 1e-9);

        assert!(aggregate_visits(&[
            record("a", 1, Timing::Before, 1.0),
            record("a", 1, Timing::Before, 2.0)
        ])
        .is_err());
    }

    #[test]
    fn aggregate_shape_for_full_cohort() {
        let timings = [Timing::Before, Timing::During, Timing::After];
        let mut records = Vec::new();
        for r in 0..16 {
            for shift in 1..=6u8 {
                for timing in timings {
                    records.push(record(&format!("R{r:02}"), shift, timing, 30.0 + r as f64));
                }
            }
        }
        let table = aggregate_visits(&records).unwrap();
        for metric in METRICS {
            assert_eq!(
                table
                    .observations
                    .iter()
                    .filter(|o| o.metric == metric)
                    .count(),
                288
            );
        }
        assert_eq!(table.cells.len(), 18 * 3);
    }

    #[test]
    fn metrics_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let records = vec![
            record("a", 1, Timing::Before, 30.25),
            record("b", 6, Timing::After, 41.0),
        ];
        write_metrics_csv(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# ringtower metrics v1\nsource_id,resident,shift,timing,"));
        assert_eq!(read_metrics_csv(&path).unwrap(), records);
    }
}

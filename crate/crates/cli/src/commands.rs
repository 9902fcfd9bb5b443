//! Batch command implementations; `main` only parses arguments and maps
//! errors to exit codes.

use std::path::{Path, PathBuf};

use image::Rgb;
use ringtower_core::detector::{detect_visit_with, DetectionTrace};
use ringtower_core::metrics::{
    aggregate_visits, compute_metrics, confusion, read_metrics_csv, write_aggregate_csv,
    write_confusion_csv, write_metrics_csv, AggregateTable, ConfusionReport, MetricsRecord,
    VisitTag,
};
use ringtower_core::model::{
    frame_file_name, load_config, load_frames, load_labels, load_labels_for, load_segmentation,
    load_segmentation_for, load_timestamps, save_labels, DetectorConfig, ErrorIntervalSet,
    FrameSequence, Segmentation, TowerId,
};
use ringtower_core::synth::{default_corpus, load_script, write_corpus, Manifest};
use ringtower_core::vision::{restrict_roi, tower_mask};
use ringtower_core::{Error, Exec, Result};

use crate::cli::{
    AggregateArgs, DetectArgs, EvaluateArgs, Inputs, MetricsArgs, OverlayArgs, SynthArgs,
};

/// Frames, segmentation and config loaded and cross-checked.
pub struct LoadedInputs {
    pub frames: FrameSequence,
    pub segmentation: Segmentation,
    pub config: DetectorConfig,
}

pub fn load_inputs(inputs: &Inputs) -> Result<LoadedInputs> {
    let frames = load_frames(&inputs.frames, &inputs.timestamps_path())?;
    let segmentation = load_segmentation_for(&inputs.segmentation, &frames)?;
    let config = match &inputs.config {
        Some(p) => load_config(p)?,
        None => DetectorConfig::default(),
    };
    Ok(LoadedInputs {
        frames,
        segmentation,
        config,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

pub fn cmd_detect(exec: Exec, args: &DetectArgs) -> Result<ErrorIntervalSet> {
    let input = load_inputs(&args.inputs)?;
    let (labels, traces) =
        detect_visit_with(exec, &input.frames, &input.segmentation, &input.config)?;
    ensure_parent(&args.out)?;
    save_labels(&labels, &args.out)?;
    if let Some(dir) = &args.trace_dir {
        write_traces(dir, &traces)?;
    }
    Ok(labels)
}

/// One `<tower>_trace.csv` per interaction.
pub fn write_traces(dir: &Path, traces: &[DetectionTrace]) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut paths = Vec::new();
    for trace in traces {
        let path = dir.join(format!("{}_trace.csv", trace.segment.tower));
        let csv_err = |source| Error::Csv {
            path: path.clone(),
            source,
        };
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        for row in &trace.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        paths.push(path);
    }
    Ok(paths)
}

/// Pixel colour for a tinted tower pixel.
pub fn tint(p: Rgb<u8>) -> Rgb<u8> {
    let [r, g, b] = p.0;
    Rgb([r / 4 + 191, g / 4, b / 4])
}

/// Writes every frame to `out`; frames inside a labelled interval get their
/// ROI tower pixels tinted red, the rest are copied unchanged. Returns the
/// indices of the tinted frames.
pub fn cmd_overlay(args: &OverlayArgs) -> Result<Vec<usize>> {
    let input = load_inputs(&args.inputs)?;
    let labels = load_labels_for(&args.labels, &input.segmentation)?;
    create_dir(&args.out)?;
    let mut tinted = Vec::new();
    for frame in input.frames.frames() {
        let name = frame_file_name(frame.index);
        let active: Vec<TowerId> = TowerId::ALL
            .into_iter()
            .filter(|&t| labels.contains(t, frame.index))
            .collect();
        if active.is_empty() {
            let src = args.inputs.frames.join(&name);
            std::fs::copy(&src, args.out.join(&name))
                .map_err(|source| Error::Io { path: src, source })?;
            continue;
        }
        let mut img = frame.pixels.clone();
        let towers = tower_mask(&frame.pixels, &input.config);
        for tower in active {
            let mask = restrict_roi(&towers, &input.segmentation.segment(tower).roi)?;
            for (x, y) in mask.iter_set() {
                let p = *img.get_pixel(x, y);
                img.put_pixel(x, y, tint(p));
            }
        }
        img.save(args.out.join(&name))
            .map_err(|source| Error::Image {
                index: frame.index,
                source,
            })?;
        tinted.push(frame.index);
    }
    let ts = args.inputs.timestamps_path();
    std::fs::copy(&ts, args.out.join("timestamps.csv"))
        .map_err(|source| Error::Io { path: ts, source })?;
    Ok(tinted)
}

fn source_id_of(explicit: &Option<String>, labels: &Path) -> String {
    explicit.clone().unwrap_or_else(|| {
        labels
            .canonicalize()
            .ok()
            .and_then(|p| {
                p.parent()
                    .and_then(|d| d.file_name())
                    .map(|n| n.to_string_lossy().into_owned())
            })
            .unwrap_or_else(|| "visit".to_string())
    })
}

pub fn cmd_metrics(args: &MetricsArgs) -> Result<MetricsRecord> {
    let segmentation = load_segmentation(&args.segmentation)?;
    let labels = load_labels(&args.labels)?;
    let timestamps = load_timestamps(&args.timestamps)?;
    let visit = VisitTag {
        resident: args.resident.clone(),
        shift: args.shift,
        timing: args.timing,
    };
    let source_id = source_id_of(&args.source_id, &args.labels);
    let record = compute_metrics(&source_id, &visit, &labels, &segmentation, &timestamps)?;
    let mut records = if args.append && args.out.exists() {
        read_metrics_csv(&args.out)?
    } else {
        Vec::new()
    };
    records.push(record.clone());
    ensure_parent(&args.out)?;
    write_metrics_csv(&args.out, &records)?;
    Ok(record)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<ConfusionReport> {
    let segmentation = load_segmentation(&args.segmentation)?;
    let pred = load_labels(&args.pred)?;
    let truth = load_labels(&args.truth)?;
    let report = confusion(&pred, &truth, &segmentation)?;
    ensure_parent(&args.out)?;
    let source_id = source_id_of(&args.source_id, &args.pred);
    write_confusion_csv(&args.out, &[(source_id, report.clone())])?;
    Ok(report)
}

pub fn cmd_synth(exec: Exec, args: &SynthArgs) -> Result<Manifest> {
    let mut scripts = match &args.script {
        Some(p) => vec![load_script(p)?],
        None => default_corpus(),
    };
    if let Some(sigma) = args.noise {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise must be >= 0, got {sigma}"
            )));
        }
        scripts = scripts.into_iter().map(|s| s.with_noise(sigma)).collect();
    }
    write_corpus(exec, &scripts, &args.out)
}

pub fn cmd_aggregate(args: &AggregateArgs) -> Result<AggregateTable> {
    let mut records = Vec::new();
    for path in &args.metrics {
        records.extend(read_metrics_csv(path)?);
    }
    let table = aggregate_visits(&records)?;
    ensure_parent(&args.out)?;
    write_aggregate_csv(&args.out, &table)?;
    Ok(table)
}

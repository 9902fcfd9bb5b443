//! HTTP/JSON review service: one session, one writer.
//!
//! Reads run concurrently. Label writes take a writer token with `try_lock`
//! and fail with 409 while another write is in flight.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ringtower_core::metrics::{confusion, ConfusionCounts};
use ringtower_core::model::{
    frame_file_name, load_labels_for, runs_of, save_labels, ErrorIntervalSet, Interval, Provenance,
    Segmentation, TowerId, SCHEMA_VERSION,
};
use ringtower_core::vision::{outline_polygons, restrict_roi, ring_mask, tower_mask, BinaryMask};
use ringtower_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cli::ServeArgs;
use crate::commands::{load_inputs, LoadedInputs};
use crate::ErrorReport;

pub struct Session {
    input: LoadedInputs,
    frames_dir: PathBuf,
    corrected_path: PathBuf,
    auto: ErrorIntervalSet,
    working: RwLock<Working>,
    writer: Mutex<()>,
}

#[derive(Debug, Clone)]
struct Working {
    corrected: ErrorIntervalSet,
    dirty: bool,
}

impl Session {
    /// Loads the inputs; an existing corrected file replaces the auto labels
    /// as the starting point.
    pub fn open(args: &ServeArgs) -> Result<Self> {
        let input = load_inputs(&args.inputs)?;
        let auto = load_labels_for(&args.labels, &input.segmentation)?;
        let corrected_path = args
            .corrected
            .clone()
            .unwrap_or_else(|| default_corrected_path(&args.labels));
        let corrected = if corrected_path.exists() {
            load_labels_for(&corrected_path, &input.segmentation)?
        } else {
            auto.clone()
        }
        .with_provenance(Provenance::Corrected);
        Ok(Self {
            input,
            frames_dir: args.inputs.frames.clone(),
            corrected_path,
            auto: auto.with_provenance(Provenance::Auto),
            working: RwLock::new(Working {
                corrected,
                dirty: false,
            }),
            writer: Mutex::new(()),
        })
    }

    pub fn auto(&self) -> &ErrorIntervalSet {
        &self.auto
    }

    pub fn corrected(&self) -> ErrorIntervalSet {
        self.working.read().expect("label lock").corrected.clone()
    }

    pub fn corrected_path(&self) -> &std::path::Path {
        &self.corrected_path
    }

    /// The single-writer token; `None` while another write holds it.
    pub fn try_begin_write(&self) -> Option<std::sync::MutexGuard<'_, ()>> {
        self.writer.try_lock().ok()
    }

    fn segmentation(&self) -> &Segmentation {
        &self.input.segmentation
    }
}

/// `labels.json` -> `labels.corrected.json`.
pub fn default_corrected_path(labels: &std::path::Path) -> PathBuf {
    let stem = labels
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "labels".to_string());
    labels.with_file_name(format!("{stem}.corrected.json"))
}

pub fn router(session: Arc<Session>) -> Router {
    Router::new()
        .route("/session", get(get_session))
        .route("/frames/{index}", get(get_frame))
        .route("/frames/{index}/masks", get(get_masks))
        .route("/labels", get(get_labels).put(put_labels))
        .route("/labels/toggle", post(toggle_label))
        .route("/confusion", get(get_confusion))
        .route("/save", post(save))
        .with_state(session)
}

/// Binds and serves until Ctrl-C.
pub fn serve(args: &ServeArgs) -> Result<()> {
    let session = Arc::new(Session::open(args)?);
    let addr = SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|source| Error::Io {
            path: PathBuf::from("<runtime>"),
            source,
        })?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|source| Error::Io {
                path: PathBuf::from(addr.to_string()),
                source,
            })?;
        eprintln!("serving on http://{addr}");
        axum::serve(listener, router(session))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|source| Error::Io {
                path: PathBuf::from(addr.to_string()),
                source,
            })
    })
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Busy,
    Invalid(Vec<Violation>),
    Core(Error),
}

/// One rejected interval (or frame) in a label write.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub tower: TowerId,
    /// Interval position within the tower's list; absent for toggles.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub reason: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::NotFound(message) => (
                StatusCode::NOT_FOUND,
                json!({ "error": { "kind": "not_found", "message": message } }),
            ),
            ApiError::Busy => (
                StatusCode::CONFLICT,
                json!({ "error": { "kind": "busy", "message": "another label write is in progress" } }),
            ),
            ApiError::Invalid(violations) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": { "kind": "labels", "message": "label validation failed", "violations": violations } }),
            ),
            ApiError::Core(err) => {
                let status = if err.is_validation() {
                    StatusCode::UNPROCESSABLE_ENTITY
                } else {
                    StatusCode::INTERNAL_SERVER_ERROR
                };
                (status, json!({ "error": ErrorReport::from(&err) }))
            }
        };
        (status, Json(body)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        ApiError::Core(err)
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Wire form of a label set, matching the labels file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsBody {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default = "corrected_provenance")]
    pub provenance: Provenance,
    pub towers: BTreeMap<TowerId, Vec<Interval>>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn corrected_provenance() -> Provenance {
    Provenance::Corrected
}

impl From<&ErrorIntervalSet> for LabelsBody {
    fn from(set: &ErrorIntervalSet) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            provenance: set.provenance,
            towers: TowerId::ALL
                .into_iter()
                .map(|t| (t, set.get(t).to_vec()))
                .collect(),
        }
    }
}

async fn get_session(State(s): State<Arc<Session>>) -> Json<serde_json::Value> {
    let seq = &s.input.frames;
    let dirty = s.working.read().expect("label lock").dirty;
    Json(json!({
        "schema_version": SCHEMA_VERSION,
        "source_id": seq.source_id(),
        "frame_count": seq.len(),
        "width": seq.width(),
        "height": seq.height(),
        "timestamps": seq.timestamps(),
        "segments": s.segmentation().segments,
        "crashes": s.segmentation().crashes,
        "provenance": { "auto": Provenance::Auto, "working": Provenance::Corrected },
        "corrected_path": s.corrected_path,
        "dirty": dirty,
    }))
}

fn frame_index(s: &Session, index: usize) -> ApiResult<usize> {
    if index >= s.input.frames.len() {
        return Err(ApiError::NotFound(format!(
            "frame {index} out of range 0..{}",
            s.input.frames.len()
        )));
    }
    Ok(index)
}

async fn get_frame(
    State(s): State<Arc<Session>>,
    UrlPath(index): UrlPath<usize>,
) -> ApiResult<Response> {
    let index = frame_index(&s, index)?;
    let path = s.frames_dir.join(frame_file_name(index));
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|source| Error::Io { path, source })?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

fn polygons(mask: &BinaryMask) -> Vec<Vec<[u32; 2]>> {
    outline_polygons(mask)
        .into_iter()
        .map(|p| p.into_iter().map(|(x, y)| [x, y]).collect())
        .collect()
}

/// Tower and ring outlines for every interaction whose span holds the frame.
async fn get_masks(
    State(s): State<Arc<Session>>,
    UrlPath(index): UrlPath<usize>,
) -> ApiResult<Json<serde_json::Value>> {
    let index = frame_index(&s, index)?;
    let img = &s.input.frames.frame(index).pixels;
    let config = &s.input.config;
    let towers = tower_mask(img, config);
    let mut entries = Vec::new();
    for seg in &s.segmentation().segments {
        if !seg.contains(index) {
            continue;
        }
        let tower = restrict_roi(&towers, &seg.roi)?;
        let ring = ring_mask(img, &tower, config)?;
        entries.push(json!({
            "tower": seg.tower,
            "roi": seg.roi,
            "tower_polygons": polygons(&tower),
            "ring_polygons": polygons(&ring),
        }));
    }
    Ok(Json(json!({
        "frame": index,
        "crash": s.segmentation().is_crash_frame(index),
        "interactions": entries,
    })))
}

fn labels_json(s: &Session, w: &Working) -> serde_json::Value {
    json!({
        "auto": LabelsBody::from(&s.auto),
        "corrected": LabelsBody::from(&w.corrected),
        "dirty": w.dirty,
    })
}

async fn get_labels(State(s): State<Arc<Session>>) -> Json<serde_json::Value> {
    let w = s.working.read().expect("label lock");
    Json(labels_json(&s, &w))
}

/// Every problem with a proposed label set, by tower and interval index.
pub fn check_labels(seg: &Segmentation, body: &LabelsBody) -> Vec<Violation> {
    let mut out = Vec::new();
    if body.schema_version != SCHEMA_VERSION {
        for tower in TowerId::ALL {
            out.push(Violation {
                tower,
                index: None,
                reason: format!("unsupported schema_version {}", body.schema_version),
            });
        }
        return out;
    }
    for tower in TowerId::ALL {
        let Some(list) = body.towers.get(&tower) else {
            out.push(Violation {
                tower,
                index: None,
                reason: "missing tower".to_string(),
            });
            continue;
        };
        let span = seg.segment(tower);
        for (i, iv) in list.iter().enumerate() {
            let mut bad = |reason: String| {
                out.push(Violation {
                    tower,
                    index: Some(i),
                    reason,
                })
            };
            if iv.start > iv.end {
                bad(format!("start {} > end {}", iv.start, iv.end));
                continue;
            }
            if i > 0 && iv.start <= list[i - 1].end {
                bad(format!("overlaps or precedes interval {}", i - 1));
            }
            if iv.start < span.start_frame || iv.end > span.end_frame {
                bad(format!(
                    "outside segment [{}, {}]",
                    span.start_frame, span.end_frame
                ));
            }
            if let Some(c) = seg
                .crashes
                .iter()
                .find(|c| c.start_frame <= iv.end && c.end_frame >= iv.start)
            {
                bad(format!(
                    "covers crash frames [{}, {}]",
                    c.start_frame, c.end_frame
                ));
            }
        }
    }
    out
}

fn write_labels<F>(s: &Session, f: F) -> ApiResult<Json<serde_json::Value>>
where
    F: FnOnce(&ErrorIntervalSet) -> ApiResult<ErrorIntervalSet>,
{
    let _token = s.try_begin_write().ok_or(ApiError::Busy)?;
    let current = s.corrected();
    let next = f(&current)?.with_provenance(Provenance::Corrected);
    next.validate_for(s.segmentation())?;
    let mut w = s.working.write().expect("label lock");
    w.dirty |= next != current;
    w.corrected = next;
    Ok(Json(labels_json(s, &w)))
}

async fn put_labels(
    State(s): State<Arc<Session>>,
    Json(body): Json<LabelsBody>,
) -> ApiResult<Json<serde_json::Value>> {
    let violations = check_labels(s.segmentation(), &body);
    if !violations.is_empty() {
        return Err(ApiError::Invalid(violations));
    }
    write_labels(&s, |_| {
        let mut set = ErrorIntervalSet::empty(Provenance::Corrected);
        for (tower, list) in body.towers {
            set.set(tower, list)?;
        }
        Ok(set)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToggleRequest {
    pub frame: usize,
    pub tower: TowerId,
}

/// Flips one frame's membership and rebuilds the tower's intervals.
pub fn toggle(
    set: &ErrorIntervalSet,
    seg: &Segmentation,
    req: ToggleRequest,
) -> std::result::Result<ErrorIntervalSet, Violation> {
    let span = seg.segment(req.tower);
    let reject = |reason: String| Violation {
        tower: req.tower,
        index: None,
        reason,
    };
    if !span.contains(req.frame) {
        return Err(reject(format!(
            "frame {} outside segment [{}, {}]",
            req.frame, span.start_frame, span.end_frame
        )));
    }
    if seg.is_crash_frame(req.frame) {
        return Err(reject(format!("frame {} is a crash frame", req.frame)));
    }
    let mut flags = set.flags(req.tower, span.start_frame, span.end_frame);
    let i = req.frame - span.start_frame;
    flags[i] = !flags[i];
    let mut next = set.clone();
    next.set(req.tower, runs_of(&flags, span.start_frame))
        .map_err(|e| reject(e.to_string()))?;
    Ok(next)
}

async fn toggle_label(
    State(s): State<Arc<Session>>,
    Json(req): Json<ToggleRequest>,
) -> ApiResult<Json<serde_json::Value>> {
    write_labels(&s, |current| {
        toggle(current, s.segmentation(), req).map_err(|v| ApiError::Invalid(vec![v]))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountsView {
    #[serde(flatten)]
    pub counts: ConfusionCounts,
    pub accuracy: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub f1: Option<f64>,
}

impl From<ConfusionCounts> for CountsView {
    fn from(c: ConfusionCounts) -> Self {
        Self {
            counts: c,
            accuracy: c.accuracy(),
            tpr: c.tpr(),
            tnr: c.tnr(),
            f1: c.f1(),
        }
    }
}

/// Auto labels scored against the working corrected labels.
async fn get_confusion(State(s): State<Arc<Session>>) -> ApiResult<Json<serde_json::Value>> {
    let corrected = s.corrected();
    let report = confusion(&s.auto, &corrected, s.segmentation())?;
    let per_tower: BTreeMap<TowerId, CountsView> = TowerId::ALL
        .into_iter()
        .map(|t| (t, report.per_tower[t.index()].into()))
        .collect();
    Ok(Json(json!({
        "per_tower": per_tower,
        "pooled": CountsView::from(report.pooled),
    })))
}

async fn save(State(s): State<Arc<Session>>) -> ApiResult<Json<serde_json::Value>> {
    let _token = s.try_begin_write().ok_or(ApiError::Busy)?;
    let corrected = s.corrected();
    save_labels(&corrected, &s.corrected_path)?;
    s.working.write().expect("label lock").dirty = false;
    Ok(Json(json!({
        "path": s.corrected_path,
        "provenance": Provenance::Corrected,
        "dirty": false,
    })))
}

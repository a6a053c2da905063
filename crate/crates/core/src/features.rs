//! Feature extraction from sampled canvases.
//!
//! Two extractors sit behind [`ExtractorSpec`]: a handcrafted baseline that
//! needs nothing external, and a bridge that hands the canvases to an external
//! backend command through the manifest file protocol and reads its reply.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{luma, Raster};
use crate::sampling::{export_set, GridSpec, Manifest, SampledProjectionSet};

pub const BASELINE_ID: &str = "baseline-v1";
pub const BASELINE_DIM: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub extractor_id: String,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, extractor_id: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("feature vector must have at least one value"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature {i} is {}", values[i])));
        }
        Ok(FeatureVector {
            values,
            extractor_id: extractor_id.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    Baseline,
    Bridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorSpec {
    pub kind: ExtractorKind,
    /// Bridge keys: `command` (backend program and leading args) and
    /// `work_dir` (where manifests and replies are exchanged).
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
}

impl ExtractorSpec {
    pub fn baseline() -> Self {
        ExtractorSpec {
            kind: ExtractorKind::Baseline,
            parameters: BTreeMap::new(),
        }
    }

    pub fn bridge(command: impl Into<String>, work_dir: impl AsRef<Path>) -> Self {
        let mut parameters = BTreeMap::new();
        parameters.insert("command".into(), command.into());
        parameters.insert("work_dir".into(), work_dir.as_ref().display().to_string());
        ExtractorSpec {
            kind: ExtractorKind::Bridge,
            parameters,
        }
    }
}

/// Per-cell statistics: luma mean, luma std, mean gradient magnitude and the
/// three channel means.
fn region_stats(img: &Raster, x0: usize, y0: usize, w: usize, h: usize) -> [f64; 6] {
    let n = (w * h) as f64;
    let mut sum_l = 0.0;
    let mut sum_l2 = 0.0;
    let mut sum_rgb = [0.0f64; 3];
    let mut l = Vec::with_capacity(w * h);
    for y in y0..y0 + h {
        for &c in &img.row(y)[x0..x0 + w] {
            let v = luma(c) as f64;
            l.push(v);
            sum_l += v;
            sum_l2 += v * v;
            for k in 0..3 {
                sum_rgb[k] += c[k] as f64;
            }
        }
    }
    let mean = sum_l / n;
    let var = (sum_l2 / n - mean * mean).max(0.0);
    let grad = gradient_magnitude(&l, w, h).iter().sum::<f64>() / n;
    [mean, var.sqrt(), grad, sum_rgb[0] / n, sum_rgb[1] / n, sum_rgb[2] / n]
}

/// Central-difference gradient magnitude of a `w`x`h` luma plane, with
/// borders clamped to the plane.
pub fn gradient_magnitude(l: &[f64], w: usize, h: usize) -> Vec<f64> {
    let at = |x: usize, y: usize| l[y * w + x];
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let gx = 0.5 * (at(xr, y) - at(xl, y));
            let gy = 0.5 * (at(x, yd) - at(x, yu));
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}

/// Handcrafted 12-value descriptor of a canvas: the six per-cell statistics
/// average-pooled over the grid cells, followed by the same six statistics
/// computed over the whole canvas.
pub fn baseline_features(canvas: &Raster, grid: &GridSpec) -> Result<FeatureVector> {
    grid.validate()?;
    if canvas.dims() != grid.canvas_dims() {
        return Err(Error::DimensionMismatch(format!(
            "canvas is {}x{} but grid {grid} needs {}x{}",
            canvas.width(),
            canvas.height(),
            grid.canvas_width(),
            grid.canvas_height()
        )));
    }
    let p = grid.patch;
    let mut pooled = [0.0f64; 6];
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let s = region_stats(canvas, col * p, row * p, p, p);
            for k in 0..6 {
                pooled[k] += s[k];
            }
        }
    }
    let cells = (grid.rows * grid.cols) as f64;
    let global = region_stats(canvas, 0, 0, canvas.width(), canvas.height());
    let values = pooled.iter().map(|v| v / cells).chain(global).collect();
    FeatureVector::new(values, BASELINE_ID)
}

/// What a backend returned for one set.
#[derive(Debug, Clone, PartialEq)]
pub enum BridgeOutput {
    Features(Vec<FeatureVector>),
    Scores(Vec<f64>),
}

/// One feature vector per canvas, in canvas order.
pub fn extract_features(set: &SampledProjectionSet, spec: &ExtractorSpec) -> Result<Vec<FeatureVector>> {
    match spec.kind {
        ExtractorKind::Baseline => set
            .canvases
            .par_iter()
            .map(|c| baseline_features(c, &set.grid))
            .collect(),
        ExtractorKind::Bridge => match run_bridge(set, spec, "model", "extract")? {
            BridgeOutput::Features(f) => Ok(f),
            BridgeOutput::Scores(_) => Err(Error::Backend("backend replied with scores where features were requested".into())),
        },
    }
}

static EXCHANGE_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes the set's manifest, invokes the backend once for the whole set as
/// `<command> <mode> <manifest> <reply>`, and reads back the reply.
pub fn run_bridge(set: &SampledProjectionSet, spec: &ExtractorSpec, model_id: &str, mode: &str) -> Result<BridgeOutput> {
    let command = spec
        .parameters
        .get("command")
        .ok_or_else(|| Error::invalid("bridge extractor needs a `command` parameter"))?;
    let work_dir = spec
        .parameters
        .get("work_dir")
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let exchange = work_dir.join(format!(
        "exchange-{}-{}",
        std::process::id(),
        EXCHANGE_COUNTER.fetch_add(1, Ordering::SeqCst)
    ));
    let manifest_path = write_manifest(set, model_id, &exchange)?;
    let reply_path = exchange.join("reply.json");

    let mut parts = command.split_whitespace();
    let program = parts.next().ok_or_else(|| Error::invalid("empty backend command"))?;
    let output = Command::new(program)
        .args(parts)
        .arg(mode)
        .arg(&manifest_path)
        .arg(&reply_path)
        .output()
        .map_err(|e| Error::Backend(format!("cannot start `{program}`: {e}")))?;
    if !output.status.success() {
        return Err(Error::Backend(format!(
            "`{command}` exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    let manifest = Manifest::read(&manifest_path)?;
    let reply = read_backend_reply(&reply_path, &manifest)?;
    reply.into_output()
}

/// Exports the set's canvases and manifest into `dir`.
pub fn write_manifest(set: &SampledProjectionSet, model_id: &str, dir: &Path) -> Result<PathBuf> {
    export_set(set, model_id, dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplyEntry {
    pub canvas_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Validated backend reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendReply {
    pub extractor_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub entries: Vec<ReplyEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gflops: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_m: Option<f64>,
}

impl BackendReply {
    pub fn into_output(self) -> Result<BridgeOutput> {
        if self.entries.iter().all(|e| e.features.is_some()) {
            let id = self.extractor_id;
            self.entries
                .into_iter()
                .map(|e| FeatureVector::new(e.features.unwrap(), id.clone()))
                .collect::<Result<_>>()
                .map(BridgeOutput::Features)
        } else {
            Ok(BridgeOutput::Scores(self.entries.iter().map(|e| e.score.unwrap()).collect()))
        }
    }
}

/// Rewrites bare `NaN`, `Infinity` and `-Infinity` tokens (which some JSON
/// writers emit) to `null` so they surface as validation errors instead of
/// syntax errors.
fn neutralize_non_finite(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            rest = &rest[c.len_utf8()..];
            continue;
        }
        if c == '"' {
            in_string = true;
        }
        let token = ["-Infinity", "Infinity", "NaN"].into_iter().find(|t| rest.starts_with(t));
        if let Some(t) = token {
            out.push_str("null");
            rest = &rest[t.len()..];
        } else {
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    out
}

#[derive(Deserialize)]
struct RawEntry {
    canvas_path: String,
    #[serde(default)]
    features: Option<Vec<Option<f64>>>,
    #[serde(default, deserialize_with = "present")]
    score: Option<serde_json::Value>,
}

/// Keeps an explicit `null` distinguishable from a missing field.
fn present<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<serde_json::Value>, D::Error> {
    serde_json::Value::deserialize(d).map(Some)
}

#[derive(Deserialize)]
struct RawReply {
    extractor_id: String,
    #[serde(default)]
    dim: Option<usize>,
    entries: Vec<RawEntry>,
    #[serde(default)]
    gflops: Option<f64>,
    #[serde(default)]
    params_m: Option<f64>,
}

/// Parses reply text and checks it against the manifest it answers.
pub fn parse_backend_reply(text: &str, manifest: &Manifest) -> Result<BackendReply> {
    let raw: RawReply = serde_json::from_str(&neutralize_non_finite(text))?;
    if raw.entries.len() != manifest.entries.len() {
        return Err(Error::DimensionMismatch(format!(
            "reply has {} entries for {} manifest entries",
            raw.entries.len(),
            manifest.entries.len()
        )));
    }
    let mut entries = Vec::with_capacity(raw.entries.len());
    let mut dim = raw.dim;
    for (i, (e, m)) in raw.entries.into_iter().zip(&manifest.entries).enumerate() {
        if e.canvas_path != m.canvas_path {
            return Err(Error::Backend(format!(
                "reply entry {i} is for `{}`, expected `{}`",
                e.canvas_path, m.canvas_path
            )));
        }
        let features = match e.features {
            Some(v) => {
                let vals: Vec<f64> = v
                    .into_iter()
                    .enumerate()
                    .map(|(k, x)| match x {
                        Some(x) if x.is_finite() => Ok(x),
                        _ => Err(Error::NonFinite(format!("entry {i} feature {k}"))),
                    })
                    .collect::<Result<_>>()?;
                match dim {
                    Some(d) if d != vals.len() => {
                        return Err(Error::DimensionMismatch(format!(
                            "entry {i} has {} features, expected {d}",
                            vals.len()
                        )))
                    }
                    None => dim = Some(vals.len()),
                    _ => {}
                }
                Some(vals)
            }
            None => None,
        };
        let score = match e.score {
            None => None,
            Some(serde_json::Value::Number(n)) => match n.as_f64() {
                Some(x) if x.is_finite() => Some(x),
                _ => return Err(Error::NonFinite(format!("entry {i} score"))),
            },
            Some(_) => return Err(Error::NonFinite(format!("entry {i} score is not a finite number"))),
        };
        if features.is_none() && score.is_none() {
            return Err(Error::Backend(format!("entry {i} carries neither features nor score")));
        }
        entries.push(ReplyEntry {
            canvas_path: e.canvas_path,
            features,
            score,
        });
    }
    let has_features = entries.iter().filter(|e| e.features.is_some()).count();
    let has_scores = entries.iter().filter(|e| e.score.is_some()).count();
    if has_features != entries.len() && has_scores != entries.len() {
        return Err(Error::Backend("reply mixes entries with only features and only scores".into()));
    }
    Ok(BackendReply {
        extractor_id: raw.extractor_id,
        dim,
        entries,
        gflops: raw.gflops,
        params_m: raw.params_m,
    })
}

pub fn read_backend_reply(path: &Path, manifest: &Manifest) -> Result<BackendReply> {
    let text = fs::read_to_string(path).map_err(|e| Error::Backend(format!("no reply at {}: {e}", path.display())))?;
    parse_backend_reply(&text, manifest)
}

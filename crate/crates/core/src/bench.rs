//! Wall-clock timing of the pipeline per stage and per model.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ExtractorKind, BASELINE_DIM, BASELINE_ID};
use crate::pipeline::{load_model, score_model, PipelineConfig, Stage, StageClock};
use crate::projection::ProjectionSource;
use crate::scoring::{HeadWeights, DEFAULT_HIDDEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    /// Mean seconds per stage over the measured repeats.
    pub stages: BTreeMap<String, f64>,
    /// End-to-end seconds of each measured repeat (warm-up excluded).
    pub totals: Vec<f64>,
    pub repeats: usize,
    pub mean_total: f64,
    pub std_total: f64,
    /// Whether the pipeline's internal parallelism was enabled.
    pub parallel: bool,
    pub projections: usize,
    /// Analytic multiply-adds of the regression head for one model.
    pub head_multiply_adds: Option<usize>,
    pub params_m: Option<f64>,
    pub gflops: Option<f64>,
}

impl StageTimings {
    pub fn stage(&self, stage: Stage) -> f64 {
        self.stages.get(stage.name()).copied().unwrap_or(0.0)
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn with_threads<T: Send>(parallel: bool, f: impl FnOnce() -> T + Send) -> Result<T> {
    if parallel {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// One warm-up call of `run`, then `repeats` timed calls.
fn time_runs(repeats: usize, parallel: bool, run: impl Fn(&mut StageClock) -> Result<()> + Sync) -> Result<(Vec<StageClock>, Vec<f64>)> {
    if repeats < 3 {
        return Err(Error::invalid(format!("need at least 3 repeats, got {repeats}")));
    }
    with_threads(parallel, || {
        run(&mut StageClock::default())?;
        let mut clocks = Vec::with_capacity(repeats);
        let mut totals = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let mut clock = StageClock::default();
            let start = std::time::Instant::now();
            run(&mut clock)?;
            totals.push(start.elapsed().as_secs_f64());
            clocks.push(clock);
        }
        Ok((clocks, totals))
    })?
}

fn summarize(clocks: &[StageClock], totals: Vec<f64>, parallel: bool, cfg: &PipelineConfig, head: Option<&HeadWeights>) -> StageTimings {
    let n = clocks.len() as f64;
    let stages = Stage::ALL
        .iter()
        .map(|&s| (s.name().to_string(), clocks.iter().map(|c| c.get(s).as_secs_f64()).sum::<f64>() / n))
        .collect();
    let (mean_total, std_total) = mean_std(&totals);
    let projections = cfg.sampling.views.count();
    StageTimings {
        stages,
        repeats: totals.len(),
        totals,
        mean_total,
        std_total,
        parallel,
        projections,
        head_multiply_adds: head.map(|w| w.multiply_adds() * projections),
        params_m: head.map(|w| w.parameter_count() as f64 / 1e6),
        gflops: None,
    }
}

/// Head used for timing when none is supplied: timing does not depend on the
/// weight values.
fn timing_head(cfg: &PipelineConfig, weights: Option<&HeadWeights>) -> Option<HeadWeights> {
    match (weights, cfg.extractor.kind) {
        (Some(w), _) => Some(w.clone()),
        (None, ExtractorKind::Baseline) => Some(HeadWeights::random(BASELINE_ID, BASELINE_DIM, DEFAULT_HIDDEN, 0)),
        (None, ExtractorKind::Bridge) => None,
    }
}

/// Times load-to-score for a model file.
pub fn time_pipeline(model_path: &Path, cfg: &PipelineConfig, weights: Option<&HeadWeights>, repeats: usize, parallel: bool) -> Result<StageTimings> {
    let head = timing_head(cfg, weights);
    let (clocks, totals) = time_runs(repeats, parallel, |clock| {
        let model = load_model(model_path, Some(clock))?;
        score_model(&model, cfg, head.as_ref(), Some(clock)).map(|_| ())
    })?;
    Ok(summarize(&clocks, totals, parallel, cfg, head.as_ref()))
}

/// Times render-to-score for a model already in memory (no load stage).
pub fn time_model<S: ProjectionSource + ?Sized>(
    source: &S,
    cfg: &PipelineConfig,
    weights: Option<&HeadWeights>,
    repeats: usize,
    parallel: bool,
) -> Result<StageTimings> {
    let head = timing_head(cfg, weights);
    let (clocks, totals) = time_runs(repeats, parallel, |clock| {
        score_model(source, cfg, head.as_ref(), Some(clock)).map(|_| ())
    })?;
    Ok(summarize(&clocks, totals, parallel, cfg, head.as_ref()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub params_m: Option<f64>,
    pub gflops: Option<f64>,
    pub time_s: f64,
    /// Time relative to the baseline row.
    pub ratio: f64,
    pub baseline: bool,
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
}

/// Mean end-to-end times side by side, with ratios to `entries[baseline]`.
pub fn compare_report(entries: &[(String, StageTimings)], baseline: usize) -> Result<CompareReport> {
    if entries.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 timing entries, got {}", entries.len())));
    }
    let base = entries
        .get(baseline)
        .ok_or_else(|| Error::invalid(format!("baseline row {baseline} out of range")))?
        .1
        .mean_total;
    if base <= 0.0 {
        return Err(Error::invalid("baseline time must be positive"));
    }
    Ok(CompareReport {
        rows: entries
            .iter()
            .enumerate()
            .map(|(i, (label, t))| CompareRow {
                label: label.clone(),
                params_m: t.params_m,
                gflops: t.gflops,
                time_s: t.mean_total,
                ratio: t.mean_total / base,
                baseline: i == baseline,
                parallel: t.parallel,
            })
            .collect(),
    })
}

impl CompareReport {
    /// Plain-text table; optional columns appear only when some row has them.
    pub fn to_table(&self) -> String {
        let params = self.rows.iter().any(|r| r.params_m.is_some());
        let gflops = self.rows.iter().any(|r| r.gflops.is_some());
        let width = self.rows.iter().map(|r| r.label.len() + 2).max().unwrap_or(0).max(5);
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "label");
        if params {
            let _ = write!(out, "  {:>9}", "Param(M)");
        }
        if gflops {
            let _ = write!(out, "  {:>8}", "Gflops");
        }
        let _ = writeln!(out, "  {:>9}  {:>7}  mode", "time_s", "ratio");
        for r in &self.rows {
            let label = if r.baseline { format!("{} *", r.label) } else { r.label.clone() };
            let _ = write!(out, "{label:<width$}");
            if params {
                let _ = write!(out, "  {:>9}", opt(r.params_m));
            }
            if gflops {
                let _ = write!(out, "  {:>8}", opt(r.gflops));
            }
            let mode = if r.parallel { "parallel" } else { "single" };
            let _ = writeln!(out, "  {:>9.4}  {:>6.2}x  {mode}", r.time_s, r.ratio);
        }
        out
    }
}

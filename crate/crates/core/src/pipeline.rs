//! End-to-end per-model pipeline and dataset-level workflows built on it.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{aggregate_folds, evaluate_run, kfold_split, EvalReport, FoldPlan};
use crate::features::{extract_features, run_bridge, BridgeOutput, ExtractorKind, ExtractorSpec, FeatureVector};
use crate::model_io::Model;
use crate::projection::{ProjectionSource, RenderConfig, ViewpointId};
use crate::sampling::{
    crop_all, derive_seed, patch_all, select_and_render, GridSpec, PatchMode, SampledProjectionSet, SamplingConfig,
    SeededRng, ViewSelection,
};
use crate::scoring::{aggregate_scores, score_features, train_head, HeadWeights, QualityResult, TrainConfig, TrainItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Tiny,
    Base,
}

impl Preset {
    pub fn projections(self) -> usize {
        match self {
            Preset::Tiny => 2,
            Preset::Base => 5,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Tiny => "tiny",
            Preset::Base => "base",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Preset::Tiny),
            "base" => Ok(Preset::Base),
            _ => Err(Error::invalid(format!("unknown preset `{s}` (expected tiny or base)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub sampling: SamplingConfig,
    pub render: RenderConfig,
    pub extractor: ExtractorSpec,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn preset(preset: Preset, seed: u64) -> Self {
        PipelineConfig {
            sampling: SamplingConfig::random(preset.projections(), GridSpec::default()),
            render: RenderConfig::default(),
            extractor: ExtractorSpec::baseline(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampling.validate()?;
        self.render.validate()
    }

    /// Copy of this config with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        PipelineConfig { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Load,
    Render,
    Crop,
    Gms,
    Features,
    Head,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Load, Stage::Render, Stage::Crop, Stage::Gms, Stage::Features, Stage::Head];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Render => "render",
            Stage::Crop => "crop",
            Stage::Gms => "gms",
            Stage::Features => "features",
            Stage::Head => "head",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Accumulated wall-clock time per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageClock {
    elapsed: [Duration; 6],
}

impl StageClock {
    pub fn get(&self, stage: Stage) -> Duration {
        self.elapsed[stage.index()]
    }

    pub fn total(&self) -> Duration {
        self.elapsed.iter().sum()
    }
}

/// Runs `f` as `stage`, timing it when a clock is present and tagging any
/// error with the stage name.
fn run_stage<T>(stage: Stage, clock: &mut Option<&mut StageClock>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    if let Some(c) = clock.as_deref_mut() {
        c.elapsed[stage.index()] += start.elapsed();
    }
    out.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage: stage.name(),
            source: Box::new(e),
        },
    })
}

/// Strips a stage tag, exposing the underlying error.
pub fn root_cause(e: Error) -> Error {
    match e {
        Error::Stage { source, .. } => root_cause(*source),
        e => e,
    }
}

pub fn load_model(path: &Path, clock: Option<&mut StageClock>) -> Result<Model> {
    let mut clock = clock;
    run_stage(Stage::Load, &mut clock, || Model::load(path))
}

/// Renders, crops and patch-samples one model. Randomness comes only from
/// `cfg.seed`.
pub fn sample_model<S: ProjectionSource + ?Sized>(
    source: &S,
    cfg: &PipelineConfig,
    clock: Option<&mut StageClock>,
) -> Result<SampledProjectionSet> {
    let mut clock = clock;
    let mut rng = SeededRng::new(cfg.seed);
    let stages = run_stage(Stage::Render, &mut clock, || {
        select_and_render(source, &cfg.sampling, &cfg.render, &mut rng)
    })?;
    let (viewpoints, crops) = run_stage(Stage::Crop, &mut clock, || crop_all(stages))?;
    let (canvases, origins) = run_stage(Stage::Gms, &mut clock, || patch_all(crops, &cfg.sampling, &mut rng))?;
    Ok(SampledProjectionSet {
        canvases,
        viewpoints,
        seed: cfg.seed,
        grid: cfg.sampling.grid,
        mode: cfg.sampling.mode,
        origins,
    })
}

/// Sampled viewpoints and one feature vector per surviving projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFeatures {
    pub viewpoints: Vec<ViewpointId>,
    pub features: Vec<FeatureVector>,
}

pub fn model_features<S: ProjectionSource + ?Sized>(
    source: &S,
    cfg: &PipelineConfig,
    clock: Option<&mut StageClock>,
) -> Result<ModelFeatures> {
    let mut clock = clock;
    let set = sample_model(source, cfg, clock.as_deref_mut())?;
    let features = run_stage(Stage::Features, &mut clock, || extract_features(&set, &cfg.extractor))?;
    Ok(ModelFeatures {
        viewpoints: set.viewpoints,
        features,
    })
}

/// Scores one model. With `weights` the head runs here; without, a bridge
/// backend must be configured and is asked for per-projection scores.
pub fn score_model<S: ProjectionSource + ?Sized>(
    source: &S,
    cfg: &PipelineConfig,
    weights: Option<&HeadWeights>,
    clock: Option<&mut StageClock>,
) -> Result<QualityResult> {
    let mut clock = clock;
    match weights {
        Some(w) => {
            let mf = model_features(source, cfg, clock.as_deref_mut())?;
            run_stage(Stage::Head, &mut clock, || score_features(&mf.features, w, cfg.seed, mf.viewpoints))
        }
        None if cfg.extractor.kind == ExtractorKind::Bridge => {
            let set = sample_model(source, cfg, clock.as_deref_mut())?;
            let scores = run_stage(Stage::Features, &mut clock, || match run_bridge(&set, &cfg.extractor, "model", "score")? {
                BridgeOutput::Scores(s) => Ok(s),
                BridgeOutput::Features(_) => Err(Error::Backend("backend replied with features where scores were requested".into())),
            })?;
            run_stage(Stage::Head, &mut clock, || {
                Ok(QualityResult {
                    aggregate: aggregate_scores(&scores)?,
                    per_projection: scores,
                    seed: cfg.seed,
                    viewpoints: set.viewpoints,
                })
            })
        }
        None => Err(Error::invalid("scoring with the baseline extractor needs head weights")),
    }
}

pub fn score_path(path: &Path, cfg: &PipelineConfig, weights: Option<&HeadWeights>, clock: Option<&mut StageClock>) -> Result<QualityResult> {
    let mut clock = clock;
    let model = load_model(path, clock.as_deref_mut())?;
    score_model(&model, cfg, weights, clock)
}

// ---------------------------------------------------------------------------
// Dataset workflows
// ---------------------------------------------------------------------------

/// One labeled model of a dataset, identified by `id` and grouped by its
/// reference content.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    pub id: String,
    pub group: String,
    pub label: f64,
    pub features: Vec<FeatureVector>,
}

/// Per-model seed within a dataset run: a pure function of the base seed and
/// the model's position.
pub fn model_seed(base: u64, index: usize) -> u64 {
    derive_seed(base, index as u64)
}

/// Extracts features for labeled sources in parallel. `sources` yields
/// `(id, group, label, source)`.
pub fn extract_dataset<S: ProjectionSource>(sources: &[(String, String, f64, S)], cfg: &PipelineConfig) -> Result<Vec<LabeledFeatures>> {
    cfg.validate()?;
    sources
        .par_iter()
        .enumerate()
        .map(|(i, (id, group, label, src))| {
            let mf = model_features(src, &cfg.with_seed(model_seed(cfg.seed, i)), None)
                .map_err(|e| Error::InvalidModel(format!("{id}: {e}")))?;
            Ok(LabeledFeatures {
                id: id.clone(),
                group: group.clone(),
                label: *label,
                features: mf.features,
            })
        })
        .collect()
}

/// Loads every model listed in a dataset CSV and extracts its features.
pub fn extract_dataset_files(entries: &[crate::evaluation::DatasetEntry], cfg: &PipelineConfig) -> Result<Vec<LabeledFeatures>> {
    cfg.validate()?;
    entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let id = e.model_path.display().to_string();
            let model = Model::load(&e.model_path)?;
            let mf = model_features(&model, &cfg.with_seed(model_seed(cfg.seed, i)), None)
                .map_err(|err| Error::InvalidModel(format!("{id}: {err}")))?;
            Ok(LabeledFeatures {
                id,
                group: e.group_id.clone(),
                label: e.mos,
                features: mf.features,
            })
        })
        .collect()
}

fn to_train_items(items: &[&LabeledFeatures]) -> Vec<TrainItem> {
    items
        .iter()
        .map(|it| TrainItem {
            features: it.features.clone(),
            label: it.label,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossValidation {
    pub folds: Vec<EvalReport>,
    pub aggregate: EvalReport,
    pub plan: FoldPlan,
    /// Out-of-fold prediction per item id.
    pub predictions: Vec<(String, f64)>,
}

/// Group-aware k-fold cross-validation: train a head on k-1 folds, predict
/// the held-out fold, and average the per-fold criteria.
pub fn cross_validate(items: &[LabeledFeatures], k: usize, seed: u64, train: &TrainConfig) -> Result<CrossValidation> {
    let keys: Vec<(String, String)> = items.iter().map(|it| (it.id.clone(), it.group.clone())).collect();
    let plan = kfold_split(&keys, k, seed)?;
    let results = (0..k)
        .into_par_iter()
        .map(|fold| {
            let (test, rest): (Vec<&LabeledFeatures>, Vec<&LabeledFeatures>) =
                items.iter().partition(|it| plan.fold_of(&it.id) == Some(fold));
            let cfg = TrainConfig {
                seed: derive_seed(train.seed, fold as u64),
                ..train.clone()
            };
            let outcome = train_head(&to_train_items(&rest), None, &cfg)?;
            let preds = test
                .iter()
                .map(|it| score_features(&it.features, &outcome.weights, 0, Vec::new()).map(|r| r.aggregate))
                .collect::<Result<Vec<f64>>>()?;
            let labels: Vec<f64> = test.iter().map(|it| it.label).collect();
            let mut report = evaluate_run(&preds, &labels)?;
            report.seed = Some(seed);
            let ids: Vec<(String, f64)> = test.iter().map(|it| it.id.clone()).zip(preds).collect();
            Ok((report, ids))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut folds = Vec::with_capacity(k);
    let mut predictions = Vec::with_capacity(items.len());
    for (r, p) in results {
        folds.push(r);
        predictions.extend(p);
    }
    let aggregate = aggregate_folds(&folds)?;
    Ok(CrossValidation {
        folds,
        aggregate,
        plan,
        predictions,
    })
}

/// Viewpoint lists used when random projection sampling is switched off:
/// five fixed sets of `n` views, cycling through the cube faces.
pub fn fixed_viewpoint_sets(n: usize) -> Result<Vec<Vec<ViewpointId>>> {
    if !(1..=6).contains(&n) {
        return Err(Error::invalid(format!("projection count must be in 1..=6, got {n}")));
    }
    Ok((0..5)
        .map(|s| (0..n).map(|j| ViewpointId::ALL[(s + j) % 6]).collect())
        .collect())
}

/// One row of an ablation table.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub rps: bool,
    pub gms: bool,
    pub report: EvalReport,
}

/// Runs the four on/off combinations of random projection sampling and grid
/// mini-patch sampling. With sampling off, results are averaged over
/// `fixed_sets` (or the sets from [`fixed_viewpoint_sets`]).
pub fn ablate<S: ProjectionSource>(
    sources: &[(String, String, f64, S)],
    cfg: &PipelineConfig,
    k: usize,
    train: &TrainConfig,
    fixed_sets: Option<&[Vec<ViewpointId>]>,
) -> Result<Vec<AblationRow>> {
    let n = cfg.sampling.views.count();
    let default_sets;
    let sets = match fixed_sets {
        Some(s) if !s.is_empty() => s,
        Some(_) => return Err(Error::invalid("projection sampling off needs at least one fixed viewpoint list")),
        None => {
            default_sets = fixed_viewpoint_sets(n)?;
            &default_sets[..]
        }
    };
    let mut rows = Vec::new();
    for rps in [false, true] {
        for gms in [false, true] {
            let mode = if gms { PatchMode::GridMiniPatch } else { PatchMode::Resize };
            let variants: Vec<ViewSelection> = if rps {
                vec![ViewSelection::Random(n)]
            } else {
                sets.iter().cloned().map(ViewSelection::Fixed).collect()
            };
            let mut reports = Vec::new();
            for views in variants {
                let c = PipelineConfig {
                    sampling: SamplingConfig {
                        views,
                        mode,
                        ..cfg.sampling.clone()
                    },
                    ..cfg.clone()
                };
                let items = extract_dataset(sources, &c)?;
                reports.push(cross_validate(&items, k, cfg.seed, train)?.aggregate);
            }
            rows.push(AblationRow {
                rps,
                gms,
                report: aggregate_folds(&reports)?,
            });
        }
    }
    Ok(rows)
}

/// SRCC (and the other criteria) for every projection count 1..=6.
pub fn sweep_projection_count<S: ProjectionSource>(
    sources: &[(String, String, f64, S)],
    cfg: &PipelineConfig,
    k: usize,
    train: &TrainConfig,
) -> Result<Vec<(usize, EvalReport)>> {
    (1..=6)
        .map(|n| {
            let c = PipelineConfig {
                sampling: SamplingConfig {
                    views: ViewSelection::Random(n),
                    ..cfg.sampling.clone()
                },
                ..cfg.clone()
            };
            let items = extract_dataset(sources, &c)?;
            Ok((n, cross_validate(&items, k, cfg.seed, train)?.aggregate))
        })
        .collect()
}

/// Loads every model of a dataset CSV as `(id, group, label, model)`.
pub fn load_dataset_models(entries: &[crate::evaluation::DatasetEntry]) -> Result<Vec<(String, String, f64, Model)>> {
    entries
        .par_iter()
        .map(|e| {
            Ok((
                e.model_path.display().to_string(),
                e.group_id.clone(),
                e.mos,
                Model::load(&e.model_path)?,
            ))
        })
        .collect()
}

/// Path of a weights file next to `dir`, for commands that write one.
pub fn default_weights_path(dir: &Path) -> PathBuf {
    dir.join("head.json")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_io::PointCloud;
    use crate::projection::RenderCounter;
    use crate::synth;

    fn small_cfg(n: usize, seed: u64) -> PipelineConfig {
        PipelineConfig {
            sampling: SamplingConfig::random(n, GridSpec::default()),
            render: RenderConfig {
                viewport: 256,
                ..RenderConfig::default()
            },
            extractor: ExtractorSpec::baseline(),
            seed,
        }
    }

    fn cloud() -> PointCloud {
        synth::reference_shape(0, 8_000, 3)
    }

    #[test]
    fn presets_expand() {
        assert_eq!(Preset::Tiny.projections(), 2);
        assert_eq!(Preset::Base.projections(), 5);
        assert_eq!("tiny".parse::<Preset>().unwrap(), Preset::Tiny);
        assert!("huge".parse::<Preset>().is_err());
        assert_eq!(PipelineConfig::preset(Preset::Base, 1).sampling.views, ViewSelection::Random(5));
    }

    #[test]
    fn timing_does_not_change_outputs() {
        let c = cloud();
        let cfg = small_cfg(3, 11);
        let w = HeadWeights::random(crate::features::BASELINE_ID, 12, 16, 2);
        let plain = score_model(&c, &cfg, Some(&w), None).unwrap();
        let mut clock = StageClock::default();
        let timed = score_model(&c, &cfg, Some(&w), Some(&mut clock)).unwrap();
        assert_eq!(plain, timed);
        assert_eq!(plain.per_projection.len(), 3);
        for s in [Stage::Render, Stage::Crop, Stage::Gms, Stage::Features, Stage::Head] {
            assert!(clock.get(s) > Duration::ZERO, "{s:?}");
        }
        assert_eq!(clock.get(Stage::Load), Duration::ZERO);
    }

    #[test]
    fn only_sampled_views_render() {
        let counter = RenderCounter::new(cloud());
        let mf = model_features(&counter, &small_cfg(2, 5), None).unwrap();
        assert_eq!(counter.calls(), 2);
        assert_eq!(mf.features.len(), 2);
        let mut r = counter.rendered();
        let mut v = mf.viewpoints.clone();
        r.sort_by_key(|v| v.index());
        v.sort_by_key(|v| v.index());
        assert_eq!(r, v);
    }

    #[test]
    fn errors_name_their_stage() {
        let c = cloud();
        let mut cfg = small_cfg(2, 1);
        cfg.sampling.views = ViewSelection::Random(9);
        let err = model_features(&c, &cfg, None).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "render", .. }), "{err}");
        let err = score_model(&c, &small_cfg(2, 1), None, None).unwrap_err();
        assert!(err.is_usage());
    }

    #[test]
    fn fixed_sets_are_distinct_lists() {
        for n in 1..=6 {
            let sets = fixed_viewpoint_sets(n).unwrap();
            assert_eq!(sets.len(), 5);
            for s in &sets {
                assert_eq!(s.len(), n);
                crate::projection::check_distinct(s).unwrap();
            }
        }
        assert!(fixed_viewpoint_sets(0).is_err());
    }

    #[test]
    fn ablate_needs_lists_when_rps_off() {
        let srcs: Vec<(String, String, f64, PointCloud)> = Vec::new();
        let err = ablate(&srcs, &small_cfg(2, 0), 2, &TrainConfig::default(), Some(&[])).unwrap_err();
        assert!(err.is_usage());
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde_json::{json, Value};

use projqa::bench::{compare_report, time_pipeline};
use projqa::evaluation::{evaluate_run, read_dataset, report_table, EvalReport};
use projqa::features::ExtractorSpec;
use projqa::pipeline::{
    ablate, cross_validate, default_weights_path, extract_dataset, load_dataset_models, load_model, model_seed,
    root_cause, sample_model, score_model, sweep_projection_count, PipelineConfig, Preset,
};
use projqa::projection::{export_projection, render_selected, RenderConfig, ViewpointId};
use projqa::sampling::{export_set, GridSpec, SamplingConfig};
use projqa::scoring::{load_weights, save_weights, train_head, TrainConfig, TrainItem};
use projqa::{Error, Result};

#[derive(Parser)]
#[command(name = "projqa", version, about = "No-reference quality assessment of point clouds and textured meshes from sampled projections")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Seed for every random choice; drawn from entropy and printed if absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Projection-count preset: tiny (2) or base (5).
    #[arg(long, global = true, default_value = "base")]
    preset: Preset,
    /// Explicit projection count (1-6); overrides the preset.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Mini-patch grid as RxCxP.
    #[arg(long, global = true, default_value = "7x7x32")]
    grid: GridSpec,
    #[arg(long, global = true, default_value_t = 1024)]
    viewport: usize,
    /// Point splat radius in pixels.
    #[arg(long, global = true, default_value_t = 2)]
    splat: u32,
    #[arg(long, global = true, value_parser = ["baseline", "bridge"], default_value = "baseline")]
    extractor: String,
    /// Directory holding the neural backend (`projqa-backend` or `backend.py`).
    #[arg(long, global = true)]
    backend_dir: Option<PathBuf>,
    /// Head weights JSON.
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Render cube-face projections to PNG files with JSON sidecars.
    Render {
        model: PathBuf,
        /// Comma-separated viewpoints, e.g. +X,+Z (default: all six).
        #[arg(long)]
        viewpoints: Option<String>,
    },
    /// Sample projections and write the canvases plus their manifest.
    Sample { model: PathBuf },
    /// Score one model.
    Score { model: PathBuf },
    /// Train the regression head on a labeled dataset CSV.
    Train {
        dataset: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Evaluate on a dataset: k-fold cross-validation, or the given weights.
    Evaluate {
        dataset: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Cross-validated criteria for every projection count 1..6.
    SweepN {
        dataset: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Ablate random projection sampling and grid mini-patch sampling.
    Ablate {
        dataset: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Fixed viewpoint lists used with sampling off, e.g. "+X,+Z;-Y,+Y".
        #[arg(long)]
        fixed_viewpoints: Option<String>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Time the pipeline per stage for the tiny and base presets.
    Bench {
        model: PathBuf,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Enable the pipeline's internal parallelism.
        #[arg(long)]
        parallel: bool,
    },
}

struct Ctx {
    global: Global,
    seed: u64,
    cfg: PipelineConfig,
}

fn backend_command(dir: &Path) -> Result<String> {
    let exe = dir.join("projqa-backend");
    if exe.is_file() {
        return Ok(exe.display().to_string());
    }
    let script = dir.join("backend.py");
    if script.is_file() {
        return Ok(format!("python3 {}", script.display()));
    }
    Err(Error::InvalidArgument(format!(
        "no projqa-backend or backend.py in {}",
        dir.display()
    )))
}

impl Ctx {
    fn new(global: Global) -> Result<Ctx> {
        let seed = match global.seed {
            Some(s) => s,
            None => {
                let s = rand::rng().random();
                eprintln!("seed: {s}");
                s
            }
        };
        let n = global.n.unwrap_or(global.preset.projections());
        let extractor = match global.extractor.as_str() {
            "bridge" => {
                let dir = global
                    .backend_dir
                    .as_deref()
                    .ok_or_else(|| Error::InvalidArgument("--extractor bridge needs --backend-dir".into()))?;
                let work = global.out.clone().unwrap_or_else(std::env::temp_dir);
                ExtractorSpec::bridge(backend_command(dir)?, work)
            }
            _ => ExtractorSpec::baseline(),
        };
        let cfg = PipelineConfig {
            sampling: SamplingConfig::random(n, global.grid),
            render: RenderConfig {
                viewport: global.viewport,
                splat_radius: global.splat,
                ..RenderConfig::default()
            },
            extractor,
            seed,
        };
        cfg.validate()?;
        Ok(Ctx { global, seed, cfg })
    }

    fn config_json(&self, command: &str) -> Value {
        json!({
            "command": command,
            "seed": self.seed,
            "preset": self.global.preset,
            "n": self.cfg.sampling.views.count(),
            "pipeline": self.cfg,
            "weights": self.global.weights,
        })
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.global.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        Ok(dir)
    }

    fn weights(&self) -> Result<Option<projqa::scoring::HeadWeights>> {
        self.global.weights.as_deref().map(load_weights).transpose()
    }

    fn train_config(&self, t: &TrainArgs) -> TrainConfig {
        TrainConfig {
            hidden: t.hidden,
            learning_rate: t.lr,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

/// Prints `value` and, with --out, also writes it to `<out>/<name>.json`.
fn emit(ctx: &Ctx, name: &str, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    println!("{text}");
    if let Some(dir) = &ctx.global.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        let path = dir.join(format!("{name}.json"));
        std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn table_rows<'a>(rows: impl Iterator<Item = (String, &'a EvalReport)>) -> Vec<(String, EvalReport)> {
    rows.map(|(l, r)| (l, r.clone())).collect()
}

fn parse_fixed_sets(s: &str) -> Result<Vec<Vec<ViewpointId>>> {
    s.split(';').filter(|p| !p.trim().is_empty()).map(ViewpointId::parse_list).collect()
}

fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("--jobs: {e}")))?;
    }
    let ctx = Ctx::new(cli.global)?;
    match cli.command {
        Command::Render { model, viewpoints } => {
            let vps = match viewpoints {
                Some(v) => ViewpointId::parse_list(&v)?,
                None => ViewpointId::ALL.to_vec(),
            };
            let m = load_model(&model, None)?;
            let dir = ctx.out_dir()?;
            let stem = model.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
            let images = render_selected(&m, &vps, &ctx.cfg.render)?;
            let mut files = Vec::new();
            for img in &images {
                let name = format!("{stem}_{}", img.viewpoint().as_str().replace('+', "p").replace('-', "n"));
                files.push(export_projection(img, &ctx.cfg.render, &dir, &name)?);
            }
            emit(&ctx, "render", &json!({ "config": ctx.config_json("render"), "files": files }))
        }
        Command::Sample { model } => {
            let m = load_model(&model, None)?;
            let set = sample_model(&m, &ctx.cfg, None)?;
            let id = model.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
            let manifest = export_set(&set, &id, &ctx.out_dir()?)?;
            emit(
                &ctx,
                "sample",
                &json!({ "config": ctx.config_json("sample"), "viewpoints": set.viewpoints, "manifest": manifest }),
            )
        }
        Command::Score { model } => {
            let weights = ctx.weights()?;
            if weights.is_none() && ctx.global.extractor == "baseline" {
                return Err(Error::InvalidArgument("score needs --weights with the baseline extractor".into()));
            }
            let m = load_model(&model, None)?;
            let r = score_model(&m, &ctx.cfg, weights.as_ref(), None)?;
            emit(&ctx, "score", &json!({ "config": ctx.config_json("score"), "result": r }))
        }
        Command::Train { dataset, train } => {
            let entries = read_dataset(&dataset)?;
            let models = load_dataset_models(&entries)?;
            let items = extract_dataset(&models, &ctx.cfg)?;
            let tc = ctx.train_config(&train);
            let train_items: Vec<TrainItem> = items
                .into_iter()
                .map(|it| TrainItem {
                    features: it.features,
                    label: it.label,
                })
                .collect();
            let outcome = train_head(&train_items, None, &tc)?;
            let path = match &ctx.global.weights {
                Some(p) => p.clone(),
                None => default_weights_path(&ctx.out_dir()?),
            };
            save_weights(&outcome.weights, &path)?;
            let last = outcome.history.last().map(|h| h.train_loss);
            emit(
                &ctx,
                "train",
                &json!({
                    "config": ctx.config_json("train"),
                    "train": tc,
                    "weights_path": path,
                    "best_epoch": outcome.best_epoch,
                    "final_train_loss": last,
                    "history": outcome.history,
                }),
            )
        }
        Command::Evaluate { dataset, folds, train } => {
            let entries = read_dataset(&dataset)?;
            let models = load_dataset_models(&entries)?;
            if let Some(w) = ctx.weights()? {
                let preds = models
                    .iter()
                    .enumerate()
                    .map(|(i, (_, _, _, m))| score_model(m, &ctx.cfg.with_seed(model_seed(ctx.seed, i)), Some(&w), None).map(|r| r.aggregate))
                    .collect::<Result<Vec<f64>>>()?;
                let labels: Vec<f64> = models.iter().map(|m| m.2).collect();
                let report = evaluate_run(&preds, &labels)?;
                eprint!("{}", report_table(&[("weights".into(), report.clone())]));
                return emit(&ctx, "evaluate", &json!({ "config": ctx.config_json("evaluate"), "report": report }));
            }
            let items = extract_dataset(&models, &ctx.cfg)?;
            let tc = ctx.train_config(&train);
            let cv = cross_validate(&items, folds, ctx.seed, &tc)?;
            let mut rows = table_rows(cv.folds.iter().enumerate().map(|(i, r)| (format!("fold {i}"), r)));
            rows.push(("mean".into(), cv.aggregate.clone()));
            eprint!("{}", report_table(&rows));
            emit(
                &ctx,
                "evaluate",
                &json!({
                    "config": ctx.config_json("evaluate"),
                    "train": tc,
                    "report": cv.aggregate,
                    "folds": cv.folds,
                    "plan": cv.plan,
                }),
            )
        }
        Command::SweepN { dataset, folds, train } => {
            let entries = read_dataset(&dataset)?;
            let models = load_dataset_models(&entries)?;
            let tc = ctx.train_config(&train);
            let rows = sweep_projection_count(&models, &ctx.cfg, folds, &tc)?;
            eprint!("{}", report_table(&table_rows(rows.iter().map(|(n, r)| (format!("N={n}"), r)))));
            let data: Vec<Value> = rows
                .iter()
                .map(|(n, r)| json!({ "n": n, "srcc": r.srcc, "report": r }))
                .collect();
            emit(&ctx, "sweep-n", &json!({ "config": ctx.config_json("sweep-n"), "train": tc, "rows": data }))
        }
        Command::Ablate {
            dataset,
            folds,
            fixed_viewpoints,
            train,
        } => {
            let entries = read_dataset(&dataset)?;
            let models = load_dataset_models(&entries)?;
            let tc = ctx.train_config(&train);
            let sets = fixed_viewpoints.as_deref().map(parse_fixed_sets).transpose()?;
            let rows = ablate(&models, &ctx.cfg, folds, &tc, sets.as_deref())?;
            let onoff = |b: bool| if b { "on" } else { "off" };
            eprint!(
                "{}",
                report_table(&table_rows(
                    rows.iter().map(|r| (format!("RPS {} GMS {}", onoff(r.rps), onoff(r.gms)), &r.report))
                ))
            );
            emit(&ctx, "ablate", &json!({ "config": ctx.config_json("ablate"), "train": tc, "rows": rows }))
        }
        Command::Bench { model, repeats, parallel } => {
            let weights = ctx.weights()?;
            let mut entries = Vec::new();
            let presets: Vec<(String, PipelineConfig)> = match ctx.global.n {
                Some(n) => vec![(format!("N={n}"), ctx.cfg.clone())],
                None => [Preset::Tiny, Preset::Base]
                    .into_iter()
                    .map(|p| {
                        let mut c = ctx.cfg.clone();
                        c.sampling.views = projqa::sampling::ViewSelection::Random(p.projections());
                        (p.to_string(), c)
                    })
                    .collect(),
            };
            for (label, cfg) in presets {
                entries.push((label, time_pipeline(&model, &cfg, weights.as_ref(), repeats, parallel)?));
            }
            let report = if entries.len() >= 2 {
                let r = compare_report(&entries, 0)?;
                eprint!("{}", r.to_table());
                Some(r)
            } else {
                None
            };
            let timings: Vec<Value> = entries.iter().map(|(l, t)| json!({ "label": l, "timings": t })).collect();
            emit(
                &ctx,
                "bench",
                &json!({ "config": ctx.config_json("bench"), "entries": timings, "comparison": report }),
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if root_cause(e).is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}


//! `graphofuse`: runs the handwriting pipeline stage by stage.
//!
//! Every stage reads and writes plain files under `--output-dir` so any one
//! of them can be re-run on its own.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use graphofuse_core::eval::{
    grid_search, run_experiment, sweep_threshold, ExperimentConfig, ExperimentOutcome, Modality,
    MultimodalSet, DEFAULT_INNER_K, DEFAULT_K,
};
use graphofuse_core::features::{read_feature_matrix, write_feature_matrix, FeatureMap};
use graphofuse_core::fusion::{FusionConfig, FusionMode};
use graphofuse_core::ingest::{load_dataset, Dataset, FormatConfig, Label, Task};
use graphofuse_core::models::persist::save_model;
use graphofuse_core::models::{self, default_grid, Algo};
use graphofuse_core::offline::{embeddings_for, extract_offline, load_embeddings, OfflineExtractorKind, DEFAULT_GRID};
use graphofuse_core::online::extract_online_dataset;
use graphofuse_core::par::Execution;
use graphofuse_core::raster::{rasterize, read_png, write_png, write_sidecar, RasterConfig, RasterImage};
use graphofuse_core::synth::{generate, write_corpus, SynthConfig, GOLDEN_SEED};
use serde_json::{json, Value};

const ONLINE_FILE: &str = "features/online_features.csv";
const OFFLINE_FILE: &str = "features/offline_features.csv";

#[derive(Parser, Debug)]
#[command(name = "graphofuse", version, about = "Multimodal handwriting screening pipeline")]
struct Cli {
    /// Base seed for folds, training and synthesis
    #[arg(long, global = true, default_value_t = GOLDEN_SEED)]
    seed: u64,

    /// Seconds per device timestamp tick
    #[arg(long, global = true, default_value_t = 0.01)]
    tick_seconds: f64,

    /// Corpus directory holding metadata.csv and streams/
    #[arg(long, global = true, default_value = "data")]
    data: PathBuf,

    /// Where stage outputs go (defaults to the corpus directory)
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Task whose records are loaded
    #[arg(long, global = true, default_value = "word")]
    task: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus
    Synth(SynthArgs),
    /// Validate the corpus and print a summary
    Ingest,
    /// Write the online feature matrix
    ExtractOnline,
    /// Render every record to PNG
    Rasterize(RasterArgs),
    /// Write the offline feature matrix
    ExtractOffline(OfflineArgs),
    /// Tune and train one classifier on the whole corpus
    Train(TrainArgs),
    /// Cross-validate a fusion strategy
    Evaluate(EvalArgs),
    /// Cross-validate conditional fusion over several thresholds
    SweepTau(SweepArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 40)]
    subjects: usize,
    #[arg(long, default_value_t = 3)]
    records: usize,
    #[arg(long, default_value_t = 1.0)]
    severity: f64,
    #[arg(long, default_value_t = 0.5)]
    complementarity: f64,
    /// Fraction of DYG subjects
    #[arg(long, default_value_t = 0.5)]
    balance: f64,
    /// Target directory (defaults to --data)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RasterArgs {
    #[arg(long, default_value_t = 256)]
    canvas: usize,
    #[arg(long, default_value_t = 2)]
    stroke_width: usize,
    #[arg(long, default_value_t = 0.08)]
    margin: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Extractor {
    Zoning,
    Embedding,
}

#[derive(Args, Debug)]
struct OfflineArgs {
    #[arg(long, value_enum, default_value = "zoning")]
    extractor: Extractor,
    /// Embedding file, required with `--extractor embedding`
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AlgoArg {
    Svm,
    Gbt,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Svm => Algo::Svm,
            AlgoArg::Gbt => Algo::Gbt,
        }
    }
}

#[derive(Args, Debug)]
struct CvArgs {
    #[arg(long, value_enum, default_value = "svm")]
    algo: AlgoArg,
    /// Outer folds
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_INNER_K)]
    inner_k: usize,
    /// Run every stage on one thread
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    cv: CvArgs,
    #[arg(long, default_value = "fused")]
    modality: Modality,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    cv: CvArgs,
    #[arg(long, default_value = "conditional")]
    mode: FusionMode,
    #[arg(long, default_value_t = 0.2)]
    tau: f64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    cv: CvArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.15,0.2,0.25,0.3")]
    taus: Vec<f64>,
}

struct Ctx {
    seed: u64,
    tick_seconds: f64,
    data: PathBuf,
    out: PathBuf,
    task: Task,
}

impl Ctx {
    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn dataset(&self) -> anyhow::Result<Dataset> {
        let meta_path = self.data.join("metadata.csv");
        let meta = std::fs::read(&meta_path)
            .map_err(|_| graphofuse_core::Error::MissingFile(meta_path.clone()))
            .with_context(|| format!("loading corpus from {}", self.data.display()))?;
        let ds = load_dataset(&self.data.join("streams"), &meta, &self.task, &FormatConfig::default())
            .with_context(|| format!("loading corpus from {}", self.data.display()))?;
        if ds.is_empty() {
            bail!("no records for task {:?} in {}", self.task.token(), self.data.display());
        }
        Ok(ds)
    }

    fn globals(&self) -> Value {
        json!({
            "seed": self.seed,
            "tick_seconds": self.tick_seconds,
            "data": self.data.display().to_string(),
            "output_dir": self.out.display().to_string(),
            "task": self.task.token(),
        })
    }

    /// Written before any work so a failed run still records what was asked.
    fn write_manifest(&self, command: &str, args: Value) -> anyhow::Result<()> {
        let manifest = json!({
            "tool": "graphofuse",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "globals": self.globals(),
            "args": args,
        });
        let path = self.path("run_manifest.json");
        write_text(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))
    }
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("GRAPHOFUSE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("GRAPHOFUSE_THREADS must be a count, got {raw:?}"))?;
    #[cfg(feature = "parallel")]
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn execution(cv: &CvArgs) -> Execution {
    if cv.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn cv_json(cv: &CvArgs) -> Value {
    let algo: Algo = cv.algo.into();
    json!({
        "algo": algo.to_string(),
        "k": cv.k,
        "inner_k": cv.inner_k,
        "grid": default_grid(algo),
    })
}

fn experiment_config(ctx: &Ctx, cv: &CvArgs, fusion: FusionConfig) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(cv.algo.into(), fusion, ctx.seed);
    cfg.k = cv.k;
    cfg.inner_k = cv.inner_k;
    cfg.execution = execution(cv);
    cfg
}

fn cmd_synth(ctx: &Ctx, a: &SynthArgs) -> anyhow::Result<()> {
    let cfg = SynthConfig {
        n_subjects: a.subjects,
        records_per_subject: a.records,
        class_balance: a.balance,
        severity: a.severity,
        complementarity: a.complementarity,
        seed: ctx.seed,
        task: ctx.task.clone(),
    };
    let dir = a.out.clone().unwrap_or_else(|| ctx.data.clone());
    ctx.write_manifest("synth", json!({ "config": cfg, "out": dir.display().to_string() }))?;
    let ds = generate(&cfg)?;
    write_corpus(&ds, &dir)?;
    println!(
        "wrote {} records ({} subjects, {} DYG) to {}",
        ds.len(),
        ds.subjects().len(),
        ds.count(Label::Dyg),
        dir.display()
    );
    Ok(())
}

fn cmd_ingest(ctx: &Ctx) -> anyhow::Result<()> {
    ctx.write_manifest("ingest", json!({}))?;
    let ds = ctx.dataset()?;
    let samples: usize = ds.records.iter().map(|r| r.samples.len()).sum();
    println!("task      {}", ds.task_filter.token());
    println!("records   {}", ds.len());
    println!("subjects  {}", ds.subjects().len());
    println!("TD        {}", ds.count(Label::Td));
    println!("DYG       {}", ds.count(Label::Dyg));
    println!("samples   {samples}");
    Ok(())
}

fn cmd_extract_online(ctx: &Ctx) -> anyhow::Result<()> {
    ctx.write_manifest("extract-online", json!({}))?;
    let ds = ctx.dataset()?;
    let (manifest, rows) = extract_online_dataset(&ds, ctx.tick_seconds, Execution::Parallel);
    let path = ctx.path(ONLINE_FILE);
    std::fs::create_dir_all(path.parent().unwrap())?;
    write_feature_matrix(&path, &manifest, &rows)?;
    println!("{} rows x {} features -> {}", rows.len(), manifest.len(), path.display());
    Ok(())
}

fn raster_config(a: &RasterArgs) -> RasterConfig {
    RasterConfig {
        canvas: a.canvas,
        stroke_width: a.stroke_width,
        margin_frac: a.margin,
        ..RasterConfig::default()
    }
}

fn cmd_rasterize(ctx: &Ctx, a: &RasterArgs) -> anyhow::Result<()> {
    let cfg = raster_config(a);
    ctx.write_manifest("rasterize", json!({ "raster": cfg }))?;
    cfg.validate()?;
    let ds = ctx.dataset()?;
    let dir = ctx.path("images");
    std::fs::create_dir_all(&dir)?;
    for r in &ds.records {
        let img = rasterize(r, &cfg)?;
        write_png(&img, &dir.join(format!("{}.png", r.sample_id)))?;
        write_sidecar(&r.sample_id, &cfg, &dir.join(format!("{}.json", r.sample_id)))?;
    }
    println!("{} images -> {}", ds.len(), dir.display());
    Ok(())
}

/// Reads rendered images when `rasterize` has run, otherwise renders with
/// the default settings.
fn images(ctx: &Ctx, ds: &Dataset) -> anyhow::Result<BTreeMap<String, RasterImage>> {
    let dir = ctx.path("images");
    let cfg = RasterConfig::default();
    ds.records
        .iter()
        .map(|r| {
            let img = if dir.is_dir() {
                let p = dir.join(format!("{}.png", r.sample_id));
                if !p.exists() {
                    return Err(graphofuse_core::Error::MissingFile(p).into());
                }
                read_png(&p)?
            } else {
                rasterize(r, &cfg)?
            };
            Ok((r.sample_id.clone(), img))
        })
        .collect()
}

fn cmd_extract_offline(ctx: &Ctx, a: &OfflineArgs) -> anyhow::Result<()> {
    ctx.write_manifest(
        "extract-offline",
        json!({
            "extractor": format!("{:?}", a.extractor).to_lowercase(),
            "embeddings": a.embeddings.as_ref().map(|p| p.display().to_string()),
            "grid": a.grid,
        }),
    )?;
    let ds = ctx.dataset()?;
    let (manifest, rows) = match a.extractor {
        Extractor::Zoning => {
            let imgs = images(ctx, &ds)?;
            extract_offline(&ds, &imgs, &OfflineExtractorKind::Zoning { grid: a.grid }, Execution::Parallel)?
        }
        Extractor::Embedding => {
            let Some(path) = &a.embeddings else {
                bail!("--extractor embedding needs --embeddings <file>");
            };
            let table = load_embeddings(path)?;
            embeddings_for(&ds, &table)?
        }
    };
    let path = ctx.path(OFFLINE_FILE);
    std::fs::create_dir_all(path.parent().unwrap())?;
    write_feature_matrix(&path, &manifest, &rows)?;
    println!("{} rows x {} features -> {}", rows.len(), manifest.len(), path.display());
    Ok(())
}

/// Loads both feature matrices, or computes both in memory when neither
/// file exists. One file without the other is a coverage error.
fn feature_set(ctx: &Ctx, ds: &Dataset) -> anyhow::Result<(MultimodalSet, &'static str)> {
    let on = ctx.path(ONLINE_FILE);
    let off = ctx.path(OFFLINE_FILE);
    match (on.exists(), off.exists()) {
        (false, false) => {
            let (_, online) = extract_online_dataset(ds, ctx.tick_seconds, Execution::Parallel);
            let imgs = images(ctx, ds)?;
            let kind = OfflineExtractorKind::Zoning { grid: DEFAULT_GRID };
            let (_, offline) = extract_offline(ds, &imgs, &kind, Execution::Parallel)?;
            Ok((MultimodalSet::new(ds, online, offline)?, "computed"))
        }
        (true, true) => {
            let (_, online): (_, FeatureMap) = read_feature_matrix(&on)?;
            let (_, offline) = read_feature_matrix(&off)?;
            Ok((MultimodalSet::new(ds, online, offline)?, "loaded"))
        }
        (present, _) => {
            let (have, missing) = if present { (&on, &off) } else { (&off, &on) };
            Err(graphofuse_core::Error::CoverageMismatch(format!(
                "{} exists but {} does not",
                have.display(),
                missing.display()
            ))
            .into())
        }
    }
}

fn save_fold_models(ctx: &Ctx, out: &ExperimentOutcome) -> anyhow::Result<()> {
    let dir = ctx.path("models");
    std::fs::create_dir_all(&dir)?;
    for fold in &out.trained {
        for (m, _, model) in &fold.models {
            save_model(model, &dir.join(format!("fold{}_{}.model", fold.fold, m.token())))?;
        }
    }
    Ok(())
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> anyhow::Result<()> {
    let mut args = cv_json(&a.cv);
    args["modality"] = json!(a.modality.token());
    ctx.write_manifest("train", args)?;
    let ds = ctx.dataset()?;
    let (set, source) = feature_set(ctx, &ds)?;
    let x = set.matrix(a.modality);
    let algo: Algo = a.cv.algo.into();
    let grid = default_grid(algo);
    let exec = execution(&a.cv);
    let chosen = grid_search(x, &set.labels, &set.subjects, &grid, a.cv.inner_k, ctx.seed, exec)?;
    let model = models::train(x, &set.labels, Some(&set.subjects), &chosen.best, ctx.seed)?;
    let path = ctx.path(&format!("models/{}_{}.model", a.modality.token(), algo));
    std::fs::create_dir_all(path.parent().unwrap())?;
    save_model(&model, &path)?;
    println!("features {source}; best {} (inner accuracy {:.3})", chosen.best, chosen.scores[chosen.best_index]);
    println!("model -> {}", path.display());
    Ok(())
}

fn cmd_evaluate(ctx: &Ctx, a: &EvalArgs) -> anyhow::Result<()> {
    let fusion = FusionConfig::new(a.mode, a.tau)?;
    let mut args = cv_json(&a.cv);
    args["fusion"] = json!(fusion);
    ctx.write_manifest("evaluate", args)?;
    let ds = ctx.dataset()?;
    let (set, source) = feature_set(ctx, &ds)?;
    let cfg = experiment_config(ctx, &a.cv, fusion);
    let out = run_experiment(&set, &cfg)?;
    write_text(&ctx.path("report.csv"), &out.report.to_csv())?;
    write_text(&ctx.path("decisions.csv"), &out.decisions_csv(&cfg.fusion))?;
    save_fold_models(ctx, &out)?;
    let h = out.report.headline();
    println!(
        "{} tau={} ({} features): accuracy {:.3} precision {:.3} recall {:.3}; triggered {}/{}",
        a.mode,
        a.tau,
        source,
        h.accuracy,
        h.precision,
        h.recall,
        out.triggered(),
        out.decisions.len()
    );
    println!("report -> {}", ctx.path("report.csv").display());
    Ok(())
}

fn cmd_sweep(ctx: &Ctx, a: &SweepArgs) -> anyhow::Result<()> {
    for &t in &a.taus {
        FusionConfig::new(FusionMode::ConditionalFusion, t)?;
    }
    let mut args = cv_json(&a.cv);
    args["taus"] = json!(a.taus);
    ctx.write_manifest("sweep-tau", args)?;
    let ds = ctx.dataset()?;
    let (set, _) = feature_set(ctx, &ds)?;
    let fusion = FusionConfig::new(FusionMode::ConditionalFusion, a.taus.first().copied().unwrap_or(0.0))?;
    let cfg = experiment_config(ctx, &a.cv, fusion);
    let out = sweep_threshold(&set, &a.taus, &cfg)?;
    let csv = out.to_csv();
    write_text(&ctx.path("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    let ctx = Ctx {
        seed: cli.seed,
        tick_seconds: cli.tick_seconds,
        out: cli.output_dir.clone().unwrap_or_else(|| cli.data.clone()),
        data: cli.data,
        task: cli.task.parse().expect("infallible"),
    };
    if !(ctx.tick_seconds > 0.0 && ctx.tick_seconds.is_finite()) {
        return Err(graphofuse_core::Error::InvalidConfig("tick_seconds must be positive".into()).into());
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Ingest => cmd_ingest(&ctx),
        Command::ExtractOnline => cmd_extract_online(&ctx),
        Command::Rasterize(a) => cmd_rasterize(&ctx, a),
        Command::ExtractOffline(a) => cmd_extract_offline(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::SweepTau(a) => cmd_sweep(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version land here too, with exit code 0
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.chain().find_map(|c| c.downcast_ref::<graphofuse_core::Error>()) {
                Some(domain) => eprintln!("error: {}: {domain}", domain.kind()),
                None => eprintln!("error: {e}"),
            }
            for cause in e.chain().skip(1) {
                eprintln!("  caused by: {cause}");
            }
            ExitCode::from(1)
        }
    }
}

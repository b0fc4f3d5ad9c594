//! `aist` command-line runner.

mod manifest;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use aist_core::graph::RegionGraph;
use aist_core::ingest::{
    feature_names, read_cache, read_crime_csv, read_poi_csv, read_taxi_csv, write_cache, FeatureTensor, IngestReport,
    TensorCache, TimeGrid, DEFAULT_CRIME_CATEGORIES,
};
use aist_core::interpret::{self, AdversaryConfig, FaithfulnessPlan};
use aist_core::params::{load_checkpoint, save_checkpoint};
use aist_core::synth::{self, SynthConfig};
use aist_core::training::{self, Dataset, RunResult, TrainLog};
use aist_core::{ModelParams, Stream, TrainConfig, Variant};
use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use manifest::RunManifest;
use plot::Series;
use serde_json::json;

const CACHE_FILE: &str = "tensors.bin";
const GRAPH_FILE: &str = "city.graph";
const CHECKPOINT_FILE: &str = "checkpoint.bin";

#[derive(Parser, Debug)]
#[command(
    name = "aist",
    version,
    about = "Interpretable spatio-temporal crime prediction",
    after_help = "Any training setting can also be overridden with an environment variable named AIST_<SETTING>, e.g. AIST_EPOCHS=20 or AIST_HIDDEN_DIM=32. Precedence: preset < --config file < environment < --seed."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML file with training settings, layered over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base settings: `default` or `desk`.
    #[arg(long, global = true, default_value = "default")]
    preset: String,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "aist-out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bins crime, taxi and POI exports into a tensor cache.
    Ingest(IngestArgs),
    /// Writes a synthetic city with planted structure, plus its tensor cache.
    Synth(SynthArgs),
    /// Trains one model variant.
    Train(TrainArgs),
    /// Scores a checkpoint on one split.
    Eval(EvalArgs),
    /// Trains and tests ablation variants.
    Ablate(AblateArgs),
    /// Emits contribution heatmaps for sampled predictions.
    Explain(ExplainArgs),
    /// Runs the attention faithfulness experiments.
    Faithfulness(FaithArgs),
    /// Trains one model per value of a single setting.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    crimes: PathBuf,
    #[arg(long)]
    taxi: PathBuf,
    #[arg(long)]
    poi: PathBuf,
    /// Region graph file; the bundled Chicago community-area graph if absent.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, default_value = "2019-01-01")]
    start: NaiveDate,
    /// First day after the span.
    #[arg(long, default_value = "2020-01-01")]
    end: NaiveDate,
    #[arg(long, default_value_t = 4)]
    step_hours: u32,
    #[arg(long, value_delimiter = ',')]
    categories: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 8)]
    regions: usize,
    #[arg(long, default_value_t = 2)]
    categories: usize,
    #[arg(long, default_value_t = 12)]
    months: u32,
    #[arg(long, default_value_t = 2019)]
    year: i32,
    #[arg(long, default_value_t = 4)]
    step_hours: u32,
}

#[derive(Args, Debug)]
struct DataArg {
    /// Directory holding a tensor cache and graph, as written by `ingest` or `synth`.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    category: Option<String>,
    #[arg(long, default_value = "aist", value_parser = parse_variant)]
    variant: Variant,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
    split: String,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    category: Option<String>,
    /// Variant names, comma separated, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    variant: Vec<String>,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Randomly sampled test predictions to attribute.
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

#[derive(Args, Debug)]
struct FaithArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,0.001,0.01,0.1",
        conflicts_with = "no_adversary"
    )]
    lambdas: Vec<f64>,
    /// Skip adversarial training; report reference points only.
    #[arg(long)]
    no_adversary: bool,
    /// Seeds for the seed-variance reference models.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    no_uniform: bool,
    #[arg(long, default_value_t = 40)]
    adv_epochs: usize,
    #[arg(long, default_value_t = 0.005)]
    adv_lr: f64,
    /// Initialize adversaries from the base model instead of fresh weights.
    #[arg(long)]
    warm_start: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArg,
    /// Setting name as it appears in a config file, e.g. `hidden_dim`.
    #[arg(long)]
    param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long, default_value = "aist", value_parser = parse_variant)]
    variant: Variant,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse::<Variant>().map_err(|e| e.to_string())
}

/// Preset, then config file, then `AIST_*` environment, then `--seed`.
fn resolve_config(common: &Common) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::preset(&common.preset)?;
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let mut table = toml::Table::try_from(&cfg)?;
        table.extend(file);
        cfg = table
            .try_into()
            .with_context(|| format!("invalid settings in {}", path.display()))?;
    }
    cfg = cfg.with_env()?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_out(common: &Common) -> Result<PathBuf> {
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    Ok(common.out.clone())
}

struct Loaded {
    graph: RegionGraph,
    cache: TensorCache,
}

fn load_data(dir: &Path, manifest: &mut RunManifest) -> Result<Loaded> {
    let graph_path = dir.join(GRAPH_FILE);
    let cache_path = dir.join(CACHE_FILE);
    let graph = RegionGraph::load(&graph_path)?;
    let cache = read_cache(&cache_path)?;
    if cache.region_ids != graph.ids() {
        bail!(
            "{} and {} disagree on region ids",
            cache_path.display(),
            graph_path.display()
        );
    }
    manifest.input(&graph_path)?;
    manifest.input(&cache_path)?;
    Ok(Loaded { graph, cache })
}

fn write_json(path: &Path, value: &impl serde::Serialize, manifest: &mut RunManifest) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))?;
    manifest.output(path)
}

fn write_text(path: &Path, text: &str, manifest: &mut RunManifest) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    manifest.output(path)
}

/// Training log without wall-clock time, so reruns produce identical files.
fn log_json(log: &TrainLog) -> serde_json::Value {
    let mut v = serde_json::to_value(log).expect("log serializes");
    if let Some(obj) = v.as_object_mut() {
        obj.remove("seconds");
    }
    v
}

fn result_json(r: &RunResult) -> serde_json::Value {
    json!({
        "variant": r.variant,
        "config": r.config,
        "log": log_json(&r.log),
        "test": r.test,
    })
}

fn loss_plot(log: &TrainLog) -> String {
    let train: Vec<(f64, f64)> = std::iter::once((0.0, log.initial_train_mse))
        .chain(log.epochs.iter().map(|e| (e.epoch as f64, e.train_mse)))
        .collect();
    let val: Vec<(f64, f64)> = log.epochs.iter().map(|e| (e.epoch as f64, e.val_mae)).collect();
    plot::lines(
        "Training progress",
        "epoch",
        "error",
        &[
            Series {
                name: "train MSE (normalized)".into(),
                points: train,
            },
            Series {
                name: "val MAE (counts)".into(),
                points: val,
            },
        ],
    )
}

fn ingest_files(
    crimes: &Path,
    taxi: &Path,
    poi: &Path,
    graph: &RegionGraph,
    grid: TimeGrid,
    categories: &[String],
) -> Result<(TensorCache, serde_json::Value)> {
    for p in [crimes, taxi, poi] {
        if !p.is_file() {
            bail!("input file {} does not exist", p.display());
        }
    }
    let (crime_tensor, crime_report) = read_crime_csv(crimes, categories, graph, grid)?;
    let mut features = FeatureTensor::zeros(graph.len(), grid.steps);
    let taxi_report = read_taxi_csv(taxi, graph, grid, &mut features)?;
    let poi_report = read_poi_csv(poi, graph, &mut features)?;
    for (name, r) in [("crimes", &crime_report), ("taxi", &taxi_report), ("poi", &poi_report)] {
        log_rejections(name, r);
    }
    let cache = TensorCache {
        region_ids: graph.ids().to_vec(),
        crimes: crime_tensor,
        features,
    };
    Ok((
        cache,
        json!({"crimes": crime_report, "taxi": taxi_report, "poi": poi_report}),
    ))
}

fn log_rejections(name: &str, r: &IngestReport) {
    if r.rejected_total() > 0 {
        let parts: Vec<String> = r.rejected.iter().map(|(k, v)| format!("{k}: {v}")).collect();
        eprintln!(
            "{name}: accepted {}, rejected {} ({})",
            r.accepted,
            r.rejected_total(),
            parts.join(", ")
        );
    }
}

fn cmd_ingest(a: &IngestArgs) -> Result<RunManifest> {
    let mut m = RunManifest::new("ingest");
    let out = create_out(&a.common)?;
    let graph = match &a.graph {
        Some(p) => {
            m.input(p)?;
            RegionGraph::load(p)?
        }
        None => RegionGraph::chicago(),
    };
    let grid = TimeGrid::days(a.start, a.end, a.step_hours)?;
    let categories: Vec<String> = match &a.categories {
        Some(c) => c.clone(),
        None => DEFAULT_CRIME_CATEGORIES.iter().map(|s| s.to_string()).collect(),
    };
    let (cache, report) = ingest_files(&a.crimes, &a.taxi, &a.poi, &graph, grid, &categories)?;
    for p in [&a.crimes, &a.taxi, &a.poi] {
        m.input(p)?;
    }
    write_outputs(&out, &graph, &cache, &report, &mut m)?;
    Ok(m)
}

fn write_outputs(
    out: &Path,
    graph: &RegionGraph,
    cache: &TensorCache,
    report: &serde_json::Value,
    m: &mut RunManifest,
) -> Result<()> {
    let cache_path = out.join(CACHE_FILE);
    write_cache(&cache_path, cache)?;
    m.output(&cache_path)?;
    write_text(&out.join(GRAPH_FILE), &graph.to_text(), m)?;
    write_json(&out.join("ingest_report.json"), report, m)
}

fn cmd_synth(a: &SynthArgs) -> Result<RunManifest> {
    let mut m = RunManifest::new("synth");
    let out = create_out(&a.common)?;
    let cfg = SynthConfig {
        seed: a.common.seed.unwrap_or(0),
        regions: a.regions,
        categories: a.categories,
        months: a.months,
        year: a.year,
        step_hours: a.step_hours,
    };
    m.seed = Some(cfg.seed);
    m.config = Some(serde_json::to_value(&cfg)?);
    let data = synth::generate(&cfg)?;
    let files = synth::write_csvs(&data, &out)?;
    for p in [&files.crimes, &files.taxi, &files.poi, &files.informative] {
        m.output(p)?;
    }
    // Round-trip through the CSV readers so the cache is exactly what
    // `ingest` would build from these files.
    let (cache, report) = ingest_files(
        &files.crimes,
        &files.taxi,
        &files.poi,
        &data.graph,
        data.crimes.grid,
        &data.crimes.categories,
    )?;
    write_outputs(&out, &data.graph, &cache, &report, &mut m)?;
    Ok(m)
}

fn cmd_train(a: &TrainArgs) -> Result<RunManifest> {
    let mut m = RunManifest::new("train");
    let mut base = resolve_config(&a.common)?;
    if let Some(c) = &a.category {
        base.category = c.clone();
    }
    let out = create_out(&a.common)?;
    let d = load_data(&a.data.data, &mut m)?;
    let (params, result) = training::run_ablation(&base, a.variant, &d.graph, &d.cache.crimes, &d.cache.features)?;
    m.seed = Some(result.config.seed);
    m.config = Some(serde_json::to_value(&result.config)?);
    let ckpt = out.join(CHECKPOINT_FILE);
    save_checkpoint(&ckpt, &params, &result.config)?;
    m.output(&ckpt)?;
    write_json(&out.join("metrics.json"), &result_json(&result), &mut m)?;
    write_text(&out.join("training.svg"), &loss_plot(&result.log), &mut m)?;
    println!(
        "{} {}: test MAE {:.4}, MSE {:.4} over {} windows (best epoch {})",
        result.variant,
        result.config.category,
        result.test.mae,
        result.test.mse,
        result.test.count,
        result.log.best_epoch
    );
    Ok(m)
}

/// Checkpoint config with environment overrides applied on top.
fn load_model(path: &Path, common: &Common, m: &mut RunManifest) -> Result<(ModelParams<f64>, TrainConfig)> {
    let (params, cfg) = load_checkpoint(path)?;
    m.input(path)?;
    let mut cfg = cfg.with_env()?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if params.dims != cfg.dims() {
        bail!(
            "environment overrides change the model shape stored in {}",
            path.display()
        );
    }
    m.seed = Some(cfg.seed);
    m.config = Some(serde_json::to_value(&cfg)?);
    Ok((params, cfg))
}

fn cmd_eval(a: &EvalArgs) -> Result<RunManifest> {
    let mut m = RunManifest::new("eval");
    let out = create_out(&a.common)?;
    let (params, cfg) = load_model(&a.checkpoint, &a.common, &mut m)?;
    let d = load_data(&a.data.data, &mut m)?;
    let data = Dataset::prepare(&cfg, &d.graph, &d.cache.crimes, &d.cache.features)?;
    let windows = match a.split.as_str() {
        "train" => &data.split.train,
        "val" => &data.split.val,
        _ => &data.split.test,
    };
    let records = training::predict_all(&params, &cfg, &data, windows)?;
    let rows: Vec<(usize, f64, f64)> = records.iter().map(|r| (r.region, r.count, r.truth)).collect();
    let report = training::MetricReport::from_predictions(&d.graph, &rows)?;
    write_json(
        &out.join("metrics.json"),
        &json!({"split": a.split, "metrics": report}),
        &mut m,
    )?;
    let path = out.join("predictions.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["region", "target_bin", "bin_start", "prediction", "truth", "normalized"])?;
    let grid = d.cache.crimes.grid;
    for r in &records {
        w.write_record([
            d.graph.id_of(r.region).to_string(),
            (r.target - 1).to_string(),
            grid.bin_start(r.target - 1).to_string(),
            r.count.to_string(),
            r.truth.to_string(),
            r.normalized.to_string(),
        ])?;
    }
    w.flush()?;
    m.output(&path)?;
    println!(
        "{} split: MAE {:.4}, MSE {:.4} over {} windows",
        a.split, report.mae, report.mse, report.count
    );
    Ok(m)
}

fn cmd_ablate(a: &AblateArgs) -> Result<RunManifest> {
    let mut m = RunManifest::new("ablate");
    let mut base = resolve_config(&a.common)?;
    if let Some(c) = &a.category {
        base.category = c.clone();
    }
    let variants: Vec<Variant> = if a.variant.iter().any(|v| v == "all") {
        Variant::ALL.to_vec()
    } else {
        a.variant
            .iter()
            .map(|v| parse_variant(v))
            .collect::<std::result::Result<_, _>>()
            .map_err(anyhow::Error::msg)?
    };
    let out = create_out(&a.common)?;
    let d = load_data(&a.data.data, &mut m)?;
    m.seed = Some(base.seed);
    m.config = Some(serde_json::to_value(&base)?);
    let mut results = Vec::new();
    for v in variants {
        let (params, r) = training::run_ablation(&base, v, &d.graph, &d.cache.crimes, &d.cache.features)?;
        let dir = out.join(v.name());
        std::fs::create_dir_all(&dir)?;
        let ckpt = dir.join(CHECKPOINT_FILE);
        save_checkpoint(&ckpt, &params, &r.config)?;
        m.output(&ckpt)?;
        write_json(&dir.join("metrics.json"), &result_json(&r), &mut m)?;
        println!("{}: test MAE {:.4}, MSE {:.4}", r.variant, r.test.mae, r.test.mse);
        results.push(r);
    }
    let path = out.join("ablation.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["variant", "mae", "mse", "windows"])?;
    for r in &results {
        w.write_record([
            r.variant.clone(),
            r.test.mae.to_string(),
            r.test.mse.to_string(),
            r.test.count.to_string(),
        ])?;
    }
    w.flush()?;
    m.output(&path)?;
    let bars: Vec<(String, f64)> = results.iter().map(|r| (r.variant.clone(), r.test.mae)).collect();
    write_text(
        &out.join("ablation.svg"),
        &plot::bars("Test MAE by variant", "MAE", &bars),
        &mut m,
    )?;
    Ok(m)
}

fn cmd_explain(a: &ExplainArgs) -> Result<RunManifest> {
    let mut m = RunManifest::new("explain");
    let out = create_out(&a.common)?;
    let (params, cfg) = load_model(&a.checkpoint, &a.common, &mut m)?;
    let d = load_data(&a.data.data, &mut m)?;
    let data = Dataset::prepare(&cfg, &d.graph, &d.cache.crimes, &d.cache.features)?;
    let windows = training::cap_windows(data.split.test.clone(), a.samples, cfg.seed);
    let records = training::predict_all(&params, &cfg, &data, &windows)?;
    let sets: Vec<_> = records
        .iter()
        .map(|r| interpret::contributions(&params, &cfg, &data.input, r))
        .collect();
    let mut worst = 0.0f64;
    for (s, r) in sets.iter().zip(&records) {
        worst = worst.max(interpret::identity_residuals(s, &r.trace).max());
    }
    for p in interpret::write_heatmaps(&out, &d.graph, &sets)? {
        m.output(&p)?;
    }
    let rows: Vec<String> = sets
        .iter()
        .map(|s| format!("{}@{}", d.graph.id_of(s.region), s.target - 1))
        .collect();
    let ids: Vec<String> = d.graph.ids().iter().map(|i| i.to_string()).collect();
    let n = d.graph.len();
    let region: Vec<Vec<f64>> = sets.iter().map(|s| interpret::region_summary(s, n)).collect();
    let feature: Vec<Vec<f64>> = sets.iter().map(|s| interpret::feature_summary(s).to_vec()).collect();
    let trend: Vec<Vec<f64>> = sets.iter().map(|s| interpret::trend_summary(s).to_vec()).collect();
    let streams: Vec<String> = Stream::ALL.iter().map(|s| s.name().to_string()).collect();
    for (name, title, cols, vals) in [
        ("region_heatmap.svg", "Region contributions", &ids, &region),
        (
            "feature_heatmap.svg",
            "Feature contributions",
            &feature_names(),
            &feature,
        ),
        ("trend_heatmap.svg", "Trend contributions", &streams, &trend),
    ] {
        write_text(&out.join(name), &plot::heatmap(title, &rows, cols, vals), &mut m)?;
    }
    write_json(
        &out.join("explain.json"),
        &json!({"samples": sets.len(), "max_identity_residual": worst}),
        &mut m,
    )?;
    println!(
        "attributed {} predictions; largest identity residual {worst:.2e}",
        sets.len()
    );
    Ok(m)
}

fn cmd_faithfulness(a: &FaithArgs) -> Result<RunManifest> {
    let mut m = RunManifest::new("faithfulness");
    let out = create_out(&a.common)?;
    let (params, cfg) = load_model(&a.checkpoint, &a.common, &mut m)?;
    let d = load_data(&a.data.data, &mut m)?;
    let data = Dataset::prepare(&cfg, &d.graph, &d.cache.crimes, &d.cache.features)?;
    let defaults = AdversaryConfig::default();
    let plan = FaithfulnessPlan {
        uniform: !a.no_uniform,
        seeds: a.seeds.clone(),
        adversary: AdversaryConfig {
            lambdas: if a.no_adversary { Vec::new() } else { a.lambdas.clone() },
            epochs: a.adv_epochs,
            learning_rate: a.adv_lr,
            warm_start: a.warm_start,
            seed: a.common.seed.unwrap_or(defaults.seed),
            ..defaults
        },
    };
    let report = interpret::run_faithfulness(&cfg, &data, &params, &plan)?;
    for p in report.write(&out)? {
        m.output(&p)?;
    }
    let mut series: Vec<Series> = report
        .curve
        .iter()
        .map(|c| Series {
            name: format!("adversary lambda={}", c.lambda),
            points: c
                .comparison
                .jsd
                .iter()
                .copied()
                .zip(c.comparison.tvd.iter().copied())
                .collect(),
        })
        .collect();
    for r in report.uniform.iter().chain(&report.seeds) {
        series.push(Series {
            name: r.name.clone(),
            points: r
                .comparison
                .jsd
                .iter()
                .copied()
                .zip(r.comparison.tvd.iter().copied())
                .collect(),
        });
    }
    write_text(
        &out.join("tvd_jsd.svg"),
        &plot::scatter(
            "Output change vs attention change",
            "JSD of temporal attention",
            "TVD of prediction",
            &series,
        ),
        &mut m,
    )?;
    for c in &report.curve {
        println!(
            "lambda {}: mean TVD {:.4}, mean JSD {:.4}",
            c.lambda, c.comparison.mean_tvd, c.comparison.mean_jsd
        );
    }
    if let Some(u) = &report.uniform {
        println!(
            "uniform: mean TVD {:.4}, mean JSD {:.4}",
            u.comparison.mean_tvd, u.comparison.mean_jsd
        );
    }
    Ok(m)
}

fn cmd_sweep(a: &SweepArgs) -> Result<RunManifest> {
    let mut m = RunManifest::new("sweep");
    let base = resolve_config(&a.common)?;
    let key = a.param.to_ascii_lowercase();
    if !toml::Table::try_from(&base)?.contains_key(&key) {
        bail!("unknown setting {:?}", a.param);
    }
    let out = create_out(&a.common)?;
    let d = load_data(&a.data.data, &mut m)?;
    m.seed = Some(base.seed);
    m.config = Some(serde_json::to_value(&base)?);
    let env_key = format!("AIST_{}", key.to_ascii_uppercase());
    let mut rows = Vec::new();
    for value in &a.values {
        let cfg = base.with_overrides([(env_key.as_str(), value.as_str())])?;
        let (_, r) = training::run_ablation(&cfg, a.variant, &d.graph, &d.cache.crimes, &d.cache.features)?;
        println!("{key}={value}: test MAE {:.4}, MSE {:.4}", r.test.mae, r.test.mse);
        rows.push((value.clone(), r));
    }
    let path = out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([key.as_str(), "mae", "mse", "best_epoch"])?;
    for (v, r) in &rows {
        w.write_record([
            v.clone(),
            r.test.mae.to_string(),
            r.test.mse.to_string(),
            r.log.best_epoch.to_string(),
        ])?;
    }
    w.flush()?;
    m.output(&path)?;
    let results: Vec<serde_json::Value> = rows
        .iter()
        .map(|(v, r)| json!({"value": v, "result": result_json(r)}))
        .collect();
    write_json(&out.join("sweep.json"), &results, &mut m)?;
    let numeric: Option<Vec<(f64, f64)>> = rows
        .iter()
        .map(|(v, r)| v.parse::<f64>().ok().map(|x| (x, r.test.mae)))
        .collect();
    let svg = match numeric {
        Some(points) => plot::lines(
            &format!("Test MAE vs {key}"),
            &key,
            "MAE",
            &[Series {
                name: a.variant.name().into(),
                points,
            }],
        ),
        None => plot::bars(
            &format!("Test MAE by {key}"),
            "MAE",
            &rows.iter().map(|(v, r)| (v.clone(), r.test.mae)).collect::<Vec<_>>(),
        ),
    };
    write_text(&out.join("sweep.svg"), &svg, &mut m)?;
    Ok(m)
}

fn run(cli: &Cli) -> Result<()> {
    let start = Instant::now();
    let (mut manifest, common) = match &cli.command {
        Command::Ingest(a) => (cmd_ingest(a)?, &a.common),
        Command::Synth(a) => (cmd_synth(a)?, &a.common),
        Command::Train(a) => (cmd_train(a)?, &a.common),
        Command::Eval(a) => (cmd_eval(a)?, &a.common),
        Command::Ablate(a) => (cmd_ablate(a)?, &a.common),
        Command::Explain(a) => (cmd_explain(a)?, &a.common),
        Command::Faithfulness(a) => (cmd_faithfulness(a)?, &a.common),
        Command::Sweep(a) => (cmd_sweep(a)?, &a.common),
    };
    manifest.seconds = start.elapsed().as_secs_f64();
    manifest.write(&common.out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

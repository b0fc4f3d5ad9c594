//! Splitting, optimization and evaluation.
//!
//! One model is trained per crime category and shared across all target
//! regions. The loss is the squared error on the normalized scale; metrics
//! are reported on denormalized counts.

use std::time::Instant;

use chrono::{Datelike, Months, NaiveDate};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::config::{TrainConfig, Variant};
use crate::dropout::Dropout;
use crate::error::{Error, Result};
use crate::fusion::{self, ModelInput, PredictionRecord};
use crate::graph::RegionGraph;
use crate::ingest::{build_windows, CrimeTensor, FeatureTensor, NormalizationSpec, SampleWindow, TimeGrid};
use crate::params::ModelParams;

/// Chronological partition of windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<SampleWindow>,
    pub val: Vec<SampleWindow>,
    pub test: Vec<SampleWindow>,
    /// First 0-based bin outside the training months.
    pub train_end_bin: usize,
}

/// First bin at or after the start of month `train_months + 1`, counted
/// from the month containing the grid origin.
pub fn train_end_bin(grid: &TimeGrid, train_months: u32) -> Result<usize> {
    let o = grid.origin.date();
    let first = NaiveDate::from_ymd_opt(o.year(), o.month(), 1).expect("valid month start");
    let boundary = first
        .checked_add_months(Months::new(train_months))
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .ok_or_else(|| Error::Config("training boundary out of range".into()))?;
    let needed = first
        .checked_add_months(Months::new(train_months + 1))
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .ok_or_else(|| Error::Config("span end out of range".into()))?;
    if grid.end() < needed {
        return Err(Error::Config(format!(
            "span {} .. {} is shorter than {} months",
            grid.origin,
            grid.end(),
            train_months + 1
        )));
    }
    let hours = (boundary - grid.origin).num_hours().max(0) as usize;
    Ok(hours.div_ceil(grid.step_hours as usize))
}

/// Training windows have targets in the training months; of the rest, the
/// first `val_fraction` (chronologically, rounded) validate and the
/// remainder test.
pub fn split_dataset(
    windows: Vec<SampleWindow>,
    grid: &TimeGrid,
    train_months: u32,
    val_fraction: f64,
) -> Result<Split> {
    let end = train_end_bin(grid, train_months)?;
    let mut windows = windows;
    windows.sort_by_key(|w| (w.target, w.region, w.category));
    let cut = windows.partition_point(|w| w.target_bin() < end);
    let rest = windows.split_off(cut);
    let n_val = (rest.len() as f64 * val_fraction).round() as usize;
    let mut rest = rest;
    let test = rest.split_off(n_val);
    let split = Split {
        train: windows,
        val: rest,
        test,
        train_end_bin: end,
    };
    for (name, part) in [
        ("training", &split.train),
        ("validation", &split.val),
        ("test", &split.test),
    ] {
        if part.is_empty() {
            return Err(Error::Config(format!("empty {name} partition")));
        }
    }
    Ok(split)
}

/// Seeded subsample keeping chronological order; `max == 0` keeps all.
pub fn cap_windows(windows: Vec<SampleWindow>, max: usize, seed: u64) -> Vec<SampleWindow> {
    if max == 0 || windows.len() <= max {
        return windows;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, windows.len(), max).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| windows[i].clone()).collect()
}

/// Everything one category's model needs.
#[derive(Debug, Clone)]
pub struct Dataset<'a> {
    pub category: usize,
    pub spec: NormalizationSpec,
    pub input: ModelInput<'a>,
    pub split: Split,
}

impl<'a> Dataset<'a> {
    pub fn prepare(
        cfg: &TrainConfig,
        graph: &'a RegionGraph,
        crimes: &CrimeTensor,
        features: &'a FeatureTensor,
    ) -> Result<Self> {
        cfg.validate()?;
        if crimes.regions != graph.len() || features.regions != graph.len() || features.steps != crimes.steps() {
            return Err(Error::Shape("crime tensor, feature tensor and graph disagree".into()));
        }
        let k = crimes.category_index(&cfg.category)?;
        let end = train_end_bin(&crimes.grid, cfg.train_months)?;
        let spec = NormalizationSpec::fit(crimes, 0..end)?;
        let wcfg = cfg.window_config(crimes.grid.steps_per_day());
        let targets: Vec<(usize, usize)> = (0..graph.len()).map(|i| (i, k)).collect();
        let (windows, _) = build_windows(&wcfg, crimes, &targets)?;
        let mut split = split_dataset(windows, &crimes.grid, cfg.train_months, cfg.val_fraction)?;
        split.train = cap_windows(split.train, cfg.max_train_windows, cfg.seed ^ 0x7261_696e);
        split.val = cap_windows(split.val, cfg.max_eval_windows, cfg.seed ^ 0x7661_6c00);
        split.test = cap_windows(split.test, cfg.max_eval_windows, cfg.seed ^ 0x7465_7374);
        let input = ModelInput::from_counts(graph, crimes, k, &spec, features)?;
        Ok(Self {
            category: k,
            spec,
            input,
            split,
        })
    }

    /// Normalized ground truth of a window.
    pub fn target(&self, w: &SampleWindow) -> f64 {
        self.spec.apply_value(w.truth, w.category, w.region)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionMetric {
    pub region: u32,
    pub mae: f64,
    pub mse: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub mse: f64,
    pub count: usize,
    pub per_region: Vec<RegionMetric>,
}

impl MetricReport {
    /// From `(dense region, prediction, truth)` triples.
    pub fn from_predictions(graph: &RegionGraph, rows: &[(usize, f64, f64)]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("cannot evaluate an empty split".into()));
        }
        let mut per = vec![(0.0, 0.0, 0usize); graph.len()];
        let (mut abs, mut sq) = (0.0, 0.0);
        for &(i, p, t) in rows {
            let e = p - t;
            abs += e.abs();
            sq += e * e;
            per[i].0 += e.abs();
            per[i].1 += e * e;
            per[i].2 += 1;
        }
        let n = rows.len() as f64;
        let report = Self {
            mae: abs / n,
            mse: sq / n,
            count: rows.len(),
            per_region: per
                .into_iter()
                .enumerate()
                .filter(|(_, (_, _, c))| *c > 0)
                .map(|(i, (a, s, c))| RegionMetric {
                    region: graph.id_of(i),
                    mae: a / c as f64,
                    mse: s / c as f64,
                    count: c,
                })
                .collect(),
        };
        assert!(report.mse >= 0.0 && report.mae <= report.mse.sqrt() * (1.0 + 1e-12) + 1e-15);
        Ok(report)
    }
}

/// Adam with the usual defaults.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Value and gradient of a scalar objective of the parameters.
pub fn value_and_gradient<F>(params: &ModelParams<f64>, objective: F) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> Fn(&ModelParams<Var<'t, f64>>) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let vars = params.map(|v| tape.var(v));
    let out = objective(&vars)?;
    let adj = tape.gradient(out);
    Ok((out.primal(), adj[..params.len()].to_vec()))
}

/// Dropout seed of one sample visit.
pub fn sample_seed(seed: u64, epoch: usize, position: usize) -> u64 {
    let mut z = seed
        ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (position as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Squared error of one window on the normalized scale.
pub fn sample_loss<'t>(
    params: &ModelParams<Var<'t, f64>>,
    cfg: &TrainConfig,
    data: &Dataset<'_>,
    w: &SampleWindow,
    drop: &mut Dropout,
) -> Result<Var<'t, f64>> {
    let out = fusion::forward(params, cfg, &data.input, w, drop)?;
    let d = out.y - Var::constant(data.target(w));
    Ok(d * d)
}

/// Mean gradient over a batch; per-sample work runs in parallel and is
/// reduced in batch order.
pub fn batch_gradient<F>(params: &ModelParams<f64>, batch: &[usize], per_sample: F) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> Fn(&ModelParams<Var<'t, f64>>, usize) -> Result<Var<'t, f64>> + Sync,
{
    let parts: Vec<Result<(f64, Vec<f64>)>> = batch
        .par_iter()
        .map(|&i| value_and_gradient(params, |p| per_sample(p, i)))
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.len()];
    for part in parts {
        let (l, g) = part?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let n = batch.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training-mode loss over the epoch's batches.
    pub train_loss: f64,
    /// Evaluation-mode MSE on the training windows, normalized scale.
    pub train_mse: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub initial_train_mse: f64,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub seconds: f64,
}

impl TrainLog {
    /// Lowest evaluation-mode training MSE seen, including the start.
    pub fn best_train_mse(&self) -> f64 {
        self.epochs
            .iter()
            .map(|e| e.train_mse)
            .fold(self.initial_train_mse, f64::min)
    }
}

/// Evaluation-mode squared error on the normalized scale.
pub fn normalized_mse(
    params: &ModelParams<f64>,
    cfg: &TrainConfig,
    data: &Dataset<'_>,
    windows: &[SampleWindow],
) -> Result<f64> {
    let errs: Vec<Result<f64>> = windows
        .par_iter()
        .map(|w| {
            let out = fusion::forward(params, cfg, &data.input, w, &mut Dropout::eval())?;
            Ok((out.y - data.target(w)).powi(2))
        })
        .collect();
    let mut sum = 0.0;
    for e in errs {
        sum += e?;
    }
    Ok(sum / windows.len().max(1) as f64)
}

pub fn predict_all(
    params: &ModelParams<f64>,
    cfg: &TrainConfig,
    data: &Dataset<'_>,
    windows: &[SampleWindow],
) -> Result<Vec<PredictionRecord>> {
    windows
        .par_iter()
        .map(|w| fusion::predict_window(params, cfg, &data.input, &data.spec, w))
        .collect()
}

pub fn evaluate(
    params: &ModelParams<f64>,
    cfg: &TrainConfig,
    data: &Dataset<'_>,
    windows: &[SampleWindow],
) -> Result<MetricReport> {
    let preds = predict_all(params, cfg, data, windows)?;
    let rows: Vec<(usize, f64, f64)> = preds.iter().map(|p| (p.region, p.count, p.truth)).collect();
    MetricReport::from_predictions(data.input.graph, &rows)
}

/// Trains from `ModelParams::init(dims, seed)`.
pub fn train(cfg: &TrainConfig, data: &Dataset<'_>) -> Result<(ModelParams<f64>, TrainLog)> {
    train_from(cfg, data, ModelParams::init(cfg.dims(), cfg.seed))
}

/// Minimizes the normalized squared error with Adam and keeps the
/// parameters with the lowest validation MAE (earliest on ties).
pub fn train_from(
    cfg: &TrainConfig,
    data: &Dataset<'_>,
    init: ModelParams<f64>,
) -> Result<(ModelParams<f64>, TrainLog)> {
    let start = Instant::now();
    let train = &data.split.train;
    let mut params = init;
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len(), cfg.learning_rate);
    let initial_train_mse = normalized_mse(&params, cfg, data, train)?;
    let mut best = (
        evaluate(&params, cfg, data, &data.split.val)?.mae,
        0usize,
        params.clone(),
    );
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed, epoch, usize::MAX));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = batch_gradient(&params, batch, |p, i| {
                let mut drop = Dropout::train(sample_seed(cfg.seed, epoch, i));
                sample_loss(p, cfg, data, &train[i], &mut drop)
            })?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, loss });
            }
            adam.step(&mut flat, &grad);
            params.assign(&flat);
            total += loss;
            batches += 1;
        }
        let train_mse = normalized_mse(&params, cfg, data, train)?;
        let val_mae = evaluate(&params, cfg, data, &data.split.val)?.mae;
        if !train_mse.is_finite() {
            return Err(Error::Diverged { epoch, loss: train_mse });
        }
        if val_mae < best.0 {
            best = (val_mae, epoch, params.clone());
        }
        epochs.push(EpochLog {
            epoch,
            train_loss: total / batches.max(1) as f64,
            train_mse,
            val_mae,
        });
    }
    let (best_val_mae, best_epoch, best_params) = best;
    Ok((
        best_params,
        TrainLog {
            initial_train_mse,
            epochs,
            best_epoch,
            best_val_mae,
            seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: String,
    pub config: TrainConfig,
    pub log: TrainLog,
    pub test: MetricReport,
}

/// Trains and tests one variant. [`Variant::Aist`] is the base model.
pub fn run_ablation(
    base: &TrainConfig,
    variant: Variant,
    graph: &RegionGraph,
    crimes: &CrimeTensor,
    features: &FeatureTensor,
) -> Result<(ModelParams<f64>, RunResult)> {
    let cfg = variant.apply(base);
    cfg.validate()?;
    let data = Dataset::prepare(&cfg, graph, crimes, features)?;
    let (params, log) = train(&cfg, &data)?;
    let test = evaluate(&params, &cfg, &data, &data.split.test)?;
    Ok((
        params,
        RunResult {
            variant: variant.name().into(),
            config: cfg,
            log,
            test,
        },
    ))
}

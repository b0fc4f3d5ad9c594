//! Attribution and faithfulness evaluation.
//!
//! Contributions split the pre-activation crime embedding over neighbors,
//! the pre-activation feature embedding over features, and the pre-tanh
//! logit over trend streams; each split sums back to the quantity it
//! decomposes.
//!
//! Faithfulness compares a base model against a uniform-attention variant,
//! reseeded copies and adversaries trained to keep predictions close
//! (TVD) while pushing temporal attention away (KL). Distances between
//! attention sets are Jensen-Shannon divergences summed over the three
//! final temporal distributions.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::config::{FeatureMode, Stream, TrainConfig, Variant};
use crate::dropout::Dropout;
use crate::error::{Error, Result};
use crate::fusion::{self, AttentionTrace, ModelInput, PredictionRecord};
use crate::ingest::{feature_names, SampleWindow, FEATURE_COUNT};
use crate::params::ModelParams;
use crate::scalar::Real;
use crate::training::{self, batch_gradient, predict_all, sample_seed, Adam, Dataset, MetricReport};

/// Floor applied before KL so exact zeros from sparse attention stay finite.
pub const KL_FLOOR: f64 = 1e-12;

/// `phi_n = alpha_n w_x x_n` for every neighbor.
pub fn region_contribution(alpha: &[f64], x_n: &[f64], w_x: &[f64]) -> Vec<Vec<f64>> {
    alpha
        .iter()
        .zip(x_n)
        .map(|(&a, &x)| w_x.iter().map(|&w| a * w * x).collect())
        .collect()
}

/// `phi_j = w_v sum_n alpha_n beta_nj f_n^j` for every feature.
pub fn feature_contribution(alpha: &[f64], beta: &[Vec<f64>], f_n: &[&[f64]], w_v: &[f64]) -> Vec<Vec<f64>> {
    let j_count = f_n.first().map_or(0, |f| f.len());
    (0..j_count)
        .map(|j| {
            let pooled: f64 = alpha
                .iter()
                .zip(beta)
                .zip(f_n)
                .map(|((&a, b), f)| a * b[j] * f[j])
                .sum();
            w_v.iter().map(|&w| w * pooled).collect()
        })
        .collect()
}

/// `phi_a = alpha_a (w . h_a)`; their sum plus the output bias is the logit.
pub fn trend_contribution(trend: &[f64], states: &[&[f64]], w: &[f64]) -> Vec<f64> {
    trend
        .iter()
        .zip(states)
        .map(|(&a, h)| a * h.iter().zip(w).map(|(x, y)| x * y).sum::<f64>())
        .collect()
}

/// Contributions at one recorded spatial step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepContribution {
    pub stream: Stream,
    pub bin: usize,
    pub neighbors: Vec<usize>,
    /// Per neighbor, length `F`.
    pub region: Vec<Vec<f64>>,
    /// Per feature, length `F`. Empty unless features use attention.
    pub feature: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionSet {
    pub region: usize,
    pub target: usize,
    pub steps: Vec<StepContribution>,
    pub trend_streams: Vec<Stream>,
    pub trend: Vec<f64>,
    pub bias: f64,
    /// Final temporal attention per stream.
    pub temporal: Vec<Vec<f64>>,
}

/// Attributes one evaluation-mode prediction.
pub fn contributions(
    params: &ModelParams<f64>,
    cfg: &TrainConfig,
    input: &ModelInput<'_>,
    record: &PredictionRecord,
) -> ContributionSet {
    let trace = &record.trace;
    let mut steps = Vec::new();
    for st in &trace.streams {
        for sp in &st.spatial {
            let x_n: Vec<f64> = sp.neighbors.iter().map(|&n| input.x(n, sp.bin)).collect();
            let region = region_contribution(&sp.alpha, &x_n, &params.hgat.w_x);
            let feature = if cfg.feature_mode == FeatureMode::Attention {
                let feats: Vec<[f64; FEATURE_COUNT]> = sp.neighbors.iter().map(|&n| input.f(n, sp.bin)).collect();
                let f_n: Vec<&[f64]> = feats.iter().map(|f| &f[..]).collect();
                feature_contribution(&sp.alpha, &sp.beta, &f_n, &params.fgat.w_v)
            } else {
                Vec::new()
            };
            steps.push(StepContribution {
                stream: st.stream,
                bin: sp.bin,
                neighbors: sp.neighbors.clone(),
                region,
                feature,
            });
        }
    }
    let states: Vec<&[f64]> = trace.streams.iter().map(|s| s.final_state.as_slice()).collect();
    ContributionSet {
        region: record.region,
        target: record.target,
        steps,
        trend_streams: trace.streams.iter().map(|s| s.stream).collect(),
        trend: trend_contribution(&trace.trend, &states, &params.fusion.w),
        bias: params.fusion.b[0],
        temporal: trace.final_temporal(),
    }
}

/// Largest absolute gap between each decomposition and what it reconstructs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResiduals {
    pub crime: f64,
    pub feature: f64,
    pub trend: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.crime.max(self.feature).max(self.trend)
    }
}

fn sum_vectors(vs: &[Vec<f64>], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for v in vs {
        for (a, b) in out.iter_mut().zip(v) {
            *a += b;
        }
    }
    out
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn identity_residuals(set: &ContributionSet, trace: &AttentionTrace) -> IdentityResiduals {
    let mut crime = 0.0f64;
    let mut feature = 0.0f64;
    let spatial = trace.streams.iter().flat_map(|s| &s.spatial);
    for (c, sp) in set.steps.iter().zip(spatial) {
        crime = crime.max(max_gap(&sum_vectors(&c.region, sp.crime_pre.len()), &sp.crime_pre));
        if !sp.feature_pre.is_empty() {
            feature = feature.max(max_gap(&sum_vectors(&c.feature, sp.feature_pre.len()), &sp.feature_pre));
        }
    }
    let trend = (set.trend.iter().sum::<f64>() + set.bias - trace.logit).abs();
    IdentityResiduals { crime, feature, trend }
}

/// Per-region signed mean of neighbor contributions, averaged over steps and
/// embedding dimensions. Non-neighbors are zero.
pub fn region_summary(set: &ContributionSet, regions: usize) -> Vec<f64> {
    let mut out = vec![0.0; regions];
    let count = set.steps.len().max(1) as f64;
    for st in &set.steps {
        for (&n, phi) in st.neighbors.iter().zip(&st.region) {
            out[n] += phi.iter().sum::<f64>() / phi.len().max(1) as f64 / count;
        }
    }
    out
}

/// Per-region mean Euclidean norm of neighbor contributions.
pub fn region_norm_summary(set: &ContributionSet, regions: usize) -> Vec<f64> {
    let mut out = vec![0.0; regions];
    let count = set.steps.len().max(1) as f64;
    for st in &set.steps {
        for (&n, phi) in st.neighbors.iter().zip(&st.region) {
            out[n] += phi.iter().map(|v| v * v).sum::<f64>().sqrt() / count;
        }
    }
    out
}

pub fn feature_summary(set: &ContributionSet) -> [f64; FEATURE_COUNT] {
    let mut out = [0.0; FEATURE_COUNT];
    let count = set.steps.len().max(1) as f64;
    for st in &set.steps {
        for (acc, phi) in out.iter_mut().zip(&st.feature) {
            *acc += phi.iter().sum::<f64>() / phi.len().max(1) as f64 / count;
        }
    }
    out
}

/// Trend contributions in recent, daily, weekly order; absent streams are 0.
pub fn trend_summary(set: &ContributionSet) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (s, &v) in set.trend_streams.iter().zip(&set.trend) {
        out[s.index()] = v;
    }
    out
}

/// Writes `region_heatmap.csv`, `region_norm_heatmap.csv`,
/// `feature_heatmap.csv` and `trend_heatmap.csv` (one row per sample).
pub fn write_heatmaps(dir: &Path, graph: &crate::graph::RegionGraph, sets: &[ContributionSet]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ids: Vec<String> = graph.ids().iter().map(|i| i.to_string()).collect();
    let head = |rest: &[String]| -> Vec<String> {
        ["sample", "region", "target"]
            .iter()
            .map(|s| s.to_string())
            .chain(rest.iter().cloned())
            .collect()
    };
    let mut paths = Vec::new();
    let mut emit = |name: &str, columns: &[String], rows: &dyn Fn(&ContributionSet) -> Vec<f64>| -> Result<()> {
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(head(columns))?;
        for (k, s) in sets.iter().enumerate() {
            let mut rec = vec![k.to_string(), graph.id_of(s.region).to_string(), s.target.to_string()];
            rec.extend(rows(s).iter().map(|v| format!("{v:.10e}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        paths.push(path);
        Ok(())
    };
    let n = graph.len();
    emit("region_heatmap.csv", &ids, &|s| region_summary(s, n))?;
    emit("region_norm_heatmap.csv", &ids, &|s| region_norm_summary(s, n))?;
    emit("feature_heatmap.csv", &feature_names(), &|s| {
        feature_summary(s).to_vec()
    })?;
    let trends: Vec<String> = Stream::ALL.iter().map(|s| s.name().to_string()).collect();
    emit("trend_heatmap.csv", &trends, &|s| trend_summary(s).to_vec())?;
    Ok(paths)
}

/// `1/2 sum |p1 - p2|`.
pub fn tvd(p1: &[f64], p2: &[f64]) -> f64 {
    assert_eq!(p1.len(), p2.len(), "tvd needs equal lengths");
    0.5 * p1.iter().zip(p2).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum()
}

/// Jensen-Shannon divergence of two distributions, natural log.
pub fn jsd_pair(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "jsd needs equal lengths");
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl_raw(p, &m) + 0.5 * kl_raw(q, &m)).max(0.0)
}

/// Sum of per-distribution divergences over two attention sets.
pub fn jsd(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len(), "attention sets differ in size");
    a.iter().zip(b).map(|(p, q)| jsd_pair(p, q)).sum()
}

fn smooth<S: Real>(p: &[S]) -> Vec<S> {
    let floored: Vec<S> = p
        .iter()
        .map(|&v| if v.value() < KL_FLOOR { S::from_f64(KL_FLOOR) } else { v })
        .collect();
    let total = S::sum(&floored);
    floored.into_iter().map(|v| v / total).collect()
}

/// `KL(p || q)` after flooring both at [`KL_FLOOR`] and renormalizing.
pub fn kl_smoothed<S: Real>(p: &[f64], q: &[S]) -> S {
    assert_eq!(p.len(), q.len(), "kl needs equal lengths");
    let ps = smooth(p);
    let qs = smooth(q);
    let mut acc = S::zero();
    for (&a, &b) in ps.iter().zip(&qs) {
        acc = acc + S::from_f64(a) * (S::from_f64(a.ln()) - b.ln());
    }
    acc
}

/// Per-instance distances of `other` from `base` over the same windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub tvd: Vec<f64>,
    pub jsd: Vec<f64>,
    pub mean_tvd: f64,
    pub mean_jsd: f64,
    /// MAE of `other` on the raw count scale.
    pub mae: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

pub fn compare(base: &[PredictionRecord], other: &[PredictionRecord]) -> Result<Comparison> {
    if base.len() != other.len() {
        return Err(Error::Shape("comparison needs the same instances".into()));
    }
    let mut t = Vec::with_capacity(base.len());
    let mut j = Vec::with_capacity(base.len());
    for (a, b) in base.iter().zip(other) {
        if (a.region, a.target) != (b.region, b.target) {
            return Err(Error::Shape("comparison instances are misaligned".into()));
        }
        t.push(tvd(&[a.normalized], &[b.normalized]));
        j.push(jsd(&a.trace.final_temporal(), &b.trace.final_temporal()));
    }
    let mae = mean(&other.iter().map(|r| (r.count - r.truth).abs()).collect::<Vec<_>>());
    Ok(Comparison {
        mean_tvd: mean(&t),
        mean_jsd: mean(&j),
        tvd: t,
        jsd: j,
        mae,
    })
}

/// Trains the variant whose every attention family is frozen uniform.
pub fn train_uniform_variant(cfg: &TrainConfig, data: &Dataset<'_>) -> Result<(ModelParams<f64>, MetricReport)> {
    let ucfg = Variant::Uniform.apply(cfg);
    let (params, _) = training::train(&ucfg, data)?;
    let report = training::evaluate(&params, &ucfg, data, &data.split.test)?;
    Ok((params, report))
}

/// Trains the base model once per seed, returning parameters in seed order.
pub fn seed_variance_baseline(
    cfg: &TrainConfig,
    data: &Dataset<'_>,
    seeds: &[u64],
) -> Result<Vec<(u64, ModelParams<f64>)>> {
    seeds
        .iter()
        .map(|&s| {
            let c = TrainConfig { seed: s, ..cfg.clone() };
            training::train(&c, data).map(|(p, _)| (s, p))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub lambdas: Vec<f64>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Start from the base parameters instead of a fresh initialization.
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.0, 0.001, 0.01, 0.1],
            epochs: 40,
            learning_rate: 0.005,
            batch_size: 8,
            warm_start: false,
            seed: 7,
        }
    }
}

/// One adversary snapshot evaluated on the report instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryCandidate {
    pub lambda: f64,
    pub epoch: usize,
    pub comparison: Comparison,
}

/// Cached base outputs of one training window.
struct BaseTarget {
    y: f64,
    temporal: Vec<Vec<f64>>,
}

/// Instance TVD minus `lambda` times the summed temporal KL.
pub fn adversarial_loss<S: Real>(
    y_base: f64,
    temporal_base: &[Vec<f64>],
    y_adv: S,
    temporal_adv: &[Vec<S>],
    lambda: f64,
) -> S {
    let tvd = S::from_f64(0.5) * (y_adv - S::from_f64(y_base)).abs();
    let mut kl = S::zero();
    for (p, q) in temporal_base.iter().zip(temporal_adv) {
        kl = kl + kl_smoothed(p, q);
    }
    tvd - S::from_f64(lambda) * kl
}

/// Trains one adversary against a frozen base model. Returns the final
/// parameters and a snapshot per epoch (epoch 0 is the starting point).
pub fn train_adversarial(
    base: &ModelParams<f64>,
    cfg: &TrainConfig,
    data: &Dataset<'_>,
    lambda: f64,
    adv: &AdversaryConfig,
    eval: &[SampleWindow],
    base_records: &[PredictionRecord],
) -> Result<(ModelParams<f64>, Vec<AdversaryCandidate>)> {
    if lambda.is_nan() || lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::Config(format!(
            "adversary lambda must be a finite value >= 0, got {lambda}"
        )));
    }
    if adv.batch_size == 0 {
        return Err(Error::Config("adversary batch_size must be positive".into()));
    }
    let train = &data.split.train;
    let targets: Vec<BaseTarget> = train
        .iter()
        .map(|w| {
            fusion::forward(base, cfg, &data.input, w, &mut Dropout::eval()).map(|o| BaseTarget {
                y: o.y,
                temporal: o.temporal,
            })
        })
        .collect::<Result<_>>()?;
    let mut params = if adv.warm_start {
        base.clone()
    } else {
        ModelParams::init(base.dims, adv.seed)
    };
    let snapshot = |p: &ModelParams<f64>, epoch: usize| -> Result<AdversaryCandidate> {
        let recs = predict_all(p, cfg, data, eval)?;
        Ok(AdversaryCandidate {
            lambda,
            epoch,
            comparison: compare(base_records, &recs)?,
        })
    };
    let mut candidates = vec![snapshot(&params, 0)?];
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len(), adv.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=adv.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(adv.seed, epoch, usize::MAX));
        order.shuffle(&mut rng);
        for batch in order.chunks(adv.batch_size) {
            let (loss, grad) = batch_gradient(&params, batch, |p: &ModelParams<Var<'_, f64>>, i| {
                let out = fusion::forward(p, cfg, &data.input, &train[i], &mut Dropout::eval())?;
                let t = &targets[i];
                Ok(adversarial_loss(t.y, &t.temporal, out.y, &out.temporal, lambda))
            })?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, loss });
            }
            adam.step(&mut flat, &grad);
            params.assign(&flat);
        }
        candidates.push(snapshot(&params, epoch)?);
    }
    Ok((params, candidates))
}

/// For each `lambda`, the pooled candidate minimizing
/// `mean_tvd - lambda * mean_jsd` (earliest on ties).
///
/// Selecting from one shared pool makes the chosen mean JSD (and mean TVD)
/// non-decreasing in `lambda`: for `l1 < l2` with picks `a`, `b`, optimality
/// of each gives `(l2 - l1)(jsd_b - jsd_a) >= 0`.
pub fn select_pooled(pool: &[AdversaryCandidate], lambdas: &[f64]) -> Vec<usize> {
    lambdas
        .iter()
        .filter_map(|&l| {
            let score = |c: &AdversaryCandidate| c.comparison.mean_tvd - l * c.comparison.mean_jsd;
            (0..pool.len()).min_by(|&a, &b| score(&pool[a]).total_cmp(&score(&pool[b])).then(a.cmp(&b)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lambda: f64,
    /// Run and epoch the selected snapshot came from.
    pub source_lambda: f64,
    pub source_epoch: usize,
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub name: String,
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceId {
    pub region: u32,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub instances: Vec<InstanceId>,
    pub base_mae: f64,
    pub uniform: Option<ReferencePoint>,
    pub seeds: Vec<ReferencePoint>,
    pub curve: Vec<CurvePoint>,
    /// Closest-to-base adversary among snapshots with mean JSD above 1.
    pub adversarial: Option<CurvePoint>,
}

impl FaithfulnessReport {
    /// Whether mean JSD never decreases along the curve as listed.
    pub fn curve_is_monotone(&self) -> bool {
        self.curve
            .windows(2)
            .all(|w| w[1].comparison.mean_jsd >= w[0].comparison.mean_jsd)
    }

    /// Writes `report.json`, `curve.csv`, `references.csv` and `mae.csv`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let report = dir.join("report.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format {
            what: "report",
            detail: e.to_string(),
        })?;
        std::fs::write(&report, text).map_err(|e| Error::io(&report, e))?;

        let curve = dir.join("curve.csv");
        let mut w = csv::Writer::from_path(&curve)?;
        w.write_record(["instance_id", "lambda", "tvd", "jsd"])?;
        for p in &self.curve {
            for (k, (t, j)) in p.comparison.tvd.iter().zip(&p.comparison.jsd).enumerate() {
                w.write_record([k.to_string(), p.lambda.to_string(), t.to_string(), j.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(&curve, e))?;

        let refs = dir.join("references.csv");
        let mut w = csv::Writer::from_path(&refs)?;
        w.write_record(["instance_id", "variant", "tvd", "jsd"])?;
        for r in self.uniform.iter().chain(&self.seeds) {
            for (k, (t, j)) in r.comparison.tvd.iter().zip(&r.comparison.jsd).enumerate() {
                w.write_record([k.to_string(), r.name.clone(), t.to_string(), j.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(&refs, e))?;

        let mae = dir.join("mae.csv");
        let mut w = csv::Writer::from_path(&mae)?;
        w.write_record(["model", "mae"])?;
        if let Some(u) = &self.uniform {
            w.write_record(["uniform".to_string(), u.comparison.mae.to_string()])?;
        }
        w.write_record(["base".to_string(), self.base_mae.to_string()])?;
        if let Some(a) = &self.adversarial {
            w.write_record(["adversarial".to_string(), a.comparison.mae.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&mae, e))?;
        Ok(vec![report, curve, refs, mae])
    }
}

/// Which experiments [`run_faithfulness`] performs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessPlan {
    pub uniform: bool,
    pub seeds: Vec<u64>,
    pub adversary: AdversaryConfig,
}

/// Runs the uniform, seed and adversary experiments against `base` on the
/// test windows of `data`.
pub fn run_faithfulness(
    cfg: &TrainConfig,
    data: &Dataset<'_>,
    base: &ModelParams<f64>,
    plan: &FaithfulnessPlan,
) -> Result<FaithfulnessReport> {
    if let Some(l) = plan.adversary.lambdas.iter().find(|l| l.is_nan() || **l < 0.0) {
        return Err(Error::Config(format!("adversary lambda must be >= 0, got {l}")));
    }
    let eval = &data.split.test;
    let base_records = predict_all(base, cfg, data, eval)?;
    let base_mae = compare(&base_records, &base_records)?.mae;
    let instances = base_records
        .iter()
        .map(|r| InstanceId {
            region: data.input.graph.id_of(r.region),
            target: r.target,
        })
        .collect();

    let uniform = if plan.uniform {
        let (p, _) = train_uniform_variant(cfg, data)?;
        let recs = predict_all(&p, &Variant::Uniform.apply(cfg), data, eval)?;
        Some(ReferencePoint {
            name: "uniform".into(),
            comparison: compare(&base_records, &recs)?,
        })
    } else {
        None
    };

    let mut seeds = Vec::new();
    for (s, p) in seed_variance_baseline(cfg, data, &plan.seeds)? {
        let recs = predict_all(&p, cfg, data, eval)?;
        seeds.push(ReferencePoint {
            name: format!("seed_{s}"),
            comparison: compare(&base_records, &recs)?,
        });
    }

    let mut pool = Vec::new();
    for &l in &plan.adversary.lambdas {
        let (_, cands) = train_adversarial(base, cfg, data, l, &plan.adversary, eval, &base_records)?;
        pool.extend(cands);
    }
    let mut lambdas = plan.adversary.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    let curve: Vec<CurvePoint> = select_pooled(&pool, &lambdas)
        .into_iter()
        .zip(&lambdas)
        .map(|(k, &l)| CurvePoint {
            lambda: l,
            source_lambda: pool[k].lambda,
            source_epoch: pool[k].epoch,
            comparison: pool[k].comparison.clone(),
        })
        .collect();
    let adversarial = pool
        .iter()
        .filter(|c| c.comparison.mean_jsd > 1.0)
        .min_by(|a, b| a.comparison.mean_tvd.total_cmp(&b.comparison.mean_tvd))
        .map(|c| CurvePoint {
            lambda: c.lambda,
            source_lambda: c.lambda,
            source_epoch: c.epoch,
            comparison: c.comparison.clone(),
        });
    Ok(FaithfulnessReport {
        instances,
        base_mae,
        uniform,
        seeds,
        curve,
        adversarial,
    })
}

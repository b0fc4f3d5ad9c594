//! End-to-end forward pass: spatial layers per time step, the three trend
//! streams, location attention over their final states, and the output
//! head.
//!
//! ```text
//! score_a = v_h . tanh(W_h h_a + b_h)
//! alpha   = softmax_a(score)
//! y       = tanh(w . sum_a alpha_a h_a + b)
//! ```

use serde::{Deserialize, Serialize};

use crate::config::{FeatureMode, Stream, TrainConfig};
use crate::dropout::Dropout;
use crate::error::{Error, Result};
use crate::fgat::{self, FGatOptions};
use crate::graph::RegionGraph;
use crate::hgat::{self, HGatOptions};
use crate::ingest::{FeatureTensor, NormalizationSpec, SampleWindow, FEATURE_COUNT};
use crate::params::{param_group, ModelParams};
use crate::sab_lstm;
use crate::scalar::{softmax, uniform, values, Real};

param_group!(
    FusionParams, d => {
        w_h: (d.attention, d.hidden, d.hidden),
        b_h: (d.attention, 1, d.hidden),
        v_h: (1, d.attention, d.attention),
        w: (1, d.hidden, d.hidden),
        b: (1, 1, d.hidden),
    }
);

/// Softmax over the present streams' scores and the fused context.
pub fn trend_attention<S: Real>(p: &FusionParams<S>, states: &[&[S]], uniform_weights: bool) -> (Vec<S>, Vec<S>) {
    assert!(!states.is_empty(), "trend attention needs at least one stream");
    let hidden = states[0].len();
    let alpha = if uniform_weights {
        uniform(states.len())
    } else {
        let scores: Vec<S> = states.iter().map(|h| trend_score(p, h)).collect();
        softmax(&scores)
    };
    let mut c = vec![S::zero(); hidden];
    for (&a, h) in alpha.iter().zip(states) {
        for (acc, &v) in c.iter_mut().zip(h.iter()) {
            *acc = *acc + a * v;
        }
    }
    (alpha, c)
}

pub fn trend_score<S: Real>(p: &FusionParams<S>, h: &[S]) -> S {
    let hidden = h.len();
    let act: Vec<S> = p
        .w_h
        .chunks_exact(hidden)
        .zip(&p.b_h)
        .map(|(row, &b)| (S::dot(row, h) + b).tanh())
        .collect();
    S::dot(&p.v_h, &act)
}

/// `(logit, tanh(logit))`.
pub fn predict<S: Real>(p: &FusionParams<S>, c: &[S]) -> (S, S) {
    let logit = S::dot(&p.w, c) + p.b[0];
    (logit, logit.tanh())
}

/// Read-only data for one crime category.
#[derive(Debug, Clone)]
pub struct ModelInput<'a> {
    pub graph: &'a RegionGraph,
    /// Normalized counts, `[region][bin]`.
    pub crimes: Vec<f64>,
    /// Parent-level values: for each region, the sum of `crimes` over every
    /// region sharing its parent.
    pub parents: Vec<f64>,
    pub features: &'a FeatureTensor,
    pub steps: usize,
}

impl<'a> ModelInput<'a> {
    pub fn new(graph: &'a RegionGraph, normalized: Vec<f64>, features: &'a FeatureTensor) -> Result<Self> {
        let n = graph.len();
        if features.regions != n || normalized.len() != n * features.steps {
            return Err(Error::Shape(format!(
                "model input: {} regions, {} crime values, features {}x{}",
                n,
                normalized.len(),
                features.regions,
                features.steps
            )));
        }
        let steps = features.steps;
        let mut parents = vec![0.0; n * steps];
        for i in 0..n {
            for &s in graph.siblings_of(i) {
                for b in 0..steps {
                    parents[i * steps + b] += normalized[s * steps + b];
                }
            }
        }
        Ok(Self {
            graph,
            crimes: normalized,
            parents,
            features,
            steps,
        })
    }

    /// Builds the input for category `k` from raw counts.
    pub fn from_counts(
        graph: &'a RegionGraph,
        crimes: &crate::ingest::CrimeTensor,
        k: usize,
        spec: &NormalizationSpec,
        features: &'a FeatureTensor,
    ) -> Result<Self> {
        Self::new(graph, spec.apply_category(crimes, k), features)
    }

    #[inline]
    pub fn x(&self, i: usize, bin: usize) -> f64 {
        self.crimes[i * self.steps + bin]
    }

    #[inline]
    pub fn z(&self, i: usize, bin: usize) -> f64 {
        self.parents[i * self.steps + bin]
    }

    pub fn f(&self, i: usize, bin: usize) -> [f64; FEATURE_COUNT] {
        self.features.at(i, bin)
    }
}

/// Spatial attention recorded at one input time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialStep {
    pub bin: usize,
    /// Dense neighbor indices, ascending, target included.
    pub neighbors: Vec<usize>,
    pub alpha: Vec<f64>,
    /// `beta[n][j]`; empty without feature attention.
    pub beta: Vec<Vec<f64>>,
    pub crime_pre: Vec<f64>,
    pub feature_pre: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamTrace {
    pub stream: Stream,
    pub spatial: Vec<SpatialStep>,
    /// Memory attention per step; empty where the summary was `ĥ_t`.
    pub temporal: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub streams: Vec<StreamTrace>,
    /// Location attention over `streams`, same order.
    pub trend: Vec<f64>,
    pub context: Vec<f64>,
    pub logit: f64,
}

impl AttentionTrace {
    /// Final-step memory attention per stream; `[1.0]` where it is empty.
    pub fn final_temporal(&self) -> Vec<Vec<f64>> {
        self.streams
            .iter()
            .map(|s| match s.temporal.last() {
                Some(a) if !a.is_empty() => a.clone(),
                _ => vec![1.0],
            })
            .collect()
    }

    /// Spatial attention averaged over every recorded step, keyed by
    /// neighbor index. Neighborhoods are the same at every step.
    pub fn mean_spatial(&self) -> (Vec<usize>, Vec<f64>) {
        let mut neighbors = Vec::new();
        let mut sum: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for step in self.streams.iter().flat_map(|s| &s.spatial) {
            if neighbors.is_empty() {
                neighbors = step.neighbors.clone();
                sum = vec![0.0; neighbors.len()];
            }
            for (acc, a) in sum.iter_mut().zip(&step.alpha) {
                *acc += a;
            }
            count += 1;
        }
        let mean = sum.into_iter().map(|v| v / count.max(1) as f64).collect();
        (neighbors, mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub region: usize,
    pub category: usize,
    pub target: usize,
    /// Normalized prediction in (-1, 1).
    pub normalized: f64,
    pub count: f64,
    pub truth: f64,
    pub trace: AttentionTrace,
}

/// Forward-pass result in the scalar type of the parameters.
#[derive(Debug, Clone)]
pub struct Forward<S> {
    pub y: S,
    pub logit: S,
    /// Final-step memory attention per present stream (`[1]` when empty).
    pub temporal: Vec<Vec<S>>,
    pub trace: AttentionTrace,
}

/// Spatial embedding of region `i` at `bin`.
pub fn spatial_step<S: Real>(
    params: &ModelParams<S>,
    cfg: &TrainConfig,
    input: &ModelInput<'_>,
    i: usize,
    bin: usize,
    drop: &mut Dropout,
) -> (Vec<S>, SpatialStep) {
    let nbrs = input.graph.neighborhood_of(i);
    let x_n: Vec<f64> = nbrs.iter().map(|&n| input.x(n, bin)).collect();
    let z_n: Vec<f64> = nbrs.iter().map(|&n| input.z(n, bin)).collect();
    let h = hgat::forward(
        &params.hgat,
        input.x(i, bin),
        &x_n,
        (input.z(i, bin), &z_n),
        &HGatOptions {
            leaky_slope: cfg.leaky_slope,
            parent_attention: cfg.parent_attention,
            dropout: cfg.spatial_dropout,
            uniform: cfg.uniform_attention,
        },
        drop,
    );
    let mut record = SpatialStep {
        bin,
        neighbors: nbrs.to_vec(),
        alpha: values(&h.alpha),
        beta: Vec::new(),
        crime_pre: values(&h.pre),
        feature_pre: Vec::new(),
    };
    let s = match cfg.feature_mode {
        FeatureMode::Off => h.c,
        FeatureMode::Concat => {
            let own = input.f(i, bin);
            h.c.into_iter().chain(own.iter().map(|&v| S::from_f64(v))).collect()
        }
        FeatureMode::Attention => {
            let feats: Vec<[f64; FEATURE_COUNT]> = nbrs.iter().map(|&n| input.f(n, bin)).collect();
            let f_n: Vec<&[f64]> = feats.iter().map(|f| &f[..]).collect();
            let f_i = input.f(i, bin);
            let out = fgat::forward(
                &params.fgat,
                input.x(i, bin),
                &x_n,
                &f_i,
                &f_n,
                &h.alpha,
                &FGatOptions {
                    dropout: cfg.feature_dropout,
                    uniform: cfg.uniform_attention,
                },
                drop,
            );
            record.beta = out.beta.iter().map(|b| values(b)).collect();
            record.feature_pre = values(&out.pre);
            fgat::spatial_embedding(&h.c, &out.e)
        }
    };
    (s, record)
}

/// Runs the whole model on one window.
pub fn forward<S: Real>(
    params: &ModelParams<S>,
    cfg: &TrainConfig,
    input: &ModelInput<'_>,
    window: &SampleWindow,
    drop: &mut Dropout,
) -> Result<Forward<S>> {
    let streams = cfg.stream_set()?;
    let mut states: Vec<Vec<S>> = Vec::with_capacity(streams.len());
    let mut temporal = Vec::with_capacity(streams.len());
    let mut traces = Vec::with_capacity(streams.len());
    for &stream in &streams {
        let steps = match stream {
            Stream::Recent => &window.recent,
            Stream::Daily => &window.daily,
            Stream::Weekly => &window.weekly,
        };
        if steps.is_empty() {
            return Err(Error::Shape(format!("window has no {} steps", stream.name())));
        }
        let mut seq = Vec::with_capacity(steps.len());
        let mut spatial = Vec::with_capacity(steps.len());
        for &s in steps {
            let (emb, rec) = spatial_step(params, cfg, input, window.region, s - 1, drop);
            seq.push(emb);
            spatial.push(rec);
        }
        let settings = cfg.stream_settings(stream);
        let (mut h, alphas) = sab_lstm::run_sequence(&params.streams[stream.index()], &settings, &params.dims, &seq);
        drop.apply(&mut h, cfg.stream_dropout);
        temporal.push(match alphas.last() {
            Some(a) if !a.is_empty() => a.clone(),
            _ => vec![S::one()],
        });
        traces.push(StreamTrace {
            stream,
            spatial,
            temporal: alphas.iter().map(|a| values(a)).collect(),
            final_state: values(&h),
        });
        states.push(h);
    }
    let refs: Vec<&[S]> = states.iter().map(|h| h.as_slice()).collect();
    let (alpha, c) = trend_attention(&params.fusion, &refs, cfg.uniform_attention);
    let (logit, y) = predict(&params.fusion, &c);
    Ok(Forward {
        y,
        logit,
        temporal,
        trace: AttentionTrace {
            streams: traces,
            trend: values(&alpha),
            context: values(&c),
            logit: logit.value(),
        },
    })
}

/// Evaluation-mode prediction with denormalization.
pub fn predict_window(
    params: &ModelParams<f64>,
    cfg: &TrainConfig,
    input: &ModelInput<'_>,
    spec: &NormalizationSpec,
    window: &SampleWindow,
) -> Result<PredictionRecord> {
    let out = forward(params, cfg, input, window, &mut Dropout::eval())?;
    Ok(PredictionRecord {
        region: window.region,
        category: window.category,
        target: window.target,
        normalized: out.y,
        count: spec.invert(out.y, window.category, window.region),
        truth: window.truth,
        trace: out.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Dims;

    fn params(seed: u64) -> FusionParams<f64> {
        let d = Dims {
            embed: 2,
            key: 2,
            hidden: 3,
            attention: 4,
            input: 4,
        };
        let mut k = seed as f64;
        FusionParams::from_fn(&d, |_, r, c, _| {
            (0..r * c)
                .map(|_| {
                    k += 1.0;
                    (k * 0.618034).fract() * 2.0 - 1.0
                })
                .collect()
        })
    }

    #[test]
    fn identical_states_give_equal_weights() {
        let p = params(1);
        let h = [0.3, -0.2, 0.5];
        let (a, c) = trend_attention(&p, &[&h, &h, &h], false);
        for w in &a {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        for (x, y) in c.iter().zip(&h) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn single_stream_passes_through() {
        let p = params(2);
        let h = [0.1, 0.9, -0.4];
        let (a, c) = trend_attention(&p, &[&h], false);
        assert_eq!(a, vec![1.0]);
        assert_eq!(c, h.to_vec());
    }

    #[test]
    fn zero_head_predicts_midpoint() {
        let mut p = params(3);
        p.w.iter_mut().for_each(|v| *v = 0.0);
        p.b[0] = 0.0;
        let (logit, y) = predict(&p, &[0.4, 0.1, 0.2]);
        assert_eq!((logit, y), (0.0, 0.0));
        p.b[0] = 40.0;
        assert_eq!(predict(&p, &[0.0; 3]).1, 1.0);
    }
}

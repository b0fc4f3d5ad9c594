//! LSTM with sparse attentive backtracking.
//!
//! Each step runs a standard LSTM cell to get the provisional state `ĥ_t`.
//! Every `k_att` steps `ĥ_t` is written to memory. The emitted hidden state
//! is a sparse attention-weighted sum over memory:
//!
//! ```text
//! e_m   = w_m . tanh([ĥ_t || h_m])
//! alpha = sparse(e, k_top)
//! h_t   = sum_m alpha_m h_m
//! ```
//!
//! With empty memory `h_t = ĥ_t`. Recurrent state gradients are cut at
//! every `trunc` boundary; memory entries keep their gradient path.

use crate::config::{Dims, Recurrence, StreamSettings};
use crate::params::param_group;
use crate::scalar::{uniform, Real};

param_group!(
    /// Gate rows are ordered input, forget, cell, output.
    SabLstmParams, d => {
        w: (4 * d.hidden, d.input + d.hidden, d.input + d.hidden),
        b: (4 * d.hidden, 1, d.input + d.hidden),
        w_m: (1, 2 * d.hidden, 2 * d.hidden),
    }
);

/// Sparse normalization of memory scores.
///
/// With more than `k_top` scores, the `(k_top+1)`-th largest is subtracted,
/// negatives are clamped to zero and the rest normalized. If nothing stays
/// positive (ties at the threshold) the weights fall back to uniform over
/// the top `k_top` entries, earlier entries winning ties.
///
/// With at most `k_top` scores the minimum is subtracted instead; all-equal
/// scores give uniform weights.
pub fn sparse_attention<S: Real>(scores: &[S], k_top: usize) -> Vec<S> {
    let n = scores.len();
    assert!(n > 0, "sparse attention over empty memory");
    assert!(k_top > 0, "k_top must be positive");
    if n == 1 {
        return vec![S::one()];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .value()
            .partial_cmp(&scores[a].value())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let (baseline, keep) = if n > k_top {
        (scores[order[k_top]], k_top)
    } else {
        (scores[order[n - 1]], n)
    };
    let shifted: Vec<Option<S>> = scores
        .iter()
        .map(|&s| (s.value() > baseline.value()).then(|| s - baseline))
        .collect();
    let total = shifted.iter().flatten().fold(S::zero(), |acc, &v| acc + v);
    if total.value() <= 0.0 {
        let mut w = vec![S::zero(); n];
        let share = S::from_f64(1.0 / keep as f64);
        for &m in &order[..keep] {
            w[m] = share;
        }
        return w;
    }
    shifted
        .into_iter()
        .map(|v| v.map_or(S::zero(), |v| v / total))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SabState<S> {
    pub h: Vec<S>,
    pub c: Vec<S>,
    pub memory: Vec<Vec<S>>,
    pub step: usize,
}

impl<S: Real> SabState<S> {
    pub fn new(hidden: usize) -> Self {
        Self {
            h: vec![S::zero(); hidden],
            c: vec![S::zero(); hidden],
            memory: Vec::new(),
            step: 0,
        }
    }
}

/// LSTM cell: returns `(ĥ, c)`.
pub fn lstm_cell<S: Real>(p: &SabLstmParams<S>, input: &[S], h_prev: &[S], c_prev: &[S]) -> (Vec<S>, Vec<S>) {
    let hidden = h_prev.len();
    let cols = input.len() + hidden;
    debug_assert_eq!(p.w.len(), 4 * hidden * cols);
    let joined: Vec<S> = input.iter().chain(h_prev).copied().collect();
    let gate = |g: usize, k: usize| {
        let row = g * hidden + k;
        S::dot(&p.w[row * cols..(row + 1) * cols], &joined) + p.b[row]
    };
    let mut h = Vec::with_capacity(hidden);
    let mut c = Vec::with_capacity(hidden);
    for (k, &c_old) in c_prev.iter().enumerate().take(hidden) {
        let i = gate(0, k).sigmoid();
        let f = gate(1, k).sigmoid();
        let g = gate(2, k).tanh();
        let o = gate(3, k).sigmoid();
        let ck = f * c_old + i * g;
        h.push(o * ck.tanh());
        c.push(ck);
    }
    (h, c)
}

/// Unnormalized memory scores `w_m . tanh([ĥ || h_m])`.
pub fn memory_scores<S: Real>(w_m: &[S], provisional: &[S], memory: &[Vec<S>]) -> Vec<S> {
    let hidden = provisional.len();
    let own = S::dot(
        &w_m[..hidden],
        &provisional.iter().map(|v| v.tanh()).collect::<Vec<_>>(),
    );
    memory
        .iter()
        .map(|m| own + S::dot(&w_m[hidden..], &m.iter().map(|v| v.tanh()).collect::<Vec<_>>()))
        .collect()
}

/// One recurrence step. Returns `(h_t, alpha)`; `alpha` is empty when the
/// summary fell back to the provisional state.
pub fn step<S: Real>(
    p: &SabLstmParams<S>,
    cfg: &StreamSettings,
    state: &mut SabState<S>,
    input: &[S],
) -> (Vec<S>, Vec<S>) {
    state.step += 1;
    let t = state.step;
    if let Some(k) = cfg.trunc {
        if t > 1 && (t - 1).is_multiple_of(k) {
            state.h.iter_mut().for_each(|v| *v = v.detach());
            state.c.iter_mut().for_each(|v| *v = v.detach());
        }
    }
    let (provisional, c) = lstm_cell(p, input, &state.h, &state.c);
    state.c = c;
    if cfg.recurrence == Recurrence::Plain {
        state.h = provisional.clone();
        return (provisional, Vec::new());
    }
    if t.is_multiple_of(cfg.k_att) {
        state.memory.push(provisional.clone());
    }
    if state.memory.is_empty() {
        state.h = provisional.clone();
        return (provisional, Vec::new());
    }
    let alpha = if cfg.uniform {
        uniform(state.memory.len())
    } else {
        sparse_attention(&memory_scores(&p.w_m, &provisional, &state.memory), cfg.k_top)
    };
    let hidden = provisional.len();
    let mut h = if cfg.add_provisional {
        provisional
    } else {
        vec![S::zero(); hidden]
    };
    for (&a, m) in alpha.iter().zip(&state.memory) {
        if a.value() == 0.0 {
            continue;
        }
        for (acc, &v) in h.iter_mut().zip(m) {
            *acc = *acc + a * v;
        }
    }
    state.h = h.clone();
    (h, alpha)
}

/// Folds [`step`] over `seq`. Returns the final hidden state and the
/// attention weights of every step.
pub fn run_sequence<S: Real>(
    p: &SabLstmParams<S>,
    cfg: &StreamSettings,
    dims: &Dims,
    seq: &[Vec<S>],
) -> (Vec<S>, Vec<Vec<S>>) {
    assert!(!seq.is_empty(), "empty input sequence");
    let mut state = SabState::new(dims.hidden);
    let mut traces = Vec::with_capacity(seq.len());
    let mut h = Vec::new();
    for s in seq {
        let (ht, alpha) = step(p, cfg, &mut state, s);
        h = ht;
        traces.push(alpha);
    }
    (h, traces)
}

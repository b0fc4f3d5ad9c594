//! Hierarchical graph attention over a region's first-order neighborhood.
//!
//! Node-level and parent-level scores are added before a single softmax:
//!
//! ```text
//! e_n = LeakyReLU(a_x . [w_x x_i || w_x x_n]) + LeakyReLU(a_z . [w_z z_i || w_z z_n])
//! alpha = softmax_n(e)
//! c = ELU(sum_n alpha_n w_x x_n)
//! ```
//!
//! Because `w_x` maps a scalar, `a_x . [w_x x_i || w_x x_n]` equals
//! `(a_x[..F] . w_x) x_i + (a_x[F..] . w_x) x_n`; the two inner products are
//! computed once per call.

use crate::dropout::Dropout;
use crate::params::param_group;
use crate::scalar::{softmax, uniform, Real};

param_group!(
    HGatParams, d => {
        w_x: (d.embed, 1, 1),
        w_z: (d.embed, 1, 1),
        a_x: (1, 2 * d.embed, 2 * d.embed),
        a_z: (1, 2 * d.embed, 2 * d.embed),
    }
);

/// Options for one hGAT evaluation.
#[derive(Debug, Clone, Copy)]
pub struct HGatOptions {
    pub leaky_slope: f64,
    /// `false` drops the parent-level term, giving plain graph attention.
    pub parent_attention: bool,
    pub dropout: f64,
    pub uniform: bool,
}

#[derive(Debug, Clone)]
pub struct HGatOutput<S> {
    /// Attention weights after train-mode dropout.
    pub alpha: Vec<S>,
    /// `sum_n alpha_n w_x x_n`, before the activation.
    pub pre: Vec<S>,
    pub c: Vec<S>,
}

/// `LeakyReLU(a . [w s || w v_n])` for every neighbor value `v_n`.
pub fn half_scores<S: Real>(w: &[S], a: &[S], own: f64, nbrs: &[f64], slope: f64) -> Vec<S> {
    let f = w.len();
    let s_own = S::dot(&a[..f], w);
    let s_nbr = S::dot(&a[f..], w);
    nbrs.iter()
        .map(|&v| (s_own * S::from_f64(own) + s_nbr * S::from_f64(v)).leaky_relu(slope))
        .collect()
}

/// Combined scores `e^c + e^p`.
pub fn pairwise_scores<S: Real>(p: &HGatParams<S>, x_i: f64, x_n: &[f64], z_i: f64, z_n: &[f64], slope: f64) -> Vec<S> {
    let node = half_scores(&p.w_x, &p.a_x, x_i, x_n, slope);
    let parent = half_scores(&p.w_z, &p.a_z, z_i, z_n, slope);
    node.into_iter().zip(parent).map(|(a, b)| a + b).collect()
}

pub fn spatial_attention<S: Real>(scores: &[S]) -> Vec<S> {
    softmax(scores)
}

/// Returns `(pre, ELU(pre))` with `pre = w_x * sum_n alpha_n x_n`.
pub fn crime_embedding<S: Real>(alpha: &[S], x_n: &[f64], w_x: &[S]) -> (Vec<S>, Vec<S>) {
    let xs: Vec<S> = x_n.iter().map(|&v| S::from_f64(v)).collect();
    let pooled = S::dot(alpha, &xs);
    let pre: Vec<S> = w_x.iter().map(|&w| w * pooled).collect();
    let c = pre.iter().map(|&v| v.elu()).collect();
    (pre, c)
}

/// Full layer for one target region at one time step. `z` carries the
/// parent-level values `(z_i, z_n)` and is ignored when parent attention is
/// off.
pub fn forward<S: Real>(
    p: &HGatParams<S>,
    x_i: f64,
    x_n: &[f64],
    z: (f64, &[f64]),
    opts: &HGatOptions,
    drop: &mut Dropout,
) -> HGatOutput<S> {
    let mut alpha = if opts.uniform {
        uniform(x_n.len())
    } else {
        let mut e = half_scores(&p.w_x, &p.a_x, x_i, x_n, opts.leaky_slope);
        drop.apply(&mut e, opts.dropout);
        if opts.parent_attention {
            let mut ep = half_scores(&p.w_z, &p.a_z, z.0, z.1, opts.leaky_slope);
            drop.apply(&mut ep, opts.dropout);
            for (a, b) in e.iter_mut().zip(ep) {
                *a = *a + b;
            }
        }
        spatial_attention(&e)
    };
    if !opts.uniform {
        drop.apply(&mut alpha, opts.dropout);
    }
    let (pre, c) = crime_embedding(&alpha, x_n, &p.w_x);
    HGatOutput { alpha, pre, c }
}

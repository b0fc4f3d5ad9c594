//! Feature graph attention: scaled dot-product attention over the external
//! features of each neighbor.
//!
//! ```text
//! q      = W_q [x_i, x_n]
//! k^j    = W_k [f_i^j, f_n^j]
//! beta_n = softmax_j(q . k^j / sqrt(d_k))
//! e      = ELU(w_v sum_n alpha_n sum_j beta_nj f_n^j)
//! ```
//!
//! [`forward`] uses `q . k^j = (W_k^T q) . [f_i^j, f_n^j]` and
//! `W_k^T q = (W_k^T W_q) [x_i, x_n]`, so each neighbor costs one 2x2
//! product instead of `J` key vectors.

use crate::dropout::Dropout;
use crate::params::param_group;
use crate::scalar::{softmax, uniform, Real};

param_group!(
    FGatParams, d => {
        w_q: (d.key, 2, 2),
        w_k: (d.key, 2, 2),
        w_v: (d.embed, 1, 1),
    }
);

#[derive(Debug, Clone, Copy)]
pub struct FGatOptions {
    pub dropout: f64,
    pub uniform: bool,
}

#[derive(Debug, Clone)]
pub struct FGatOutput<S> {
    /// `beta[n][j]`, after train-mode dropout.
    pub beta: Vec<Vec<S>>,
    /// `w_v sum_n alpha_n sum_j beta_nj f_n^j`, before the activation.
    pub pre: Vec<S>,
    pub e: Vec<S>,
}

fn mat2<S: Real>(m: &[S], a: f64, b: f64) -> Vec<S> {
    m.chunks_exact(2)
        .map(|row| row[0] * S::from_f64(a) + row[1] * S::from_f64(b))
        .collect()
}

/// Literal query and keys for one neighbor pair.
pub fn query_key<S: Real>(p: &FGatParams<S>, x_i: f64, x_n: f64, f_i: &[f64], f_n: &[f64]) -> (Vec<S>, Vec<Vec<S>>) {
    let q = mat2(&p.w_q, x_i, x_n);
    let keys = f_i.iter().zip(f_n).map(|(&a, &b)| mat2(&p.w_k, a, b)).collect();
    (q, keys)
}

pub fn feature_attention<S: Real>(q: &[S], keys: &[Vec<S>], d_k: usize) -> Vec<S> {
    let scale = S::from_f64(1.0 / (d_k as f64).sqrt());
    let logits: Vec<S> = keys.iter().map(|k| S::dot(q, k) * scale).collect();
    softmax(&logits)
}

/// Returns `(pre, ELU(pre))`. `f_n[n]` holds the `J` features of neighbor `n`.
pub fn feature_embedding<S: Real>(alpha: &[S], beta: &[Vec<S>], f_n: &[&[f64]], w_v: &[S]) -> (Vec<S>, Vec<S>) {
    let mut pooled = S::zero();
    for ((&a, b), f) in alpha.iter().zip(beta).zip(f_n) {
        let fs: Vec<S> = f.iter().map(|&v| S::from_f64(v)).collect();
        pooled = pooled + a * S::dot(b, &fs);
    }
    let pre: Vec<S> = w_v.iter().map(|&w| w * pooled).collect();
    let e = pre.iter().map(|&v| v.elu()).collect();
    (pre, e)
}

/// `[c || e]`.
pub fn spatial_embedding<S: Real>(c: &[S], e: &[S]) -> Vec<S> {
    c.iter().chain(e).copied().collect()
}

/// Full layer for one target region at one time step, given the spatial
/// attention `alpha` from the hierarchical layer.
#[allow(clippy::too_many_arguments)]
pub fn forward<S: Real>(
    p: &FGatParams<S>,
    x_i: f64,
    x_n: &[f64],
    f_i: &[f64],
    f_n: &[&[f64]],
    alpha: &[S],
    opts: &FGatOptions,
    drop: &mut Dropout,
) -> FGatOutput<S> {
    let j = f_i.len();
    let beta: Vec<Vec<S>> = if opts.uniform {
        vec![uniform(j); x_n.len()]
    } else {
        let d = p.w_q.len() / 2;
        let col = |m: &[S], c: usize| -> Vec<S> { m.chunks_exact(2).map(|r| r[c]).collect() };
        let (q0, q1, k0, k1) = (col(&p.w_q, 0), col(&p.w_q, 1), col(&p.w_k, 0), col(&p.w_k, 1));
        let scale = S::from_f64(1.0 / (d as f64).sqrt());
        // G = W_k^T W_q, pre-scaled.
        let g = [
            S::dot(&k0, &q0) * scale,
            S::dot(&k0, &q1) * scale,
            S::dot(&k1, &q0) * scale,
            S::dot(&k1, &q1) * scale,
        ];
        x_n.iter()
            .zip(f_n)
            .map(|(&xn, fn_)| {
                let (xi, xn) = (S::from_f64(x_i), S::from_f64(xn));
                let u0 = g[0] * xi + g[1] * xn;
                let u1 = g[2] * xi + g[3] * xn;
                let logits: Vec<S> = f_i
                    .iter()
                    .zip(fn_.iter())
                    .map(|(&a, &b)| u0 * S::from_f64(a) + u1 * S::from_f64(b))
                    .collect();
                let mut b = softmax(&logits);
                drop.apply(&mut b, opts.dropout);
                b
            })
            .collect()
    };
    let (pre, e) = feature_embedding(alpha, &beta, f_n, &p.w_v);
    FGatOutput { beta, pre, e }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Dims;

    fn params(seed: u64) -> FGatParams<f64> {
        let dims = Dims {
            embed: 3,
            key: 4,
            hidden: 2,
            attention: 2,
            input: 6,
        };
        let mut k = seed as f64;
        FGatParams::from_fn(&dims, |_, r, c, _| {
            (0..r * c)
                .map(|_| {
                    k += 1.0;
                    (k * 0.5698402910).fract() * 2.0 - 1.0
                })
                .collect()
        })
    }

    const EVAL: FGatOptions = FGatOptions {
        dropout: 0.5,
        uniform: false,
    };

    #[test]
    fn zero_query_cases() {
        let mut p = params(1);
        let (q, _) = query_key(&p, 0.0, 0.0, &[1.0], &[2.0]);
        assert_eq!(q, vec![0.0; 4]);
        p.w_q.iter_mut().for_each(|v| *v = 0.0);
        let (q, keys) = query_key(&p, 0.4, -0.3, &[1.0, 5.0, 2.0], &[2.0, 0.0, 7.0]);
        assert_eq!(q, vec![0.0; 4]);
        assert_eq!(feature_attention(&q, &keys, 4), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn softmax_closed_forms() {
        let q = [1.0, 0.0];
        let keys = vec![vec![3f64.ln() * 2f64.sqrt(), 5.0], vec![0.0, -1.0]];
        let b = feature_attention(&q, &keys, 2);
        assert!((b[0] - 0.75).abs() < 1e-15 && (b[1] - 0.25).abs() < 1e-15);
        let same = vec![vec![0.3, 0.3]; 5];
        assert_eq!(feature_attention(&[2.0, 1.0], &same, 2), vec![0.2; 5]);
    }

    #[test]
    fn embedding_special_cases() {
        let p = params(2);
        let (_, e) = feature_embedding(
            &[0.5, 0.5],
            &vec![vec![0.5, 0.5]; 2],
            &[&[0.0, 0.0], &[0.0, 0.0]],
            &p.w_v,
        );
        assert_eq!(e, vec![0.0; 3]);
        let (_, e) = feature_embedding(&[1.0], &[vec![1.0]], &[&[1.0]], &p.w_v);
        assert_eq!(e, p.w_v.iter().map(|w| w.elu()).collect::<Vec<_>>());
        assert_eq!(spatial_embedding(&[1.0], &[2.0]), vec![1.0, 2.0]);
    }

    #[test]
    fn rearranged_forward_matches_literal_formula() {
        let p = params(3);
        let x_n = [0.2, -0.9, 0.5];
        let feats: [[f64; 4]; 3] = [[1.0, 0.0, 3.0, 2.0], [0.5, 4.0, 0.0, 1.0], [2.0, 2.0, 1.0, 0.0]];
        let f_n: Vec<&[f64]> = feats.iter().map(|f| &f[..]).collect();
        let alpha = [0.2, 0.5, 0.3];
        let out = forward(&p, 0.2, &x_n, &feats[0], &f_n, &alpha, &EVAL, &mut Dropout::eval());
        for (n, b) in out.beta.iter().enumerate() {
            let (q, keys) = query_key(&p, 0.2, x_n[n], &feats[0], f_n[n]);
            let want = feature_attention(&q, &keys, 4);
            for (a, w) in b.iter().zip(&want) {
                assert!((a - w).abs() < 1e-12);
            }
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

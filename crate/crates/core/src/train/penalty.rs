//! Gradient penalty on straight lines between real and generated inputs.

use crate::diff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::nets::{masked_weights, penalty_at, penalty_of_grad, topk_dynamic_mask, topk_static_mask, vocab_logits, Critic, EncoderConfig, EncoderKind};
use crate::sparse::{projection_matrix, sparse_encode, Dictionary};

/// `ε a + (1 − ε) b`.
pub fn interpolate(a: &Tensor, b: &Tensor, eps: f64) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::dim("interpolate", a.shape(), b.shape()));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| eps * x + (1.0 - eps) * y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// `λ (‖∇D(ŝ)‖₂ − 1)²` at `ŝ = ε s_r + (1 − ε) s_g`, with `s_r` and `s_g`
/// held constant.
pub fn gradient_penalty(
    g: &mut Graph,
    critic: &dyn Critic,
    s_r: &Tensor,
    s_g: &Tensor,
    eps: f64,
    lambda: f64,
) -> Result<Var> {
    let s_hat = g.constant(interpolate(s_r, s_g, eps)?);
    penalty_at(g, critic, s_hat, lambda)
}

/// Encoding of one state and its Jacobian `∂s/∂h` (`d × d`, symmetric)
/// with every discrete choice held fixed.
pub fn encode_with_jacobian(h: &[f64], emb: &Tensor, cfg: &EncoderConfig, excluded: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = h.len();
    match cfg.kind {
        EncoderKind::None => {
            let mut j = vec![0.0; d * d];
            (0..d).for_each(|i| j[i * d + i] = 1.0);
            Ok((h.to_vec(), j))
        }
        EncoderKind::Sparse => {
            let dict = Dictionary::from_tensor(emb, excluded)?;
            let code = sparse_encode(h, &dict, &cfg.pursuit())?;
            let j = if code.indices.is_empty() {
                vec![0.0; d * d]
            } else {
                projection_matrix(&code, &dict)?
            };
            Ok((code.reconstruction, j))
        }
        EncoderKind::TopkStatic | EncoderKind::TopkDynamic => {
            let logits = vocab_logits(h, emb)?;
            let mask = if cfg.kind == EncoderKind::TopkStatic {
                topk_static_mask(&logits, cfg.top_k, excluded)?
            } else {
                topk_dynamic_mask(&logits, cfg.delta, excluded)?
            };
            let p = masked_weights(&logits, &mask);
            let mut s = vec![0.0; d];
            let mut j = vec![0.0; d * d];
            for (i, &pi) in p.iter().enumerate() {
                if pi == 0.0 {
                    continue;
                }
                let e = emb.row_slice(i);
                for a in 0..d {
                    s[a] += pi * e[a];
                    for b in 0..d {
                        j[a * d + b] += pi * e[a] * e[b];
                    }
                }
            }
            for a in 0..d {
                for b in 0..d {
                    j[a * d + b] -= s[a] * s[b];
                }
            }
            Ok((s, j))
        }
    }
}

/// Penalty with the interpolation done between hidden sequences, each
/// interpolated state encoded, and the gradient carried back through the
/// encoder's frozen-choice Jacobian.
pub fn gradient_penalty_hidden(
    g: &mut Graph,
    critic: &dyn Critic,
    h_r: &Tensor,
    h_g: &Tensor,
    eps: f64,
    lambda: f64,
    emb: &Tensor,
    enc: &EncoderConfig,
    excluded: &[usize],
) -> Result<Var> {
    let h_hat = interpolate(h_r, h_g, eps)?;
    let (t, d) = h_hat.dims2();
    let mut rows = Vec::with_capacity(t * d);
    let mut jacobians = Vec::with_capacity(t);
    for i in 0..t {
        let (s, j) = encode_with_jacobian(h_hat.row_slice(i), emb, enc, excluded)?;
        rows.extend(s);
        jacobians.push(j);
    }
    let s_hat = g.constant(Tensor::matrix(t, d, rows)?);
    let (_, grad_s) = critic.score_and_input_grad(g, s_hat)?;
    let mut grad_h = Vec::with_capacity(t);
    for (i, j) in jacobians.into_iter().enumerate() {
        let gi = g.gather_rows(grad_s, &[i])?;
        let jv = g.constant(Tensor::matrix(d, d, j)?);
        grad_h.push(g.matmul(gi, jv)?);
    }
    let grad_h = g.concat_rows(&grad_h)?;
    penalty_of_grad(g, grad_h, lambda)
}

//! Convolutional Wasserstein critic and the explicit input gradient used
//! by the gradient penalty.

use super::dae::pad_rows;
use super::model::conv_name;
use super::params::Bound;
use crate::diff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// A scalar score of a `T × d` input whose input gradient can itself be
/// put on the tape.
pub trait Critic {
    fn score(&self, g: &mut Graph, s: Var) -> Result<Var>;

    /// Score and `∂score/∂s`, the latter differentiable with respect to
    /// the critic parameters.
    fn score_and_input_grad(&self, g: &mut Graph, s: Var) -> Result<(Var, Var)>;
}

/// `conv → relu → max over time → W p + b`, one filter bank per width.
pub struct ConvCritic {
    pub filters: Vec<(usize, Var)>,
    pub w: Var,
    pub b: Var,
    pub channels: usize,
}

impl ConvCritic {
    pub fn from_bound(g: &Graph, bound: &Bound, widths: &[usize]) -> Result<Self> {
        let filters = widths
            .iter()
            .map(|&w| Ok((w, bound.var(&conv_name(w))?)))
            .collect::<Result<Vec<_>>>()?;
        let channels = match filters.first() {
            Some(&(_, f)) => g.value(f).shape()[2],
            None => return Err(Error::Config("critic has no filters".into())),
        };
        Ok(ConvCritic {
            filters,
            w: bound.var("critic.w")?,
            b: bound.var("critic.b")?,
            channels,
        })
    }

    fn max_width(&self) -> usize {
        self.filters.iter().map(|&(w, _)| w).max().unwrap_or(1)
    }

    /// Pre-activations per bank, the pooled features and the score.
    fn forward(&self, g: &mut Graph, s: Var) -> Result<(Vec<Var>, Var)> {
        let x = pad_rows(g, s, self.max_width())?;
        let mut pre = Vec::with_capacity(self.filters.len());
        let mut pooled = Vec::with_capacity(self.filters.len());
        for &(_, f) in &self.filters {
            let y = g.conv1d(x, f)?;
            let a = g.relu(y);
            pooled.push(g.max_over_time(a)?);
            pre.push(y);
        }
        let p = g.concat_cols(&pooled)?;
        let out = g.matmul(p, self.w)?;
        let score = g.add(out, self.b)?;
        Ok((pre, score))
    }
}

/// `mask[t][c]` is 1 where step `t` is the first maximum of column `c` of
/// `relu(y)` and `y` is positive there.
fn pool_mask(y: &Tensor) -> Tensor {
    let (t, c) = y.dims2();
    let data = y.data();
    let mut mask = vec![0.0; t * c];
    for j in 0..c {
        let mut best = 0;
        for step in 1..t {
            if data[step * c + j].max(0.0) > data[best * c + j].max(0.0) {
                best = step;
            }
        }
        if data[best * c + j] > 0.0 {
            mask[best * c + j] = 1.0;
        }
    }
    Tensor::matrix(t, c, mask).expect("shape matches")
}

impl Critic for ConvCritic {
    fn score(&self, g: &mut Graph, s: Var) -> Result<Var> {
        Ok(self.forward(g, s)?.1)
    }

    fn score_and_input_grad(&self, g: &mut Graph, s: Var) -> Result<(Var, Var)> {
        let t = g.value(s).dims2().0;
        let (pre, score) = self.forward(g, s)?;
        let w_row = g.transpose(self.w)?;
        let mut total: Option<Var> = None;
        for (k, (&(_, f), &y)) in self.filters.iter().zip(&pre).enumerate() {
            let t_out = g.value(y).dims2().0;
            let mask = pool_mask(g.value(y));
            let mask = g.constant(mask);
            let wk = g.slice_cols(w_row, k * self.channels, self.channels)?;
            let ones = g.constant(Tensor::filled(&[t_out, 1], 1.0));
            let broadcast = g.matmul(ones, wk)?;
            let dy = g.mul(mask, broadcast)?;
            let dx = g.conv1d_input_grad(dy, f)?;
            total = Some(match total {
                Some(acc) => g.add(acc, dx)?,
                None => dx,
            });
        }
        let padded = total.expect("at least one bank");
        let rows: Vec<usize> = (0..t).collect();
        let grad = if g.value(padded).dims2().0 == t {
            padded
        } else {
            g.gather_rows(padded, &rows)?
        };
        Ok((score, grad))
    }
}

/// `⟨w, S⟩ + b`; its input gradient is `w` everywhere.
pub struct LinearCritic {
    pub w: Var,
    pub b: Var,
}

impl Critic for LinearCritic {
    fn score(&self, g: &mut Graph, s: Var) -> Result<Var> {
        let (vs, vw) = (g.value(s), g.value(self.w));
        if vs.shape() != vw.shape() {
            return Err(Error::dim("linear critic", vs.shape(), vw.shape()));
        }
        let p = g.mul(s, self.w)?;
        let sum = g.sum(p)?;
        g.add(sum, self.b)
    }

    fn score_and_input_grad(&self, g: &mut Graph, s: Var) -> Result<(Var, Var)> {
        Ok((self.score(g, s)?, self.w))
    }
}

/// `λ (‖∂D/∂ŝ‖₂ − 1)²` at `ŝ`.
pub fn penalty_at(g: &mut Graph, critic: &dyn Critic, s_hat: Var, lambda: f64) -> Result<Var> {
    let (_, grad) = critic.score_and_input_grad(g, s_hat)?;
    penalty_of_grad(g, grad, lambda)
}

pub fn penalty_of_grad(g: &mut Graph, grad: Var, lambda: f64) -> Result<Var> {
    let n = g.l2_norm(grad)?;
    let gap = g.affine(n, 1.0, -1.0);
    let sq = g.mul(gap, gap)?;
    Ok(g.scale(sq, lambda))
}

//! Maps a hidden state onto the embedding dictionary: sparse pursuit or the
//! softmax-weighted TopK baselines.

use serde::{Deserialize, Serialize};

use crate::diff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::sparse::{PursuitConfig, Selection};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    Sparse,
    TopkStatic,
    TopkDynamic,
    /// Hidden states go to the critic unchanged.
    None,
}

impl EncoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Sparse => "sparse",
            EncoderKind::TopkStatic => "topk_static",
            EncoderKind::TopkDynamic => "topk_dynamic",
            EncoderKind::None => "none",
        }
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(EncoderKind::Sparse),
            "topk_static" => Ok(EncoderKind::TopkStatic),
            "topk_dynamic" => Ok(EncoderKind::TopkDynamic),
            "none" => Ok(EncoderKind::None),
            other => Err(Error::Config(format!("unknown encoder kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Pursuit rounds `L`.
    pub iterations: usize,
    pub selection: Selection,
    /// `K` of the static TopK encoder.
    pub top_k: usize,
    /// Logit threshold of the dynamic TopK encoder.
    pub delta: f64,
    /// Stop gradients at the dictionary inside the encoder.
    pub freeze_atoms: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::Sparse,
            iterations: 10,
            selection: Selection::InnerProduct,
            top_k: 10,
            delta: 0.0,
            freeze_atoms: false,
        }
    }
}

impl EncoderConfig {
    pub fn pursuit(&self) -> PursuitConfig {
        PursuitConfig {
            iterations: self.iterations,
            selection: self.selection,
        }
    }
}

/// `E · h` for an `N × d` embedding table.
pub fn vocab_logits(h: &[f64], emb: &Tensor) -> Result<Vec<f64>> {
    let (n, d) = emb.dims2();
    if h.len() != d {
        return Err(Error::dim("vocab_logits", &[h.len()], emb.shape()));
    }
    Ok((0..n)
        .map(|i| emb.row_slice(i).iter().zip(h).map(|(a, b)| a * b).sum())
        .collect())
}

/// Index of the largest entry among those not excluded; lowest index on ties.
pub fn argmax_excluding(xs: &[f64], excluded: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in xs.iter().enumerate() {
        if excluded.contains(&i) {
            continue;
        }
        if best.is_none_or(|(_, b)| x > b) {
            best = Some((i, x));
        }
    }
    best.map(|(i, _)| i)
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("TopK needs K ≥ 1".into()));
    }
    if k > n {
        return Err(Error::Config(format!("TopK K={k} exceeds {n} candidate words")));
    }
    Ok(())
}

/// Selection mask of the static TopK encoder: the `k` largest logits
/// (equivalently probabilities), ties to the lower index.
pub fn topk_static_mask(logits: &[f64], k: usize, excluded: &[usize]) -> Result<Vec<bool>> {
    let mut order: Vec<usize> = (0..logits.len()).filter(|i| !excluded.contains(i)).collect();
    check_k(k, order.len())?;
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    let mut mask = vec![false; logits.len()];
    for &i in &order[..k] {
        mask[i] = true;
    }
    Ok(mask)
}

/// Selection mask of the dynamic TopK encoder: logits above `delta`, or
/// the arg-max alone when none is.
pub fn topk_dynamic_mask(logits: &[f64], delta: f64, excluded: &[usize]) -> Result<Vec<bool>> {
    let mut mask: Vec<bool> = logits
        .iter()
        .enumerate()
        .map(|(i, &l)| l > delta && !excluded.contains(&i))
        .collect();
    if !mask.iter().any(|&m| m) {
        let i = argmax_excluding(logits, excluded).ok_or(Error::ExhaustedDictionary)?;
        mask[i] = true;
    }
    Ok(mask)
}

/// Softmax mass restricted to `mask` and renormalized.
pub fn masked_weights(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { (l - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    w
}

pub fn topk_static_weights(logits: &[f64], k: usize, excluded: &[usize]) -> Result<Vec<f64>> {
    Ok(masked_weights(logits, &topk_static_mask(logits, k, excluded)?))
}

pub fn topk_dynamic_weights(logits: &[f64], delta: f64, excluded: &[usize]) -> Result<Vec<f64>> {
    Ok(masked_weights(logits, &topk_dynamic_mask(logits, delta, excluded)?))
}

fn combine(weights: &[f64], emb: &Tensor) -> Vec<f64> {
    let (_, d) = emb.dims2();
    let mut out = vec![0.0; d];
    for (i, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            for (o, e) in out.iter_mut().zip(emb.row_slice(i)) {
                *o += w * e;
            }
        }
    }
    out
}

/// `Σ p̂ᵢ eᵢ` over the `k` most probable words.
pub fn topk_static_encode(h: &[f64], emb: &Tensor, k: usize, excluded: &[usize]) -> Result<Vec<f64>> {
    let w = topk_static_weights(&vocab_logits(h, emb)?, k, excluded)?;
    Ok(combine(&w, emb))
}

/// `Σ p̂ᵢ eᵢ` over the words whose logit exceeds `delta`.
pub fn topk_dynamic_encode(h: &[f64], emb: &Tensor, delta: f64, excluded: &[usize]) -> Result<Vec<f64>> {
    let w = topk_dynamic_weights(&vocab_logits(h, emb)?, delta, excluded)?;
    Ok(combine(&w, emb))
}

/// Encoder bound to one graph's embedding leaf.
pub struct GraphEncoder<'c> {
    pub config: &'c EncoderConfig,
    pub emb: Var,
    emb_t: Option<Var>,
    pub excluded: Vec<usize>,
}

impl<'c> GraphEncoder<'c> {
    pub fn new(config: &'c EncoderConfig, emb: Var, excluded: Vec<usize>) -> Self {
        GraphEncoder {
            config,
            emb,
            emb_t: None,
            excluded,
        }
    }

    fn emb_t(&mut self, g: &mut Graph) -> Result<Var> {
        if let Some(v) = self.emb_t {
            return Ok(v);
        }
        let v = g.transpose(self.emb)?;
        self.emb_t = Some(v);
        Ok(v)
    }

    /// `1 × N` logits `h Eᵀ`.
    pub fn logits(&mut self, g: &mut Graph, h: Var) -> Result<Var> {
        let et = self.emb_t(g)?;
        g.matmul(h, et)
    }

    /// Encodes a `1 × d` state.
    pub fn encode(&mut self, g: &mut Graph, h: Var) -> Result<Var> {
        let cfg = self.config;
        match cfg.kind {
            EncoderKind::None => Ok(h),
            EncoderKind::Sparse => g.sparse_encode(h, self.emb, &self.excluded, &cfg.pursuit(), cfg.freeze_atoms),
            EncoderKind::TopkStatic | EncoderKind::TopkDynamic => {
                let logits = self.logits(g, h)?;
                let lv = g.value(logits).data();
                let mask = if cfg.kind == EncoderKind::TopkStatic {
                    topk_static_mask(lv, cfg.top_k, &self.excluded)?
                } else {
                    topk_dynamic_mask(lv, cfg.delta, &self.excluded)?
                };
                let p = g.masked_softmax(logits, mask)?;
                let table = if cfg.freeze_atoms {
                    let t = g.value(self.emb).clone();
                    g.constant(t)
                } else {
                    self.emb
                };
                g.matmul(p, table)
            }
        }
    }
}

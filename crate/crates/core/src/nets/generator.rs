use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_chacha::ChaCha8Rng;

use super::encode::{argmax_excluding, masked_weights, vocab_logits, GraphEncoder};
use super::lstm::{LstmStack, LstmState};
use super::params::Bound;
use crate::corpus::{BOS, EOS, PAD};
use crate::diff::{Graph, Var};
use crate::error::{Error, Result};

/// Words the generator never emits.
pub const NEVER_EMIT: [usize; 2] = [PAD, BOS];

/// What is fed back as the next input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decode {
    /// The previous encoded state `s_{t−1}`; keeps the chain differentiable.
    Differentiable,
    /// Embedding of the arg-max word.
    Greedy,
    /// Embedding of a word drawn from the softmax.
    Sample,
}

pub struct GenOutput {
    /// `T × d` top-layer hidden states.
    pub h: Var,
    /// `T × d` encoded states.
    pub s: Var,
    pub h_rows: Vec<Var>,
    pub s_rows: Vec<Var>,
    pub ids: Vec<usize>,
}

/// One stacked step: `v_prev` goes in, the top hidden state is `last().h`.
pub fn generator_step(g: &mut Graph, stack: &LstmStack, v_prev: Var, states: &[LstmState]) -> Result<Vec<LstmState>> {
    let d_in = g.value(stack.layers[0].wx).dims2().0;
    let got = g.value(v_prev).numel();
    if got != d_in {
        return Err(Error::dim("generator_step input", &[got], &[d_in]));
    }
    stack.step(g, v_prev, states)
}

pub fn generator_stack(g: &Graph, bound: &Bound, layers: usize) -> Result<LstmStack> {
    LstmStack::from_bound(g, bound, "gen", layers)
}

fn choose(logits: &[f64], decode: Decode, rng: Option<&mut ChaCha8Rng>) -> Result<usize> {
    match (decode, rng) {
        (Decode::Sample, Some(rng)) => {
            let mask: Vec<bool> = (0..logits.len()).map(|i| !NEVER_EMIT.contains(&i)).collect();
            let w = masked_weights(logits, &mask);
            let dist = WeightedIndex::new(&w).map_err(|e| Error::Config(format!("sampling weights: {e}")))?;
            Ok(dist.sample(rng))
        }
        (Decode::Sample, None) => Err(Error::Config("sampling decode needs an rng".into())),
        _ => argmax_excluding(logits, &NEVER_EMIT).ok_or(Error::ExhaustedDictionary),
    }
}

/// Unrolls `t_len` steps from latent `z` (`1 × d`, copied into every
/// layer's hidden state). The first input is the BOS embedding. With
/// `stop_at_eos` the unroll ends after the first emitted EOS.
#[allow(clippy::too_many_arguments)]
pub fn generate_sequence(
    g: &mut Graph,
    stack: &LstmStack,
    enc: &mut GraphEncoder<'_>,
    z: Var,
    t_len: usize,
    decode: Decode,
    mut rng: Option<&mut ChaCha8Rng>,
    stop_at_eos: bool,
) -> Result<GenOutput> {
    if t_len == 0 {
        return Err(Error::Config("sequence length must be at least 1".into()));
    }
    let emb = enc.emb;
    let mut states = stack.init_state(g, z);
    let mut v = g.gather_rows(emb, &[BOS])?;
    let (mut h_rows, mut s_rows, mut ids) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..t_len {
        states = generator_step(g, stack, v, &states)?;
        let h = states.last().expect("at least one layer").h;
        let s = enc.encode(g, h)?;
        let logits = vocab_logits(g.value(h).data(), g.value(emb))?;
        let id = choose(&logits, decode, rng.as_deref_mut())?;
        v = match decode {
            Decode::Differentiable => s,
            Decode::Greedy | Decode::Sample => g.gather_rows(emb, &[id])?,
        };
        h_rows.push(h);
        s_rows.push(s);
        ids.push(id);
        if stop_at_eos && id == EOS {
            break;
        }
    }
    let h = g.concat_rows(&h_rows)?;
    let s = g.concat_rows(&s_rows)?;
    Ok(GenOutput {
        h,
        s,
        h_rows,
        s_rows,
        ids,
    })
}

/// Mean token cross-entropy of a teacher-forced pass plus arg-max hits.
pub struct TeacherForced {
    pub loss: Var,
    pub correct: usize,
    pub tokens: usize,
    pub h_rows: Vec<Var>,
}

/// Teacher-forced unroll: inputs are BOS followed by `target` minus its
/// last token; each step predicts the next `target` token through the
/// tied logits.
pub fn teacher_forced(
    g: &mut Graph,
    stack: &LstmStack,
    emb: Var,
    init: &[LstmState],
    target: &[usize],
) -> Result<TeacherForced> {
    if target.is_empty() {
        return Err(Error::EmptyInput("target sequence"));
    }
    let mut inputs = Vec::with_capacity(target.len());
    inputs.push(BOS);
    inputs.extend_from_slice(&target[..target.len() - 1]);
    let xs = g.gather_rows(emb, &inputs)?;
    let bottom = &stack.layers[0];
    let proj = g.matmul(xs, bottom.wx)?;
    let emb_t = g.transpose(emb)?;
    let mut states = init.to_vec();
    let mut losses = Vec::with_capacity(target.len());
    let mut h_rows = Vec::with_capacity(target.len());
    let mut correct = 0;
    for (t, &y) in target.iter().enumerate() {
        let xw = g.gather_rows(proj, &[t])?;
        let mut next = Vec::with_capacity(states.len());
        let mut s = bottom.step_projected(g, xw, states[0])?;
        next.push(s);
        for (layer, &prev) in stack.layers.iter().zip(&states).skip(1) {
            s = layer.step(g, s.h, prev)?;
            next.push(s);
        }
        states = next;
        let logits = g.matmul(s.h, emb_t)?;
        if argmax_excluding(g.value(logits).data(), &[]) == Some(y) {
            correct += 1;
        }
        losses.push(g.cross_entropy(logits, y)?);
        h_rows.push(s.h);
    }
    let all = g.concat_cols(&losses)?;
    let loss = g.mean(all)?;
    Ok(TeacherForced {
        loss,
        correct,
        tokens: target.len(),
        h_rows,
    })
}

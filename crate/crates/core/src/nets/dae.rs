use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::encode::GraphEncoder;
use super::generator::{teacher_forced, TeacherForced};
use super::lstm::{run_layer, LstmLayer, LstmStack, LstmState};
use super::params::Bound;
use crate::corpus::EOS;
use crate::diff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Drops each word with probability ½ (at least one survives), groups the
/// survivors into consecutive pairs and shuffles the pairs.
pub fn corrupt(sentence: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if sentence.is_empty() {
        return Err(Error::EmptyInput("corrupt"));
    }
    let mut keep: Vec<bool> = sentence.iter().map(|_| rng.random_bool(0.5)).collect();
    if !keep.iter().any(|&k| k) {
        keep[rng.random_range(0..sentence.len())] = true;
    }
    let survivors = keep.iter().filter(|&&k| k).count();
    let mut perm: Vec<usize> = (0..survivors.div_ceil(2)).collect();
    perm.shuffle(rng);
    corrupt_with(sentence, &keep, &perm)
}

/// [`corrupt`] with the drop mask and the pair permutation given: output
/// group `j` is survivor pair `perm[j]`.
pub fn corrupt_with(sentence: &[usize], keep: &[bool], perm: &[usize]) -> Result<Vec<usize>> {
    if sentence.is_empty() {
        return Err(Error::EmptyInput("corrupt"));
    }
    if keep.len() != sentence.len() {
        return Err(Error::dim("corrupt mask", &[keep.len()], &[sentence.len()]));
    }
    let survivors: Vec<usize> = sentence.iter().zip(keep).filter(|(_, &k)| k).map(|(&w, _)| w).collect();
    let groups: Vec<&[usize]> = survivors.chunks(2).collect();
    let mut sorted = perm.to_vec();
    sorted.sort_unstable();
    if sorted != (0..groups.len()).collect::<Vec<_>>() {
        return Err(Error::Config(format!("{perm:?} is not a permutation of {} groups", groups.len())));
    }
    Ok(perm.iter().flat_map(|&j| groups[j].iter().copied()).collect())
}

/// Words of a target sequence, i.e. without its trailing EOS.
pub fn words_of(target: &[usize]) -> &[usize] {
    match target.split_last() {
        Some((&EOS, rest)) => rest,
        _ => target,
    }
}

/// Bidirectional encoder, bridge and decoder of the auto-encoder.
pub struct Dae {
    pub forward: Vec<LstmLayer>,
    pub backward: Vec<LstmLayer>,
    pub bridge_w: Var,
    pub bridge_b: Var,
    pub decoder: LstmStack,
    pub emb: Var,
}

impl Dae {
    pub fn from_bound(g: &Graph, bound: &Bound, layers: usize) -> Result<Self> {
        let layer = |p: String| LstmLayer::from_bound(g, bound, &p);
        Ok(Dae {
            forward: (0..layers).map(|l| layer(format!("dae.enc.f{l}"))).collect::<Result<_>>()?,
            backward: (0..layers).map(|l| layer(format!("dae.enc.b{l}"))).collect::<Result<_>>()?,
            bridge_w: bound.var("dae.bridge.w")?,
            bridge_b: bound.var("dae.bridge.b")?,
            decoder: LstmStack::from_bound(g, bound, "dae.dec", layers)?,
            emb: bound.var(super::model::EMB)?,
        })
    }

    /// `1 × d` summary of `input` used as the decoder's initial hidden state.
    pub fn encode(&self, g: &mut Graph, input: &[usize]) -> Result<Var> {
        if input.is_empty() {
            return Err(Error::EmptyInput("auto-encoder input"));
        }
        let mut xs = g.gather_rows(self.emb, input)?;
        let (mut last_f, mut first_b) = (None, None);
        for (f, b) in self.forward.iter().zip(&self.backward) {
            let hf = run_layer(g, f, xs, false)?;
            let hb = run_layer(g, b, xs, true)?;
            let rows = hf
                .iter()
                .zip(&hb)
                .map(|(&a, &b)| g.concat_cols(&[a, b]))
                .collect::<Result<Vec<_>>>()?;
            xs = g.concat_rows(&rows)?;
            last_f = hf.last().copied();
            first_b = hb.first().copied();
        }
        let both = g.concat_cols(&[last_f.expect("non-empty"), first_b.expect("non-empty")])?;
        let z = g.matmul(both, self.bridge_w)?;
        let z = g.add(z, self.bridge_b)?;
        Ok(g.tanh(z))
    }

    fn init_states(&self, g: &mut Graph, h0: Var) -> Vec<LstmState> {
        self.decoder.init_state(g, h0)
    }

    /// Reconstruction cross-entropy of `target` from `input`.
    pub fn loss(&self, g: &mut Graph, input: &[usize], target: &[usize]) -> Result<TeacherForced> {
        let h0 = self.encode(g, input)?;
        let init = self.init_states(g, h0);
        teacher_forced(g, &self.decoder, self.emb, &init, target)
    }

    /// Decoder states `H_r` (`T × d`) for a clean target sequence and their
    /// encodings `S_r`.
    pub fn reconstruct(&self, g: &mut Graph, enc: &mut GraphEncoder<'_>, target: &[usize]) -> Result<(Var, Var)> {
        let tf = self.loss(g, words_of(target), target)?;
        let s_rows = tf
            .h_rows
            .iter()
            .map(|&h| enc.encode(g, h))
            .collect::<Result<Vec<_>>>()?;
        let h = g.concat_rows(&tf.h_rows)?;
        let s = g.concat_rows(&s_rows)?;
        Ok((h, s))
    }
}

/// Pads a `T × d` value with zero rows up to `min_rows`.
pub fn pad_rows(g: &mut Graph, s: Var, min_rows: usize) -> Result<Var> {
    let (t, d) = g.value(s).dims2();
    if t >= min_rows {
        return Ok(s);
    }
    let zeros = g.constant(Tensor::zeros(&[min_rows - t, d]));
    g.concat_rows(&[s, zeros])
}

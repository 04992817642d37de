use rayon::prelude::*;

use super::adversarial::EXCLUDED_ATOMS;
use super::pretrain::sample_z;
use super::rng::{derive_rng, Phase};
use crate::corpus::EOS;
use crate::diff::Graph;
use crate::error::{Error, Result};
use crate::nets::{generate_sequence, generator_stack, Bound, Dae, Decode, EncoderConfig, GraphEncoder, ModelConfig, ParamStore, Role, DAE, EMB, GEN};
use crate::sparse::SparseCode;

/// `n` sentences of at most `max_len` tokens, each from its own latent
/// and random stream. Sentences end before the first EOS.
#[allow(clippy::too_many_arguments)]
pub fn generate_ids(
    store: &ParamStore,
    model: &ModelConfig,
    enc: &EncoderConfig,
    n: usize,
    max_len: usize,
    seed: u64,
    z_std: f64,
    decode: Decode,
) -> Result<Vec<Vec<usize>>> {
    if decode == Decode::Differentiable {
        return Err(Error::Config("text generation needs a greedy or sampling decode".into()));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_rng(seed, Phase::Eval, 1, i as u64);
            let z = sample_z(&mut rng, model.d, z_std);
            let mut g = Graph::new();
            let b = Bound::bind(&mut g, store, |n| if n == EMB || n.starts_with(GEN) { Role::Constant } else { Role::Skip });
            let stack = generator_stack(&g, &b, model.layers)?;
            let mut genc = GraphEncoder::new(enc, b.var(EMB)?, EXCLUDED_ATOMS.to_vec());
            let z = g.constant(z);
            let out = generate_sequence(&mut g, &stack, &mut genc, z, max_len, decode, Some(&mut rng), true)?;
            let mut ids = out.ids;
            if ids.last() == Some(&EOS) {
                ids.pop();
            }
            Ok(ids)
        })
        .collect()
}

/// Sparse codes of the auto-encoder's decoder states for a clean sentence
/// (`words` without specials), one per word.
pub fn encode_sentence(store: &ParamStore, model: &ModelConfig, enc: &EncoderConfig, words: &[usize]) -> Result<Vec<SparseCode>> {
    if words.is_empty() {
        return Err(Error::EmptyInput("sentence"));
    }
    let mut target = words.to_vec();
    target.push(EOS);
    let mut g = Graph::new();
    let b = Bound::bind(&mut g, store, |n| if n == EMB || n.starts_with(DAE) { Role::Constant } else { Role::Skip });
    let dae = Dae::from_bound(&g, &b, model.layers)?;
    let sparse = EncoderConfig {
        kind: crate::nets::EncoderKind::Sparse,
        ..enc.clone()
    };
    let mut genc = GraphEncoder::new(&sparse, b.var(EMB)?, EXCLUDED_ATOMS.to_vec());
    dae.reconstruct(&mut g, &mut genc, &target)?;
    let mut codes: Vec<SparseCode> = g.sparse_codes().into_iter().cloned().collect();
    codes.truncate(words.len());
    Ok(codes)
}

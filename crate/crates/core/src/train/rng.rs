use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams keyed by what they are used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Phase {
    DaeBatch = 1,
    DaeNoise = 2,
    GenBatch = 3,
    GenNoise = 4,
    CriticBatch = 5,
    CriticNoise = 6,
    AdvGenBatch = 7,
    AdvGenNoise = 8,
    Eval = 9,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the stream for `(seed, phase, step, index)`. Depends on nothing
/// else, so any step can be replayed in isolation.
pub fn derive_seed(seed: u64, phase: Phase, step: u64, index: u64) -> u64 {
    splitmix(seed ^ splitmix((phase as u64) ^ splitmix(step ^ splitmix(index))))
}

pub fn derive_rng(seed: u64, phase: Phase, step: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, phase, step, index))
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Independent purposes that each get their own random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Episode reset seeds.
    Env = 1,
    /// Action sampling.
    Policy = 2,
    /// Minibatch partitions.
    Sampler = 3,
    /// Imitation-versus-exploration coins and prioritized/buffer draws.
    Source = 4,
    /// Held-out evaluation seeds.
    Eval = 5,
    /// Parameter initialization.
    Init = 6,
}

/// Named ChaCha streams derived from one master seed, so that e.g. changing `xi` (which
/// changes how often the source stream is drawn) never shifts the environment's seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngStreams {
    pub env: ChaCha8Rng,
    pub policy: ChaCha8Rng,
    pub sampler: ChaCha8Rng,
    pub source: ChaCha8Rng,
    pub init: ChaCha8Rng,
}

pub fn stream(master_seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(which as u64);
    rng
}

/// The first `n` held-out evaluation episode seeds of a run with this master seed.
pub fn eval_seeds(master_seed: u64, n: usize) -> Vec<u64> {
    let mut rng = stream(master_seed, Stream::Eval);
    (0..n).map(|_| rng.gen()).collect()
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        Self {
            env: stream(master_seed, Stream::Env),
            policy: stream(master_seed, Stream::Policy),
            sampler: stream(master_seed, Stream::Sampler),
            source: stream(master_seed, Stream::Source),
            init: stream(master_seed, Stream::Init),
        }
    }
}

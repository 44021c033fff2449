use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for. Part of the stream key, so two purposes
/// never share draws even at the same agent and iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Surrogate,
    DirectQuantize,
    Init,
    Contraction,
    Partition,
    Data,
    Test,
}

impl Purpose {
    fn tag(self) -> u32 {
        match self {
            Purpose::Surrogate => 1,
            Purpose::DirectQuantize => 2,
            Purpose::Init => 3,
            Purpose::Contraction => 4,
            Purpose::Partition => 5,
            Purpose::Data => 6,
            Purpose::Test => 7,
        }
    }
}

/// Counter-style stream identifier. The generator is keyed by the whole tuple,
/// so draws depend only on `(seed, agent, iteration, purpose, sub)` and never
/// on the order in which streams are opened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub agent: u64,
    pub iteration: u64,
    pub purpose: Purpose,
    pub sub: u32,
}

impl RngStream {
    pub fn new(seed: u64, agent: usize, iteration: usize, purpose: Purpose) -> Self {
        RngStream {
            seed,
            agent: agent as u64,
            iteration: iteration as u64,
            purpose,
            sub: 0,
        }
    }

    pub fn with_sub(mut self, sub: u32) -> Self {
        self.sub = sub;
        self
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.agent.to_le_bytes());
        key[16..24].copy_from_slice(&self.iteration.to_le_bytes());
        key[24..28].copy_from_slice(&self.purpose.tag().to_le_bytes());
        key[28..32].copy_from_slice(&self.sub.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

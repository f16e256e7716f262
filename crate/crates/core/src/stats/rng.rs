use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a stream of random numbers is used for; part of its identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Purpose {
    Simulate,
    Chain(u32),
    Bootstrap,
    EmRestart(u32),
    PriorPredictive,
    PosteriorPredictive,
    ParameterDraw,
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::Simulate => 1,
            Purpose::Chain(k) => (2 << 32) | k as u64,
            Purpose::Bootstrap => 3 << 32,
            Purpose::EmRestart(k) => (4 << 32) | k as u64,
            Purpose::PriorPredictive => 5 << 32,
            Purpose::PosteriorPredictive => 6 << 32,
            Purpose::ParameterDraw => 7 << 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub design_id: u64,
    pub replicate_id: u64,
    pub purpose: Purpose,
}

/// Deterministic random stream keyed by a global seed and a stream identity.
///
/// The generator depends only on `(seed, stream_id)`, so work items can be
/// scheduled on any thread in any order without changing their draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: StreamId,
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, design_id: u64, replicate_id: u64, purpose: Purpose) -> Self {
        RngStream { seed, stream_id: StreamId { design_id, replicate_id, purpose } }
    }

    pub fn with_purpose(self, purpose: Purpose) -> Self {
        RngStream { stream_id: StreamId { purpose, ..self.stream_id }, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = self.seed;
        let mut key = [0u8; 32];
        let parts =
            [self.stream_id.design_id, self.stream_id.replicate_id, self.stream_id.purpose.code()];
        for part in parts {
            state = splitmix(&mut state) ^ part.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        }
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

//! Random streams and exponential variates.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::JobClass;

/// Purpose of a random stream. Each purpose gets its own generator so that
/// changing the policy replays the same arrivals and service requirements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    UpdateArrivals,
    QueryArrivals,
    UpdateServices,
    QueryServices,
}

impl StreamKind {
    pub fn arrivals(class: JobClass) -> Self {
        match class {
            JobClass::Update => StreamKind::UpdateArrivals,
            JobClass::Query => StreamKind::QueryArrivals,
        }
    }

    pub fn services(class: JobClass) -> Self {
        match class {
            JobClass::Update => StreamKind::UpdateServices,
            JobClass::Query => StreamKind::QueryServices,
        }
    }

    fn id(self) -> u64 {
        match self {
            StreamKind::UpdateArrivals => 0,
            StreamKind::QueryArrivals => 1,
            StreamKind::UpdateServices => 2,
            StreamKind::QueryServices => 3,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for one (seed, replication, purpose) triple.
pub fn stream(base_seed: u64, rep_index: u64, kind: StreamKind) -> ChaCha8Rng {
    let mut state = base_seed ^ rep_index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(kind.id());
    rng
}

/// Inverse-transform exponential variate for a uniform `u` in (0, 1).
pub fn exponential_from_uniform(rate: f64, u: f64) -> f64 {
    -u.ln() / rate
}

/// Exponential variate with the given rate; always strictly positive.
pub fn sample_exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    exponential_from_uniform(rate, u)
}

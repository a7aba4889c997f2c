//! Counter-based random streams.
//!
//! Every trajectory draws from its own ChaCha stream, keyed by the master seed
//! and the sweep point and selected by the trajectory index. A trajectory's
//! noise is therefore a pure function of `(seed, point, trajectory)`, which
//! makes ensembles independent of how trajectories are scheduled on workers.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type TrajectoryRng = ChaCha12Rng;

const DOMAIN_TAG: &[u8; 8] = b"polsqz01";

pub fn trajectory_rng(master_seed: u64, point: u64, trajectory: u64) -> TrajectoryRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&point.to_le_bytes());
    key[16..24].copy_from_slice(DOMAIN_TAG);
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(trajectory);
    rng
}

//! Simulation benchmarks: beampattern and drift studies, scene generators,
//! baseline calibrators and seeded parameter sweeps with CSV/JSON output.

pub mod baselines;
pub mod beam;
pub mod experiments;
pub mod scenes;
pub mod studies;

use ara_core::model::{AntennaArray, RadarConfig};
use ara_core::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream for one (grid point, trial) pair. Results never depend
/// on how trials are scheduled across threads.
pub fn trial_rng(seed: u64, point: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | trial as u64);
    rng
}

/// Radar and array shared by a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub radar: RadarConfig,
    pub array: AntennaArray,
}

impl Setup {
    pub fn ula(n: usize) -> Result<Self> {
        let radar = RadarConfig::default();
        let array = AntennaArray::half_wavelength(n, &radar)?;
        Ok(Self { radar, array })
    }
}

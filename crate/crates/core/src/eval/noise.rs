//! Gaussian positional noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geo::{offset_m, LonLat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Per-axis standard deviation in metres.
    pub sd_m: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("noise SD must be a finite non-negative number of metres, got {0}")]
pub struct InvalidNoise(pub f64);

impl NoiseConfig {
    pub fn new(sd_m: f64, seed: u64) -> Result<Self, InvalidNoise> {
        if !(sd_m.is_finite() && sd_m >= 0.0) {
            return Err(InvalidNoise(sd_m));
        }
        Ok(Self { sd_m, seed })
    }
}

/// What the noise is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTarget {
    #[default]
    Pois,
    StayPoints,
}

/// Shifts every point east and north by independent N(0, sd) metre draws.
/// Deterministic for a given seed and input order.
pub fn add_noise(points: &[LonLat], cfg: &NoiseConfig) -> Vec<LonLat> {
    if cfg.sd_m == 0.0 {
        return points.to_vec();
    }
    let normal = Normal::new(0.0, cfg.sd_m).expect("validated sd");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    points
        .iter()
        .map(|&p| {
            let east = normal.sample(&mut rng);
            let north = normal.sample(&mut rng);
            offset_m(p, east, north)
        })
        .collect()
}

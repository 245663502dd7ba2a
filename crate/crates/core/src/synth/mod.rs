//! Burst scene synthesis: a procedural HDR source is captured nine times
//! through a virtual sensor with misalignment, motion blur, exposure gain,
//! saturation, mosaicking, Poisson-Gaussian noise and 16-bit quantization.

mod degrade;
mod procedural;
mod scene;

pub use degrade::{
    add_poisson_gaussian, apply_blur, apply_rigid, mosaic, sample_poisson_gaussian, BlurKernel,
    Kernel2d, RigidTransform,
};
pub use procedural::{procedural_hdr, HdrImage};
pub use scene::{
    render_gt, synth_frame, synth_scene, BurstScene, FrameSpec, SceneSpec, SynthOptions,
    DEFAULT_FRAME_ORDER, FRAME_COUNT,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mixed Poisson-Gaussian sensor noise.
///
/// A sample `x` in `[0, 1]` is observed as `Poisson(x * W) / W + N(0, read_sigma^2)`
/// with `W = shot_fullwell`. An infinite full well disables shot noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    #[serde(with = "fullwell_serde")]
    pub shot_fullwell: f64,
    pub read_sigma: f64,
}

impl NoiseParams {
    pub fn new(shot_fullwell: f64, read_sigma: f64) -> Result<Self> {
        if !(shot_fullwell > 0.0) {
            return Err(Error::Validation(format!(
                "shot_fullwell must be > 0, got {shot_fullwell}"
            )));
        }
        if !(read_sigma >= 0.0 && read_sigma.is_finite()) {
            return Err(Error::Validation(format!(
                "read_sigma must be >= 0, got {read_sigma}"
            )));
        }
        Ok(Self {
            shot_fullwell,
            read_sigma,
        })
    }

    pub const fn noiseless() -> Self {
        Self {
            shot_fullwell: f64::INFINITY,
            read_sigma: 0.0,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.shot_fullwell.is_infinite() && self.read_sigma == 0.0
    }

    /// Model variance of an observation with clean value `x` (before clamping).
    pub fn variance(&self, x: f64) -> f64 {
        let shot = if self.shot_fullwell.is_infinite() {
            0.0
        } else {
            x.max(0.0) / self.shot_fullwell
        };
        shot + self.read_sigma * self.read_sigma
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            shot_fullwell: 1000.0,
            read_sigma: 0.002,
        }
    }
}

/// JSON has no infinity; a noiseless full well is written as `null`.
mod fullwell_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Counter-based generator for stream `stream` of `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) mod streams {
    pub const HDR: u64 = 0x4844_5200;
    pub const SPEC: u64 = 0x5350_4543;
    /// Frame `k` draws from `FRAME_BASE + k`.
    pub const FRAME_BASE: u64 = 1;
}

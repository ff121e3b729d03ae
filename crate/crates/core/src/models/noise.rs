use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::rng::{stream, Draws};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Gaussian,
    UniformSymmetric,
    Rademacher,
}

/// I.i.d. zero-mean noise `ε_i`, drawn as a pure function of
/// `(seed, step index)`.
///
/// `scale` is the standard deviation for Gaussian noise, the half-width for
/// uniform noise and the magnitude for Rademacher noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub scale: f64,
    #[serde(default = "default_stream")]
    pub stream: u64,
}

fn default_stream() -> u64 {
    stream::NOISE
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, scale: f64) -> Result<Self> {
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(LabError::Config(format!("noise scale must be finite and >= 0, got {scale}")));
        }
        Ok(Self {
            kind,
            scale,
            stream: stream::NOISE,
        })
    }

    pub fn gaussian(sigma: f64) -> Self {
        Self::new(NoiseKind::Gaussian, sigma).expect("valid sigma")
    }

    pub fn rademacher(magnitude: f64) -> Self {
        Self::new(NoiseKind::Rademacher, magnitude).expect("valid magnitude")
    }

    pub fn uniform(half_width: f64) -> Self {
        Self::new(NoiseKind::UniformSymmetric, half_width).expect("valid half-width")
    }

    /// Almost-sure bound on `|ε|` per coordinate, when one exists.
    pub fn bound(&self) -> Option<f64> {
        match self.kind {
            NoiseKind::Gaussian => None,
            NoiseKind::UniformSymmetric | NoiseKind::Rademacher => Some(self.scale),
        }
    }

    fn draw(&self, draws: &mut Draws) -> f64 {
        let unit = match self.kind {
            NoiseKind::Gaussian => draws.gaussian(),
            NoiseKind::UniformSymmetric => 2.0 * draws.uniform() - 1.0,
            NoiseKind::Rademacher => {
                if draws.coin() {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        self.scale * unit
    }

    pub fn sample_scalar(&self, seed: u64, index: usize) -> f64 {
        self.draw(&mut Draws::new(seed, self.stream, index as u64))
    }

    pub fn sample(&self, seed: u64, index: usize, dim: usize) -> Vec<f64> {
        let mut draws = Draws::new(seed, self.stream, index as u64);
        (0..dim).map(|_| self.draw(&mut draws)).collect()
    }
}

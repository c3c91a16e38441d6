//! Training-set expansion: amplitude scaling plus additive Gaussian noise on
//! RMS-normalized time-domain segments.

use serde::{Deserialize, Serialize};

use crate::dsp::Segment;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub coeffs: Vec<f64>,
    pub noise_sigma: f64,
    pub variants_per_coeff: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            coeffs: vec![0.5, 0.8, 1.0, 1.2, 1.5],
            noise_sigma: 0.002,
            variants_per_coeff: 2,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.coeffs.is_empty() {
            return Err(Error::Config(
                "augmentation needs at least one coefficient".into(),
            ));
        }
        if let Some(c) = self.coeffs.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::Config(format!(
                "augmentation coefficient {c} is not positive"
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.variants_per_coeff == 0 {
            return Err(Error::Config("variants_per_coeff must be >= 1".into()));
        }
        Ok(())
    }

    pub fn variants_per_segment(&self) -> usize {
        self.coeffs.len() * self.variants_per_coeff
    }
}

/// `coeff · s[n] + η[n]`, η ~ N(0, σ²), for every coefficient and variant.
/// Output is grouped by coefficient in configuration order.
pub fn augment_segment(seg: &Segment, cfg: &AugmentConfig, rng: &mut Rng) -> Vec<Segment> {
    let mut out = Vec::with_capacity(cfg.variants_per_segment());
    for &coeff in &cfg.coeffs {
        for _ in 0..cfg.variants_per_coeff {
            let samples = seg
                .samples
                .iter()
                .map(|&s| {
                    let scaled = coeff * s;
                    if cfg.noise_sigma > 0.0 {
                        scaled + rng.gaussian(0.0, cfg.noise_sigma)
                    } else {
                        scaled
                    }
                })
                .collect();
            out.push(Segment {
                samples,
                sample_rate: seg.sample_rate,
            });
        }
    }
    out
}

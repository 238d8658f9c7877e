//! Stochastic perturbations of binary feature vectors.
//!
//! * bit flip: `x' = x XOR n`, `n_i ~ Bernoulli(p)`
//! * feature mask: each bit is zeroed with probability `q`
//! * uniform bit flip: `n_i ~ Uniform{0, 1}` (an ablation baseline)
//!
//! Weak views use a small perturbation probability and feed pseudo-labelling,
//! strong views use a larger one and receive the consistency loss.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::FeatureVector;

/// Seeded ChaCha8 stream. Equal seeds yield equal perturbation sequences on
/// every platform.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// An independent stream derived from the same seed.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomSource { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// True with probability `p`; exact for `p = 0` and `p = 1`.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    /// `len` independent Bernoulli(`p`) draws.
    pub fn bernoulli_vector(&mut self, len: usize, p: f64) -> Vec<bool> {
        (0..len).map(|_| self.bernoulli(p)).collect()
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AugmentMode {
    BernoulliBitFlip,
    BernoulliMask,
    FlipPlusMask,
    UniformBitFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub mode: AugmentMode,
    pub weak_prob: f64,
    pub strong_prob: f64,
    /// Mask probabilities for `FlipPlusMask`; `None` reuses the flip probability.
    pub weak_mask_prob: Option<f64>,
    pub strong_mask_prob: Option<f64>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            mode: AugmentMode::BernoulliBitFlip,
            weak_prob: 0.01,
            strong_prob: 0.05,
            weak_mask_prob: None,
            strong_mask_prob: None,
        }
    }
}

fn check_prob(path: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::config(path, format!("probability {p} outside [0, 1]")))
    }
}

impl AugmentConfig {
    pub fn with_mode(mode: AugmentMode, weak_prob: f64, strong_prob: f64) -> Self {
        AugmentConfig {
            mode,
            weak_prob,
            strong_prob,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_prob("augment.weak_prob", self.weak_prob)?;
        check_prob("augment.strong_prob", self.strong_prob)?;
        if self.weak_prob > self.strong_prob {
            return Err(Error::config(
                "augment.weak_prob",
                "weak perturbation must not exceed the strong one",
            ));
        }
        let weak_mask = self.weak_mask_prob.unwrap_or(self.weak_prob);
        let strong_mask = self.strong_mask_prob.unwrap_or(self.strong_prob);
        check_prob("augment.weak_mask_prob", weak_mask)?;
        check_prob("augment.strong_mask_prob", strong_mask)?;
        if weak_mask > strong_mask {
            return Err(Error::config(
                "augment.weak_mask_prob",
                "weak mask must not exceed the strong one",
            ));
        }
        Ok(())
    }

    fn apply(&self, x: &FeatureVector, prob: f64, mask_prob: Option<f64>, rng: &mut RandomSource) -> Result<FeatureVector> {
        match self.mode {
            AugmentMode::BernoulliBitFlip => bernoulli_bit_flip(x, prob, rng),
            AugmentMode::BernoulliMask => bernoulli_mask(x, prob, rng),
            AugmentMode::FlipPlusMask => {
                let flipped = bernoulli_bit_flip(x, prob, rng)?;
                bernoulli_mask(&flipped, mask_prob.unwrap_or(prob), rng)
            }
            AugmentMode::UniformBitFlip => Ok(uniform_bit_flip(x, rng)),
        }
    }
}

/// XOR with an explicit noise vector.
pub fn xor_noise(x: &FeatureVector, noise: &[bool]) -> FeatureVector {
    debug_assert_eq!(x.len(), noise.len());
    FeatureVector::from_bools(x.bits().iter().zip(noise).map(|(&b, &n)| (b == 1) ^ n))
}

pub fn bernoulli_bit_flip(x: &FeatureVector, p: f64, rng: &mut RandomSource) -> Result<FeatureVector> {
    check_prob("flip probability", p)?;
    let noise = rng.bernoulli_vector(x.len(), p);
    Ok(xor_noise(x, &noise))
}

/// Zeroes each bit independently with probability `q`.
pub fn bernoulli_mask(x: &FeatureVector, q: f64, rng: &mut RandomSource) -> Result<FeatureVector> {
    check_prob("mask probability", q)?;
    Ok(FeatureVector::from_bools(
        x.bits().iter().map(|&b| b == 1 && !rng.bernoulli(q)),
    ))
}

pub fn uniform_bit_flip(x: &FeatureVector, rng: &mut RandomSource) -> FeatureVector {
    let noise: Vec<bool> = (0..x.len()).map(|_| rng.random::<bool>()).collect();
    xor_noise(x, &noise)
}

pub fn weak_view(x: &FeatureVector, cfg: &AugmentConfig, rng: &mut RandomSource) -> Result<FeatureVector> {
    cfg.apply(x, cfg.weak_prob, cfg.weak_mask_prob, rng)
}

pub fn strong_view(x: &FeatureVector, cfg: &AugmentConfig, rng: &mut RandomSource) -> Result<FeatureVector> {
    cfg.apply(x, cfg.strong_prob, cfg.strong_mask_prob, rng)
}

//! Stability-index arithmetic.
//!
//! The one-dimensional symmetric stable law used throughout has Lévy density
//! `A_alpha |w|^{-1-alpha}`, where
//!
//! ```text
//! A_alpha = alpha 2^{alpha-1} pi^{-1/2} Gamma((1+alpha)/2) / Gamma(1-alpha/2).
//! ```
//!
//! This is the normalization of `-(-d^2/dw^2)^{alpha/2}`, i.e. the law with
//! characteristic function `exp(-|t|^alpha)`. Chambers–Mallows–Stuck with unit
//! scale produces exactly that law, so no extra scale factor is applied.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Stability index, strictly inside `(0, 2)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct StabilityIndex(f64);

impl StabilityIndex {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 && alpha < 2.0 {
            Ok(Self(alpha))
        } else {
            Err(invalid("alpha", format!("{alpha} is not in the open interval (0, 2)")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for StabilityIndex {
    type Error = crate::Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<StabilityIndex> for f64 {
    fn from(a: StabilityIndex) -> f64 {
        a.0
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function for real arguments (Lanczos, g = 7, nine terms) with the
/// reflection formula below 1/2. Poles return NaN.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        let s = (PI * x).sin();
        if s == 0.0 {
            return f64::NAN;
        }
        return PI / (s * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (k, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

/// The generator constant `A_alpha`.
pub fn compute_a_alpha(alpha: StabilityIndex) -> f64 {
    let a = alpha.get();
    a * 2f64.powf(a - 1.0) / PI.sqrt() * gamma((1.0 + a) / 2.0) / gamma(1.0 - a / 2.0)
}

/// The constant `Ã_alpha` with `L_{e_d} (r^2-|y|^2)_+^{alpha/2} = -Ã_alpha` in the ball.
pub fn compute_a_tilde_alpha(alpha: StabilityIndex) -> f64 {
    let a = alpha.get();
    2f64.powf(a) / PI.sqrt() * gamma((1.0 + a) / 2.0) * gamma(1.0 + a / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConstants {
    pub a_alpha: f64,
    pub a_tilde_alpha: f64,
}

impl GeneratorConstants {
    pub fn new(alpha: StabilityIndex) -> Self {
        Self {
            a_alpha: compute_a_alpha(alpha),
            a_tilde_alpha: compute_a_tilde_alpha(alpha),
        }
    }
}

/// Seeded, splittable random stream.
///
/// Every stream is a ChaCha8 keystream keyed by the master seed and selected
/// by a 64-bit stream id, so stream `k` is the same no matter which worker
/// draws it.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream);
        Self { rng }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard exponential variate.
    #[inline]
    pub fn exponential(&mut self) -> f64 {
        -self.uniform_open().ln()
    }
}

/// Chambers–Mallows–Stuck sampler for the standard symmetric stable law.
#[derive(Debug, Clone, Copy)]
pub struct StableSampler {
    alpha: f64,
    inv_alpha: f64,
    exponent: f64,
}

impl StableSampler {
    pub fn new(alpha: StabilityIndex) -> Self {
        let a = alpha.get();
        Self {
            alpha: a,
            inv_alpha: 1.0 / a,
            exponent: (1.0 - a) / a,
        }
    }

    #[inline]
    pub fn sample(&self, rng: &mut RandomStream) -> f64 {
        let v = PI * rng.uniform_open() - FRAC_PI_2;
        if self.alpha == 1.0 {
            return v.tan();
        }
        let w = rng.exponential();
        let a = self.alpha;
        let log_mag = self.exponent * (((1.0 - a) * v).cos().ln() - w.ln())
            - self.inv_alpha * v.cos().ln();
        (a * v).sin() * log_mag.exp()
    }

    /// Increment over a time span `dt`, by self-similarity `dt^{1/alpha} S`.
    #[inline]
    pub fn increment(&self, dt_scale: f64, rng: &mut RandomStream) -> f64 {
        dt_scale * self.sample(rng)
    }

    /// `dt^{1/alpha}`, the factor used by [`Self::increment`].
    pub fn time_scale(&self, dt: f64) -> Result<f64> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("time span must be positive, got {dt}")));
        }
        Ok(dt.powf(self.inv_alpha))
    }
}

pub fn sample_standard_stable(alpha: StabilityIndex, rng: &mut RandomStream) -> f64 {
    StableSampler::new(alpha).sample(rng)
}

pub fn sample_increment(alpha: StabilityIndex, dt: f64, rng: &mut RandomStream) -> Result<f64> {
    let sampler = StableSampler::new(alpha);
    let scale = sampler.time_scale(dt)?;
    Ok(sampler.increment(scale, rng))
}

//! Fixed-point encoding of real-valued weights into the plaintext ring.
//!
//! `x` maps to `round(x·S)`, negatives wrapping to `M − |round(x·S)|`.
//! Decoding reads the upper half of the ring as negative.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SCALE: u64 = 1_000_000;
pub const DEFAULT_MAX_WEIGHT: f64 = 1_000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointCodec {
    scale: u64,
    #[serde(with = "crate::crypto::decimal")]
    modulus: BigUint,
    max_weight: f64,
}

impl FixedPointCodec {
    /// Fails unless `M > 2·S·V_max·n_clients`.
    pub fn new(scale: u64, modulus: BigUint, max_weight: f64, n_clients: usize) -> Result<Self> {
        if scale == 0 {
            return Err(Error::Config("scale must be ≥ 1".into()));
        }
        if !(max_weight.is_finite() && max_weight > 0.0) {
            return Err(Error::Config(format!("invalid max weight {max_weight}")));
        }
        let bound = 2.0 * scale as f64 * max_weight * n_clients.max(1) as f64;
        if modulus.to_f64().unwrap_or(f64::INFINITY) <= bound {
            return Err(Error::Config(format!(
                "ring modulus of {} bits too small for scale {scale}, V_max {max_weight}, {n_clients} clients",
                modulus.bits()
            )));
        }
        Ok(Self {
            scale,
            modulus,
            max_weight,
        })
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn max_weight(&self) -> f64 {
        self.max_weight
    }

    pub fn bit_length(&self) -> u64 {
        self.modulus.bits()
    }

    pub fn encode(&self, x: f64) -> Result<BigUint> {
        if !x.is_finite() || x.abs() > self.max_weight {
            return Err(Error::Range(format!("{x} outside ±{}", self.max_weight)));
        }
        let v = (x * self.scale as f64).round_ties_even();
        let mag = BigUint::from(v.abs() as u128);
        Ok(if v < 0.0 && !mag.is_zero() {
            &self.modulus - mag
        } else {
            mag
        })
    }

    pub fn decode(&self, pt: &BigUint) -> f64 {
        self.decode_at(pt, 1)
    }

    /// Decodes a value carrying `S^power`, i.e. a product of `power` encodings.
    pub fn decode_at(&self, pt: &BigUint, power: u32) -> f64 {
        let denom = (self.scale as f64).powi(power as i32);
        let pt = pt % &self.modulus;
        let half = &self.modulus >> 1;
        if pt > half {
            -((&self.modulus - pt).to_f64().unwrap_or(f64::INFINITY) / denom)
        } else {
            pt.to_f64().unwrap_or(f64::INFINITY) / denom
        }
    }

    /// Encodes the rational `num/den` as `round_half_even(num·S/den)`.
    pub fn encode_ratio(&self, num: u64, den: u64) -> Result<BigUint> {
        if den == 0 {
            return Err(Error::Config("zero denominator".into()));
        }
        let scaled = num as u128 * self.scale as u128;
        let (q, r) = (scaled / den as u128, scaled % den as u128);
        let twice = 2 * r;
        let q = match twice.cmp(&(den as u128)) {
            std::cmp::Ordering::Greater => q + 1,
            std::cmp::Ordering::Equal if q % 2 == 1 => q + 1,
            _ => q,
        };
        let v = BigUint::from(q);
        if v >= self.modulus {
            return Err(Error::Range(format!("{num}/{den} overflows the ring")));
        }
        Ok(v)
    }
}

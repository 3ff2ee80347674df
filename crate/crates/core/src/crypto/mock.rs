//! Identity "encryption" over `Z_M`, for exercising the layers above the
//! cryptography quickly. Offers no confidentiality whatsoever.

use num_bigint::{BigUint, RandBigInt};
use num_traits::Zero;
use rand::RngCore;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MockKey {
    modulus: BigUint,
}

impl MockKey {
    pub fn new(modulus: BigUint) -> Self {
        assert!(modulus > BigUint::from(1u32), "mock ring needs M ≥ 2");
        Self { modulus }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn random(&self, rng: &mut dyn RngCore) -> BigUint {
        rng.gen_biguint_below(&self.modulus)
    }

    pub fn add(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a + b) % &self.modulus
    }

    pub fn neg(&self, a: &BigUint) -> BigUint {
        let a = a % &self.modulus;
        if a.is_zero() {
            a
        } else {
            &self.modulus - a
        }
    }

    pub fn scalar_mul(&self, a: &BigUint, k: &BigUint) -> BigUint {
        (a * k) % &self.modulus
    }
}

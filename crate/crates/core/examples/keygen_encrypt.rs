//! Key generation, encryption and the homomorphic operations.
//!
//!     cargo run --release --example keygen_encrypt

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use skefl::crypto::{keygen, op_counts, FixedPointCodec, DEFAULT_MAX_WEIGHT, DEFAULT_SCALE};

fn main() -> skefl::error::Result<()> {
    let keys = keygen(1024, 1)?;
    let pk = &keys.pk;
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    println!("modulus: {} bits", pk.plaintext_modulus().bits());

    let a = keys.encrypt(&BigUint::from(3u32), &mut rng)?;
    let b = keys.encrypt(&BigUint::from(4u32), &mut rng)?;
    println!("dec(enc 3 + enc 4) = {}", keys.decrypt(&pk.add(&a, &b)?)?);
    println!("dec(7 · enc 6)     = {}", keys.decrypt(&pk.scalar_mul(&keys.encrypt(&BigUint::from(6u32), &mut rng)?, &BigUint::from(7u32))?)?);
    println!("dec(a + (−a))      = {}", keys.decrypt(&pk.add(&a, &pk.neg(&a)?)?)?);

    // real numbers go through the fixed-point codec
    let codec = FixedPointCodec::new(DEFAULT_SCALE, pk.plaintext_modulus().clone(), DEFAULT_MAX_WEIGHT, 3)?;
    let x = codec.encode(-1.25)?;
    let y = codec.encode(0.5)?;
    let sum = pk.add(&keys.encrypt(&x, &mut rng)?, &keys.encrypt(&y, &mut rng)?)?;
    println!("-1.25 + 0.5        = {}", codec.decode(&keys.decrypt(&sum)?));

    println!("ciphertext bytes: {}", sum.to_bytes().len());
    println!("ops so far: {:?}", op_counts());
    Ok(())
}

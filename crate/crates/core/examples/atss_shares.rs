//! Splitting a ciphertext vector into shares, merging them back and checking
//! a share set against the owner's published digest.
//!
//!     cargo run --release --example atss_shares

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use skefl::atss::{self, ShareSet};
use skefl::crypto::{keygen, Ciphertext};

fn main() -> skefl::error::Result<()> {
    let keys = keygen(1024, 2)?;
    let pk = &keys.pk;
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let ctv = pk.random_vec(8, &mut rng)?;

    // owner 1 keeps one share and sends f = 2 to a random pair of the other 4
    let set = ShareSet::split(1, 0, &ctv, 2, 5, pk, &mut rng)?;
    println!("recipients (last is the owner): {:?}", set.recipients());
    let merged = atss::merge(set.shares(), pk)?;
    println!("merge(split(x)) == x: {}", merged == ctv);

    let digest = atss::publish(1, 0, &ctv);
    println!("digest: {}", digest.to_json());
    println!("honest shares verify: {}", atss::verify(&digest, set.shares(), pk));

    let mut tampered = set.shares().to_vec();
    let el = &mut tampered[0].elements_mut()[3];
    let mut v = el.value().clone();
    v.set_bit(10, !v.bit(10));
    *el = Ciphertext::from_raw(el.backend(), v);
    println!("one flipped bit verifies: {}", atss::verify(&digest, &tampered, pk));
    println!("two of three shares verify: {}", atss::verify(&digest, &set.shares()[..2], pk));

    let next = set.resplit(1, &ctv, 5, pk, &mut rng, 1)?;
    println!("round 1 recipients: {:?}", next.recipients());
    println!("client 2 may resplit: {}", set.resplit(2, &ctv, 5, pk, &mut rng, 1).is_ok());
    Ok(())
}

//! Asymmetric threshold secret sharing of ciphertext vectors.
//!
//! A vector is split into `f + 1` shares: `f` fresh encryptions of uniform
//! ring vectors, and a last share equal to the input minus their sum. The
//! homomorphic sum of all shares is bit-identical to the input, while any
//! `f` of them decrypt to something uniform. The owner keeps the last share
//! and the intact input, which is what makes it asymmetric: only the owner can
//! re-split.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crypto::{CiphertextVector, PublicKey};
use crate::error::{Error, Result};

/// Splits `ctv` into `f + 1` shares; the last one is the self share.
pub fn split(ctv: &CiphertextVector, f: usize, pk: &PublicKey, rng: &mut dyn RngCore) -> Result<Vec<CiphertextVector>> {
    pk.check_vec(ctv)?;
    if f == 0 {
        return Ok(vec![ctv.clone()]);
    }
    let mut shares = Vec::with_capacity(f + 1);
    for _ in 0..f {
        shares.push(pk.random_vec(ctv.len(), rng)?);
    }
    let mut sum = shares[0].clone();
    for s in &shares[1..] {
        sum = pk.add_vec(&sum, s)?;
    }
    shares.push(pk.add_vec(ctv, &pk.neg_vec(&sum)?)?);
    Ok(shares)
}

/// Element-wise homomorphic sum. The result does not depend on the order of
/// `shares`.
pub fn merge(shares: &[CiphertextVector], pk: &PublicKey) -> Result<CiphertextVector> {
    let (first, rest) = shares.split_first().ok_or(Error::EmptyMerge)?;
    pk.check_vec(first)?;
    rest.iter().try_fold(first.clone(), |acc, s| pk.add_vec(&acc, s))
}

/// The `f + 1` shares of one owner's vector for one round, with the client
/// each one goes to. The last recipient is always the owner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareSet {
    owner: usize,
    round: u64,
    shares: Vec<CiphertextVector>,
    recipients: Vec<usize>,
}

impl ShareSet {
    pub fn new(owner: usize, round: u64, shares: Vec<CiphertextVector>, recipients: Vec<usize>) -> Result<Self> {
        if shares.is_empty() || shares.len() != recipients.len() {
            return Err(Error::Config(format!(
                "{} shares for {} recipients",
                shares.len(),
                recipients.len()
            )));
        }
        if recipients.last() != Some(&owner) {
            return Err(Error::Config("the owner must hold the last share".into()));
        }
        if recipients.iter().collect::<BTreeSet<_>>().len() != recipients.len() {
            return Err(Error::Config("recipients must be distinct".into()));
        }
        Ok(Self {
            owner,
            round,
            shares,
            recipients,
        })
    }

    /// Splits `ctv` and sends the foreign shares to a uniform `f`-subset of
    /// the other clients in `1..=n`.
    pub fn split(
        owner: usize,
        round: u64,
        ctv: &CiphertextVector,
        f: usize,
        n: usize,
        pk: &PublicKey,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        if owner == 0 || owner > n {
            return Err(Error::Config(format!("owner {owner} not in 1..={n}")));
        }
        if f + 1 > n {
            return Err(Error::Config(format!("f + 1 = {} shares exceed n = {n} clients", f + 1)));
        }
        let mut recipients = choose_recipients(owner, f, n, rng);
        recipients.push(owner);
        let shares = split(ctv, f, pk, rng)?;
        Self::new(owner, round, shares, recipients)
    }

    /// A fresh split of the intact vector for a later round. Only the owner
    /// holds the intact vector, so any other caller is refused.
    pub fn resplit(
        &self,
        caller: usize,
        ctv: &CiphertextVector,
        n: usize,
        pk: &PublicKey,
        rng: &mut dyn RngCore,
        round: u64,
    ) -> Result<Self> {
        if caller != self.owner {
            return Err(Error::Unauthorized(format!(
                "client {caller} cannot re-split the model of client {}",
                self.owner
            )));
        }
        Self::split(self.owner, round, ctv, self.f(), n, pk, rng)
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn f(&self) -> usize {
        self.shares.len() - 1
    }

    pub fn shares(&self) -> &[CiphertextVector] {
        &self.shares
    }

    pub fn recipients(&self) -> &[usize] {
        &self.recipients
    }

    /// `(recipient, share)` for the shares that leave the owner.
    pub fn outgoing(&self) -> impl Iterator<Item = (usize, &CiphertextVector)> {
        self.recipients.iter().copied().zip(&self.shares).take(self.f())
    }

    pub fn self_share(&self) -> &CiphertextVector {
        self.shares.last().expect("at least one share")
    }
}

/// Uniform `f`-subset of `{1..=n} \ {owner}`, in sampling order.
pub fn choose_recipients(owner: usize, f: usize, n: usize, rng: &mut dyn RngCore) -> Vec<usize> {
    let others: Vec<usize> = (1..=n).filter(|&j| j != owner).collect();
    let mut rng = rng;
    sample(&mut rng, others.len(), f).into_iter().map(|k| others[k]).collect()
}

/// Published commitment to an owner's distributed vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareDigest {
    pub owner: usize,
    pub round: u64,
    #[serde(with = "hex_digest")]
    pub sha256: [u8; 32],
}

mod hex_digest {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let bytes = hex::decode(String::deserialize(d)?).map_err(D::Error::custom)?;
        bytes.try_into().map_err(|_| D::Error::custom("digest must be 32 bytes"))
    }
}

impl ShareDigest {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("digest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn hash_vector(ctv: &CiphertextVector) -> [u8; 32] {
    Sha256::digest(ctv.to_bytes()).into()
}

pub fn publish(owner: usize, round: u64, ctv: &CiphertextVector) -> ShareDigest {
    ShareDigest {
        owner,
        round,
        sha256: hash_vector(ctv),
    }
}

/// True iff the shares merge to the published vector. Anything that cannot
/// be merged (no shares, ragged lengths, foreign ciphertexts) fails.
pub fn verify(digest: &ShareDigest, shares: &[CiphertextVector], pk: &PublicKey) -> bool {
    match merge(shares, pk) {
        Ok(v) => hash_vector(&v) == digest.sha256,
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, KeyPair};
    use num_bigint::BigUint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    fn plain(v: &[u64]) -> Vec<BigUint> {
        v.iter().map(|&x| BigUint::from(x)).collect()
    }

    #[test]
    fn zero_collusion_split_is_the_input() {
        let kp = keygen(128, 1).unwrap();
        let ctv = kp.encrypt_vec(&plain(&[1, 2, 3]), &mut rng(1)).unwrap();
        let shares = split(&ctv, 0, &kp.pk, &mut rng(2)).unwrap();
        assert_eq!(shares, vec![ctv]);
    }

    #[test]
    fn mock_share_plaintexts_sum_to_the_secret() {
        let kp = KeyPair::mock(BigUint::from(1u64 << 32));
        let ctv = kp.encrypt_vec(&plain(&[7]), &mut rng(0)).unwrap();
        let shares = split(&ctv, 2, &kp.pk, &mut rng(3)).unwrap();
        assert_eq!(shares.len(), 3);
        let sum: u64 = shares.iter().map(|s| kp.decrypt(&s.elements()[0]).unwrap().iter_u64_digits().next().unwrap_or(0)).sum();
        assert_eq!(sum % (1 << 32), 7);
        assert_ne!(kp.decrypt_vec(&shares[0]).unwrap(), plain(&[7]));
    }

    #[test]
    fn paillier_merge_inverts_split() {
        let kp = keygen(128, 2).unwrap();
        let mut r = rng(4);
        let pts = plain(&[0, 5, 99, 12345]);
        let ctv = kp.encrypt_vec(&pts, &mut r).unwrap();
        let shares = split(&ctv, 2, &kp.pk, &mut r).unwrap();
        let merged = merge(&shares, &kp.pk).unwrap();
        assert_eq!(merged, ctv);
        assert_eq!(kp.decrypt_vec(&merged).unwrap(), pts);
        let reversed: Vec<_> = shares.iter().rev().cloned().collect();
        assert_eq!(merge(&reversed, &kp.pk).unwrap(), ctv);
        assert_eq!(merge(&shares[..1], &kp.pk).unwrap(), shares[0]);
    }

    #[test]
    fn merge_errors() {
        let kp = KeyPair::mock_default();
        assert_eq!(merge(&[], &kp.pk), Err(Error::EmptyMerge));
        let a = kp.encrypt_vec(&plain(&[1, 2]), &mut rng(0)).unwrap();
        let b = kp.encrypt_vec(&plain(&[1]), &mut rng(0)).unwrap();
        assert!(matches!(merge(&[a, b], &kp.pk), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn verify_accepts_honest_rejects_partial() {
        let kp = keygen(128, 5).unwrap();
        let mut r = rng(5);
        let ctv = kp.encrypt_vec(&plain(&[3, 1, 4]), &mut r).unwrap();
        let set = ShareSet::split(2, 0, &ctv, 2, 5, &kp.pk, &mut r).unwrap();
        let d = publish(2, 0, &ctv);
        assert!(verify(&d, set.shares(), &kp.pk));
        assert!(!verify(&d, &set.shares()[..2], &kp.pk));
        assert!(!verify(&d, &[], &kp.pk));
        assert_eq!(ShareDigest::from_json(&d.to_json()).unwrap(), d);
    }

    #[test]
    fn share_set_shape() {
        let kp = KeyPair::mock_default();
        let mut r = rng(6);
        let ctv = kp.encrypt_vec(&plain(&[1]), &mut r).unwrap();
        let set = ShareSet::split(3, 7, &ctv, 2, 5, &kp.pk, &mut r).unwrap();
        assert_eq!(set.shares().len(), 3);
        assert_eq!(set.recipients().last(), Some(&3));
        assert_eq!(set.outgoing().count(), 2);
        assert!(set.outgoing().all(|(j, _)| j != 3 && (1..=5).contains(&j)));
        assert!(ShareSet::split(1, 0, &ctv, 2, 2, &kp.pk, &mut r).is_err());
        assert!(ShareSet::new(1, 0, vec![ctv.clone(), ctv.clone()], vec![1, 2]).is_err());
        assert!(ShareSet::new(1, 0, vec![ctv.clone(), ctv.clone()], vec![1, 1]).is_err());
    }

    #[test]
    fn resplit_is_owner_only_and_deterministic() {
        let kp = keygen(128, 7).unwrap();
        let mut r = rng(7);
        let ctv = kp.encrypt_vec(&plain(&[8, 9]), &mut r).unwrap();
        let set = ShareSet::split(1, 0, &ctv, 1, 3, &kp.pk, &mut r).unwrap();
        assert!(matches!(set.resplit(2, &ctv, 3, &kp.pk, &mut r, 1), Err(Error::Unauthorized(_))));
        let a = set.resplit(1, &ctv, 3, &kp.pk, &mut rng(9), 1).unwrap();
        let b = set.resplit(1, &ctv, 3, &kp.pk, &mut rng(9), 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.round(), 1);
        assert_eq!(merge(a.shares(), &kp.pk).unwrap(), ctv);
        let d = publish(1, 1, &ctv);
        let mixed = vec![set.shares()[0].clone(), a.shares()[1].clone()];
        assert!(!verify(&d, &mixed, &kp.pk));
    }
}

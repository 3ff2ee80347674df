//! Semi-honest coalition of the server and up to `f` clients: joint views,
//! a share-reconstruction attack, and a distinguishing game.
//!
//! The coalition holds the secret key whenever it contains a client. It sees
//! every message the server sends or receives, every digest on the board, and
//! every message to or from a colluder. The victim's kept share is never sent
//! anywhere, so it never appears in a view.

use std::collections::BTreeSet;
use std::sync::Arc;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::atss;
use crate::crypto::{keygen, BackendId, CiphertextVector, FixedPointCodec, KeyPair, PublicKey, DEFAULT_MAX_WEIGHT, DEFAULT_SCALE};
use crate::error::{Error, Result};
use crate::fl::ModelVector;
use crate::net::{Message, MessageKind, PartyId, RoundTranscript, SimNet};
use crate::protocol::{fedavg_weight, Federation, RoundConfig, ShareRouting};
use crate::seed::{derive_rng, derive_u64};

#[derive(Clone, Debug)]
pub struct AdversaryView {
    pub victim: usize,
    pub colluders: BTreeSet<usize>,
    pub messages: Vec<Message>,
    pub pk: PublicKey,
    /// Present iff the coalition includes a client.
    pub keys: Option<Arc<KeyPair>>,
    extra_shares: Vec<CiphertextVector>,
}

impl AdversaryView {
    /// Harness-only: hands the coalition a share it could not have observed.
    pub fn grant_share(&mut self, share: CiphertextVector) {
        self.extra_shares.push(share);
    }

    /// Readable plaintexts of a vector, if the coalition can read it at all:
    /// with the secret key, or when the backend does not hide anything.
    pub fn read(&self, ctv: &CiphertextVector) -> Option<Vec<BigUint>> {
        match (&self.keys, self.pk.backend()) {
            (Some(kp), _) => kp.decrypt_vec(ctv).ok(),
            (None, BackendId::Mock) => Some(ctv.elements().iter().map(|c| c.value().clone()).collect()),
            (None, BackendId::Paillier) => None,
        }
    }

    fn vectors(&self, kind: MessageKind, from: impl Fn(PartyId) -> bool, to: impl Fn(PartyId) -> bool) -> Vec<CiphertextVector> {
        self.messages
            .iter()
            .filter(|m| m.kind == kind && from(m.sender) && to(m.receiver))
            .filter_map(|m| CiphertextVector::from_bytes(&m.payload).ok())
            .collect()
    }

    /// Shares of the victim the coalition holds.
    pub fn victim_shares(&self) -> Vec<CiphertextVector> {
        let v = PartyId::Client(self.victim);
        let mut out = self.vectors(MessageKind::Share, |s| s == v, |_| true);
        out.extend(self.extra_shares.iter().cloned());
        out
    }
}

fn in_view(m: &Message, colluders: &BTreeSet<usize>) -> bool {
    let colluding = |p: PartyId| p.client_index().is_some_and(|i| colluders.contains(&i));
    matches!(m.sender, PartyId::Server | PartyId::Board)
        || matches!(m.receiver, PartyId::Server | PartyId::Board)
        || colluding(m.sender)
        || colluding(m.receiver)
}

/// Everything the coalition `colluders` plus the server observed in
/// `transcript`.
pub fn collect_view(
    transcript: &RoundTranscript,
    colluders: &BTreeSet<usize>,
    victim: usize,
    f: usize,
    keys: &Arc<KeyPair>,
) -> Result<AdversaryView> {
    if colluders.contains(&victim) {
        return Err(Error::InvalidGame(format!("victim {victim} cannot collude against itself")));
    }
    if colluders.len() > f {
        return Err(Error::InvalidGame(format!("{} colluders exceed f = {f}", colluders.len())));
    }
    Ok(AdversaryView {
        victim,
        colluders: colluders.clone(),
        messages: transcript.messages.iter().filter(|m| in_view(m, colluders)).cloned().collect(),
        pk: keys.pk.clone(),
        keys: (!colluders.is_empty()).then(|| keys.clone()),
        extra_shares: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReconstructionOutcome {
    pub shares_seen: usize,
    /// Plaintext of the merged shares, when there was anything to merge and
    /// the coalition can read it.
    pub recovered: Option<Vec<BigUint>>,
}

impl ReconstructionOutcome {
    /// `recovered − target` in the ring.
    pub fn residual(&self, target: &[BigUint], modulus: &BigUint) -> Option<Vec<BigUint>> {
        let rec = self.recovered.as_ref()?;
        Some(rec.iter().zip(target).map(|(r, t)| ((r + modulus) - (t % modulus)) % modulus).collect())
    }

    pub fn recovers(&self, target: &[BigUint]) -> bool {
        self.recovered.as_deref() == Some(target)
    }
}

/// Merges every victim share in the view and reads the result.
pub fn reconstruction_attack(view: &AdversaryView) -> ReconstructionOutcome {
    let shares = view.victim_shares();
    let recovered = atss::merge(&shares, &view.pk).ok().and_then(|v| view.read(&v));
    ReconstructionOutcome {
        shares_seen: shares.len(),
        recovered,
    }
}

// ---------------------------------------------------------------------------
// Exhaustive collusion sweep

/// All `k`-subsets of `items`, in lexicographic order.
pub fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn go(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            go(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(items, k, 0, &mut Vec::new(), &mut out);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollusionReport {
    pub n: usize,
    pub f: usize,
    pub trials: usize,
    pub subsets_per_trial: usize,
    /// (trial, subset) pairs where the merged view equalled the victim's
    /// weighted model.
    pub recoveries: usize,
    /// Low three bits of the residual under the best subset for the
    /// coalition (most victim shares), trials with at least one share seen.
    pub buckets: [u64; 8],
    pub chi_square: f64,
    pub p_value: f64,
}

impl CollusionReport {
    pub fn passes(&self, alpha: f64) -> bool {
        self.recoveries == 0 && self.p_value > alpha
    }
}

/// Pearson statistic and upper-tail p-value against the uniform law.
pub fn chi_square_uniform(counts: &[u64]) -> (f64, f64) {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).expect("positive degrees of freedom");
    (stat, 1.0 - dist.cdf(stat))
}

/// Runs `trials` mock-backend rounds with random models and attacks each
/// with every `f`-subset of the non-victim clients. The victim is client 1.
pub fn collusion_sweep(n: usize, f: usize, m: usize, trials: usize, seed: u64) -> Result<CollusionReport> {
    let keys = KeyPair::mock_default();
    let modulus = keys.pk.plaintext_modulus().clone();
    let codec = FixedPointCodec::new(DEFAULT_SCALE, modulus.clone(), DEFAULT_MAX_WEIGHT, n)?;
    let others: Vec<usize> = (2..=n).collect();
    let coalitions = subsets(&others, f);
    let mut buckets = [0u64; 8];
    let mut recoveries = 0;
    for t in 0..trials as u64 {
        let mut rng = derive_rng(seed, "sweep-models", &[t]);
        let counts: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=100)).collect();
        let models: Vec<ModelVector> = (1..=n)
            .map(|i| ModelVector::new(i, counts[i - 1], (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect()))
            .collect();
        let cfg = RoundConfig::new(n, f, m, counts, codec.clone(), derive_u64(seed, "sweep-round", &[t]))?;
        let mut fed = Federation::new(cfg, keys.clone(), SimNet::new())?;
        fed.run_round(0, &models)?;
        let truth = fed.keys.decrypt_vec(fed.clients[0].weighted().expect("distributed"))?;
        let transcript = fed.transcript(0);
        let mut best: Option<(usize, ReconstructionOutcome)> = None;
        for coalition in &coalitions {
            let set: BTreeSet<usize> = coalition.iter().copied().collect();
            let view = collect_view(&transcript, &set, 1, f, &fed.keys)?;
            let out = reconstruction_attack(&view);
            if out.recovers(&truth) {
                recoveries += 1;
            }
            if best.as_ref().is_none_or(|(s, _)| out.shares_seen > *s) {
                best = Some((out.shares_seen, out));
            }
        }
        if let Some((seen, out)) = best {
            if seen > 0 {
                let res = out.residual(&truth, &modulus).expect("mock views are readable");
                let low = res[0].iter_u64_digits().next().unwrap_or(0) & 7;
                buckets[low as usize] += 1;
            }
        }
    }
    let (chi_square, p_value) = chi_square_uniform(&buckets);
    Ok(CollusionReport {
        n,
        f,
        trials,
        subsets_per_trial: coalitions.len(),
        recoveries,
        buckets,
        chi_square,
        p_value,
    })
}

// ---------------------------------------------------------------------------
// Distinguishing game

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub n: usize,
    pub f: usize,
    pub backend: BackendId,
    pub key_bits: u64,
    pub routing: ShareRouting,
    pub w_a: Vec<f64>,
    pub w_b: Vec<f64>,
    pub seed: u64,
}

impl GameConfig {
    pub fn new(n: usize, f: usize, backend: BackendId) -> Self {
        Self {
            n,
            f,
            backend,
            key_bits: 128,
            routing: ShareRouting::Garbled,
            w_a: vec![0.5, -0.25, 0.125, 1.0],
            w_b: vec![-0.5, 0.75, 0.0, -1.0],
            seed: 0,
        }
    }

    /// The victim is client 1; when there is a second client it is the
    /// partner, which trains the other candidate so the aggregate is the same
    /// in both worlds.
    pub fn victim(&self) -> usize {
        1
    }

    pub fn colluders(&self) -> BTreeSet<usize> {
        (self.n - self.f + 1..=self.n).collect()
    }

    /// Models of the clients other than victim and partner. Fixed and known
    /// to the adversary.
    pub fn public_model(&self, client: usize) -> Vec<f64> {
        (0..self.w_a.len()).map(|k| (client * 10 + k) as f64 / 100.0).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.w_a == self.w_b {
            return Err(Error::InvalidGame("the two candidate models are identical".into()));
        }
        if self.w_a.len() != self.w_b.len() || self.w_a.is_empty() {
            return Err(Error::InvalidGame("candidate models differ in length".into()));
        }
        if self.n == 0 || 2 * self.f + 1 > self.n {
            return Err(Error::InvalidGame(format!("n = {}, f = {} violates 2f + 1 ≤ n", self.n, self.f)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameResult {
    pub config: GameConfig,
    #[serde(rename = "T")]
    pub trials: usize,
    pub correct: usize,
    pub guesses: Vec<u8>,
    pub accuracy: f64,
    pub advantage: f64,
    /// 4σ of a fair coin over `trials`.
    pub bound: f64,
    pub pass: bool,
}

impl GameResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("game result serializes")
    }
}

/// What the adversary knows besides its view: the protocol, both candidates,
/// every other input, and the weights.
struct Knowledge {
    honest: Vec<usize>,
    modulus: BigUint,
    /// `hyp[b][i]` = weighted plaintext of client `i` (1-based) in world `b`.
    hyp: [Vec<Vec<BigUint>>; 2],
}

impl Knowledge {
    fn new(game: &GameConfig, cfg: &RoundConfig) -> Result<Self> {
        let modulus = cfg.codec.modulus().clone();
        let world = |b: usize| -> Result<Vec<Vec<BigUint>>> {
            let mut out = vec![Vec::new()];
            for i in 1..=game.n {
                let w = game_model(game, i, b);
                let wt = fedavg_weight(i, cfg)?;
                let v = w
                    .iter()
                    .map(|&x| Ok(cfg.codec.encode(x)? * &wt % &modulus))
                    .collect::<Result<Vec<_>>>()?;
                out.push(v);
            }
            Ok(out)
        };
        let colluders = game.colluders();
        Ok(Self {
            honest: (1..=game.n).filter(|i| !colluders.contains(i)).collect(),
            hyp: [world(0)?, world(1)?],
            modulus,
        })
    }

    fn sum(&self, b: usize, clients: &[usize]) -> Vec<BigUint> {
        let m = self.hyp[b][1].len();
        let mut acc = vec![BigUint::default(); m];
        for &i in clients {
            for (a, x) in acc.iter_mut().zip(&self.hyp[b][i]) {
                *a = (&*a + x) % &self.modulus;
            }
        }
        acc
    }

    /// World consistent with `observed` for the clients in `set`.
    fn decide(&self, set: &[usize], observed: &[BigUint]) -> Option<usize> {
        let hits: Vec<usize> = (0..2).filter(|&b| self.sum(b, set) == observed).collect();
        (hits.len() == 1).then(|| hits[0])
    }
}

/// Model of client `i` in world `b` (0: victim trains `w_a`).
fn game_model(game: &GameConfig, i: usize, b: usize) -> Vec<f64> {
    match (i, b) {
        (1, 0) | (2, 1) => game.w_a.clone(),
        (1, 1) | (2, 0) => game.w_b.clone(),
        _ => game.public_model(i),
    }
}

fn add_into(acc: &mut [BigUint], v: &[BigUint], modulus: &BigUint) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a = (&*a + x) % modulus;
    }
}

fn sub_into(acc: &mut [BigUint], v: &[BigUint], modulus: &BigUint) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a = (&*a + modulus - x) % modulus;
    }
}

/// Maximum-likelihood guess. Any exact match of a readable quantity against
/// one world decides; otherwise every observation is uniform and independent
/// of the coin, and a coin flip is optimal.
fn ml_guess(view: &AdversaryView, know: &Knowledge, rng: &mut impl Rng) -> usize {
    let victim = view.victim;
    // 1. the victim's shares, if the coalition holds all of them
    if let Some(rec) = reconstruction_attack(view).recovered {
        if let Some(b) = know.decide(&[victim], &rec) {
            return b;
        }
    }
    // 2. the published digest, when encryption is deterministic
    if view.pk.backend() == BackendId::Mock {
        for msg in view.messages.iter().filter(|m| m.kind == MessageKind::Digest && m.sender == PartyId::Client(victim)) {
            let Ok(text) = std::str::from_utf8(&msg.payload) else { continue };
            let Ok(d) = atss::ShareDigest::from_json(text) else { continue };
            let hits: Vec<usize> = (0..2)
                .filter(|&b| {
                    let v = &know.hyp[b][victim];
                    let elems = v.iter().map(|x| crate::crypto::Ciphertext::from_raw(BackendId::Mock, x.clone())).collect();
                    CiphertextVector::new(elems).is_ok_and(|c| atss::hash_vector(&c) == d.sha256)
                })
                .collect();
            if hits.len() == 1 {
                return hits[0];
            }
        }
    }
    // 3. garbled sums over honest sets closed under honest-to-honest shares
    if view.keys.is_some() {
        let garbled = |t: usize| {
            view.vectors(MessageKind::Garbled, |s| s == PartyId::Client(t), |r| r == PartyId::Server)
                .first()
                .and_then(|g| view.read(g))
        };
        let colluding = |p: PartyId| p.client_index().is_some_and(|i| view.colluders.contains(&i));
        let h = &know.honest;
        for mask in 1u32..(1 << h.len()) {
            let set: Vec<usize> = (0..h.len()).filter(|k| mask >> k & 1 == 1).map(|k| h[k]).collect();
            if set.contains(&1) == set.contains(&2) {
                continue;
            }
            let member = |p: PartyId| p.client_index().is_some_and(|i| set.contains(&i));
            let m = know.hyp[0][1].len();
            let mut acc = vec![BigUint::default(); m];
            let mut ok = true;
            for &t in &set {
                match garbled(t) {
                    Some(g) => add_into(&mut acc, &g, &know.modulus),
                    None => ok = false,
                }
            }
            if !ok {
                continue;
            }
            for s in view.vectors(MessageKind::Share, colluding, member) {
                if let Some(p) = view.read(&s) {
                    sub_into(&mut acc, &p, &know.modulus);
                }
            }
            for s in view.vectors(MessageKind::Share, member, colluding) {
                if let Some(p) = view.read(&s) {
                    add_into(&mut acc, &p, &know.modulus);
                }
            }
            if let Some(b) = know.decide(&set, &acc) {
                return b;
            }
        }
    }
    rng.gen_range(0..2)
}

/// Plays `trials` independent rounds. Each trial flips a coin, runs a full
/// round, hands the coalition its view and scores the guess.
pub fn distinguishing_game(game: &GameConfig, trials: usize) -> Result<GameResult> {
    game.validate()?;
    let keys = match game.backend {
        BackendId::Paillier => keygen(game.key_bits, derive_u64(game.seed, "game-keys", &[]))?,
        BackendId::Mock => KeyPair::mock_default(),
    };
    let codec = FixedPointCodec::new(DEFAULT_SCALE, keys.pk.plaintext_modulus().clone(), DEFAULT_MAX_WEIGHT, game.n)?;
    let m = game.w_a.len();
    let base = RoundConfig::new(game.n, game.f, m, vec![10; game.n], codec, 0)?.with_routing(game.routing);
    let know = Knowledge::new(game, &base)?;
    let colluders = game.colluders();
    let mut guesses = Vec::with_capacity(trials);
    let mut correct = 0;
    for t in 0..trials as u64 {
        let mut rng = derive_rng(game.seed, "game-trial", &[t]);
        let coin = rng.gen_range(0..2);
        let mut cfg = base.clone();
        cfg.seed = derive_u64(game.seed, "game-round", &[t]);
        let models: Vec<ModelVector> = (1..=game.n).map(|i| ModelVector::new(i, 10, game_model(game, i, coin))).collect();
        let mut fed = Federation::new(cfg, keys.clone(), SimNet::new())?;
        fed.run_round(0, &models)?;
        let view = collect_view(&fed.transcript(0), &colluders, game.victim(), game.f, &fed.keys)?;
        let mut adv_rng = derive_rng(game.seed, "game-adversary", &[t]);
        let guess = ml_guess(&view, &know, &mut adv_rng);
        if guess == coin {
            correct += 1;
        }
        guesses.push(guess as u8 + 1);
    }
    let accuracy = correct as f64 / trials.max(1) as f64;
    let bound = 2.0 / (trials.max(1) as f64).sqrt();
    let advantage = (accuracy - 0.5).abs();
    Ok(GameResult {
        config: game.clone(),
        trials,
        correct,
        guesses,
        accuracy,
        advantage,
        bound,
        pass: advantage <= bound,
    })
}

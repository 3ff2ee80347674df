//! One federated round: weighted distribution of ciphertext shares, local
//! garbling by homomorphic summation, and server-side aggregation.
//!
//! All cross-party traffic goes through a [`Transport`]; phases are
//! separated by `deliver_all` barriers.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::atss::{self, ShareDigest, ShareSet};
use crate::crypto::{CiphertextVector, FixedPointCodec, KeyPair, PublicKey};
use crate::error::{Error, Result};
use crate::fl::ModelVector;
use crate::net::{Message, MessageKind, MsgCounts, PartyId, RoundTranscript, Transport};
use crate::seed::derive_rng;

/// Where clients send their shares.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareRouting {
    /// Foreign shares go to other clients, who forward only their sums.
    #[default]
    Garbled,
    /// Every share goes straight to the server, which merges per owner.
    /// Insecure; used as the no-garbling baseline of the distinguishing game.
    ServerMerge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    pub n: usize,
    pub f: usize,
    pub m: usize,
    pub sample_counts: Vec<u64>,
    pub codec: FixedPointCodec,
    pub seed: u64,
    #[serde(default)]
    pub routing: ShareRouting,
}

impl RoundConfig {
    pub fn new(n: usize, f: usize, m: usize, sample_counts: Vec<u64>, codec: FixedPointCodec, seed: u64) -> Result<Self> {
        let cfg = Self {
            n,
            f,
            m,
            sample_counts,
            codec,
            seed,
            routing: ShareRouting::Garbled,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_routing(mut self, routing: ShareRouting) -> Self {
        self.routing = routing;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("need at least one client".into()));
        }
        if 2 * self.f + 1 > self.n {
            return Err(Error::Config(format!(
                "2f + 1 = {} exceeds n = {}; the honest majority assumption fails",
                2 * self.f + 1,
                self.n
            )));
        }
        if self.m == 0 {
            return Err(Error::Config("model length must be positive".into()));
        }
        if self.sample_counts.len() != self.n {
            return Err(Error::Config(format!(
                "{} sample counts for {} clients",
                self.sample_counts.len(),
                self.n
            )));
        }
        if self.total_samples() == 0 {
            return Err(Error::Config("total sample count N is zero".into()));
        }
        // The aggregate must stay inside the signed half of the ring.
        if self.codec.modulus() <= &(self.aggregate_bound() << 1u32) {
            return Err(Error::Config(format!(
                "{}-bit ring cannot hold weighted sums of {} clients at scale {}",
                self.codec.bit_length(),
                self.n,
                self.codec.scale()
            )));
        }
        Ok(())
    }

    /// Largest magnitude the decrypted aggregate can take: it is Σ w_i·v_i
    /// with Σ w_i ≤ S + n/2 and |v_i| ≤ S·V_max + 1/2.
    pub fn aggregate_bound(&self) -> BigUint {
        let s = BigUint::from(self.codec.scale());
        let v = BigUint::from((self.codec.scale() as f64 * self.codec.max_weight()).ceil() as u64) + 1u32;
        (s + self.n) * v
    }

    pub fn total_samples(&self) -> u64 {
        self.sample_counts.iter().sum()
    }

    /// Per-element tolerance of the decrypted aggregate against exact FedAvg.
    pub fn epsilon(&self) -> f64 {
        ((self.n + 1) * (self.f + 2)) as f64 / self.codec.scale() as f64
    }
}

/// `encode(N_i / N)`, rounded half to even.
pub fn fedavg_weight(i: usize, config: &RoundConfig) -> Result<BigUint> {
    let ni = *config
        .sample_counts
        .get(i.wrapping_sub(1))
        .ok_or_else(|| Error::Config(format!("client {i} not in 1..={}", config.n)))?;
    let total = config.total_samples();
    if total == 0 {
        return Err(Error::Config("total sample count N is zero".into()));
    }
    if ni > total {
        return Err(Error::Config(format!("N_{i} = {ni} exceeds N = {total}")));
    }
    config.codec.encode_ratio(ni, total)
}

// ---------------------------------------------------------------------------
// Parties

#[derive(Clone, Debug)]
pub struct ClientState {
    index: usize,
    sample_count: u64,
    keys: Arc<KeyPair>,
    model: Option<ModelVector>,
    inbox: BTreeMap<(usize, u64), CiphertextVector>,
    own: Option<ShareSet>,
    weighted: Option<CiphertextVector>,
    global: Option<CiphertextVector>,
}

impl ClientState {
    pub fn new(index: usize, sample_count: u64, keys: Arc<KeyPair>) -> Self {
        Self {
            index,
            sample_count,
            keys,
            model: None,
            inbox: BTreeMap::new(),
            own: None,
            weighted: None,
            global: None,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn set_model(&mut self, model: ModelVector) {
        self.model = Some(model);
    }

    pub fn model(&self) -> Option<&ModelVector> {
        self.model.as_ref()
    }

    /// Shares from other owners, keyed by `(owner, round)`.
    pub fn inbox(&self) -> &BTreeMap<(usize, u64), CiphertextVector> {
        &self.inbox
    }

    pub fn own_shareset(&self) -> Option<&ShareSet> {
        self.own.as_ref()
    }

    /// The weighted ciphertext this client distributed last.
    pub fn weighted(&self) -> Option<&CiphertextVector> {
        self.weighted.as_ref()
    }

    pub fn global_ciphertext(&self) -> Option<&CiphertextVector> {
        self.global.as_ref()
    }

    /// Drops a stored share, e.g. after its owner re-split.
    pub fn discard(&mut self, owner: usize, round: u64) -> Option<CiphertextVector> {
        self.inbox.remove(&(owner, round))
    }

    /// The share this client holds for `owner`'s vector of `round`.
    pub fn held_share(&self, owner: usize, round: u64) -> Option<&CiphertextVector> {
        if owner == self.index {
            self.own.as_ref().filter(|s| s.round() == round).map(|s| s.self_share())
        } else {
            self.inbox.get(&(owner, round))
        }
    }

    fn absorb(&mut self, messages: Vec<Message>) -> Result<()> {
        for msg in messages {
            match msg.kind {
                MessageKind::Share => {
                    let owner = msg
                        .sender
                        .client_index()
                        .ok_or_else(|| Error::Malformed("share from a non-client".into()))?;
                    let ctv = CiphertextVector::from_bytes(&msg.payload)?;
                    if self.inbox.insert((owner, msg.round), ctv).is_some() {
                        return Err(Error::ProtocolOrder(format!(
                            "client {} got two shares of client {owner} for round {}",
                            self.index, msg.round
                        )));
                    }
                }
                MessageKind::GlobalModel => self.global = Some(CiphertextVector::from_bytes(&msg.payload)?),
                other => {
                    return Err(Error::ProtocolOrder(format!("client {} cannot handle {other} here", self.index)));
                }
            }
        }
        Ok(())
    }
}

/// The aggregator. It only ever holds the public key.
#[derive(Clone, Debug)]
pub struct ServerState {
    pk: PublicKey,
    received: BTreeMap<usize, CiphertextVector>,
}

impl ServerState {
    pub fn new(pk: PublicKey) -> Self {
        Self {
            pk,
            received: BTreeMap::new(),
        }
    }

    pub fn pk(&self) -> &PublicKey {
        &self.pk
    }

    pub fn received(&self) -> &BTreeMap<usize, CiphertextVector> {
        &self.received
    }

    fn absorb(&mut self, messages: Vec<Message>) -> Result<()> {
        let mut raw_shares: BTreeMap<usize, Vec<CiphertextVector>> = BTreeMap::new();
        for msg in messages {
            let client = msg
                .sender
                .client_index()
                .ok_or_else(|| Error::Malformed("server input from a non-client".into()))?;
            let ctv = CiphertextVector::from_bytes(&msg.payload)?;
            match msg.kind {
                MessageKind::Garbled => {
                    if self.received.insert(client, ctv).is_some() {
                        return Err(Error::ProtocolOrder(format!("client {client} submitted twice")));
                    }
                }
                MessageKind::Share => raw_shares.entry(client).or_default().push(ctv),
                other => return Err(Error::ProtocolOrder(format!("server cannot handle {other}"))),
            }
        }
        for (client, shares) in raw_shares {
            self.received.insert(client, atss::merge(&shares, &self.pk)?);
        }
        Ok(())
    }
}

/// Public bulletin of share digests.
#[derive(Clone, Debug, Default)]
pub struct Board {
    digests: BTreeMap<(usize, u64), ShareDigest>,
}

impl Board {
    pub fn digest(&self, owner: usize, round: u64) -> Option<&ShareDigest> {
        self.digests.get(&(owner, round))
    }

    pub fn post(&mut self, d: ShareDigest) {
        self.digests.insert((d.owner, d.round), d);
    }

    fn absorb(&mut self, messages: Vec<Message>) -> Result<()> {
        for msg in messages {
            let text = std::str::from_utf8(&msg.payload).map_err(|e| Error::Malformed(e.to_string()))?;
            self.post(ShareDigest::from_json(text)?);
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Phases

/// Encrypt, weight, split, send `f` shares, publish the digest.
pub fn skefl_dist(client: &mut ClientState, config: &RoundConfig, net: &mut dyn Transport, round: u64) -> Result<()> {
    let i = client.index;
    let model = client
        .model
        .as_ref()
        .ok_or_else(|| Error::ProtocolOrder(format!("client {i} has no local model")))?;
    if model.len() != config.m {
        return Err(Error::LengthMismatch {
            expected: config.m,
            actual: model.len(),
        });
    }
    let mut rng = derive_rng(config.seed, "client", &[round, i as u64]);
    let pts = model
        .weights
        .iter()
        .map(|&x| config.codec.encode(x))
        .collect::<Result<Vec<_>>>()?;
    let ctv = client.keys.encrypt_vec(&pts, &mut rng)?;
    let weighted = client.keys.pk.scalar_mul_vec(&ctv, &fedavg_weight(i, config)?)?;
    let set = ShareSet::split(i, round, &weighted, config.f, config.n, &client.keys.pk, &mut rng)?;
    match config.routing {
        ShareRouting::Garbled => {
            for (j, share) in set.outgoing() {
                net.send(round, PartyId::Client(i), PartyId::Client(j), MessageKind::Share, share.to_bytes())?;
            }
        }
        ShareRouting::ServerMerge => {
            for share in set.shares() {
                net.send(round, PartyId::Client(i), PartyId::Server, MessageKind::Share, share.to_bytes())?;
            }
        }
    }
    let digest = atss::publish(i, round, &weighted);
    net.send(round, PartyId::Client(i), PartyId::Board, MessageKind::Digest, digest.to_json().into_bytes())?;
    client.own = Some(set);
    client.weighted = Some(weighted);
    Ok(())
}

/// Homomorphic sum of the client's kept share and every share it received
/// for `round`. Owners that sent nothing contribute nothing.
pub fn skefl_garble(client: &ClientState, round: u64) -> Result<CiphertextVector> {
    let pk = &client.keys.pk;
    let own = client.own.as_ref().filter(|s| s.round() == round).map(|s| s.self_share());
    let mut parts: Vec<CiphertextVector> = own.into_iter().cloned().collect();
    parts.extend(client.inbox.iter().filter(|((_, r), _)| *r == round).map(|(_, v)| v.clone()));
    if parts.is_empty() {
        return Err(Error::ProtocolOrder(format!(
            "client {} has nothing to garble for round {round}",
            client.index
        )));
    }
    atss::merge(&parts, pk)
}

/// Homomorphic sum of every client's submission.
pub fn skefl_aggr(server: &ServerState, config: &RoundConfig) -> Result<CiphertextVector> {
    let missing: Vec<usize> = (1..=config.n).filter(|i| !server.received.contains_key(i)).collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteRound(format!("no submission from clients {missing:?}")));
    }
    let all: Vec<CiphertextVector> = server.received.values().cloned().collect();
    atss::merge(&all, &server.pk)
}

/// Reads an aggregate plaintext back as reals. Each element carries a weight
/// and a value, so two factors of the scale.
pub fn decode_aggregate(pts: &[BigUint], codec: &FixedPointCodec) -> Vec<f64> {
    pts.iter().map(|p| codec.decode_at(p, 2)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round: u64,
    pub global_model: Vec<f64>,
    pub msg_counts: MsgCounts,
    /// Ciphertext elements moved in share messages.
    pub share_elements: u64,
    pub bytes_total: u64,
    pub phase_timings_ms: BTreeMap<String, f64>,
}

impl RoundResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("round result serializes")
    }

    /// JSON without the wall-clock fields.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("round result serializes");
        v.as_object_mut().expect("object").remove("phase_timings_ms");
        v.to_string()
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs the phases in order: distribution, garbling, aggregation, broadcast
/// of the global ciphertext, decryption. Every client holds the same global
/// ciphertext; client 1's decryption is reported.
pub fn run_round(
    clients: &mut [ClientState],
    server: &mut ServerState,
    board: &mut Board,
    config: &RoundConfig,
    net: &mut dyn Transport,
    round: u64,
) -> Result<RoundResult> {
    if clients.len() != config.n || clients.iter().enumerate().any(|(k, c)| c.index != k + 1) {
        return Err(Error::Config("clients must be numbered 1..=n in order".into()));
    }
    let mut timings = BTreeMap::new();
    server.received.clear();

    let t = Instant::now();
    for c in clients.iter_mut() {
        skefl_dist(c, config, net, round)?;
    }
    net.deliver_all(round)?;
    board.absorb(net.take_inbox(PartyId::Board))?;
    for c in clients.iter_mut() {
        let msgs = net.take_inbox(PartyId::Client(c.index));
        c.absorb(msgs)?;
    }
    timings.insert("dist".to_string(), elapsed_ms(t));

    let t = Instant::now();
    if config.routing == ShareRouting::Garbled {
        for c in clients.iter() {
            let g = skefl_garble(c, round)?;
            net.send(round, PartyId::Client(c.index), PartyId::Server, MessageKind::Garbled, g.to_bytes())?;
        }
        net.deliver_all(round)?;
    }
    server.absorb(net.take_inbox(PartyId::Server))?;
    timings.insert("garble".to_string(), elapsed_ms(t));

    let t = Instant::now();
    let aggregate = skefl_aggr(server, config)?;
    timings.insert("aggr".to_string(), elapsed_ms(t));

    let t = Instant::now();
    let payload = aggregate.to_bytes();
    for c in clients.iter() {
        net.send(round, PartyId::Server, PartyId::Client(c.index), MessageKind::GlobalModel, payload.clone())?;
    }
    net.deliver_all(round)?;
    for c in clients.iter_mut() {
        let msgs = net.take_inbox(PartyId::Client(c.index));
        c.absorb(msgs)?;
    }
    let first = &clients[0];
    let global = first
        .global
        .as_ref()
        .ok_or_else(|| Error::IncompleteRound("global model not delivered".into()))?;
    let pts = first.keys.decrypt_small_vec(global, &config.aggregate_bound())?;
    let global_model = decode_aggregate(&pts, &config.codec);
    timings.insert("decrypt".to_string(), elapsed_ms(t));

    let transcript = net.transcript(round);
    Ok(RoundResult {
        round,
        global_model,
        msg_counts: transcript.msg_counts(),
        share_elements: transcript.share_elements(config.m),
        bytes_total: transcript.bytes_total(),
        phase_timings_ms: timings,
    })
}

/// Fetch-then-verify: `requester` collects the shares of `owner`'s round
/// vector from every holder other than itself and checks them against the
/// published digest. Costs one request and one response per remote holder.
pub fn verify_model(
    requester: PartyId,
    owner: usize,
    round: u64,
    clients: &[ClientState],
    board: &Board,
    net: &mut dyn Transport,
    pk: &PublicKey,
) -> Result<bool> {
    let owner_state = clients
        .iter()
        .find(|c| c.index == owner)
        .ok_or_else(|| Error::Config(format!("no client {owner}")))?;
    let set = owner_state
        .own
        .as_ref()
        .filter(|s| s.round() == round)
        .ok_or_else(|| Error::ProtocolOrder(format!("client {owner} has no shares for round {round}")))?;
    let digest = board
        .digest(owner, round)
        .ok_or_else(|| Error::ProtocolOrder(format!("no digest from client {owner} for round {round}")))?;

    let mut shares = Vec::new();
    let mut remote = Vec::new();
    for &holder in set.recipients() {
        if requester == PartyId::Client(holder) {
            let local = clients.iter().find(|c| c.index == holder).and_then(|c| c.held_share(owner, round));
            shares.extend(local.cloned());
        } else {
            remote.push(holder);
        }
    }
    let request = format!("{owner}:{round}").into_bytes();
    for &holder in &remote {
        net.send(round, requester, PartyId::Client(holder), MessageKind::VerifyRequest, request.clone())?;
    }
    net.deliver_all(round)?;
    for &holder in &remote {
        let asked = net
            .take_inbox(PartyId::Client(holder))
            .into_iter()
            .any(|m| m.kind == MessageKind::VerifyRequest && m.sender == requester);
        let state = clients.iter().find(|c| c.index == holder);
        let payload = match (asked, state.and_then(|c| c.held_share(owner, round))) {
            (true, Some(share)) => share.to_bytes(),
            _ => Vec::new(),
        };
        net.send(round, PartyId::Client(holder), requester, MessageKind::VerifyResponse, payload)?;
    }
    net.deliver_all(round)?;
    for msg in net.take_inbox(requester) {
        if msg.kind == MessageKind::VerifyResponse && !msg.payload.is_empty() {
            shares.push(CiphertextVector::from_bytes(&msg.payload)?);
        }
    }
    Ok(shares.len() == set.recipients().len() && atss::verify(digest, &shares, pk))
}

/// Everything needed to run repeated rounds: keys, parties and the network.
pub struct Federation<T: Transport> {
    pub config: RoundConfig,
    pub keys: Arc<KeyPair>,
    pub clients: Vec<ClientState>,
    pub server: ServerState,
    pub board: Board,
    pub net: T,
}

impl<T: Transport> Federation<T> {
    pub fn new(config: RoundConfig, keys: KeyPair, mut net: T) -> Result<Self> {
        config.validate()?;
        if config.codec.modulus() != keys.pk.plaintext_modulus() {
            return Err(Error::Config("codec ring differs from the key's plaintext ring".into()));
        }
        net.register(PartyId::Server);
        net.register(PartyId::Board);
        for i in 1..=config.n {
            net.register(PartyId::Client(i));
        }
        let keys = Arc::new(keys);
        let clients = (1..=config.n)
            .map(|i| ClientState::new(i, config.sample_counts[i - 1], keys.clone()))
            .collect();
        let server = ServerState::new(keys.pk.clone());
        Ok(Self {
            config,
            keys,
            clients,
            server,
            board: Board::default(),
            net,
        })
    }

    /// Installs `models` (one per client, in order) and runs a round.
    pub fn run_round(&mut self, round: u64, models: &[ModelVector]) -> Result<RoundResult> {
        if models.len() != self.config.n {
            return Err(Error::Config(format!("{} models for {} clients", models.len(), self.config.n)));
        }
        for (c, w) in self.clients.iter_mut().zip(models) {
            c.set_model(w.clone());
        }
        run_round(&mut self.clients, &mut self.server, &mut self.board, &self.config, &mut self.net, round)
    }

    pub fn verify_model(&mut self, requester: PartyId, owner: usize, round: u64) -> Result<bool> {
        verify_model(requester, owner, round, &self.clients, &self.board, &mut self.net, &self.keys.pk)
    }

    pub fn transcript(&self, round: u64) -> RoundTranscript {
        self.net.transcript(round)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, DEFAULT_MAX_WEIGHT, DEFAULT_SCALE};
    use crate::net::SimNet;

    fn config_for(kp: &KeyPair, n: usize, f: usize, m: usize, counts: Vec<u64>) -> RoundConfig {
        let codec = FixedPointCodec::new(DEFAULT_SCALE, kp.pk.plaintext_modulus().clone(), DEFAULT_MAX_WEIGHT, n).unwrap();
        RoundConfig::new(n, f, m, counts, codec, 9).unwrap()
    }

    fn models(ws: &[Vec<f64>], counts: &[u64]) -> Vec<ModelVector> {
        ws.iter()
            .zip(counts)
            .enumerate()
            .map(|(k, (w, &c))| ModelVector::new(k + 1, c, w.clone()))
            .collect()
    }

    #[test]
    fn weights_follow_sample_fractions() {
        let kp = KeyPair::mock_default();
        let cfg = config_for(&kp, 3, 1, 1, vec![1, 1, 1]);
        assert_eq!(fedavg_weight(1, &cfg).unwrap(), BigUint::from(333_333u32));
        let cfg = config_for(&kp, 1, 0, 1, vec![5]);
        assert_eq!(fedavg_weight(1, &cfg).unwrap(), BigUint::from(DEFAULT_SCALE));
        let cfg = config_for(&kp, 2, 0, 1, vec![4, 4]);
        assert_eq!(fedavg_weight(2, &cfg).unwrap(), BigUint::from(500_000u32));
        assert!(fedavg_weight(3, &cfg).is_err());
    }

    #[test]
    fn config_rejects_dishonest_majority_and_small_rings() {
        let kp = KeyPair::mock_default();
        let codec = FixedPointCodec::new(DEFAULT_SCALE, kp.pk.plaintext_modulus().clone(), DEFAULT_MAX_WEIGHT, 4).unwrap();
        assert!(RoundConfig::new(4, 2, 1, vec![1; 4], codec.clone(), 0).is_err());
        assert!(RoundConfig::new(3, 1, 1, vec![0; 3], codec.clone(), 0).is_err());
        assert!(RoundConfig::new(3, 1, 1, vec![1; 2], codec.clone(), 0).is_err());
        let tight = FixedPointCodec::new(DEFAULT_SCALE, BigUint::from(1u64 << 40), 1.0, 3).unwrap();
        assert!(RoundConfig::new(3, 1, 1, vec![1; 3], tight, 0).is_err());
    }

    #[test]
    fn three_clients_average_to_four() {
        let kp = keygen(128, 11).unwrap();
        let cfg = config_for(&kp, 3, 1, 1, vec![10, 10, 10]);
        let mut fed = Federation::new(cfg.clone(), kp, SimNet::new()).unwrap();
        let res = fed.run_round(0, &models(&[vec![2.0], vec![4.0], vec![6.0]], &[10, 10, 10])).unwrap();
        // each weight rounds 1/3 down to 333333/10⁶, so the mean lands 4·10⁻⁶ low
        assert!((res.global_model[0] - 3.999_996).abs() < 1e-12);
        assert!((res.global_model[0] - 4.0).abs() <= cfg.epsilon());
        assert_eq!(res.msg_counts, MsgCounts { c2c: 3, c2s: 3, s2c: 3 });
        assert_eq!(fed.transcript(0).count(MessageKind::Digest), 3);
    }

    #[test]
    fn single_client_round() {
        let kp = KeyPair::mock_default();
        let cfg = config_for(&kp, 1, 0, 2, vec![7]);
        let mut fed = Federation::new(cfg, kp, SimNet::new()).unwrap();
        let res = fed.run_round(0, &models(&[vec![0.25, -3.5]], &[7])).unwrap();
        assert_eq!(res.msg_counts, MsgCounts { c2c: 0, c2s: 1, s2c: 1 });
        assert!((res.global_model[0] - 0.25).abs() <= 2e-6);
        assert!((res.global_model[1] + 3.5).abs() <= 2e-6);
        let own = fed.clients[0].own_shareset().unwrap();
        assert_eq!(own.self_share(), fed.clients[0].weighted().unwrap());
    }

    #[test]
    fn garble_sums_inbox_and_own_share() {
        let kp = KeyPair::mock_default();
        let cfg = config_for(&kp, 3, 1, 1, vec![1, 1, 1]);
        let mut fed = Federation::new(cfg, kp.clone(), SimNet::new()).unwrap();
        fed.run_round(0, &models(&[vec![1.0], vec![2.0], vec![3.0]], &[1, 1, 1])).unwrap();
        for c in &fed.clients {
            let g = skefl_garble(c, 0).unwrap();
            let mut expect = kp.decrypt_vec(c.own_shareset().unwrap().self_share()).unwrap()[0].clone();
            for v in c.inbox().values() {
                expect += &kp.decrypt_vec(v).unwrap()[0];
            }
            assert_eq!(kp.decrypt_vec(&g).unwrap()[0], expect % kp.pk.plaintext_modulus());
        }
        let fresh = ClientState::new(4, 1, Arc::new(kp));
        assert!(matches!(skefl_garble(&fresh, 0), Err(Error::ProtocolOrder(_))));
    }

    #[test]
    fn missing_submission_is_incomplete() {
        let kp = KeyPair::mock_default();
        let cfg = config_for(&kp, 3, 1, 1, vec![1, 1, 1]);
        let server = ServerState::new(kp.pk.clone());
        assert!(matches!(skefl_aggr(&server, &cfg), Err(Error::IncompleteRound(_))));
    }

    #[test]
    fn verification_message_counts() {
        let kp = keygen(128, 12).unwrap();
        let cfg = config_for(&kp, 5, 2, 2, vec![3, 1, 4, 1, 5]);
        let mut fed = Federation::new(cfg, kp, SimNet::new()).unwrap();
        let ws: Vec<Vec<f64>> = (0..5).map(|k| vec![k as f64, -(k as f64)]).collect();
        fed.run_round(0, &models(&ws, &[3, 1, 4, 1, 5])).unwrap();
        let before = fed.transcript(0);
        assert!(fed.verify_model(PartyId::Client(3), 3, 0).unwrap());
        let after = fed.transcript(0);
        let delta = |k| after.count(k) - before.count(k);
        assert_eq!(delta(MessageKind::VerifyRequest), 2);
        assert_eq!(delta(MessageKind::VerifyResponse), 2);

        let before = fed.transcript(0);
        assert!(fed.verify_model(PartyId::Server, 1, 0).unwrap());
        let after = fed.transcript(0);
        assert_eq!(after.count(MessageKind::VerifyRequest) - before.count(MessageKind::VerifyRequest), 3);

        let holder = fed.clients[0].own_shareset().unwrap().recipients()[0];
        fed.clients[holder - 1].discard(1, 0);
        assert!(!fed.verify_model(PartyId::Client(1), 1, 0).unwrap());
    }

    #[test]
    fn server_merge_reconstructs_per_owner() {
        let kp = KeyPair::mock_default();
        let cfg = config_for(&kp, 3, 1, 1, vec![1, 1, 1]).with_routing(ShareRouting::ServerMerge);
        let mut fed = Federation::new(cfg, kp, SimNet::new()).unwrap();
        let res = fed.run_round(0, &models(&[vec![3.0], vec![3.0], vec![3.0]], &[1, 1, 1])).unwrap();
        assert!((res.global_model[0] - 3.0).abs() < 1e-5);
        assert_eq!(res.msg_counts, MsgCounts { c2c: 0, c2s: 6, s2c: 3 });
        for c in &fed.clients {
            assert_eq!(fed.server.received()[&c.index()], *c.weighted().unwrap());
        }
    }
}

//! In-process message fabric with full transcript capture.
//!
//! Parties enqueue messages with [`Transport::send`]; nothing moves until
//! [`Transport::deliver_all`], which hands every pending message of the round
//! to its receiver's inbox in a fixed order (sender, then sequence number).
//! The log keeps every message ever sent, so per-round transcripts, counters
//! and adversary views are all folds over one list.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_rng;

/// A protocol participant. Clients are numbered from 1. `Board` is the
/// public bulletin where share digests are posted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartyId {
    Server,
    Client(usize),
    Board,
}

impl PartyId {
    pub fn client_index(self) -> Option<usize> {
        match self {
            PartyId::Client(i) => Some(i),
            _ => None,
        }
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Server => write!(f, "server"),
            PartyId::Client(i) => write!(f, "client{i}"),
            PartyId::Board => write!(f, "board"),
        }
    }
}

impl FromStr for PartyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "server" => Ok(PartyId::Server),
            "board" => Ok(PartyId::Board),
            _ => s
                .strip_prefix("client")
                .and_then(|i| i.parse().ok())
                .map(PartyId::Client)
                .ok_or_else(|| Error::Malformed(format!("party id {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Share,
    Garbled,
    GlobalModel,
    Digest,
    VerifyRequest,
    VerifyResponse,
}

impl MessageKind {
    pub const ALL: [MessageKind; 6] = [
        MessageKind::Share,
        MessageKind::Garbled,
        MessageKind::GlobalModel,
        MessageKind::Digest,
        MessageKind::VerifyRequest,
        MessageKind::VerifyResponse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Share => "share",
            MessageKind::Garbled => "garbled",
            MessageKind::GlobalModel => "global_model",
            MessageKind::Digest => "digest",
            MessageKind::VerifyRequest => "verify_request",
            MessageKind::VerifyResponse => "verify_response",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u64,
    pub round: u64,
    pub sender: PartyId,
    pub receiver: PartyId,
    pub kind: MessageKind,
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
}

mod hex_bytes {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(D::Error::custom)
    }
}

/// Client-to-client, client-to-server and server-to-client totals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsgCounts {
    pub c2c: u64,
    pub c2s: u64,
    pub s2c: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTranscript {
    pub round: u64,
    pub messages: Vec<Message>,
    pub counters: BTreeMap<MessageKind, u64>,
    pub bytes: BTreeMap<MessageKind, u64>,
}

impl RoundTranscript {
    pub fn from_messages(round: u64, messages: Vec<Message>) -> Self {
        let mut counters = BTreeMap::new();
        let mut bytes = BTreeMap::new();
        for m in &messages {
            *counters.entry(m.kind).or_insert(0) += 1;
            *bytes.entry(m.kind).or_insert(0) += m.payload.len() as u64;
        }
        Self {
            round,
            messages,
            counters,
            bytes,
        }
    }

    pub fn count(&self, kind: MessageKind) -> u64 {
        self.counters.get(&kind).copied().unwrap_or(0)
    }

    pub fn bytes_total(&self) -> u64 {
        self.bytes.values().sum()
    }

    pub fn msg_counts(&self) -> MsgCounts {
        let mut c = MsgCounts::default();
        for m in &self.messages {
            match (m.sender, m.receiver) {
                (PartyId::Client(_), PartyId::Client(_)) => c.c2c += 1,
                (PartyId::Client(_), PartyId::Server) => c.c2s += 1,
                (PartyId::Server, PartyId::Client(_)) => c.s2c += 1,
                _ => {}
            }
        }
        c
    }

    /// Ciphertext elements carried by share messages, the quantity the
    /// per-element complexity bound talks about.
    pub fn share_elements(&self, m: usize) -> u64 {
        self.count(MessageKind::Share) * m as u64
    }

    /// True when the cached counters agree with the message list.
    pub fn is_consistent(&self) -> bool {
        let fresh = Self::from_messages(self.round, self.messages.clone());
        fresh.counters == self.counters && fresh.bytes == self.bytes
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["seq", "round", "sender", "receiver", "kind", "bytes"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for m in &self.messages {
            w.write_record([
                m.seq.to_string(),
                m.round.to_string(),
                m.sender.to_string(),
                m.receiver.to_string(),
                m.kind.to_string(),
                m.payload.len().to_string(),
            ])
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("transcript serializes")
    }
}

/// The network interface the protocol is written against.
pub trait Transport {
    fn register(&mut self, party: PartyId);

    /// Queues a message and returns its sequence number.
    fn send(&mut self, round: u64, sender: PartyId, receiver: PartyId, kind: MessageKind, payload: Vec<u8>) -> Result<u64>;

    /// Moves every pending message of `round` into receiver inboxes.
    fn deliver_all(&mut self, round: u64) -> Result<()>;

    /// Drains a party's inbox in delivery order.
    fn take_inbox(&mut self, party: PartyId) -> Vec<Message>;

    fn transcript(&self, round: u64) -> RoundTranscript;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeliveryOrder {
    /// Sender id, then sequence number.
    Fixed,
    /// Seeded shuffle, for checking order independence.
    Shuffled(u64),
}

#[derive(Debug)]
pub struct SimNet {
    parties: BTreeSet<PartyId>,
    next_seq: u64,
    pending: Vec<Message>,
    inboxes: BTreeMap<PartyId, Vec<Message>>,
    log: Vec<Message>,
    delivered: u64,
    order: DeliveryOrder,
}

impl SimNet {
    pub fn new() -> Self {
        Self::with_order(DeliveryOrder::Fixed)
    }

    pub fn with_order(order: DeliveryOrder) -> Self {
        Self {
            parties: BTreeSet::new(),
            next_seq: 0,
            pending: Vec::new(),
            inboxes: BTreeMap::new(),
            log: Vec::new(),
            delivered: 0,
            order,
        }
    }

    /// A net with the server, the board and clients `1..=n` registered.
    pub fn for_clients(n: usize) -> Self {
        let mut net = Self::new();
        net.register_all(n);
        net
    }

    pub fn register_all(&mut self, n: usize) {
        self.register(PartyId::Server);
        self.register(PartyId::Board);
        for i in 1..=n {
            self.register(PartyId::Client(i));
        }
    }

    pub fn log(&self) -> &[Message] {
        &self.log
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }
}

impl Default for SimNet {
    fn default() -> Self {
        Self::new()
    }
}

impl Transport for SimNet {
    fn register(&mut self, party: PartyId) {
        self.parties.insert(party);
        self.inboxes.entry(party).or_default();
    }

    fn send(&mut self, round: u64, sender: PartyId, receiver: PartyId, kind: MessageKind, payload: Vec<u8>) -> Result<u64> {
        if !self.parties.contains(&sender) {
            return Err(Error::Routing(sender));
        }
        if !self.parties.contains(&receiver) {
            return Err(Error::Routing(receiver));
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let msg = Message {
            seq,
            round,
            sender,
            receiver,
            kind,
            payload,
        };
        self.log.push(msg.clone());
        self.pending.push(msg);
        Ok(seq)
    }

    fn deliver_all(&mut self, round: u64) -> Result<()> {
        let (mut batch, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending).into_iter().partition(|m| m.round == round);
        self.pending = rest;
        match self.order {
            DeliveryOrder::Fixed => batch.sort_by_key(|m| (m.sender, m.seq)),
            DeliveryOrder::Shuffled(seed) => batch.shuffle(&mut derive_rng(seed, "delivery", &[round, self.delivered])),
        }
        for m in batch {
            self.delivered += 1;
            self.inboxes.get_mut(&m.receiver).ok_or(Error::Routing(m.receiver))?.push(m);
        }
        Ok(())
    }

    fn take_inbox(&mut self, party: PartyId) -> Vec<Message> {
        self.inboxes.get_mut(&party).map(std::mem::take).unwrap_or_default()
    }

    fn transcript(&self, round: u64) -> RoundTranscript {
        RoundTranscript::from_messages(round, self.log.iter().filter(|m| m.round == round).cloned().collect())
    }
}

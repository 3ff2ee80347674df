//! Batch experiments behind the `skefl` binary: protocol runs, attacks,
//! verification checks and benchmarks, each producing a machine-readable
//! report.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::{distinguishing_game, GameConfig, GameResult};
use crate::atss::{self, ShareSet};
use crate::crypto::{keygen, BackendId, CiphertextVector, FixedPointCodec, KeyPair, DEFAULT_MAX_WEIGHT, DEFAULT_SCALE};
use crate::error::{Error, Result};
use crate::fl::{accuracy, fedavg_oracle, local_train, ModelVector, SyntheticTask, TaskSpec, TrainParams};
use crate::net::{MessageKind, MsgCounts, PartyId, RoundTranscript, SimNet};
use crate::protocol::{Federation, RoundConfig, RoundResult, ShareRouting};
use crate::seed::{derive_rng, derive_u64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub f: usize,
    pub m: usize,
    pub rounds: usize,
    pub backend: BackendId,
    pub key_bits: u64,
    pub scale: u64,
    pub max_weight: f64,
    pub seed: u64,
    pub alpha: f64,
    /// Fraction of clients sampled per round; only applied when `n > 10`.
    pub client_fraction: f64,
    pub samples_per_client: usize,
    pub test_samples: usize,
    pub trials: usize,
    pub reps: usize,
    pub sweep_m: Vec<usize>,
    pub sweep_nf: Vec<(usize, usize)>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 3,
            f: 1,
            m: 11,
            rounds: 10,
            backend: BackendId::Paillier,
            key_bits: 1024,
            scale: DEFAULT_SCALE,
            max_weight: DEFAULT_MAX_WEIGHT,
            seed: 0,
            alpha: 1.0,
            client_fraction: 0.1,
            samples_per_client: 200,
            test_samples: 1000,
            trials: 1000,
            reps: 5,
            sweep_m: Vec::new(),
            sweep_nf: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || 2 * self.f + 1 > self.n {
            return Err(Error::Config(format!("n = {}, f = {} violates 2f + 1 ≤ n", self.n, self.f)));
        }
        if self.m < 2 {
            return Err(Error::Config("m must be at least 2 (weights plus bias)".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(Error::Config(format!("client fraction {} outside (0, 1]", self.client_fraction)));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be positive".into()));
        }
        for &(n, f) in &self.sweep_nf {
            if n == 0 || 2 * f + 1 > n {
                return Err(Error::Config(format!("sweep point n = {n}, f = {f} violates 2f + 1 ≤ n")));
            }
        }
        Ok(())
    }

    /// Reads a JSON config. `seed_fallback` is used when the file names no
    /// seed.
    pub fn from_json(text: &str, seed_fallback: Option<u64>) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        if let (false, Some(seed)) = (obj.contains_key("seed"), seed_fallback) {
            obj.insert("seed".into(), seed.into());
        }
        Ok(serde_json::from_value(value)?)
    }

    /// Canonical serialization; field order is fixed by the struct.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json()))
    }

    pub fn keys(&self) -> Result<KeyPair> {
        match self.backend {
            BackendId::Paillier => keygen(self.key_bits, derive_u64(self.seed, "keys", &[])),
            BackendId::Mock => Ok(KeyPair::mock_default()),
        }
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            max_weight: self.max_weight,
            ..TrainParams::default()
        }
    }

    pub fn task(&self) -> Result<SyntheticTask> {
        SyntheticTask::generate(TaskSpec {
            clients: self.n,
            dim: self.m - 1,
            samples_per_client: self.samples_per_client,
            test_samples: self.test_samples,
            alpha: self.alpha,
            margin: 0.1,
            seed: derive_u64(self.seed, "task", &[]),
        })
    }

    /// Clients taking part in `round`: everyone up to ten clients, otherwise
    /// a seeded sample of `max(⌈fraction·n⌉, 2f + 1)`.
    pub fn participants(&self, round: u64) -> Vec<usize> {
        if self.n <= 10 {
            return (1..=self.n).collect();
        }
        let k = ((self.client_fraction * self.n as f64).ceil() as usize).max(2 * self.f + 1).min(self.n);
        let mut rng = derive_rng(self.seed, "participants", &[round]);
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, self.n, k).into_iter().map(|i| i + 1).collect();
        picked.sort_unstable();
        picked
    }
}

// ---------------------------------------------------------------------------
// run

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub rounds: Vec<RoundResult>,
    pub participants: Vec<Vec<usize>>,
    pub accuracy: Vec<f64>,
    /// Largest per-element gap to plaintext FedAvg of the same local models.
    pub max_deviation: Vec<f64>,
    pub epsilon: f64,
    pub failures: Vec<String>,
    #[serde(skip)]
    pub transcripts: Vec<RoundTranscript>,
    #[serde(skip)]
    pub local_models: Vec<Vec<ModelVector>>,
}

impl RunReport {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }

    /// One JSON object per round.
    pub fn json_lines(&self) -> String {
        self.rounds.iter().map(|r| r.to_json() + "\n").collect()
    }

    pub fn deterministic_json_lines(&self) -> String {
        self.rounds.iter().map(|r| r.deterministic_json() + "\n").collect()
    }
}

/// Federated logistic regression over the encrypted pipeline, checking every
/// round against plaintext averaging of the same local models.
pub fn cmd_run(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let keys = config.keys()?;
    let task = config.task()?;
    let params = config.train_params();
    let mut global = vec![0.0; config.m];
    let mut report = RunReport {
        config_hash: config.hash(),
        rounds: Vec::new(),
        participants: Vec::new(),
        accuracy: Vec::new(),
        max_deviation: Vec::new(),
        epsilon: 0.0,
        failures: Vec::new(),
        transcripts: Vec::new(),
        local_models: Vec::new(),
    };
    for round in 0..config.rounds as u64 {
        let who = config.participants(round);
        let k = who.len();
        let locals: Vec<ModelVector> = who
            .iter()
            .enumerate()
            .map(|(slot, &client)| {
                let data = &task.clients[client - 1];
                let mut rng = derive_rng(config.seed, "train", &[round, client as u64]);
                ModelVector::new(slot + 1, data.len() as u64, local_train(&global, data, &params, &mut rng))
            })
            .collect();
        let codec = FixedPointCodec::new(config.scale, keys.pk.plaintext_modulus().clone(), config.max_weight, k)?;
        let counts = locals.iter().map(|w| w.sample_count).collect();
        let cfg = RoundConfig::new(k, config.f, config.m, counts, codec, derive_u64(config.seed, "round", &[round]))?;
        let eps = cfg.epsilon();
        let mut fed = Federation::new(cfg, keys.clone(), SimNet::new())?;
        let mut result = fed.run_round(round, &locals)?;
        result.round = round;

        let expect = MsgCounts {
            c2c: (k * config.f) as u64,
            c2s: k as u64,
            s2c: k as u64,
        };
        if result.msg_counts != expect {
            report
                .failures
                .push(format!("round {round}: message counts {:?}, expected {expect:?}", result.msg_counts));
        }
        let oracle = fedavg_oracle(&locals)?;
        let dev = result
            .global_model
            .iter()
            .zip(&oracle.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if dev > eps {
            report.failures.push(format!("round {round}: deviation {dev:e} exceeds ε = {eps:e}"));
        }
        report.epsilon = eps;
        global = result.global_model.clone();
        report.accuracy.push(accuracy(&global, &task.test));
        report.max_deviation.push(dev);
        report.transcripts.push(fed.transcript(round));
        report.participants.push(who);
        report.local_models.push(locals);
        report.rounds.push(result);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// attack

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub game: GameResult,
    pub sanity: GameResult,
    pub pass: bool,
}

/// The distinguishing game on the configured protocol, plus the no-garbling
/// baseline on the mock backend, which must be near-perfectly winnable.
pub fn cmd_attack(config: &ExperimentConfig) -> Result<AttackReport> {
    config.validate()?;
    let mut game = GameConfig::new(config.n, config.f, config.backend);
    game.key_bits = if config.backend == BackendId::Paillier { 128 } else { config.key_bits };
    game.seed = config.seed;
    let result = distinguishing_game(&game, config.trials)?;
    let mut sanity_cfg = GameConfig::new(config.n, config.f, BackendId::Mock);
    sanity_cfg.routing = ShareRouting::ServerMerge;
    sanity_cfg.seed = config.seed;
    let sanity = distinguishing_game(&sanity_cfg, config.trials)?;
    let pass = result.pass && sanity.accuracy >= 0.99;
    Ok(AttackReport {
        game: result,
        sanity,
        pass,
    })
}

// ---------------------------------------------------------------------------
// verify

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: String,
    pub expected: u8,
    pub accepted: usize,
    pub rejected: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub scenarios: Vec<ScenarioResult>,
    /// Messages one holder-initiated verification cost in a protocol run.
    pub requests_per_verification: u64,
    pub responses_per_verification: u64,
    pub pass: bool,
}

/// Flips one bit of one element's payload, keeping the encoding valid.
pub fn flip_bit(share: &CiphertextVector, element: usize, bit: u64) -> Result<CiphertextVector> {
    let mut out = share.clone();
    let el = &mut out.elements_mut()[element];
    let mut v = el.value().clone();
    let b = bit % v.bits().max(1);
    v.set_bit(b, !v.bit(b));
    *el = crate::crypto::Ciphertext::from_raw(el.backend(), v);
    Ok(out)
}

/// Honest, tampered, incomplete and stale share sets against published
/// digests, `trials` of each.
pub fn cmd_verify(config: &ExperimentConfig) -> Result<VerifyReport> {
    config.validate()?;
    let keys = match config.backend {
        BackendId::Paillier => keygen(128, derive_u64(config.seed, "verify-keys", &[]))?,
        BackendId::Mock => KeyPair::mock_default(),
    };
    let pk = &keys.pk;
    let mut tallies: BTreeMap<&str, (u8, usize, usize)> = BTreeMap::new();
    let f = config.f.max(1);
    let n = config.n.max(f + 1);
    let m = config.m;
    for t in 0..config.trials as u64 {
        let mut rng = derive_rng(config.seed, "verify", &[t]);
        let ctv = pk.random_vec(m, &mut rng)?;
        let set = ShareSet::split(1, 0, &ctv, f, n, pk, &mut rng)?;
        let digest = atss::publish(1, 0, &ctv);
        let which = rng.gen_range(0..=f);
        let element = rng.gen_range(0..m);
        let bit = rng.gen::<u64>();

        let mut tampered = set.shares().to_vec();
        tampered[which] = flip_bit(&tampered[which], element, bit)?;
        let mut missing = set.shares().to_vec();
        missing.remove(which);
        let next = set.resplit(1, &ctv, n, pk, &mut rng, 1)?;
        let mut stale = set.shares().to_vec();
        stale[which] = next.shares()[which].clone();

        for (name, expected, shares) in [
            ("honest", 1u8, set.shares().to_vec()),
            ("single_bit_tamper", 0, tampered),
            ("missing_share", 0, missing),
            ("stale_round_mix", 0, stale),
        ] {
            let ok = atss::verify(&digest, &shares, pk);
            let e = tallies.entry(name).or_insert((expected, 0, 0));
            if ok {
                e.1 += 1;
            } else {
                e.2 += 1;
            }
        }
    }
    let scenarios: Vec<ScenarioResult> = tallies
        .into_iter()
        .map(|(name, (expected, accepted, rejected))| ScenarioResult {
            scenario: name.to_string(),
            expected,
            accepted,
            rejected,
            pass: if expected == 1 { rejected == 0 } else { accepted == 0 },
        })
        .collect();

    // message cost of one verification inside a protocol run
    let codec = FixedPointCodec::new(config.scale, keys.pk.plaintext_modulus().clone(), config.max_weight, config.n)?;
    let cfg = RoundConfig::new(config.n, config.f, 2, vec![1; config.n], codec, config.seed)?;
    let mut fed = Federation::new(cfg, keys, SimNet::new())?;
    let models: Vec<ModelVector> = (1..=config.n).map(|i| ModelVector::new(i, 1, vec![i as f64, 0.5])).collect();
    fed.run_round(0, &models)?;
    let before = fed.transcript(0);
    let protocol_ok = fed.verify_model(PartyId::Client(1), 1, 0)?;
    let after = fed.transcript(0);
    let requests = after.count(MessageKind::VerifyRequest) - before.count(MessageKind::VerifyRequest);
    let responses = after.count(MessageKind::VerifyResponse) - before.count(MessageKind::VerifyResponse);

    let pass = protocol_ok && scenarios.iter().all(|s| s.pass) && requests == config.f as u64 && responses == config.f as u64;
    Ok(VerifyReport {
        scenarios,
        requests_per_verification: requests,
        responses_per_verification: responses,
        pass,
    })
}

// ---------------------------------------------------------------------------
// bench

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub op: String,
    pub n: usize,
    pub f: usize,
    pub m: usize,
    pub reps: usize,
    pub median_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Split time ratio between consecutive sweep points that double `m`.
    pub split_doubling_ratios: Vec<f64>,
    /// Encrypted round time over plaintext round time, per `(n, f)`.
    pub overhead: Vec<(usize, usize, f64)>,
    pub pass: bool,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
    }
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        (xs[k / 2 - 1] + xs[k / 2]) / 2.0
    }
}

fn time_ms<T>(f: impl FnOnce() -> T) -> (f64, T) {
    let t = Instant::now();
    let out = f();
    (t.elapsed().as_secs_f64() * 1e3, out)
}

/// Median wall time of `atss::split` on a fresh random vector of length `m`.
pub fn bench_split(keys: &KeyPair, m: usize, f: usize, reps: usize, seed: u64) -> Result<f64> {
    let mut samples = Vec::with_capacity(reps);
    for r in 0..reps as u64 {
        let mut rng = derive_rng(seed, "bench-split", &[m as u64, r]);
        let ctv = keys.pk.random_vec(m, &mut rng)?;
        let (ms, out) = time_ms(|| atss::split(&ctv, f, &keys.pk, &mut rng));
        out?;
        samples.push(ms);
    }
    Ok(median(samples))
}

fn bench_point(keys: &KeyPair, config: &ExperimentConfig, n: usize, f: usize, m: usize, rows: &mut Vec<BenchRow>) -> Result<f64> {
    let reps = config.reps.max(3);
    let row = |op: &str, ms: f64| BenchRow {
        op: op.to_string(),
        n,
        f,
        m,
        reps,
        median_ms: ms,
    };
    rows.push(row("atss_split", bench_split(keys, m, f, reps, config.seed)?));

    let mut merge = Vec::new();
    let mut dist = Vec::new();
    let mut aggr = Vec::new();
    let mut round_enc = Vec::new();
    let mut round_plain = Vec::new();
    for r in 0..reps as u64 {
        let mut rng = derive_rng(config.seed, "bench-models", &[n as u64, m as u64, r]);
        let models: Vec<ModelVector> = (1..=n)
            .map(|i| ModelVector::new(i, 100, (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect()))
            .collect();
        let codec = FixedPointCodec::new(config.scale, keys.pk.plaintext_modulus().clone(), config.max_weight, n)?;
        let cfg = RoundConfig::new(n, f, m, vec![100; n], codec, derive_u64(config.seed, "bench-round", &[r]))?;
        let mut fed = Federation::new(cfg, keys.clone(), SimNet::new())?;
        let (ms, res) = time_ms(|| fed.run_round(0, &models));
        let res = res?;
        round_enc.push(ms);
        dist.push(res.phase_timings_ms["dist"] / n as f64);
        aggr.push(res.phase_timings_ms["aggr"]);
        let shares = fed.clients[0].own_shareset().expect("distributed").shares().to_vec();
        let (ms, out) = time_ms(|| atss::merge(&shares, &keys.pk));
        out?;
        merge.push(ms);
        let (ms, out) = time_ms(|| fedavg_oracle(&models));
        out?;
        round_plain.push(ms);
    }
    rows.push(row("atss_merge", median(merge)));
    rows.push(row("skefl_dist", median(dist)));
    rows.push(row("skefl_aggr", median(aggr)));
    let enc = median(round_enc);
    let plain = median(round_plain).max(1e-6);
    rows.push(row("round_encrypted", enc));
    rows.push(row("round_plaintext", plain));
    Ok(enc / plain)
}

/// Timings across the `m` sweep (at the configured `n`, `f`) and the
/// `(n, f)` sweep (at the configured `m`). Without sweeps, the configured
/// point alone.
pub fn cmd_bench(config: &ExperimentConfig) -> Result<BenchReport> {
    config.validate()?;
    let keys = config.keys()?;
    let mut rows = Vec::new();
    let mut overhead = Vec::new();
    let ms: Vec<usize> = if config.sweep_m.is_empty() { vec![config.m] } else { config.sweep_m.clone() };
    for &m in &ms {
        let ratio = bench_point(&keys, config, config.n, config.f, m, &mut rows)?;
        overhead.push((config.n, config.f, ratio));
    }
    for &(n, f) in &config.sweep_nf {
        let ratio = bench_point(&keys, config, n, f, config.m, &mut rows)?;
        overhead.push((n, f, ratio));
    }
    let split: Vec<(usize, f64)> = rows
        .iter()
        .filter(|r| r.op == "atss_split" && r.n == config.n && r.f == config.f)
        .map(|r| (r.m, r.median_ms))
        .collect();
    let split_doubling_ratios: Vec<f64> = split
        .windows(2)
        .filter(|w| w[1].0 == 2 * w[0].0)
        .map(|w| w[1].1 / w[0].1)
        .collect();
    let pass = split_doubling_ratios.iter().all(|r| (1.5..=2.5).contains(r));
    Ok(BenchReport {
        rows,
        split_doubling_ratios,
        overhead,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mock_config() -> ExperimentConfig {
        ExperimentConfig {
            backend: BackendId::Mock,
            m: 6,
            rounds: 3,
            samples_per_client: 100,
            test_samples: 200,
            trials: 50,
            reps: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_json_fills_defaults_and_seed_fallback() {
        let c = ExperimentConfig::from_json(r#"{"n": 5, "f": 2}"#, Some(77)).unwrap();
        assert_eq!((c.n, c.f, c.seed, c.m), (5, 2, 77, 11));
        let c = ExperimentConfig::from_json(r#"{"seed": 3}"#, Some(77)).unwrap();
        assert_eq!(c.seed, 3);
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#, None).is_err());
        assert_eq!(c.hash(), ExperimentConfig::from_json(&c.canonical_json(), None).unwrap().hash());
    }

    #[test]
    fn participants_sample_only_large_federations() {
        let c = ExperimentConfig::default();
        assert_eq!(c.participants(0), vec![1, 2, 3]);
        let big = ExperimentConfig {
            n: 50,
            f: 2,
            ..ExperimentConfig::default()
        };
        let p = big.participants(4);
        assert_eq!(p.len(), 5);
        assert_eq!(p, big.participants(4));
        let wide = ExperimentConfig {
            n: 40,
            f: 7,
            ..ExperimentConfig::default()
        };
        assert_eq!(wide.participants(0).len(), 15);
    }

    #[test]
    fn mock_run_counts_and_tracks_plaintext() {
        let r = cmd_run(&mock_config()).unwrap();
        assert!(r.pass(), "{:?}", r.failures);
        assert_eq!(r.rounds.len(), 3);
        assert!(r.rounds.iter().all(|x| x.msg_counts == MsgCounts { c2c: 3, c2s: 3, s2c: 3 }));
        assert_eq!(r.json_lines().lines().count(), 3);
    }

    #[test]
    fn verify_matrix_on_mock() {
        let r = cmd_verify(&mock_config()).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.scenarios.len(), 4);
        assert_eq!((r.requests_per_verification, r.responses_per_verification), (1, 1));
    }

    #[test]
    fn flip_bit_changes_exactly_one_bit() {
        let kp = KeyPair::mock_default();
        let v = kp.pk.random_vec(3, &mut derive_rng(0, "t", &[])).unwrap();
        let w = flip_bit(&v, 1, 5).unwrap();
        assert_eq!(v.elements()[0], w.elements()[0]);
        let x = v.elements()[1].value() ^ w.elements()[1].value();
        assert_eq!(x.count_ones(), 1);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

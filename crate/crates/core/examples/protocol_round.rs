//! One secure aggregation round with five clients tolerating two colluders,
//! followed by a share verification.
//!
//!     cargo run --release --example protocol_round

use skefl::crypto::{keygen, FixedPointCodec, DEFAULT_MAX_WEIGHT, DEFAULT_SCALE};
use skefl::fl::{fedavg_oracle, ModelVector};
use skefl::net::{MessageKind, PartyId, SimNet};
use skefl::protocol::{Federation, RoundConfig};

fn main() -> skefl::error::Result<()> {
    let (n, f) = (5, 2);
    let keys = keygen(1024, 4)?;
    let codec = FixedPointCodec::new(DEFAULT_SCALE, keys.pk.plaintext_modulus().clone(), DEFAULT_MAX_WEIGHT, n)?;
    let counts = vec![120, 80, 200, 50, 150];
    let models: Vec<ModelVector> = (1..=n)
        .map(|i| ModelVector::new(i, counts[i - 1], vec![i as f64 * 0.1, -(i as f64), 0.25]))
        .collect();

    let config = RoundConfig::new(n, f, 3, counts, codec, 11)?;
    let eps = config.epsilon();
    let mut fed = Federation::new(config, keys, SimNet::new())?;
    let result = fed.run_round(0, &models)?;

    println!("global model: {:?}", result.global_model);
    println!("plain FedAvg: {:?}", fedavg_oracle(&models)?.weights);
    println!("tolerance:    {eps:e}");
    println!("messages:     {:?}", result.msg_counts);
    println!("phases (ms):  {:?}", result.phase_timings_ms);

    let before = fed.transcript(0);
    let ok = fed.verify_model(PartyId::Client(3), 3, 0)?;
    let after = fed.transcript(0);
    println!(
        "client 3 re-collected its shares: ok={ok}, {} requests, {} responses",
        after.count(MessageKind::VerifyRequest) - before.count(MessageKind::VerifyRequest),
        after.count(MessageKind::VerifyResponse) - before.count(MessageKind::VerifyResponse)
    );
    Ok(())
}

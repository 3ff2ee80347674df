//! How split time grows with the model length and how the per-round
//! operation count grows with the number of clients.
//!
//!     cargo run --release --example scaling

use skefl::crypto::{keygen, op_counts, FixedPointCodec, KeyPair, DEFAULT_MAX_WEIGHT, DEFAULT_SCALE};
use skefl::experiment::bench_split;
use skefl::fl::ModelVector;
use skefl::net::SimNet;
use skefl::protocol::{Federation, RoundConfig};

fn main() -> skefl::error::Result<()> {
    let keys = keygen(1024, 9)?;
    let mut prev = None;
    for m in [500, 1000, 2000, 4000] {
        let ms = bench_split(&keys, m, 2, 5, 0)?;
        let ratio = prev.map(|p: f64| format!(" (×{:.2})", ms / p)).unwrap_or_default();
        println!("split m={m}: {ms:.1} ms{ratio}");
        prev = Some(ms);
    }

    let mock = KeyPair::mock_default();
    let mut prev = None;
    for (n, f) in [(3, 1), (7, 3), (15, 7), (31, 15)] {
        let codec = FixedPointCodec::new(DEFAULT_SCALE, mock.pk.plaintext_modulus().clone(), DEFAULT_MAX_WEIGHT, n)?;
        let config = RoundConfig::new(n, f, 10, vec![1; n], codec, 0)?;
        let mut fed = Federation::new(config, mock.clone(), SimNet::new())?;
        let models: Vec<ModelVector> = (1..=n).map(|i| ModelVector::new(i, 1, vec![0.5; 10])).collect();
        let before = op_counts();
        fed.run_round(0, &models)?;
        let ops = op_counts().since(&before).homomorphic_total();
        let ratio = prev.map(|p: u64| format!(" (×{:.2})", ops as f64 / p as f64)).unwrap_or_default();
        println!("round n={n} f={f}: {ops} homomorphic ops{ratio}");
        prev = Some(ops);
    }
    Ok(())
}

//! Records a round on the simulated network and exports the transcript as
//! CSV and JSON. Pass a directory to write files there.
//!
//!     cargo run --release --example transcript_export -- /tmp/skefl-transcript

use std::fs;
use std::path::PathBuf;

use skefl::crypto::{FixedPointCodec, KeyPair, DEFAULT_MAX_WEIGHT, DEFAULT_SCALE};
use skefl::fl::ModelVector;
use skefl::net::{DeliveryOrder, SimNet};
use skefl::protocol::{Federation, RoundConfig};

fn main() -> skefl::error::Result<()> {
    let keys = KeyPair::mock_default();
    let codec = FixedPointCodec::new(DEFAULT_SCALE, keys.pk.plaintext_modulus().clone(), DEFAULT_MAX_WEIGHT, 3)?;
    let config = RoundConfig::new(3, 1, 2, vec![1, 1, 2], codec, 5)?;
    let models: Vec<ModelVector> = (1..=3).map(|i| ModelVector::new(i, [1, 1, 2][i - 1], vec![0.5 * i as f64, 1.0])).collect();

    let mut fed = Federation::new(config.clone(), keys.clone(), SimNet::new())?;
    fed.run_round(0, &models)?;
    let t = fed.transcript(0);
    println!("{} messages, {} bytes, counts {:?}", t.messages.len(), t.bytes_total(), t.msg_counts());

    // a shuffled delivery order produces the same global model
    let mut shuffled = Federation::new(config, keys, SimNet::with_order(DeliveryOrder::Shuffled(9)))?;
    let a = shuffled.run_round(0, &models)?.global_model;
    println!("shuffled delivery global model: {a:?}");

    match std::env::args().nth(1).map(PathBuf::from) {
        Some(dir) => {
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("transcript.csv"), t.to_csv())?;
            fs::write(dir.join("transcript.json"), t.to_json())?;
            println!("wrote {}", dir.display());
        }
        None => print!("{}", t.to_csv()),
    }
    Ok(())
}

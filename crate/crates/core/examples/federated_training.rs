//! Federated logistic regression on a synthetic task, aggregated through the
//! encrypted protocol and in the clear side by side.
//!
//!     cargo run --release --example federated_training

use skefl::crypto::{keygen, FixedPointCodec, DEFAULT_MAX_WEIGHT, DEFAULT_SCALE};
use skefl::fl::{accuracy, fedavg_oracle, run_federated, run_plaintext, SyntheticTask, TaskSpec, TrainParams};
use skefl::net::SimNet;
use skefl::protocol::{Federation, RoundConfig};

fn main() -> skefl::error::Result<()> {
    let task = SyntheticTask::generate(TaskSpec {
        clients: 5,
        alpha: 0.5,
        ..TaskSpec::default()
    })?;
    let params = TrainParams::default();
    let keys = keygen(1024, 8)?;
    let (n, f, m) = (5, 2, task.model_len());

    let encrypted = run_federated(&task, 10, &params, 0, |round, models| {
        let codec = FixedPointCodec::new(DEFAULT_SCALE, keys.pk.plaintext_modulus().clone(), DEFAULT_MAX_WEIGHT, n)?;
        let config = RoundConfig::new(n, f, m, models.iter().map(|w| w.sample_count).collect(), codec, round)?;
        let mut fed = Federation::new(config, keys.clone(), SimNet::new())?;
        let global = fed.run_round(round, models)?.global_model;
        let plain = fedavg_oracle(models)?.weights;
        let dev = global.iter().zip(&plain).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("round {round}: max deviation from plain averaging {dev:.2e}");
        Ok(global)
    })?;
    let plain = run_plaintext(&task, 10, &params, 0)?;
    for (r, (a, b)) in encrypted.accuracy.iter().zip(&plain.accuracy).enumerate() {
        println!("round {r}: held-out accuracy encrypted {a:.3}, plaintext {b:.3}");
    }
    let last = encrypted.models.last().expect("ten rounds");
    println!("final accuracy {:.3}", accuracy(last, &task.test));
    Ok(())
}

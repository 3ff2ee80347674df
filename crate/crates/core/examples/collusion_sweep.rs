//! Every coalition of f non-victim clients tries to rebuild the victim's
//! model from the shares it received.
//!
//!     cargo run --release --example collusion_sweep -- 2000

use skefl::adversary::collusion_sweep;

fn main() -> skefl::error::Result<()> {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    for n in [3, 5, 7] {
        let f = (n - 1) / 2;
        let r = collusion_sweep(n, f, 1, trials, 1)?;
        println!(
            "n={n} f={f}: {} coalitions per trial, {} recoveries, residual buckets {:?}, p = {:.3}",
            r.subsets_per_trial, r.recoveries, r.buckets, r.p_value
        );
    }
    Ok(())
}

//! The distinguishing game: the server and f colluding clients, holding the
//! secret key, guess which of two candidate models the victim trained.
//!
//!     cargo run --release --example distinguishing_game -- 2000

use skefl::adversary::{distinguishing_game, GameConfig};
use skefl::crypto::BackendId;
use skefl::protocol::ShareRouting;

fn main() -> skefl::error::Result<()> {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    for (n, f) in [(1, 0), (3, 1), (5, 2)] {
        let r = distinguishing_game(&GameConfig::new(n, f, BackendId::Paillier), trials)?;
        println!("n={n} f={f}: accuracy {:.4} (advantage {:.4}, bound {:.4})", r.accuracy, r.advantage, r.bound);
    }
    let mut open = GameConfig::new(3, 1, BackendId::Mock);
    open.routing = ShareRouting::ServerMerge;
    let r = distinguishing_game(&open, trials)?;
    println!("shares merged by the server: accuracy {:.4}", r.accuracy);
    Ok(())
}

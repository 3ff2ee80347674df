use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use skefl::crypto::BackendId;
use skefl::error::{Error, Result};
use skefl::experiment::{cmd_attack, cmd_bench, cmd_run, cmd_verify, ExperimentConfig};
use skefl::fl::dump_csv;

#[derive(Parser)]
#[command(name = "skefl", version, about = "Secure aggregation experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Federated rounds over the encrypted pipeline
    Run(Common),
    /// Distinguishing game against a server + f colluders
    Attack(Common),
    /// Share verification under tampering
    Verify(Common),
    /// Primitive and round timings
    Bench(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write reports here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    f: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    backend: Option<BackendId>,
    #[arg(long)]
    key_bits: Option<u64>,
    #[arg(long)]
    scale: Option<u64>,
    /// Falls back to the config file, then SKEFL_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    client_fraction: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// `m=1000,2000,4000` or `nf=3:1,7:3`; repeatable
    #[arg(long)]
    sweep: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let env_seed = std::env::var("SKEFL_SEED").ok().and_then(|s| s.parse().ok());
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_json(&fs::read_to_string(path)?, env_seed)?,
            None => ExperimentConfig {
                seed: env_seed.unwrap_or(0),
                ..ExperimentConfig::default()
            },
        };
        macro_rules! over {
            ($($field:ident),*) => { $( if let Some(v) = self.$field.clone() { c.$field = v; } )* };
        }
        over!(n, f, m, rounds, backend, key_bits, scale, alpha, client_fraction, trials, reps);
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        for s in &self.sweep {
            parse_sweep(s, &mut c)?;
        }
        c.validate()?;
        Ok(c)
    }
}

fn parse_sweep(spec: &str, c: &mut ExperimentConfig) -> Result<()> {
    let bad = || Error::Config(format!("bad sweep {spec:?}"));
    let (key, values) = spec.split_once('=').ok_or_else(bad)?;
    match key {
        "m" => {
            c.sweep_m = values.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
        }
        "nf" => {
            c.sweep_nf = values
                .split(',')
                .map(|p| {
                    let (n, f) = p.split_once(':').ok_or_else(bad)?;
                    Ok((n.trim().parse().map_err(|_| bad())?, f.trim().parse().map_err(|_| bad())?))
                })
                .collect::<Result<_>>()?;
        }
        _ => return Err(bad()),
    }
    Ok(())
}

fn emit(out: Option<&Path>, name: &str, body: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), body)?;
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Run(a) => {
            let c = a.resolve()?;
            let r = cmd_run(&c)?;
            let out = a.out.as_deref();
            emit(out, "rounds.jsonl", &r.json_lines())?;
            if out.is_some() {
                emit(out, "config.json", &(c.canonical_json() + "\n"))?;
                emit(out, "report.json", &(serde_json::to_string_pretty(&r)? + "\n"))?;
                let mut csv = String::new();
                let mut json = String::new();
                for (k, t) in r.transcripts.iter().enumerate() {
                    let body = t.to_csv();
                    csv.push_str(if k == 0 { &body } else { body.split_once('\n').map_or("", |x| x.1) });
                    json.push_str(&(t.to_json() + "\n"));
                }
                emit(out, "transcript.csv", &csv)?;
                emit(out, "transcript.jsonl", &json)?;
                let models: Vec<_> = r.local_models.iter().flatten().cloned().collect();
                emit(out, "local_models.csv", &dump_csv(&models))?;
            }
            for f in &r.failures {
                eprintln!("assertion failed: {f}");
            }
            Ok(r.pass())
        }
        Cmd::Attack(a) => {
            let c = a.resolve()?;
            let r = cmd_attack(&c)?;
            emit(a.out.as_deref(), "attack.json", &(serde_json::to_string(&r)? + "\n"))?;
            if !r.pass {
                eprintln!(
                    "assertion failed: accuracy {:.4} (bound ±{:.4}), no-garbling baseline {:.4}",
                    r.game.accuracy, r.game.bound, r.sanity.accuracy
                );
            }
            Ok(r.pass)
        }
        Cmd::Verify(a) => {
            let c = a.resolve()?;
            let r = cmd_verify(&c)?;
            emit(a.out.as_deref(), "verify.json", &(serde_json::to_string_pretty(&r)? + "\n"))?;
            Ok(r.pass)
        }
        Cmd::Bench(a) => {
            let c = a.resolve()?;
            let r = cmd_bench(&c)?;
            emit(a.out.as_deref(), "bench.csv", &r.to_csv())?;
            let summary = serde_json::json!({
                "split_doubling_ratios": r.split_doubling_ratios,
                "overhead": r.overhead,
                "pass": r.pass,
            });
            match a.out.as_deref() {
                Some(dir) => emit(Some(dir), "bench_summary.json", &(summary.to_string() + "\n"))?,
                None => eprintln!("{summary}"),
            }
            Ok(r.pass)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

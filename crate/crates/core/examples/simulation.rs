//! A whole society: run a scenario, export the artifacts, print the summary.
//!
//! `cargo run --release --example simulation -- scenarios/reference.toml /tmp/out`
use std::path::PathBuf;

use dan_core::scenario::Scenario;
use dan_core::sim;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let scenario = match args.next() {
        Some(path) => Scenario::load(path.as_ref())?,
        None => Scenario { name: "default".into(), ..Scenario::default() },
    };
    let out_dir = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("dan-simulation"));

    let out = sim::run(&scenario)?;
    sim::export(&out, &out_dir)?;
    print!("{}", out.metrics.summary());
    for row in &out.metrics.rows {
        println!(
            "epoch {:>2}: {:>4} trades, gini {:.3}, entropy {:.3}, {}",
            row.epoch, row.transactions, row.gini, row.entropy, row.game_class.as_str()
        );
    }
    println!("artifacts in {}", out_dir.display());
    Ok(())
}

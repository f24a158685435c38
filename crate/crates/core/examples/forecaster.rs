//! Training the density forecaster on planted diffusion and comparing to persistence.
//!
//! Pass a config path to override the built-in small run, e.g.
//! `cargo run --release --example forecaster -- configs/planted.toml`.
use dan_core::forecast::{self, ForecastConfig};
use dan_ynet::synthetic::SyntheticConfig;
use dan_ynet::{Schedule, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => ForecastConfig::load(path.as_ref())?,
        None => ForecastConfig {
            synthetic: SyntheticConfig { n_sequences: 60, ..SyntheticConfig::default() },
            train: TrainConfig { steps: 300, learning_rate: 0.02, schedule: Schedule::Cosine { final_fraction: 0.05 }, ..TrainConfig::default() },
            ..ForecastConfig::default()
        },
    };
    let data = forecast::load_dataset(forecast::SYNTHETIC, &cfg)?;
    let out = forecast::train_and_evaluate(&data, &cfg)?;
    let losses = &out.report.losses;
    for (i, l) in losses.iter().enumerate().step_by((losses.len() / 8).max(1)) {
        println!("step {i:>4}: train mse {l:.3e}");
    }
    println!("test mse {:.3e}, persistence {:.3e}, ratio {:.3}", out.test_mse, out.baseline_mse, out.ratio());
    Ok(())
}

//! A gating agent learning to accept interactions that pay off.
use dan_core::gating::{Decision, GateAgent, GateConfig, GateMode, GateSignal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut agent = GateAgent::new(&GateConfig {
        theta: [0.0, 0.0, 0.0],
        eta_short: 0.05,
        eta_long: 0.01,
        mode: GateMode::Stochastic,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let good = GateSignal::new(0.9, 1.0)?;
    let bad = GateSignal::new(0.1, 1.0)?;

    for round in 0..=2_000 {
        if round % 500 == 0 {
            println!(
                "round {round:>4}: P(accept | good) {:.3}, P(accept | bad) {:.3}",
                agent.acceptance_probability(&good),
                agent.acceptance_probability(&bad)
            );
        }
        let signal = GateSignal::new(rng.random(), rng.random_range(0.5..2.0))?;
        let out = agent.decide(&signal, &mut rng);
        // Accepting pays off exactly when the counterparty scores well.
        let reward = match out.decision {
            Decision::Accept => signal.performance_score() - 0.5,
            Decision::Reject => 0.0,
        };
        agent.short_loop_update(&signal, out.decision, reward)?;
    }
    println!("theta {:?}", agent.theta());
    Ok(())
}

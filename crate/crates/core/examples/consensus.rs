//! Proof-of-authority rounds with a faulty validator that gets slashed.
use dan_core::address::Address;
use dan_core::consensus::{simulate_consensus, ConsensusConfig, FaultConfig, NetworkConfig, ValidatorSet};
use dan_core::ledger::ReputationLedger;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut ledger = ReputationLedger::new();
    let validators: Vec<Address> = (0..23).map(|i| Address::derive("validator", i)).collect();
    for v in &validators {
        ledger.open_account(v.clone())?;
        ledger.earn(v, 1_100_000, "bootstrap", 0)?;
    }
    let set = ValidatorSet::new(validators.clone());
    let faults = FaultConfig { faulty: vec![validators[0].clone()], equivocation_probability: 0.5, invalid_block_probability: 0.0 };
    let net = NetworkConfig { drop_probability: 0.02, seed: 3, ..NetworkConfig::default() };

    let run = simulate_consensus(&set, &net, 1_000, &mut ledger, &ConsensusConfig::default(), &faults)?;
    let finalized = run.trace.finalizations().count();
    println!("height {}, {finalized} finalized in {} rounds", run.chain.height(), run.rounds);
    println!("violations detected: {}", run.trace.violations().count());
    println!(
        "faulty validator balance {} (eligible: {})",
        ledger.balance(&validators[0]),
        ledger.is_validator_eligible(&validators[0])
    );
    let (lo, hi) = (run.seal_counts.values().min().unwrap(), run.seal_counts.values().max().unwrap());
    println!("seal counts {lo}..{hi}");
    Ok(())
}

//! Reputation accounting: earn, spend, slash, liquidate, and the supply identity.
use dan_core::address::Address;
use dan_core::ledger::{ReputationLedger, VALIDATOR_THRESHOLD};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut ledger = ReputationLedger::new();
    let (alice, bob) = (Address::derive("citizen", 1), Address::derive("citizen", 2));
    ledger.open_account(alice.clone())?;
    ledger.open_account(bob.clone())?;

    ledger.earn(&alice, 1_200_000, "seal rewards", 1)?;
    ledger.earn(&bob, 900, "trade", 2)?;
    ledger.spend(&bob, 300, "public service", 3)?;
    ledger.slash(&alice, 250_000, "equivocation", 4)?;
    let payout = ledger.liquidate(&bob, 5)?;

    println!("alice {} (validator eligible: {})", ledger.balance(&alice), ledger.is_validator_eligible(&alice));
    println!("bob liquidated for {payout}");
    println!("threshold {VALIDATOR_THRESHOLD}, supply {}, totals {:?}", ledger.total_supply(), ledger.totals());
    assert!(ledger.conservation_holds());
    ledger.export_csv(std::io::stdout())?;
    Ok(())
}

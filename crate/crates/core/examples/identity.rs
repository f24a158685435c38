//! Identity tokens: minting, duplicate-face refusal, search, burn and reinstatement.
use dan_core::governance::GovernanceDecision;
use dan_core::identity::{Cmp, FaceVector, IdentityRegistry, Predicate, Profile, DUPLICATE_THRESHOLD};
use dan_core::ledger::ReputationLedger;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut ledger = ReputationLedger::new();
    let mut registry = IdentityRegistry::new(DUPLICATE_THRESHOLD);

    for i in 0..4 {
        let profile = Profile { age: 25 + 10 * i as u32, ..Profile::uniform(0.5) };
        let token = registry.mint(&mut ledger, profile, FaceVector::basis(i), 0)?;
        println!("minted {:?} for {}", token.token_id, token.owner_address);
    }
    if let Err(e) = registry.mint(&mut ledger, Profile::uniform(0.5), FaceVector::basis(0), 1) {
        println!("second mint with the same face: {e}");
    }

    let older = registry.search(&[Predicate::Age { cmp: Cmp::Ge, value: 40 }]);
    println!("citizens aged 40+: {older:?}");

    let victim = registry.by_owner(&older[0]).unwrap().token_id;
    ledger.earn(&older[0], 700, "work", 2)?;
    let receipt = registry.burn(&mut ledger, victim, 3)?;
    println!("burned {victim:?}, forfeited {}", receipt.forfeited);

    let approved = GovernanceDecision { proposal_id: 1, w: 0.8, passed: true, quorum_met: true, tick: 4 };
    let fresh = registry.reinstate(&mut ledger, victim, Profile::uniform(0.5), FaceVector::basis(2), &approved, 5)?;
    println!("reinstated as {:?} at {}", fresh.token_id, fresh.owner_address);
    println!("{} active tokens", registry.active_count());
    Ok(())
}

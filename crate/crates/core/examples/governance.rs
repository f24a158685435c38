//! Weighted voting: W is the weight-averaged vote, compared against quorum and threshold.
use dan_core::address::Address;
use dan_core::governance::{tally, weighted_mean, Proposal, ProposalKind, TallyRule, Vote};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let votes: Vec<Vote> = [(1.0, 5_000.0), (0.0, 1_000.0), (0.6, 2_500.0), (1.0, 500.0)]
        .iter()
        .enumerate()
        .map(|(i, &(value, weight))| Vote::new(Address::derive("voter", i as u64), value, weight))
        .collect();
    let proposal = Proposal { id: 1, kind: ProposalKind::Generic, title: "fund the library".into(), opened_at: 0 };
    let rule = TallyRule::default();
    println!("W = {:.4}", weighted_mean(&votes)?);

    // Total active weight includes citizens who stayed home.
    for total in [9_500.0, 12_000.0, 40_000.0] {
        let d = tally(&proposal, &votes, total, &rule, |_| true, 10)?;
        println!("active weight {total:>8}: quorum {} passed {}", d.quorum_met, d.passed);
    }
    Ok(())
}

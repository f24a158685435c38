//! Reputation-weighted voting.
//!
//! `W = Σ w_i X_i / Σ w_i` with each voter's YDR balance as weight. A
//! proposal passes when participating weight reaches the quorum and `W` is
//! strictly above the pass threshold.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::address::Address;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GovernanceError {
    #[error("no votes")]
    EmptyVoteSet,
    #[error("every vote has zero weight")]
    AllWeightsZero,
    #[error("{0} voted more than once")]
    DuplicateVoter(Address),
    #[error("{0} is not an active, unfrozen token holder")]
    IneligibleVoter(Address),
    #[error("vote by {voter}: value {value} must be in [0,1] and weight {weight} finite and >= 0")]
    InvalidVote { voter: Address, value: f64, weight: f64 },
}

pub type Result<T> = std::result::Result<T, GovernanceError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vote {
    pub voter: Address,
    /// `X_i`; binary proposals use 0 or 1.
    pub value: f64,
    /// `w_i`, the voter's balance when the tally is taken.
    pub weight: f64,
}

impl Vote {
    pub fn new(voter: impl Into<Address>, value: f64, weight: f64) -> Self {
        Self {
            voter: voter.into(),
            value,
            weight,
        }
    }

    fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.value) || !self.weight.is_finite() || self.weight < 0.0 {
            return Err(GovernanceError::InvalidVote {
                voter: self.voter.clone(),
                value: self.value,
                weight: self.weight,
            });
        }
        Ok(())
    }
}

/// `Σ w_i X_i / Σ w_i`, summed in list order.
pub fn weighted_mean(votes: &[Vote]) -> Result<f64> {
    if votes.is_empty() {
        return Err(GovernanceError::EmptyVoteSet);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for v in votes {
        v.check()?;
        num += v.weight * v.value;
        den += v.weight;
    }
    if den == 0.0 {
        return Err(GovernanceError::AllWeightsZero);
    }
    // Rounding can push the ratio a hair outside the hull of the values.
    let (lo, hi) = votes
        .iter()
        .filter(|v| v.weight > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.value), hi.max(v.value)));
    Ok((num / den).clamp(lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TallyRule {
    /// Fraction of total active weight that must participate.
    pub quorum: f64,
    /// `W` must be strictly greater than this to pass.
    pub pass_threshold: f64,
}

impl Default for TallyRule {
    fn default() -> Self {
        Self {
            quorum: 0.25,
            pass_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProposalKind {
    Reinstatement { token_id: u64 },
    Generic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: u64,
    pub kind: ProposalKind,
    pub title: String,
    pub opened_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernanceDecision {
    pub proposal_id: u64,
    #[serde(rename = "W")]
    pub w: f64,
    pub passed: bool,
    pub quorum_met: bool,
    pub tick: u64,
}

/// Decides `proposal` from `votes`.
///
/// `eligible` reports whether a voter holds an active, unfrozen token. With
/// no participating weight `W` is reported as 0 and the proposal fails.
pub fn tally(
    proposal: &Proposal,
    votes: &[Vote],
    total_active_weight: f64,
    rule: &TallyRule,
    eligible: impl Fn(&Address) -> bool,
    tick: u64,
) -> Result<GovernanceDecision> {
    let mut seen = BTreeSet::new();
    for v in votes {
        v.check()?;
        if !eligible(&v.voter) {
            return Err(GovernanceError::IneligibleVoter(v.voter.clone()));
        }
        if !seen.insert(&v.voter) {
            return Err(GovernanceError::DuplicateVoter(v.voter.clone()));
        }
    }
    let participating: f64 = votes.iter().map(|v| v.weight).sum();
    let quorum_met = participating > 0.0 && participating >= rule.quorum * total_active_weight;
    let w = if participating > 0.0 { weighted_mean(votes)? } else { 0.0 };
    Ok(GovernanceDecision {
        proposal_id: proposal.id,
        w,
        passed: quorum_met && w > rule.pass_threshold,
        quorum_met,
        tick,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proposal() -> Proposal {
        Proposal {
            id: 1,
            kind: ProposalKind::Generic,
            title: "t".into(),
            opened_at: 0,
        }
    }

    #[test]
    fn weighted_mean_examples() {
        let v = [Vote::new("a", 1.0, 3.0), Vote::new("b", 0.0, 1.0)];
        assert_eq!(weighted_mean(&v), Ok(0.75));
        let v = [Vote::new("a", 0.0, 2.0), Vote::new("b", 1.0, 2.0), Vote::new("c", 1.0, 2.0)];
        assert!((weighted_mean(&v).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(weighted_mean(&[Vote::new("a", 0.4, 5.0)]), Ok(0.4));
        assert_eq!(weighted_mean(&[]), Err(GovernanceError::EmptyVoteSet));
        assert_eq!(
            weighted_mean(&[Vote::new("a", 0.4, 0.0)]),
            Err(GovernanceError::AllWeightsZero)
        );
    }

    #[test]
    fn tally_examples() {
        let ok = |_: &Address| true;
        let rule = TallyRule::default();
        let all_yes = [Vote::new("a", 1.0, 5.0), Vote::new("b", 1.0, 5.0)];
        assert!(tally(&proposal(), &all_yes, 10.0, &rule, ok, 0).unwrap().passed);

        let tie = [Vote::new("a", 1.0, 5.0), Vote::new("b", 0.0, 5.0)];
        let d = tally(&proposal(), &tie, 10.0, &rule, ok, 0).unwrap();
        assert_eq!(d.w, 0.5);
        assert!(d.quorum_met && !d.passed);

        let whale = [Vote::new("a", 1.0, 1000.0), Vote::new("b", 0.0, 1.0), Vote::new("c", 0.0, 1.0)];
        let d = tally(&proposal(), &whale, 1002.0, &rule, ok, 0).unwrap();
        assert_eq!(d.w, 1000.0 / 1002.0);
        assert!(d.passed);
    }

    #[test]
    fn tally_rejects_bad_voters_and_checks_quorum() {
        let rule = TallyRule::default();
        let dup = [Vote::new("a", 1.0, 1.0), Vote::new("a", 1.0, 1.0)];
        assert_eq!(
            tally(&proposal(), &dup, 2.0, &rule, |_| true, 0),
            Err(GovernanceError::DuplicateVoter("a".into()))
        );
        let v = [Vote::new("z", 1.0, 1.0)];
        assert_eq!(
            tally(&proposal(), &v, 2.0, &rule, |a| a.as_str() != "z", 0),
            Err(GovernanceError::IneligibleVoter("z".into()))
        );
        let d = tally(&proposal(), &v, 100.0, &rule, |_| true, 0).unwrap();
        assert!(!d.quorum_met && !d.passed);
        let d = tally(&proposal(), &[], 100.0, &rule, |_| true, 0).unwrap();
        assert!(!d.quorum_met && !d.passed);
    }

    #[test]
    fn zero_weight_vote_changes_nothing() {
        let v = [Vote::new("a", 0.3, 2.0), Vote::new("b", 0.9, 1.0)];
        let mut w = v.to_vec();
        w.push(Vote::new("c", 1.0, 0.0));
        assert_eq!(weighted_mean(&v), weighted_mean(&w));
    }
}

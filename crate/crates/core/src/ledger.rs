//! YDR reputation balances with an append-only event history.
//!
//! Reputation can be earned, spent, slashed, or liquidated. There is no
//! transfer between accounts. Balances are integers in the smallest YDR unit.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::address::Address;

/// An account must hold strictly more than this to validate blocks.
pub const VALIDATOR_THRESHOLD: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("no account for {0}")]
    UnknownAccount(Address),
    #[error("account {0} already exists")]
    AccountExists(Address),
    #[error("account {0} is frozen")]
    FrozenAccount(Address),
    #[error("account {0} has been liquidated")]
    LiquidatedAccount(Address),
    #[error("amount must be positive")]
    NonPositiveAmount,
    #[error("balance {balance} cannot cover {requested}")]
    InsufficientReputation { balance: u64, requested: u64 },
    #[error("balance overflow")]
    Overflow,
}

pub type Result<T> = std::result::Result<T, LedgerError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Earn,
    Spend,
    Slash,
    Liquidate,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Earn => "earn",
            EventKind::Spend => "spend",
            EventKind::Slash => "slash",
            EventKind::Liquidate => "liquidate",
        }
    }
}

/// One ledger entry. `amount` is what actually moved: a slash against a
/// drained account, or liquidating an empty one, records 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReputationEvent {
    pub kind: EventKind,
    pub amount: u64,
    pub reason: String,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReputationAccount {
    pub owner: Address,
    balance: u64,
    frozen: bool,
    liquidated: bool,
    history: Vec<ReputationEvent>,
}

impl ReputationAccount {
    fn new(owner: Address) -> Self {
        Self {
            owner,
            balance: 0,
            frozen: false,
            liquidated: false,
            history: Vec::new(),
        }
    }

    pub fn balance(&self) -> u64 {
        self.balance
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn is_liquidated(&self) -> bool {
        self.liquidated
    }

    pub fn history(&self) -> &[ReputationEvent] {
        &self.history
    }

    /// Balance recomputed by folding the history from zero.
    pub fn replay(&self) -> u64 {
        self.history.iter().fold(0u64, |b, e| match e.kind {
            EventKind::Earn => b + e.amount,
            EventKind::Spend | EventKind::Slash | EventKind::Liquidate => b - e.amount,
        })
    }

    fn push(&mut self, kind: EventKind, amount: u64, reason: &str, tick: u64) {
        self.history.push(ReputationEvent {
            kind,
            amount,
            reason: reason.to_owned(),
            tick,
        });
    }
}

/// Running totals across every account, for the conservation identity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub earned: u64,
    pub spent: u64,
    pub slashed: u64,
    pub liquidated: u64,
}

impl Totals {
    /// `earned - spent - slashed - liquidated`.
    pub fn expected_supply(&self) -> u64 {
        self.earned - self.spent - self.slashed - self.liquidated
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReputationLedger {
    accounts: BTreeMap<Address, ReputationAccount>,
    totals: Totals,
}

impl ReputationLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open_account(&mut self, owner: Address) -> Result<()> {
        if self.accounts.contains_key(&owner) {
            return Err(LedgerError::AccountExists(owner));
        }
        self.accounts.insert(owner.clone(), ReputationAccount::new(owner));
        Ok(())
    }

    pub fn account(&self, owner: &Address) -> Option<&ReputationAccount> {
        self.accounts.get(owner)
    }

    pub fn accounts(&self) -> impl Iterator<Item = &ReputationAccount> {
        self.accounts.values()
    }

    pub fn len(&self) -> usize {
        self.accounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accounts.is_empty()
    }

    pub fn totals(&self) -> Totals {
        self.totals
    }

    fn get_mut(&mut self, owner: &Address) -> Result<&mut ReputationAccount> {
        self.accounts
            .get_mut(owner)
            .ok_or_else(|| LedgerError::UnknownAccount(owner.clone()))
    }

    /// Balance of `owner`, 0 when the account does not exist.
    pub fn balance(&self, owner: &Address) -> u64 {
        self.accounts.get(owner).map_or(0, |a| a.balance)
    }

    pub fn earn(&mut self, owner: &Address, amount: u64, reason: &str, tick: u64) -> Result<u64> {
        if amount == 0 {
            return Err(LedgerError::NonPositiveAmount);
        }
        let acct = self.get_mut(owner)?;
        if acct.liquidated {
            return Err(LedgerError::LiquidatedAccount(owner.clone()));
        }
        if acct.frozen {
            return Err(LedgerError::FrozenAccount(owner.clone()));
        }
        acct.balance = acct.balance.checked_add(amount).ok_or(LedgerError::Overflow)?;
        acct.push(EventKind::Earn, amount, reason, tick);
        let balance = acct.balance;
        self.totals.earned = self.totals.earned.checked_add(amount).ok_or(LedgerError::Overflow)?;
        Ok(balance)
    }

    pub fn spend(&mut self, owner: &Address, amount: u64, purpose: &str, tick: u64) -> Result<u64> {
        if amount == 0 {
            return Err(LedgerError::NonPositiveAmount);
        }
        let acct = self.get_mut(owner)?;
        if acct.liquidated {
            return Err(LedgerError::LiquidatedAccount(owner.clone()));
        }
        if acct.frozen {
            return Err(LedgerError::FrozenAccount(owner.clone()));
        }
        if amount > acct.balance {
            return Err(LedgerError::InsufficientReputation {
                balance: acct.balance,
                requested: amount,
            });
        }
        acct.balance -= amount;
        acct.push(EventKind::Spend, amount, purpose, tick);
        let balance = acct.balance;
        self.totals.spent += amount;
        Ok(balance)
    }

    /// Deducts up to `amount`, flooring the balance at zero. Frozen accounts
    /// can still be slashed.
    pub fn slash(&mut self, owner: &Address, amount: u64, reason: &str, tick: u64) -> Result<u64> {
        if amount == 0 {
            return Err(LedgerError::NonPositiveAmount);
        }
        let acct = self.get_mut(owner)?;
        if acct.liquidated {
            return Err(LedgerError::LiquidatedAccount(owner.clone()));
        }
        let deducted = amount.min(acct.balance);
        acct.balance -= deducted;
        acct.push(EventKind::Slash, deducted, reason, tick);
        let balance = acct.balance;
        self.totals.slashed += deducted;
        Ok(balance)
    }

    /// Pays out the whole balance and closes the account for good.
    pub fn liquidate(&mut self, owner: &Address, tick: u64) -> Result<u64> {
        let acct = self.get_mut(owner)?;
        if acct.liquidated {
            return Err(LedgerError::LiquidatedAccount(owner.clone()));
        }
        let payout = acct.balance;
        acct.balance = 0;
        acct.frozen = true;
        acct.liquidated = true;
        acct.push(EventKind::Liquidate, payout, "liquidate", tick);
        self.totals.liquidated += payout;
        Ok(payout)
    }

    /// Blocks further earn and spend. Used when an identity is burned.
    pub fn freeze(&mut self, owner: &Address) -> Result<()> {
        self.get_mut(owner)?.frozen = true;
        Ok(())
    }

    pub fn is_frozen(&self, owner: &Address) -> bool {
        self.accounts.get(owner).is_some_and(|a| a.frozen)
    }

    pub fn is_validator_eligible(&self, owner: &Address) -> bool {
        self.accounts
            .get(owner)
            .is_some_and(|a| !a.frozen && a.balance > VALIDATOR_THRESHOLD)
    }

    pub fn total_supply(&self) -> u64 {
        self.accounts.values().map(|a| a.balance).sum()
    }

    /// Supply equals the event totals, and every account replays to its balance.
    pub fn conservation_holds(&self) -> bool {
        self.total_supply() == self.totals.expected_supply() && self.accounts.values().all(|a| a.replay() == a.balance)
    }

    /// One row per event: `address,kind,amount,reason,tick`. Accounts appear
    /// in address order, events in the order they were appended.
    pub fn export_csv(&self, w: impl Write) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["address", "kind", "amount", "reason", "tick"])?;
        for acct in self.accounts.values() {
            for e in &acct.history {
                out.write_record([
                    acct.owner.as_str(),
                    e.kind.as_str(),
                    &e.amount.to_string(),
                    &e.reason,
                    &e.tick.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

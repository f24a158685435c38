use dan_core::address::Address;
use dan_core::ledger::{EventKind, LedgerError, ReputationLedger, VALIDATOR_THRESHOLD};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Earn(usize, u64),
    Spend(usize, u64),
    Slash(usize, u64),
    Liquidate(usize),
    Freeze(usize),
}

fn op() -> impl Strategy<Value = Op> {
    let who = 0usize..5;
    let amount = 0u64..2_000;
    prop_oneof![
        4 => (who.clone(), amount.clone()).prop_map(|(w, a)| Op::Earn(w, a)),
        3 => (who.clone(), amount.clone()).prop_map(|(w, a)| Op::Spend(w, a)),
        2 => (who.clone(), amount).prop_map(|(w, a)| Op::Slash(w, a)),
        1 => who.clone().prop_map(Op::Liquidate),
        1 => who.prop_map(Op::Freeze),
    ]
}

fn addr(i: usize) -> Address {
    Address::derive("ledger-test", i as u64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn conservation_survives_any_interleaving(ops in prop::collection::vec(op(), 1..40)) {
        let mut ledger = ReputationLedger::new();
        for i in 0..5 {
            ledger.open_account(addr(i)).unwrap();
        }
        for op in ops {
            let before = ledger.clone();
            let result = match op {
                Op::Earn(w, a) => ledger.earn(&addr(w), a, "earn", 1).map(|_| ()),
                Op::Spend(w, a) => ledger.spend(&addr(w), a, "spend", 1).map(|_| ()),
                Op::Slash(w, a) => ledger.slash(&addr(w), a, "slash", 1).map(|_| ()),
                Op::Liquidate(w) => ledger.liquidate(&addr(w), 1).map(|_| ()),
                Op::Freeze(w) => ledger.freeze(&addr(w)),
            };
            if result.is_err() {
                // Rejected operations leave no trace.
                prop_assert_eq!(ledger.totals(), before.totals());
                prop_assert_eq!(ledger.total_supply(), before.total_supply());
            }
            prop_assert!(ledger.conservation_holds());
            let t = ledger.totals();
            prop_assert_eq!(ledger.total_supply(), t.earned - t.spent - t.slashed - t.liquidated);
        }
    }
}

#[test]
fn eligibility_boundary_is_strict() {
    for delta in -5i64..=5 {
        let balance = (VALIDATOR_THRESHOLD as i64 + delta) as u64;
        let mut ledger = ReputationLedger::new();
        let a = addr(0);
        ledger.open_account(a.clone()).unwrap();
        ledger.earn(&a, balance, "bootstrap", 0).unwrap();
        assert_eq!(ledger.is_validator_eligible(&a), delta > 0, "balance {balance}");
    }
}

#[test]
fn frozen_accounts_lose_eligibility_and_reject_flows() {
    let mut ledger = ReputationLedger::new();
    let a = addr(1);
    ledger.open_account(a.clone()).unwrap();
    ledger.earn(&a, 2_000_000, "bootstrap", 0).unwrap();
    assert!(ledger.is_validator_eligible(&a));
    ledger.freeze(&a).unwrap();
    assert!(!ledger.is_validator_eligible(&a));
    assert!(matches!(ledger.earn(&a, 1, "x", 1), Err(LedgerError::FrozenAccount(_))));
    assert!(matches!(ledger.spend(&a, 1, "x", 1), Err(LedgerError::FrozenAccount(_))));
    assert_eq!(ledger.slash(&a, 5, "x", 1), Ok(1_999_995));
}

#[test]
fn overdrawn_spend_and_oversized_slash() {
    let mut ledger = ReputationLedger::new();
    let a = addr(2);
    ledger.open_account(a.clone()).unwrap();
    ledger.earn(&a, 50, "work", 0).unwrap();
    assert_eq!(
        ledger.spend(&a, 80, "perk", 1),
        Err(LedgerError::InsufficientReputation { balance: 50, requested: 80 })
    );
    assert_eq!(ledger.slash(&a, 80, "fault", 2), Ok(0));
    let last = ledger.account(&a).unwrap().history().last().unwrap().clone();
    assert_eq!((last.kind, last.amount), (EventKind::Slash, 50));
    assert_eq!(ledger.totals().slashed, 50);
    assert!(ledger.conservation_holds());
}

#[test]
fn csv_export_lists_every_event() {
    let mut ledger = ReputationLedger::new();
    let a = addr(3);
    ledger.open_account(a.clone()).unwrap();
    ledger.earn(&a, 10, "seal", 4).unwrap();
    ledger.spend(&a, 3, "vote", 5).unwrap();
    let mut buf = Vec::new();
    ledger.export_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "address,kind,amount,reason,tick");
    assert_eq!(lines[1], format!("{a},earn,10,seal,4"));
    assert_eq!(lines[2], format!("{a},spend,3,vote,5"));
}

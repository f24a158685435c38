use std::path::PathBuf;

use dan_core::econ::GameClass;
use dan_core::scenario::{InteractionMode, Scenario, ScenarioError};
use dan_core::sim::{self, RunError, SimEvent, METRICS_FILE, TRACE_FILE};

fn scenario(name: &str) -> Scenario {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name].iter().collect();
    Scenario::load(&path).unwrap()
}

fn small() -> Scenario {
    let mut s = scenario("transfer_only.toml");
    s.duration = 40;
    s.interaction.mode = InteractionMode::Enthalpy;
    s.governance.burn_probability = 0.2;
    s.governance.spend_probability = 0.3;
    s
}

#[test]
fn identical_seeds_give_identical_artifacts() {
    let s = small();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    sim::export(&sim::run(&s).unwrap(), a.path()).unwrap();
    sim::export(&sim::run(&s).unwrap(), b.path()).unwrap();
    for name in [METRICS_FILE, TRACE_FILE] {
        let (x, y) = (std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name}");
    }
    let other = sim::run(&Scenario { seed: s.seed + 1, ..s }).unwrap();
    let mut buf = Vec::new();
    other.metrics.write_csv(&mut buf).unwrap();
    assert_ne!(buf, std::fs::read(a.path().join(METRICS_FILE)).unwrap());
}

#[test]
fn transfer_only_trade_is_zero_sum_every_epoch() {
    let out = sim::run(&scenario("transfer_only.toml")).unwrap();
    assert_eq!(out.metrics.rows.len(), 10);
    for r in &out.metrics.rows {
        assert_eq!(r.game_class, GameClass::ZeroSum, "epoch {}", r.epoch);
        assert!(r.ponzi_suspect);
        assert!(r.transactions > 0);
    }
}

#[test]
fn positive_enthalpy_trade_is_positive_sum_every_epoch() {
    let out = sim::run(&scenario("positive_enthalpy.toml")).unwrap();
    assert_eq!(out.metrics.rows.len(), 10);
    for r in &out.metrics.rows {
        assert_eq!(r.game_class, GameClass::PositiveSum, "epoch {}", r.epoch);
        assert!(!r.ponzi_suspect && r.dh_formation > 0.0);
    }
}

#[test]
fn no_trade_means_no_value_created() {
    let mut s = small();
    s.interaction.transaction_rate = 0.0;
    s.governance.spend_probability = 0.0;
    s.governance.burn_probability = 0.0;
    let out = sim::run(&s).unwrap();
    let first = &out.metrics.rows[0];
    for r in &out.metrics.rows {
        assert_eq!((r.transactions, r.satisfied), (0, 0));
        assert_eq!(r.value_total, first.value_total);
        assert_eq!(r.game_class, GameClass::ZeroSum);
        assert_eq!(r.ydr_spent, 0);
    }
    // Only sealing earns when nobody trades.
    let last = out.metrics.rows.last().unwrap();
    let minted = last.ydr_earned - first.ydr_earned;
    assert!(minted > 0);
    assert_eq!(last.ydr_total - first.ydr_total, minted);
    assert_eq!(last.ydr_slashed, first.ydr_slashed);
}

#[test]
fn conservation_holds_through_governance() {
    let mut s = small();
    s.governance.liquidation_probability = 0.2;
    s.governance.reinstatement_probability = 1.0;
    let out = sim::run(&s).unwrap();
    assert!(out.metrics.rows.iter().all(|r| r.conservation_ok && r.all_finite()));
    assert!(out.ledger.conservation_holds());
    let burned = out.events.iter().filter(|e| matches!(e, SimEvent::Burned { .. })).count();
    assert!(burned > 0);
    assert_eq!(out.metrics.rows.last().unwrap().burned_tokens, burned);
}

#[test]
fn invalid_scenarios_are_rejected_before_running() {
    let bad = |text: &str| match Scenario::from_toml(text) {
        Err(ScenarioError::Validation { field, .. }) => field,
        other => panic!("{other:?}"),
    };
    assert_eq!(bad("name = \"x\"\n[network]\ndrop_probability = 1.5"), "network.drop_probability");
    assert_eq!(bad("name = \"x\"\npopulation = 2\ncommunities = 3"), "communities");
    assert_eq!(bad("name = \"x\"\n[validators]\ncount = 3\ninitial_balance = 1000000"), "validators.initial_balance");
    assert!(matches!(Scenario::from_toml("name = \"x\"\nbogus = 1"), Err(ScenarioError::Parse(_))));
    let s = Scenario { epoch_length: 0, ..Scenario::default() };
    assert!(matches!(sim::run(&s), Err(RunError::Scenario(_))));
}

#[test]
fn scenarios_round_trip_through_toml() {
    for name in ["reference.toml", "transfer_only.toml", "positive_enthalpy.toml", "minimal.toml", "unstaffed.toml"] {
        let s = scenario(name);
        assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s, "{name}");
    }
}

#[test]
fn understaffed_networks_are_reported() {
    let out = sim::run(&scenario("unstaffed.toml")).unwrap();
    assert!(out.metrics.rows.iter().all(|r| r.understaffed));
    assert!(out.events.iter().any(|e| matches!(e, SimEvent::Warning { .. })));
}

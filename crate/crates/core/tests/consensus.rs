use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use dan_core::address::Address;
use dan_core::consensus::{
    next_sealer, simulate_consensus, validate_block, Block, ChainState, ConsensusConfig, ConsensusError, FaultConfig,
    NetworkConfig, PoaEngine, TraceEvent, ValidatorSet, ViolationKind, MIN_RECOMMENDED_VALIDATORS,
};
use dan_core::ledger::ReputationLedger;
use proptest::prelude::*;

fn network(n: usize, balance: u64) -> (ValidatorSet, ReputationLedger) {
    let mut ledger = ReputationLedger::new();
    let addrs: Vec<Address> = (0..n as u64).map(|i| Address::derive("validator", i)).collect();
    for a in &addrs {
        ledger.open_account(a.clone()).unwrap();
        ledger.earn(a, balance, "bootstrap", 0).unwrap();
    }
    (ValidatorSet::new(addrs), ledger)
}

#[test]
fn ten_thousand_fault_free_blocks() {
    let (set, mut ledger) = network(23, 1_100_000);
    let started = Instant::now();
    let run = simulate_consensus(
        &set,
        &NetworkConfig { seed: 11, ..NetworkConfig::default() },
        10_000,
        &mut ledger,
        &ConsensusConfig::default(),
        &FaultConfig::default(),
    )
    .unwrap();
    let elapsed = started.elapsed();

    assert_eq!(run.trace.violations().count(), 0);
    let fair = 10_000.0 / 23.0;
    for v in set.members() {
        let c = run.seal_counts.get(v).copied().unwrap_or(0) as f64;
        assert!((c - fair).abs() <= 1.0, "{v} sealed {c}");
    }
    let mut prev: Option<&Address> = None;
    for h in 1..=10_000 {
        let b = run.chain.block_at(h).unwrap();
        let sealer = b.sealer.as_ref().unwrap();
        assert!(set.contains(sealer) && ledger.is_validator_eligible(sealer));
        assert_ne!(Some(sealer), prev, "height {h}");
        assert_eq!(b.recomputed_id(), b.block_id);
        prev = Some(sealer);
    }
    assert_eq!(run.trace.finalizations().count(), 10_000);
    assert!(elapsed < Duration::from_secs(10), "{elapsed:?}");
}

#[test]
fn each_height_is_finalized_once_under_faults() {
    let (set, mut ledger) = network(23, 1_100_000);
    let faults = FaultConfig {
        faulty: set.members()[..3].to_vec(),
        equivocation_probability: 0.5,
        invalid_block_probability: 0.3,
    };
    let net = NetworkConfig { drop_probability: 0.05, seed: 4, ..NetworkConfig::default() };
    let run = simulate_consensus(&set, &net, 300, &mut ledger, &ConsensusConfig::default(), &faults).unwrap();
    let mut heights = BTreeMap::new();
    for (_, h) in run.trace.finalizations() {
        *heights.entry(h).or_insert(0) += 1;
    }
    assert!(heights.values().all(|&n| n == 1));
    assert_eq!(heights.len(), 300);
    let kinds: Vec<ViolationKind> = run.trace.violations().collect();
    assert!(kinds.contains(&ViolationKind::Equivocation));
    assert!(kinds.contains(&ViolationKind::BadHash));
    for f in &faults.faulty {
        assert!(ledger.balance(f) < 1_100_000 + 10 * run.seal_counts.get(f).copied().unwrap_or(0));
    }
    let slashed: u64 = run
        .trace
        .events
        .iter()
        .filter_map(|e| match e {
            TraceEvent::Slash { sealer, deducted, .. } => {
                assert!(faults.faulty.contains(sealer));
                Some(*deducted)
            }
            _ => None,
        })
        .sum();
    assert_eq!(ledger.totals().slashed, slashed);
    assert!(ledger.conservation_holds());
}

#[test]
fn slashing_below_the_threshold_removes_a_validator() {
    let (set, mut ledger) = network(5, 1_000_050);
    let faults = FaultConfig {
        faulty: vec![set.members()[0].clone()],
        equivocation_probability: 1.0,
        invalid_block_probability: 0.0,
    };
    let cfg = ConsensusConfig { epoch_length: 5, ..ConsensusConfig::default() };
    let run = simulate_consensus(&set, &NetworkConfig::default(), 60, &mut ledger, &cfg, &faults).unwrap();
    let bad = &set.members()[0];
    assert!(!ledger.is_validator_eligible(bad));
    let last_seal = run.chain.canonical().iter().filter_map(|id| run.chain.get(*id)).filter(|b| b.sealer.as_ref() == Some(bad)).count();
    assert!(last_seal <= 1);
}

#[test]
fn a_silent_network_stalls() {
    let (set, mut ledger) = network(23, 1_100_000);
    let net = NetworkConfig { drop_probability: 1.0, ..NetworkConfig::default() };
    let cfg = ConsensusConfig { max_failed_rounds: 7, ..ConsensusConfig::default() };
    let err = simulate_consensus(&set, &net, 1, &mut ledger, &cfg, &FaultConfig::default()).unwrap_err();
    assert!(matches!(err, ConsensusError::StalledChain { height: 1, rounds: 7 }));
}

#[test]
fn understaffed_sets_are_flagged_but_run() {
    let (set, mut ledger) = network(4, 2_000_000);
    assert!(set.understaffed() && set.len() < MIN_RECOMMENDED_VALIDATORS);
    let run = simulate_consensus(&set, &NetworkConfig::default(), 40, &mut ledger, &ConsensusConfig::default(), &FaultConfig::default()).unwrap();
    assert_eq!(run.chain.height(), 40);
    assert!(run.seal_counts.values().all(|&c| c == 10));
}

#[test]
fn engine_runs_are_deterministic() {
    let go = || {
        let (set, mut ledger) = network(23, 1_100_000);
        let faults = FaultConfig {
            faulty: set.members()[..2].to_vec(),
            equivocation_probability: 0.3,
            invalid_block_probability: 0.3,
        };
        let net = NetworkConfig { drop_probability: 0.1, seed: 77, ..NetworkConfig::default() };
        let mut engine = PoaEngine::new(set.members().to_vec(), &ledger, net, ConsensusConfig::default(), faults).unwrap();
        for t in 0..100 {
            let now = engine.clock();
            engine.run_round(&mut ledger, &[t], now).unwrap();
        }
        let mut buf = Vec::new();
        engine.take_trace().write_jsonl(&mut buf).unwrap();
        buf
    };
    assert_eq!(go(), go());
}

proptest! {
    #[test]
    fn rotation_never_repeats_a_sealer(n in 2usize..30, height in 0u64..10_000, last in 0usize..30) {
        let set = ValidatorSet::new((0..n as u64).map(|i| Address::derive("v", i)));
        let last = set.members()[last % n].clone();
        let next = next_sealer(&set, height, Some(&last)).unwrap();
        prop_assert_ne!(&next, &last);
        prop_assert!(set.contains(&next));
    }

    #[test]
    fn tampered_blocks_fail_validation(tx in prop::collection::vec(any::<u64>(), 0..5), flip in 0u32..64) {
        let (set, ledger) = network(3, 2_000_000);
        let chain = ChainState::new();
        let sealer = set.members()[0].clone();
        let mut b = Block::new(1, chain.head().block_id, sealer, tx, 1);
        prop_assert_eq!(validate_block(&b, &chain, &set, &ledger), Ok(()));
        b.block_id.0 ^= 1 << flip;
        prop_assert_eq!(validate_block(&b, &chain, &set, &ledger), Err(ViolationKind::BadHash));
    }
}

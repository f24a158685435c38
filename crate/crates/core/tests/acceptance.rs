//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fail.

// `ensure!(a <= b)` must fail on NaN, which the negated form does.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use dan_core::address::Address;
use dan_core::consensus::{simulate_consensus, ConsensusConfig, FaultConfig, NetworkConfig, ValidatorSet};
use dan_core::econ::{classify_game, enthalpy_of_reaction, entropy, GameClass, HoldingsDistribution, SpeciesTerm, ZERO_SUM_EPSILON};
use dan_core::forecast::{self, ForecastConfig};
use dan_core::gating::{Decision, GateAgent, GateConfig, GateMode, GateSignal};
use dan_core::governance::{tally, weighted_mean, Proposal, ProposalKind, TallyRule, Vote};
use dan_core::ledger::{ReputationLedger, VALIDATOR_THRESHOLD};
use dan_core::scenario::Scenario;
use dan_core::sim::{self, METRICS_FILE, TRACE_FILE};
use dan_tensor::{Activation, ParamStore, Tape, Tensor};
use dan_ynet::spatial::{Dgcn, EvolveGcn};
use dan_ynet::{dilated_causal_conv, normalize_adjacency, Initializer};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn root() -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", ".."].iter().collect()
}

fn funded(n: usize, balance: u64) -> (ValidatorSet, ReputationLedger) {
    let mut ledger = ReputationLedger::new();
    let addrs: Vec<Address> = (0..n as u64).map(|i| Address::derive("validator", i)).collect();
    for a in &addrs {
        ledger.open_account(a.clone()).unwrap();
        ledger.earn(a, balance, "bootstrap", 0).unwrap();
    }
    (ValidatorSet::new(addrs), ledger)
}

fn consensus_rules() -> Outcome {
    let (set, mut ledger) = funded(23, 1_100_000);
    let started = Instant::now();
    let net = NetworkConfig { seed: 11, ..NetworkConfig::default() };
    let run = simulate_consensus(&set, &net, 10_000, &mut ledger, &ConsensusConfig::default(), &FaultConfig::default())
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let (mut consecutive, mut ineligible) = (0, 0);
    let mut prev = None;
    for h in 1..=10_000 {
        let sealer = run.chain.block_at(h).and_then(|b| b.sealer.clone()).ok_or(format!("no block at {h}"))?;
        if !(set.contains(&sealer) && ledger.is_validator_eligible(&sealer)) {
            ineligible += 1;
        }
        if prev.as_ref() == Some(&sealer) {
            consecutive += 1;
        }
        prev = Some(sealer);
    }
    let fair = 10_000.0 / 23.0;
    let counts: Vec<u64> = set.members().iter().map(|v| run.seal_counts.get(v).copied().unwrap_or(0)).collect();
    let spread_ok = counts.iter().all(|&c| (c as f64 - fair).abs() <= 1.0);
    ensure!(consecutive == 0 && ineligible == 0, "{consecutive} consecutive, {ineligible} ineligible");
    ensure!(run.trace.violations().count() == 0, "trace reports violations");
    ensure!(spread_ok, "seal counts {counts:?}");
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
    Ok(format!("seals {lo}..{hi}, {elapsed:.2?}"))
}

fn eligibility_boundary() -> Outcome {
    for delta in -5i64..=5 {
        let balance = (VALIDATOR_THRESHOLD as i64 + delta) as u64;
        let (set, ledger) = funded(1, balance);
        let eligible = ledger.is_validator_eligible(&set.members()[0]);
        ensure!(eligible == (delta > 0), "balance {balance} eligible={eligible}");
    }
    Ok(format!("{} ineligible, {} eligible", VALIDATOR_THRESHOLD, VALIDATOR_THRESHOLD + 1))
}

#[derive(Debug, Clone)]
enum Op {
    Earn(usize, u64),
    Spend(usize, u64),
    Slash(usize, u64),
    Liquidate(usize),
}

fn ledger_conservation() -> Outcome {
    let op = prop_oneof![
        (0usize..5, 0u64..2_000).prop_map(|(w, a)| Op::Earn(w, a)),
        (0usize..5, 0u64..2_000).prop_map(|(w, a)| Op::Spend(w, a)),
        (0usize..5, 0u64..2_000).prop_map(|(w, a)| Op::Slash(w, a)),
        (0usize..5).prop_map(Op::Liquidate),
    ];
    let mut runner = TestRunner::new(Config { cases: 10_000, failure_persistence: None, ..Config::default() });
    runner
        .run(&prop::collection::vec(op, 1..40), |ops| {
            let addr = |i: usize| Address::derive("acceptance", i as u64);
            let mut ledger = ReputationLedger::new();
            for i in 0..5 {
                ledger.open_account(addr(i)).unwrap();
            }
            for op in ops {
                let _ = match op {
                    Op::Earn(w, a) => ledger.earn(&addr(w), a, "earn", 1).map(|_| ()),
                    Op::Spend(w, a) => ledger.spend(&addr(w), a, "spend", 1).map(|_| ()),
                    Op::Slash(w, a) => ledger.slash(&addr(w), a, "slash", 1).map(|_| ()),
                    Op::Liquidate(w) => ledger.liquidate(&addr(w), 1).map(|_| ()),
                };
                let t = ledger.totals();
                prop_assert!(ledger.conservation_holds());
                prop_assert_eq!(ledger.total_supply(), t.earned - t.spent - t.slashed - t.liquidated);
                // Balances are unsigned; an underflow would have panicked above.
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("10000 interleavings".into())
}

fn governance() -> Outcome {
    let proposal = Proposal { id: 1, kind: ProposalKind::Generic, title: "acceptance".into(), opened_at: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let votes = |rng: &mut ChaCha8Rng| -> Vec<Vote> {
        let n = rng.random_range(1..=30);
        (0..n).map(|i| Vote::new(Address::derive("voter", i), rng.random(), rng.random_range(0.001..1e4))).collect()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..1_000 {
        let mut vs = votes(&mut rng);
        let (num, den) = vs.iter().fold((0.0, 0.0), |(n, d), v| (n + v.weight * v.value, d + v.weight));
        let err = (weighted_mean(&vs).map_err(|e| e.to_string())? - num / den).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-12, "fold mismatch {err:e}");

        let total = den * rng.random_range(1.0..5.0);
        let base = tally(&proposal, &vs, total, &TallyRule::default(), |_| true, 0).map_err(|e| e.to_string())?;
        for lambda in [1e-6, 1.0, 1e6] {
            let scaled: Vec<Vote> = vs.iter().map(|v| Vote { weight: v.weight * lambda, ..v.clone() }).collect();
            let d = tally(&proposal, &scaled, total * lambda, &TallyRule::default(), |_| true, 0)
                .map_err(|e| e.to_string())?;
            ensure!(d.passed == base.passed && d.quorum_met == base.quorum_met, "decision changed at {lambda}");
            ensure!((d.w - base.w).abs() <= 1e-12, "W moved at {lambda}");
        }

        vs.iter_mut().for_each(|v| v.weight = 3.5);
        let mean = vs.iter().map(|v| v.value).sum::<f64>() / vs.len() as f64;
        ensure!((weighted_mean(&vs).map_err(|e| e.to_string())? - mean).abs() <= 1e-12, "uniform mean");
    }
    Ok(format!("max fold error {worst:.1e}"))
}

fn econodynamics() -> Outcome {
    let terms = || prop::collection::vec((0.01f64..10.0, -500.0f64..500.0), 0..6);
    let species = |raw: &[(f64, f64)], k: f64| -> Vec<SpeciesTerm> {
        raw.iter().map(|&(nu, h)| SpeciesTerm::new(nu * k, h).unwrap()).collect()
    };
    let mut runner = TestRunner::new(Config { cases: 1_000, failure_persistence: None, ..Config::default() });
    runner
        .run(&(terms(), terms(), 0.1f64..10.0), |(p, r, k)| {
            let (ps, rs) = (species(&p, 1.0), species(&r, 1.0));
            prop_assert_eq!(enthalpy_of_reaction(&ps, &ps), 0.0);
            let base = enthalpy_of_reaction(&ps, &rs);
            prop_assert_eq!(enthalpy_of_reaction(&rs, &ps), -base);
            let scaled = enthalpy_of_reaction(&species(&p, k), &species(&r, k));
            prop_assert!((scaled - k * base).abs() <= 1e-9 * (1.0 + scaled.abs().max((k * base).abs())));
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let s = |p: Vec<f64>| entropy(&HoldingsDistribution::new(p).unwrap());
    let (point, half, four) = (s(vec![1.0]), s(vec![0.5, 0.5]), s(vec![0.25; 4]));
    ensure!(point == 0.0, "S(point) = {point}");
    ensure!((half - 2f64.ln()).abs() <= 1e-12 && (four - 4f64.ln()).abs() <= 1e-12, "entropies {half} {four}");
    ensure!(point < half && half < four, "ordering");

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..1_000 {
        let n = rng.random_range(1..20);
        let mut payoffs: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        if i % 3 == 0 {
            let mirrored: Vec<f64> = payoffs.iter().map(|x| -x).collect();
            payoffs.extend(mirrored);
        }
        let sum: f64 = payoffs.iter().sum();
        let scale = payoffs.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        let want = if sum.abs() <= ZERO_SUM_EPSILON * scale {
            GameClass::ZeroSum
        } else if sum > 0.0 {
            GameClass::PositiveSum
        } else {
            GameClass::NegativeSum
        };
        ensure!(classify_game(&payoffs, ZERO_SUM_EPSILON) == want, "vector {i}");
    }
    Ok("enthalpy laws, entropy ordering, 1000 classifications".into())
}

fn naive_conv(x: &[f64], g: &[f64], d: usize) -> Vec<f64> {
    (0..x.len())
        .map(|t| (0..g.len()).filter(|s| d * s <= t).map(|s| g[s] * x[t - d * s]).sum())
        .collect()
}

fn convolution() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for case in 0..500 {
        let t = rng.random_range(1..=40);
        let d = rng.random_range(1..=6);
        let x: Vec<f64> = (0..t).map(|_| rng.random_range(-3.0..3.0)).collect();
        let g: Vec<f64> = (0..rng.random_range(1..=5)).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = dilated_causal_conv(&x, &g, d);
        for (a, b) in y.iter().zip(naive_conv(&x, &g, d)) {
            worst = worst.max((a - b).abs());
        }
        ensure!(worst <= 1e-12, "case {case}: error {worst:e}");
        for s in 0..t {
            let mut bumped = x.clone();
            bumped[s] += 1.0;
            ensure!(dilated_causal_conv(&bumped, &g, d)[..s] == y[..s], "case {case}: t={s} leaked backwards");
        }
    }
    Ok(format!("500 triples, max error {worst:.1e}"))
}

fn gradient_check() -> Outcome {
    let started = Instant::now();
    let report = forecast::tiny_gradient_check(0).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure!(report.max_relative_error < 1e-4, "max relative error {:e}", report.max_relative_error);
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "{} coordinates, max relative error {:.2e}, {elapsed:.2?}",
        report.coordinates_checked, report.max_relative_error
    ))
}

fn learning_signal() -> Outcome {
    let cfg = ForecastConfig::load(&root().join("configs").join("planted.toml")).map_err(|e| e.to_string())?;
    let s = &cfg.synthetic;
    ensure!((s.nodes, s.history, s.horizon, s.n_sequences) == (10, 12, 3, 200), "planted dataset shape");
    ensure!(cfg.train.steps <= 500, "{} steps", cfg.train.steps);
    let started = Instant::now();
    let data = forecast::load_dataset(forecast::SYNTHETIC, &cfg).map_err(|e| e.to_string())?;
    let out = forecast::train_and_evaluate(&data, &cfg).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let ratio = out.ratio();
    ensure!(ratio <= 0.5, "test/persistence = {ratio:.3}");
    ensure!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!("test/persistence = {ratio:.3}, {elapsed:.1?}"))
}

fn evolvegcn_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let adjacency = |rng: &mut ChaCha8Rng, n| {
        Tensor::from_fn(&[n, n], |_| if rng.random::<f64>() < 0.4 { 0.0 } else { rng.random_range(0.0..5.0) })
    };
    let err = |e: dan_tensor::TensorError| e.to_string();
    let yerr = |e: dan_ynet::YnetError| e.to_string();

    let (t, n, c, h) = (5, 4, 3, 2);
    let mut store = ParamStore::new();
    let mut init = Initializer::new(9);
    let layer = EvolveGcn::new(&mut store, "e", c, h, Activation::Tanh, &mut init);
    layer.gru.freeze(&mut store);
    let x = Tensor::from_fn(&[t, n, c], |_| rng.random_range(-1.0..1.0));
    let adj: Vec<Tensor> = (0..t).map(|_| adjacency(&mut rng, n)).collect();
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let norm: Vec<_> = adj.iter().map(|a| Ok(tape.constant(normalize_adjacency(a)?))).collect::<Result<_, _>>().map_err(yerr)?;
    let y = layer.forward(&store, &mut tape, xv, &norm).map_err(yerr)?;
    let y = tape.value(y);
    let w1 = store.value(layer.initial_weight).clone();
    for s in 0..t {
        let ax = normalize_adjacency(&adj[s]).map_err(yerr)?.matmul(&x.select(s).map_err(err)?).map_err(err)?;
        let want = ax.matmul(&w1).map_err(err)?.map(|v| Activation::Tanh.apply(v));
        ensure!(y.select(s).map_err(err)? == want, "frozen GRU differs from static GCN at snapshot {s}");
    }

    let (t, n, c, h) = (3, 5, 3, 4);
    let mut store = ParamStore::new();
    let mut init = Initializer::new(11);
    let dgcn = Dgcn::new(&mut store, "d", c, h, 0, Activation::Tanh, &mut init);
    dgcn.evolve.gru.freeze(&mut store);
    let x = Tensor::from_fn(&[t, n, c], |_| rng.random_range(-1.0..1.0));
    let a = Tensor::from_fn(&[t, n, n], |_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random_range(0.0..3.0) });
    let y = dgcn.apply(&store, &x, &a).map_err(yerr)?;
    let w1 = store.value(dgcn.evolve.initial_weight);
    let (wf, wb) = dgcn.diffusion.weights[0];
    let (wf, wb) = (store.value(wf), store.value(wb));
    let mut worst: f64 = 0.0;
    for s in 0..t {
        let xt = x.select(s).map_err(err)?;
        let at = a.select(s).map_err(err)?;
        // Symmetric normalization with self loops, written out by hand.
        let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| at.get(&[i, j]).unwrap()).sum()).collect();
        let inv = |d: f64| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 };
        let ahat = Tensor::from_fn(&[n, n], |k| {
            let (i, j) = (k / n, k % n);
            f64::from(u8::from(i == j)) + inv(deg[i]) * at.get(&[i, j]).unwrap() * inv(deg[j])
        });
        let evolved = ahat.matmul(&xt).map_err(err)?.matmul(w1).map_err(err)?.map(f64::tanh);
        let diffused = xt.matmul(wf).map_err(err)?.add(&xt.matmul(wb).map_err(err)?).map_err(err)?;
        let want = evolved.add(&diffused).map_err(err)?;
        worst = worst.max(y.select(s).map_err(err)?.max_abs_diff(&want).ok_or("shape mismatch")?);
    }
    ensure!(worst <= 1e-12, "K=0 DGCN error {worst:e}");
    Ok(format!("frozen GRU bitwise, K=0 error {worst:.1e}"))
}

fn gating() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let agent = |rng: &mut ChaCha8Rng, eta: f64| {
        GateAgent::new(&GateConfig {
            theta: [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
            eta_short: eta,
            eta_long: eta,
            mode: GateMode::Stochastic,
        })
        .unwrap()
    };
    let signal = |rng: &mut ChaCha8Rng| GateSignal::new(rng.random(), rng.random_range(0.1..5.0)).unwrap();

    for _ in 0..20 {
        let mut a = agent(&mut rng, 0.0);
        let signals: Vec<GateSignal> = (0..50).map(|_| signal(&mut rng)).collect();
        let decide = |a: &mut GateAgent| {
            let mut r = ChaCha8Rng::seed_from_u64(99);
            signals.iter().map(|s| a.decide(s, &mut r).decision).collect::<Vec<Decision>>()
        };
        let first = decide(&mut a);
        for (s, &d) in signals.iter().zip(&first) {
            a.short_loop_update(s, d, rng.random_range(-5.0..5.0)).map_err(|e| e.to_string())?;
        }
        a.long_loop_update(2.0).map_err(|e| e.to_string())?;
        ensure!(decide(&mut a) == first, "zero learning rate changed decisions");
    }

    for i in 0..100 {
        let eta = rng.random_range(0.001..0.5);
        let mut a = agent(&mut rng, eta);
        let s = signal(&mut rng);
        let taken = a.decide(&s, &mut rng).decision;
        let prob = |a: &GateAgent| {
            let p = a.acceptance_probability(&s);
            if taken == Decision::Accept {
                p
            } else {
                1.0 - p
            }
        };
        let before = prob(&a);
        a.short_loop_update(&s, taken, 1.0).map_err(|e| e.to_string())?;
        ensure!(prob(&a) > before, "agent {i}: {before} -> {}", prob(&a));
    }
    Ok("stationary at zero rates, 100/100 agents reinforced".into())
}

fn run_to(scenario: &Scenario, dir: &Path) -> Result<sim::RunOutput, String> {
    let out = sim::run(scenario).map_err(|e| e.to_string())?;
    sim::export(&out, dir).map_err(|e| e.to_string())?;
    Ok(out)
}

fn end_to_end() -> Outcome {
    let load = |name: &str| Scenario::load(&root().join("scenarios").join(name)).map_err(|e| e.to_string());
    let reference = load("reference.toml")?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_to(&reference, &a)?;
    run_to(&reference, &b)?;
    for f in [METRICS_FILE, TRACE_FILE] {
        let (x, y) = (std::fs::read(a.join(f)).map_err(|e| e.to_string())?, std::fs::read(b.join(f)).map_err(|e| e.to_string())?);
        ensure!(x == y, "{f} differs between runs");
    }

    let transfer = sim::run(&load("transfer_only.toml")?).map_err(|e| e.to_string())?;
    for r in &transfer.metrics.rows {
        ensure!(r.game_class == GameClass::ZeroSum && r.ponzi_suspect, "transfer epoch {} is {:?}", r.epoch, r.game_class);
    }
    let positive = sim::run(&load("positive_enthalpy.toml")?).map_err(|e| e.to_string())?;
    for r in &positive.metrics.rows {
        ensure!(r.game_class == GameClass::PositiveSum, "enthalpy epoch {} is {:?}", r.epoch, r.game_class);
    }
    Ok(format!(
        "byte-identical reruns, {} zero-sum and {} positive-sum epochs",
        transfer.metrics.rows.len(),
        positive.metrics.rows.len()
    ))
}

fn main() {
    let criteria: [(&str, Check); 11] = [
        ("consensus rule suite", consensus_rules),
        ("eligibility boundary", eligibility_boundary),
        ("ledger conservation", ledger_conservation),
        ("governance aggregation", governance),
        ("econodynamics", econodynamics),
        ("convolution oracle", convolution),
        ("gradient check", gradient_check),
        ("learning signal", learning_signal),
        ("EvolveGCN reduction", evolvegcn_reduction),
        ("gating", gating),
        ("end-to-end determinism", end_to_end),
    ];
    // Failures are reported on their line, not as panic noise.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or("panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

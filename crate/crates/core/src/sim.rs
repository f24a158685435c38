//! The end-to-end event loop.
//!
//! Each tick citizens transact, the gate of their community admits or
//! rejects each attempt, and one PoA round runs over the pending
//! transactions. Every `epoch_length` ticks the harness runs governance,
//! econodynamics accounting, the gates' long loop, and forecaster
//! retraining, then records a metrics row.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use dan_tensor::Tensor;
use dan_ynet::{GraphSequence, ModelConfig, Sample, TrainConfig, YIdentityNet};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::address::Address;
use crate::consensus::{ChainTrace, ConsensusConfig, ConsensusError, FaultConfig, NetworkConfig, PoaEngine, RoundResult, TraceEvent};
use crate::econ::{self, classify_game, enthalpy_of_reaction, GameClass, HoldingsDistribution, SpeciesTerm, ZERO_SUM_EPSILON};
use crate::gating::{Decision, GateAgent, GateConfig, GateSignal};
use crate::governance::{tally, Proposal, ProposalKind, Vote};
use crate::identity::{Ambition, EducationLevel, FaceVector, Gender, IdentityError, IdentityRegistry, JobLevel, Profile, TokenId, FACE_DIM};
use crate::ledger::ReputationLedger;
use crate::metrics::{histogram, MetricsReport, MetricsRow};
use crate::rng::{substream, substream_seed};
use crate::scenario::{InitialYdr, InteractionMode, Scenario, ScenarioError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("tick {tick}, {module}: {message}")]
    Module {
        tick: u64,
        module: &'static str,
        message: String,
    },
    #[error("export: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    fn at(tick: u64, module: &'static str, err: impl std::fmt::Display) -> Self {
        RunError::Module {
            tick,
            module,
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    Minted {
        tick: u64,
        token_id: TokenId,
        owner: Address,
        slot: usize,
        community: usize,
        validator: bool,
    },
    Burned {
        tick: u64,
        token_id: TokenId,
        owner: Address,
        forfeited: u64,
        bonds_dissolved: f64,
    },
    Spent {
        tick: u64,
        owner: Address,
        amount: u64,
    },
    Liquidated {
        tick: u64,
        owner: Address,
        payout: u64,
    },
    ProposalOpened {
        tick: u64,
        proposal: Proposal,
        voters: usize,
    },
    Tallied {
        tick: u64,
        proposal_id: u64,
        #[serde(rename = "W")]
        w: f64,
        passed: bool,
        quorum_met: bool,
        participating_weight: f64,
        total_active_weight: f64,
    },
    Reinstated {
        tick: u64,
        old_token_id: TokenId,
        token_id: TokenId,
        owner: Address,
    },
    ForecasterTrained {
        tick: u64,
        epoch: u64,
        community: usize,
        train_windows: usize,
        final_loss: f64,
        test_mse: f64,
        baseline_mse: f64,
    },
    EpochClosed {
        tick: u64,
        epoch: u64,
        game_class: GameClass,
        ponzi_suspect: bool,
        payoff_total: f64,
    },
    Warning {
        tick: u64,
        module: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: u64,
    pub community: usize,
    pub step: usize,
    pub loss: f64,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsReport,
    pub trace: ChainTrace,
    pub events: Vec<SimEvent>,
    pub losses: Vec<LossRow>,
    /// Forecaster parameters of every community, as one tensor bundle.
    pub checkpoint: Vec<u8>,
    pub ledger: ReputationLedger,
    pub registry: IdentityRegistry,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const LOSS_FILE: &str = "loss.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LEDGER_FILE: &str = "ledger.csv";
pub const REGISTRY_FILE: &str = "registry.json";

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes every artifact into `dir`, replacing earlier files of the same name.
pub fn export(out: &RunOutput, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let io = |e: csv::Error| std::io::Error::other(e.to_string());
    out.metrics.write_csv(BufWriter::new(File::create(dir.join(METRICS_FILE))?)).map_err(io)?;
    let mut w = BufWriter::new(File::create(dir.join(TRACE_FILE))?);
    out.trace.write_jsonl(&mut w)?;
    w.flush()?;
    write_jsonl(&dir.join(EVENTS_FILE), &out.events)?;
    let mut losses = csv::Writer::from_writer(BufWriter::new(File::create(dir.join(LOSS_FILE))?));
    losses.write_record(["epoch", "community", "step", "loss"]).map_err(io)?;
    for r in &out.losses {
        losses
            .write_record([r.epoch.to_string(), r.community.to_string(), r.step.to_string(), r.loss.to_string()])
            .map_err(io)?;
    }
    losses.flush()?;
    std::fs::write(dir.join(CHECKPOINT_FILE), &out.checkpoint)?;
    out.ledger.export_csv(BufWriter::new(File::create(dir.join(LEDGER_FILE))?)).map_err(io)?;
    std::fs::write(dir.join(REGISTRY_FILE), out.registry.dump_json() + "\n")?;
    Ok(())
}

/// Reads `metrics.csv` from an export directory.
pub fn load_metrics(dir: &Path) -> std::io::Result<MetricsReport> {
    let f = File::open(dir.join(METRICS_FILE))?;
    MetricsReport::read_csv(f).map_err(|e| std::io::Error::other(e.to_string()))
}

#[derive(Debug, Clone)]
struct Citizen {
    community: usize,
    /// Position inside the community graph.
    node: usize,
    token: TokenId,
    address: Address,
    profile: Profile,
    face: FaceVector,
    validator: bool,
    burned: bool,
    left: bool,
}

impl Citizen {
    fn active(&self) -> bool {
        !self.burned && !self.left
    }
}

struct Rngs {
    interaction: ChaCha8Rng,
    satisfaction: ChaCha8Rng,
    gating: ChaCha8Rng,
    governance: ChaCha8Rng,
}

/// Transaction activity of one community during one snapshot window.
#[derive(Debug, Clone)]
struct Window {
    fees: Vec<f64>,
    counts: Vec<f64>,
}

impl Window {
    fn new(n: usize) -> Self {
        Self {
            fees: vec![0.0; n],
            counts: vec![0.0; n * n],
        }
    }
}

#[derive(Default)]
struct EpochTally {
    transactions: u64,
    satisfied: u64,
    dh_formation: f64,
    payoffs: Vec<f64>,
    per_community: Vec<u64>,
}

struct Sim<'a> {
    sc: &'a Scenario,
    registry: IdentityRegistry,
    ledger: ReputationLedger,
    citizens: Vec<Citizen>,
    engine: PoaEngine,
    value: Vec<i64>,
    /// Keyed by slot pair, smaller slot first.
    bonds: BTreeMap<(usize, usize), f64>,
    gates: Vec<GateAgent>,
    rngs: Rngs,
    mempool: Vec<u64>,
    next_tx: u64,
    next_proposal: u64,
    events: Vec<SimEvent>,
    members: Vec<Vec<usize>>,
    windows: Vec<Window>,
    snapshots: Vec<Vec<Window>>,
    models: Vec<Option<YIdentityNet>>,
    losses: Vec<LossRow>,
    epoch: EpochTally,
    prev_activity: Option<Vec<f64>>,
    rows: MetricsReport,
    trace_cursor: usize,
    rounds_at_epoch: u64,
    height_at_epoch: u64,
    warned_no_sealer: bool,
}

fn random_profile(rng: &mut ChaCha8Rng) -> Profile {
    let mut score = || rng.random::<f64>();
    let (tolerance, credibility, maturity, autonomy, emotional_state, worthiness, w_range) =
        (score(), score(), score(), score(), score(), score(), score());
    Profile {
        tolerance,
        credibility,
        maturity,
        autonomy,
        emotional_state,
        worthiness,
        w_range,
        age: rng.random_range(18..=80),
        gender: *[Gender::Female, Gender::Male, Gender::Other, Gender::Undisclosed]
            .choose(rng)
            .expect("non-empty"),
        ambition: *[Ambition::Low, Ambition::Moderate, Ambition::High].choose(rng).expect("non-empty"),
        job_level: *[
            JobLevel::None,
            JobLevel::Entry,
            JobLevel::Intermediate,
            JobLevel::Senior,
            JobLevel::Executive,
        ]
        .choose(rng)
        .expect("non-empty"),
        education_level: *[
            EducationLevel::None,
            EducationLevel::Primary,
            EducationLevel::Secondary,
            EducationLevel::Tertiary,
            EducationLevel::Postgraduate,
        ]
        .choose(rng)
        .expect("non-empty"),
    }
}

fn random_face(rng: &mut ChaCha8Rng) -> FaceVector {
    loop {
        let v: Vec<f64> = (0..FACE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Ok(f) = FaceVector::new(v) {
            return f;
        }
    }
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario) -> Result<Self, RunError> {
        let seed = sc.seed;
        let mut pop_rng = substream(seed, "population");
        let mut registry = IdentityRegistry::new(sc.duplicate_threshold);
        let mut ledger = ReputationLedger::new();
        let mut citizens = Vec::with_capacity(sc.population);
        let mut events = Vec::new();
        for slot in 0..sc.population {
            let profile = random_profile(&mut pop_rng);
            let mut attempts = 0;
            let token = loop {
                let face = random_face(&mut pop_rng);
                match registry.mint(&mut ledger, profile.clone(), face, 0) {
                    Ok(t) => break t.clone(),
                    Err(IdentityError::DuplicateFace { .. }) if attempts < 100 => attempts += 1,
                    Err(e) => return Err(RunError::at(0, "identity", e)),
                }
            };
            let validator = slot < sc.validators.count;
            let initial = if validator {
                sc.validators.initial_balance
            } else {
                match sc.initial_ydr {
                    InitialYdr::Zero => 0,
                    InitialYdr::Constant { amount } => amount,
                    InitialYdr::Uniform { low, high } => pop_rng.random_range(low..=high),
                }
            };
            if initial > 0 {
                ledger
                    .earn(&token.owner_address, initial, "bootstrap", 0)
                    .map_err(|e| RunError::at(0, "ledger", e))?;
            }
            let community = slot % sc.communities;
            events.push(SimEvent::Minted {
                tick: 0,
                token_id: token.token_id,
                owner: token.owner_address.clone(),
                slot,
                community,
                validator,
            });
            citizens.push(Citizen {
                community,
                node: slot / sc.communities,
                token: token.token_id,
                address: token.owner_address,
                profile,
                face: token.face,
                validator,
                burned: false,
                left: false,
            });
        }

        let net = NetworkConfig {
            latency_min: sc.network.latency_min,
            latency_max: sc.network.latency_max,
            drop_probability: sc.network.drop_probability,
            seed: substream_seed(seed, "network"),
        };
        let cfg = ConsensusConfig {
            incentives: sc.consensus.incentives,
            epoch_length: sc.consensus.epoch_blocks,
            round_timeout: sc.consensus.round_timeout,
            max_failed_rounds: sc.consensus.max_failed_rounds,
            record_messages: sc.consensus.record_messages,
        };
        let faults = FaultConfig {
            faulty: citizens.iter().take(sc.validators.faulty).map(|c| c.address.clone()).collect(),
            equivocation_probability: sc.validators.equivocation_probability,
            invalid_block_probability: sc.validators.invalid_block_probability,
        };
        let candidates = citizens.iter().map(|c| c.address.clone()).collect();
        let engine = PoaEngine::new(candidates, &ledger, net, cfg, faults).map_err(|e| RunError::at(0, "consensus", e))?;
        if engine.validators().understaffed() {
            events.push(SimEvent::Warning {
                tick: 0,
                module: "consensus".into(),
                message: format!("{} validators; at least 23 recommended", engine.validators().len()),
            });
        }

        let gate_cfg = GateConfig {
            theta: sc.gating.theta,
            eta_short: sc.gating.eta_short,
            eta_long: sc.gating.eta_long,
            mode: sc.gating.mode,
        };
        let gates = (0..sc.communities)
            .map(|_| GateAgent::new(&gate_cfg))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| RunError::at(0, "gating", e))?;

        let mut members = vec![Vec::new(); sc.communities];
        for (slot, c) in citizens.iter().enumerate() {
            members[c.community].push(slot);
        }
        let windows = members.iter().map(|m| Window::new(m.len())).collect();

        Ok(Self {
            sc,
            registry,
            ledger,
            value: vec![sc.interaction.initial_value as i64; sc.population],
            citizens,
            engine,
            bonds: BTreeMap::new(),
            gates,
            rngs: Rngs {
                interaction: substream(seed, "interaction"),
                satisfaction: substream(seed, "satisfaction"),
                gating: substream(seed, "gating"),
                governance: substream(seed, "governance"),
            },
            mempool: Vec::new(),
            next_tx: 0,
            next_proposal: 1,
            events,
            snapshots: vec![Vec::new(); sc.communities],
            models: vec![None; sc.communities],
            members,
            windows,
            losses: Vec::new(),
            epoch: EpochTally {
                payoffs: vec![0.0; sc.population],
                per_community: vec![0; sc.communities],
                ..EpochTally::default()
            },
            prev_activity: None,
            rows: MetricsReport::default(),
            trace_cursor: 0,
            rounds_at_epoch: 0,
            height_at_epoch: 0,
            warned_no_sealer: false,
        })
    }

    fn pick_counterparty(&mut self, i: usize) -> Option<usize> {
        let intra = self.rngs.interaction.random::<f64>() < self.sc.interaction.intra_community;
        let community = self.citizens[i].community;
        let pool: Vec<usize> = if intra {
            self.members[community].clone()
        } else {
            (0..self.citizens.len()).collect()
        };
        let pool: Vec<(usize, f64)> = pool
            .into_iter()
            .filter(|&j| j != i && self.citizens[j].active())
            .map(|j| (j, 1.0 + self.bonds.get(&(i.min(j), i.max(j))).copied().unwrap_or(0.0)))
            .collect();
        pool.choose_weighted(&mut self.rngs.interaction, |&(_, w)| w).ok().map(|&(j, _)| j)
    }

    fn interact(&mut self, tick: u64) -> Result<(), RunError> {
        let sc = self.sc;
        let poisson = if sc.interaction.transaction_rate > 0.0 {
            Some(Poisson::new(sc.interaction.transaction_rate).map_err(|e| RunError::at(tick, "interaction", e))?)
        } else {
            None
        };
        let reward = (enthalpy_of_reaction(
            &[SpeciesTerm::new(1.0, sc.interaction.enthalpy.product).expect("unit coefficient")],
            &[SpeciesTerm::new(2.0, sc.interaction.enthalpy.reactant).expect("positive coefficient")],
        ) / 2.0)
            .floor();
        for i in 0..self.citizens.len() {
            if !self.citizens[i].active() {
                continue;
            }
            let Some(poisson) = &poisson else { break };
            let attempts = poisson.sample(&mut self.rngs.interaction) as u64;
            for _ in 0..attempts {
                let timing = self.rngs.gating.random_range(sc.gating.timing_min..=sc.gating.timing_max);
                let signal = GateSignal::new(self.citizens[i].profile.mean_score(), timing)
                    .map_err(|e| RunError::at(tick, "gating", e))?;
                let community = self.citizens[i].community;
                if self.gates[community].decide(&signal, &mut self.rngs.gating).decision == Decision::Reject {
                    continue;
                }
                let Some(j) = self.pick_counterparty(i) else { continue };
                let fee = self.rngs.interaction.random_range(sc.interaction.fee_min..=sc.interaction.fee_max);
                if self.value[i] < fee as i64 {
                    continue;
                }
                self.value[i] -= fee as i64;
                self.value[j] += fee as i64;
                self.epoch.payoffs[i] -= fee as f64;
                self.epoch.payoffs[j] += fee as f64;
                self.epoch.transactions += 1;
                self.epoch.per_community[community] += 1;

                let w = &mut self.windows[community];
                w.fees[self.citizens[i].node] += fee as f64 / sc.interaction.fee_max as f64;
                if self.citizens[j].community == community {
                    let n = w.fees.len();
                    w.counts[self.citizens[i].node * n + self.citizens[j].node] += 1.0;
                }

                let satisfied = self.rngs.satisfaction.random::<f64>() < sc.interaction.satisfaction_probability;
                if satisfied {
                    self.epoch.satisfied += 1;
                    if sc.interaction.mode == InteractionMode::Enthalpy && reward >= 1.0 {
                        let r = reward as u64;
                        for k in [i, j] {
                            self.ledger
                                .earn(&self.citizens[k].address, r, "interaction", tick)
                                .map_err(|e| RunError::at(tick, "ledger", e))?;
                            self.epoch.payoffs[k] += r as f64;
                        }
                        self.epoch.dh_formation += 2.0 * reward;
                        *self.bonds.entry((i.min(j), i.max(j))).or_insert(0.0) += 2.0 * reward;
                    }
                }
                self.gates[community]
                    .short_loop_update(&signal, Decision::Accept, if satisfied { 1.0 } else { -1.0 })
                    .map_err(|e| RunError::at(tick, "gating", e))?;
                self.mempool.push(self.next_tx);
                self.next_tx += 1;
            }
        }
        Ok(())
    }

    fn seal(&mut self, tick: u64) -> Result<(), RunError> {
        match self.engine.run_round(&mut self.ledger, &self.mempool, tick) {
            Ok(RoundResult::Finalized { .. }) => self.mempool.clear(),
            Ok(RoundResult::Failed) => {}
            Err(ConsensusError::NoEligibleSealer) => {
                if !self.warned_no_sealer {
                    self.warned_no_sealer = true;
                    self.events.push(SimEvent::Warning {
                        tick,
                        module: "consensus".into(),
                        message: "no validator can seal; blocks are not produced".into(),
                    });
                }
            }
            Err(e) => return Err(RunError::at(tick, "consensus", e)),
        }
        Ok(())
    }

    fn close_window(&mut self) {
        for (c, w) in self.windows.iter_mut().enumerate() {
            let n = w.fees.len();
            self.snapshots[c].push(std::mem::replace(w, Window::new(n)));
        }
    }

    fn governance(&mut self, tick: u64) -> Result<(), RunError> {
        let g = &self.sc.governance;
        let rng = &mut self.rngs.governance;
        for slot in 0..self.citizens.len() {
            let c = &self.citizens[slot];
            if !c.active() || c.validator {
                continue;
            }
            if rng.random::<f64>() < g.burn_probability {
                let receipt = self
                    .registry
                    .burn(&mut self.ledger, c.token, tick)
                    .map_err(|e| RunError::at(tick, "identity", e))?;
                let dissolved: f64 = self
                    .bonds
                    .iter()
                    .filter(|((a, b), _)| *a == slot || *b == slot)
                    .map(|(_, e)| e)
                    .sum();
                self.bonds.retain(|(a, b), _| *a != slot && *b != slot);
                self.citizens[slot].burned = true;
                self.events.push(SimEvent::Burned {
                    tick,
                    token_id: receipt.token_id,
                    owner: receipt.owner_address,
                    forfeited: receipt.forfeited,
                    bonds_dissolved: dissolved,
                });
                continue;
            }
            let addr = c.address.clone();
            if rng.random::<f64>() < g.spend_probability {
                let amount = g.spend_amount.min(self.ledger.balance(&addr));
                if amount > 0 {
                    self.ledger
                        .spend(&addr, amount, "privilege", tick)
                        .map_err(|e| RunError::at(tick, "ledger", e))?;
                    self.events.push(SimEvent::Spent { tick, owner: addr.clone(), amount });
                }
            }
            if rng.random::<f64>() < g.liquidation_probability {
                let payout = self.ledger.liquidate(&addr, tick).map_err(|e| RunError::at(tick, "ledger", e))?;
                self.citizens[slot].left = true;
                self.events.push(SimEvent::Liquidated { tick, owner: addr, payout });
            }
        }

        for slot in 0..self.citizens.len() {
            let c = &self.citizens[slot];
            if !c.burned || c.left || self.rngs.governance.random::<f64>() >= g.reinstatement_probability {
                continue;
            }
            let proposal = Proposal {
                id: self.next_proposal,
                kind: ProposalKind::Reinstatement { token_id: c.token.0 },
                title: format!("reinstate {}", c.token),
                opened_at: tick,
            };
            self.next_proposal += 1;
            let electorate: Vec<(Address, f64)> = self
                .citizens
                .iter()
                .filter(|v| v.active() && !self.ledger.is_frozen(&v.address))
                .map(|v| (v.address.clone(), self.ledger.balance(&v.address) as f64))
                .collect();
            let total: f64 = electorate.iter().map(|(_, w)| w).sum();
            let votes: Vec<Vote> = electorate
                .iter()
                .map(|(a, w)| Vote {
                    voter: a.clone(),
                    value: if self.rngs.governance.random::<f64>() < g.approval_probability { 1.0 } else { 0.0 },
                    weight: *w,
                })
                .collect();
            self.events.push(SimEvent::ProposalOpened {
                tick,
                proposal: proposal.clone(),
                voters: votes.len(),
            });
            let ledger = &self.ledger;
            let registry = &self.registry;
            let decision = tally(
                &proposal,
                &votes,
                total,
                &g.rule,
                |a| !ledger.is_frozen(a) && registry.by_owner(a).is_some_and(|t| t.is_active()),
                tick,
            )
            .map_err(|e| RunError::at(tick, "governance", e))?;
            self.events.push(SimEvent::Tallied {
                tick,
                proposal_id: proposal.id,
                w: decision.w,
                passed: decision.passed,
                quorum_met: decision.quorum_met,
                participating_weight: votes.iter().map(|v| v.weight).sum(),
                total_active_weight: total,
            });
            if decision.passed {
                let old = self.citizens[slot].token;
                let (profile, face) = (self.citizens[slot].profile.clone(), self.citizens[slot].face.clone());
                let token = self
                    .registry
                    .reinstate(&mut self.ledger, old, profile, face, &decision, tick)
                    .map_err(|e| RunError::at(tick, "identity", e))?
                    .clone();
                self.engine.add_candidates([token.owner_address.clone()]);
                let c = &mut self.citizens[slot];
                c.token = token.token_id;
                c.address = token.owner_address.clone();
                c.burned = false;
                self.events.push(SimEvent::Reinstated {
                    tick,
                    old_token_id: old,
                    token_id: token.token_id,
                    owner: token.owner_address,
                });
            }
        }
        Ok(())
    }

    fn community_sample(&self, c: usize, start: usize) -> Result<Sample, dan_ynet::YnetError> {
        let f = &self.sc.forecaster;
        let snaps = &self.snapshots[c][start..start + f.history + f.horizon];
        let n = self.members[c].len();
        let scores: Vec<f64> = self.members[c].iter().map(|&s| self.citizens[s].profile.mean_score()).collect();
        let signals = Tensor::from_fn(&[f.history, n, 2], |k| {
            let (t, rest) = (k / (2 * n), k % (2 * n));
            let (node, ch) = (rest / 2, rest % 2);
            if ch == 0 {
                snaps[t].fees[node]
            } else {
                scores[node]
            }
        });
        let adjacency = Tensor::from_fn(&[f.history, n, n], |k| snaps[k / (n * n)].counts[k % (n * n)]);
        let target = Tensor::from_fn(&[f.horizon, n], |k| snaps[f.history + k / n].fees[k % n]);
        let delta = f.delta;
        Ok(Sample {
            history: GraphSequence::new(signals, adjacency, delta, start as u64 * delta)?,
            target,
        })
    }

    /// Retrains each community's forecaster on its recent windows and scores
    /// it on the newest one. Returns `(communities, mean mse, mean baseline)`.
    fn forecast(&mut self, epoch: u64, tick: u64) -> Result<(usize, f64, f64), RunError> {
        let f = self.sc.forecaster.clone();
        if !f.enabled {
            return Ok((0, 0.0, 0.0));
        }
        let (mut evaluated, mut mse, mut base) = (0usize, 0.0, 0.0);
        for c in 0..self.sc.communities {
            let k = self.snapshots[c].len();
            let span = f.history + f.horizon;
            if k < span + 1 {
                continue;
            }
            let last = k - span;
            let first = last.saturating_sub(f.max_windows);
            let samples = (first..=last)
                .map(|s| self.community_sample(c, s))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| RunError::at(tick, "forecaster", e))?;
            let (train, test) = samples.split_at(samples.len() - 1);
            if self.models[c].is_none() {
                let cfg = ModelConfig {
                    nodes: self.members[c].len(),
                    channels: 2,
                    hidden: f.hidden,
                    blocks: f.blocks,
                    kernel: f.kernel,
                    diffusion_steps: f.diffusion_steps,
                    horizon: f.horizon,
                    history: f.history,
                    seed: substream_seed(self.sc.seed, &format!("forecaster/{c}")),
                    ..ModelConfig::default()
                };
                self.models[c] = Some(YIdentityNet::new(cfg).map_err(|e| RunError::at(tick, "forecaster", e))?);
            }
            let model = self.models[c].as_mut().expect("initialized above");
            let tc = TrainConfig {
                steps: f.steps_per_epoch,
                learning_rate: f.learning_rate,
                batch_size: Some(f.batch_size),
                seed: substream_seed(self.sc.seed, &format!("forecaster/{c}/{epoch}")),
                ..TrainConfig::default()
            };
            let report = dan_ynet::train(model, train, &tc).map_err(|e| RunError::at(tick, "forecaster", e))?;
            let test_mse = dan_ynet::evaluate(model, test).map_err(|e| RunError::at(tick, "forecaster", e))?;
            let baseline = dan_ynet::evaluate_persistence(test).map_err(|e| RunError::at(tick, "forecaster", e))?;
            for (step, loss) in report.losses.iter().enumerate() {
                self.losses.push(LossRow {
                    epoch,
                    community: c,
                    step,
                    loss: *loss,
                });
            }
            self.events.push(SimEvent::ForecasterTrained {
                tick,
                epoch,
                community: c,
                train_windows: train.len(),
                final_loss: report.final_loss().unwrap_or(0.0),
                test_mse,
                baseline_mse: baseline,
            });
            evaluated += 1;
            mse += test_mse;
            base += baseline;
        }
        if evaluated > 0 {
            mse /= evaluated as f64;
            base /= evaluated as f64;
        }
        Ok((evaluated, mse, base))
    }

    fn close_epoch(&mut self, epoch: u64, tick: u64) -> Result<(), RunError> {
        self.governance(tick)?;

        let payoffs = std::mem::replace(&mut self.epoch.payoffs, vec![0.0; self.citizens.len()]);
        let game = classify_game(&payoffs, ZERO_SUM_EPSILON);
        let balances: Vec<u64> = self
            .citizens
            .iter()
            .filter(|c| c.active())
            .map(|c| self.ledger.balance(&c.address))
            .collect();
        let entropy = if balances.is_empty() {
            0.0
        } else {
            econ::entropy(&HoldingsDistribution::from_amounts(&balances).map_err(|e| RunError::at(tick, "econodynamics", e))?)
        };

        let activity: Vec<f64> = self
            .epoch
            .per_community
            .iter()
            .zip(&self.members)
            .map(|(&n, m)| n as f64 / m.len() as f64)
            .collect();
        let mut stats = Vec::with_capacity(self.gates.len());
        for (c, gate) in self.gates.iter_mut().enumerate() {
            let retro = self.prev_activity.as_ref().map_or(0.0, |prev| activity[c] - prev[c]);
            gate.long_loop_update(retro).map_err(|e| RunError::at(tick, "gating", e))?;
            stats.push(gate.take_stats());
        }
        self.prev_activity = Some(activity);

        let (forecast_communities, forecast_mse, baseline_mse) = self.forecast(epoch, tick)?;

        let new_events = &self.engine.trace().events[self.trace_cursor..];
        let violations = new_events.iter().filter(|e| matches!(e, TraceEvent::Violation { .. })).count() as u64;
        self.trace_cursor = self.engine.trace().events.len();
        let rounds = self.engine.rounds() - self.rounds_at_epoch;
        let height = self.engine.chain().height();
        let finalized = height - self.height_at_epoch;
        self.rounds_at_epoch = self.engine.rounds();
        self.height_at_epoch = height;
        let seals: Vec<u64> = self
            .engine
            .validators()
            .members()
            .iter()
            .map(|v| self.engine.seal_counts().get(v).copied().unwrap_or(0))
            .collect();
        let totals = self.ledger.totals();
        let supply = self.ledger.total_supply();
        let conservation_ok = self.ledger.conservation_holds();
        if !conservation_ok {
            return Err(RunError::at(tick, "ledger", "conservation identity violated"));
        }
        let (decisions, accepted, outcomes, outcome_sum) = stats.iter().fold((0, 0, 0, 0.0), |acc, s| {
            (acc.0 + s.decisions, acc.1 + s.accepted, acc.2 + s.outcomes, acc.3 + s.outcome_sum)
        });
        let theta_mean = |k: usize| self.gates.iter().map(|g| g.theta()[k]).sum::<f64>() / self.gates.len() as f64;
        let burned = self.registry.iter().filter(|t| !t.is_active()).count();

        let mut row = MetricsRow {
            epoch,
            tick,
            chain_height: height,
            blocks_finalized: finalized,
            rounds,
            finalization_rate: if rounds == 0 { 0.0 } else { finalized as f64 / rounds as f64 },
            validators: self.engine.validators().len(),
            understaffed: self.engine.validators().understaffed(),
            seal_min: seals.iter().copied().min().unwrap_or(0),
            seal_max: seals.iter().copied().max().unwrap_or(0),
            violations,
            ydr_total: supply,
            ydr_earned: totals.earned,
            ydr_spent: totals.spent,
            ydr_slashed: totals.slashed,
            ydr_liquidated: totals.liquidated,
            conservation_ok,
            hist_0: 0,
            hist_1: 0,
            hist_10: 0,
            hist_100: 0,
            hist_1k: 0,
            hist_10k: 0,
            hist_100k: 0,
            hist_1m: 0,
            hist_10m_plus: 0,
            gini: econ::gini(&balances),
            entropy,
            active_tokens: self.registry.active_count(),
            burned_tokens: burned,
            transactions: self.epoch.transactions,
            satisfied: self.epoch.satisfied,
            value_total: self.value.iter().sum(),
            dh_formation: self.epoch.dh_formation,
            dh_atomization: self.bonds.values().sum(),
            game_class: game,
            ponzi_suspect: game.ponzi_suspect(),
            gate_accept_rate: if decisions == 0 { 0.0 } else { accepted as f64 / decisions as f64 },
            gate_mean_outcome: if outcomes == 0 { 0.0 } else { outcome_sum / outcomes as f64 },
            gate_theta0: theta_mean(0),
            gate_theta1: theta_mean(1),
            gate_theta2: theta_mean(2),
            forecast_communities,
            forecast_mse,
            baseline_mse,
        };
        row.set_histogram(histogram(balances.iter().copied()));
        if !row.all_finite() {
            return Err(RunError::at(tick, "metrics", "non-finite metric"));
        }
        self.events.push(SimEvent::EpochClosed {
            tick,
            epoch,
            game_class: game,
            ponzi_suspect: game.ponzi_suspect(),
            payoff_total: payoffs.iter().sum(),
        });
        self.rows.rows.push(row);
        self.epoch.transactions = 0;
        self.epoch.satisfied = 0;
        self.epoch.dh_formation = 0.0;
        self.epoch.per_community.iter_mut().for_each(|n| *n = 0);
        Ok(())
    }

    fn checkpoint(&self) -> Vec<u8> {
        let mut entries: Vec<(String, &Tensor)> = Vec::new();
        for (c, m) in self.models.iter().enumerate() {
            if let Some(m) = m {
                entries.extend(m.params.iter().map(|p| (format!("c{c}.{}", p.name), &p.value)));
            }
        }
        let mut buf = Vec::new();
        dan_tensor::io::write_bundle(&mut buf, entries.iter().map(|(n, t)| (n.as_str(), *t)))
            .expect("writing to memory cannot fail");
        buf
    }
}

/// Runs `scenario` to completion.
pub fn run(scenario: &Scenario) -> Result<RunOutput, RunError> {
    scenario.validate()?;
    let mut sim = Sim::new(scenario)?;
    let mut epoch = 0;
    for tick in 1..=scenario.duration {
        sim.interact(tick)?;
        sim.seal(tick)?;
        if scenario.forecaster.enabled && tick % scenario.forecaster.delta == 0 {
            sim.close_window();
        }
        if tick % scenario.epoch_length == 0 {
            sim.close_epoch(epoch, tick)?;
            epoch += 1;
        }
    }
    log::info!(
        "{}: {} epochs, chain height {}",
        scenario.name,
        sim.rows.rows.len(),
        sim.engine.chain().height()
    );
    let checkpoint = sim.checkpoint();
    Ok(RunOutput {
        metrics: sim.rows,
        trace: sim.engine.take_trace(),
        events: sim.events,
        losses: sim.losses,
        checkpoint,
        ledger: sim.ledger,
        registry: sim.registry,
    })
}

//! Proof-of-Authority block production over a simulated network.
//!
//! Validators are the accounts holding more than 1,000,000 YDR, kept in
//! ascending address order. The sealer for height `h` is `validators[h mod n]`,
//! skipping ahead one place if that would repeat the previous sealer. A block
//! is final once more than half of the validators have acknowledged it.
//! Finalized blocks earn their sealer a reward; proven misbehaviour
//! (an invalid block, or two blocks at one height) is slashed.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::address::Address;
use crate::ledger::{LedgerError, ReputationLedger};

/// Validator count below which a run is flagged as understaffed.
pub const MIN_RECOMMENDED_VALIDATORS: usize = 23;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConsensusError {
    #[error("no validator may seal the next block")]
    NoEligibleSealer,
    #[error("no heads to choose from")]
    EmptyHeadSet,
    #[error("chain stalled at height {height} after {rounds} failed rounds")]
    StalledChain { height: u64, rounds: u32 },
    #[error("invalid network config: {0}")]
    InvalidNetwork(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

pub type Result<T> = std::result::Result<T, ConsensusError>;

/// 64-bit content hash, shown as 16 hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub u64);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl Serialize for BlockId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BlockId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map(BlockId).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub parent_id: BlockId,
    /// `None` only for genesis.
    pub sealer: Option<Address>,
    pub tx_ids: Vec<u64>,
    pub tick: u64,
    pub block_id: BlockId,
}

impl Block {
    pub fn compute_id(height: u64, parent: BlockId, sealer: Option<&Address>, tx_ids: &[u64], tick: u64) -> BlockId {
        let mut h = Sha256::new();
        h.update(b"dan-block");
        h.update(height.to_le_bytes());
        h.update(parent.0.to_le_bytes());
        match sealer {
            Some(a) => {
                h.update([1]);
                h.update((a.as_str().len() as u64).to_le_bytes());
                h.update(a.as_str().as_bytes());
            }
            None => h.update([0]),
        }
        h.update((tx_ids.len() as u64).to_le_bytes());
        for tx in tx_ids {
            h.update(tx.to_le_bytes());
        }
        h.update(tick.to_le_bytes());
        let digest = h.finalize();
        BlockId(u64::from_be_bytes(digest[..8].try_into().expect("sha256 has 32 bytes")))
    }

    pub fn new(height: u64, parent_id: BlockId, sealer: Address, tx_ids: Vec<u64>, tick: u64) -> Self {
        let block_id = Self::compute_id(height, parent_id, Some(&sealer), &tx_ids, tick);
        Self {
            height,
            parent_id,
            sealer: Some(sealer),
            tx_ids,
            tick,
            block_id,
        }
    }

    pub fn genesis() -> Self {
        let parent_id = BlockId(0);
        Self {
            height: 0,
            parent_id,
            sealer: None,
            tx_ids: Vec::new(),
            tick: 0,
            block_id: Self::compute_id(0, parent_id, None, &[], 0),
        }
    }

    pub fn recomputed_id(&self) -> BlockId {
        Self::compute_id(self.height, self.parent_id, self.sealer.as_ref(), &self.tx_ids, self.tick)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorSet {
    members: Vec<Address>,
}

impl ValidatorSet {
    /// Sorted and deduplicated. Eligibility is not checked here; see
    /// [`Self::eligible`].
    pub fn new(members: impl IntoIterator<Item = Address>) -> Self {
        let set: BTreeSet<Address> = members.into_iter().collect();
        Self {
            members: set.into_iter().collect(),
        }
    }

    /// The candidates currently eligible according to `ledger`.
    pub fn eligible<'a>(candidates: impl IntoIterator<Item = &'a Address>, ledger: &ReputationLedger) -> Self {
        Self::new(candidates.into_iter().filter(|a| ledger.is_validator_eligible(a)).cloned())
    }

    pub fn members(&self) -> &[Address] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, a: &Address) -> bool {
        self.members.binary_search(a).is_ok()
    }

    pub fn understaffed(&self) -> bool {
        self.members.len() < MIN_RECOMMENDED_VALIDATORS
    }
}

/// Round-robin sealer for `height` that differs from `last_sealer`.
pub fn next_sealer(validators: &ValidatorSet, height: u64, last_sealer: Option<&Address>) -> Result<Address> {
    let m = validators.members();
    let n = m.len() as u64;
    if n == 0 {
        return Err(ConsensusError::NoEligibleSealer);
    }
    let first = &m[(height % n) as usize];
    if Some(first) != last_sealer {
        return Ok(first.clone());
    }
    if n == 1 {
        return Err(ConsensusError::NoEligibleSealer);
    }
    Ok(m[((height + 1) % n) as usize].clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    UnknownParent,
    IneligibleSealer,
    ConsecutiveSealer,
    BadHeight,
    BadHash,
    /// Two different blocks from one sealer at one height.
    Equivocation,
}

/// Finalized blocks by height, plus every block ever seen.
#[derive(Debug, Clone)]
pub struct ChainState {
    blocks: HashMap<BlockId, Block>,
    canonical: Vec<BlockId>,
}

impl Default for ChainState {
    fn default() -> Self {
        Self::new()
    }
}

impl ChainState {
    pub fn new() -> Self {
        let g = Block::genesis();
        let id = g.block_id;
        Self {
            blocks: HashMap::from([(id, g)]),
            canonical: vec![id],
        }
    }

    pub fn get(&self, id: BlockId) -> Option<&Block> {
        self.blocks.get(&id)
    }

    pub fn head(&self) -> &Block {
        &self.blocks[self.canonical.last().expect("genesis is always present")]
    }

    pub fn height(&self) -> u64 {
        self.head().height
    }

    /// Finalized block ids, genesis first.
    pub fn canonical(&self) -> &[BlockId] {
        &self.canonical
    }

    pub fn block_at(&self, height: u64) -> Option<&Block> {
        self.canonical.get(height as usize).map(|id| &self.blocks[id])
    }

    /// Records a block without finalizing it (e.g. a competing proposal).
    pub fn insert(&mut self, block: Block) {
        self.blocks.entry(block.block_id).or_insert(block);
    }

    /// Extends the canonical chain. The block must build on the head.
    pub fn finalize(&mut self, block: Block) {
        assert_eq!(block.parent_id, self.head().block_id, "finalized block must extend the head");
        assert_eq!(block.height, self.height() + 1);
        self.canonical.push(block.block_id);
        self.blocks.insert(block.block_id, block);
    }
}

/// Checks `block` against its parent in `chain` and the current validator
/// set and balances.
pub fn validate_block(
    block: &Block,
    chain: &ChainState,
    validators: &ValidatorSet,
    ledger: &ReputationLedger,
) -> std::result::Result<(), ViolationKind> {
    let parent = chain.get(block.parent_id).ok_or(ViolationKind::UnknownParent)?;
    if block.recomputed_id() != block.block_id {
        return Err(ViolationKind::BadHash);
    }
    if block.height != parent.height + 1 {
        return Err(ViolationKind::BadHeight);
    }
    let sealer = block.sealer.as_ref().ok_or(ViolationKind::IneligibleSealer)?;
    if !validators.contains(sealer) || !ledger.is_validator_eligible(sealer) {
        return Err(ViolationKind::IneligibleSealer);
    }
    if parent.sealer.as_ref() == Some(sealer) {
        return Err(ViolationKind::ConsecutiveSealer);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Incentives {
    /// YDR earned per finalized block.
    pub reward: u64,
    /// YDR slashed per proven violation.
    pub slash: u64,
}

impl Default for Incentives {
    fn default() -> Self {
        Self { reward: 10, slash: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockOutcome<'a> {
    Finalized(&'a Block),
    Violation { sealer: &'a Address, kind: ViolationKind },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Effect {
    Reward { sealer: Address, amount: u64, balance: u64 },
    Slash { sealer: Address, requested: u64, deducted: u64, balance: u64 },
}

/// Ledger consequence of a finalized block or a proven violation.
pub fn apply_block(outcome: BlockOutcome<'_>, ledger: &mut ReputationLedger, inc: &Incentives, tick: u64) -> Result<Effect> {
    match outcome {
        BlockOutcome::Finalized(block) => {
            let sealer = block.sealer.as_ref().ok_or(ConsensusError::NoEligibleSealer)?;
            let balance = if inc.reward > 0 {
                ledger.earn(sealer, inc.reward, "seal", tick)?
            } else {
                ledger.balance(sealer)
            };
            Ok(Effect::Reward {
                sealer: sealer.clone(),
                amount: inc.reward,
                balance,
            })
        }
        BlockOutcome::Violation { sealer, kind } => {
            let before = ledger.balance(sealer);
            let balance = if inc.slash > 0 {
                ledger.slash(sealer, inc.slash, &format!("{kind:?}"), tick)?
            } else {
                before
            };
            Ok(Effect::Slash {
                sealer: sealer.clone(),
                requested: inc.slash,
                deducted: before - balance,
                balance,
            })
        }
    }
}

/// Highest tip wins; ties go to the smallest block id.
pub fn fork_choice(heads: &[&Block]) -> Result<BlockId> {
    heads
        .iter()
        .min_by(|a, b| b.height.cmp(&a.height).then(a.block_id.cmp(&b.block_id)))
        .map(|b| b.block_id)
        .ok_or(ConsensusError::EmptyHeadSet)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub latency_min: u64,
    pub latency_max: u64,
    pub drop_probability: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            latency_min: 1,
            latency_max: 3,
            drop_probability: 0.0,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(ConsensusError::InvalidNetwork(format!(
                "drop_probability {} outside [0, 1]",
                self.drop_probability
            )));
        }
        if self.latency_min > self.latency_max {
            return Err(ConsensusError::InvalidNetwork(format!(
                "latency_min {} exceeds latency_max {}",
                self.latency_min, self.latency_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusConfig {
    pub incentives: Incentives,
    /// Finalized blocks between validator-set refreshes.
    pub epoch_length: u64,
    /// Ticks a round waits for finality; 0 means `2 * latency_max + 1`.
    pub round_timeout: u64,
    /// Consecutive failed rounds tolerated before giving up.
    pub max_failed_rounds: u32,
    /// Record per-message delivery and attestation events in the trace.
    pub record_messages: bool,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            incentives: Incentives::default(),
            epoch_length: 10,
            round_timeout: 0,
            max_failed_rounds: 100,
            record_messages: true,
        }
    }
}

/// Misbehaviour injected into chosen validators.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultConfig {
    pub faulty: Vec<Address>,
    /// Chance a faulty sealer proposes two conflicting blocks.
    pub equivocation_probability: f64,
    /// Chance a faulty sealer proposes a block with a corrupt hash.
    pub invalid_block_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Proposal {
        tick: u64,
        height: u64,
        block_id: BlockId,
        parent_id: BlockId,
        sealer: Address,
        attempt: u64,
        tx_count: usize,
    },
    Delivery {
        tick: u64,
        block_id: BlockId,
        to: Address,
    },
    Attestation {
        tick: u64,
        block_id: BlockId,
        from: Address,
    },
    Finalization {
        tick: u64,
        height: u64,
        block_id: BlockId,
        sealer: Address,
        acks: usize,
    },
    Violation {
        tick: u64,
        height: u64,
        sealer: Address,
        kind: ViolationKind,
        block_id: BlockId,
    },
    Reward {
        tick: u64,
        sealer: Address,
        amount: u64,
        balance: u64,
    },
    Slash {
        tick: u64,
        sealer: Address,
        requested: u64,
        deducted: u64,
        balance: u64,
    },
    RoundFailed {
        tick: u64,
        height: u64,
        attempt: u64,
        reason: String,
    },
    EpochRefresh {
        tick: u64,
        height: u64,
        validators: usize,
        understaffed: bool,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub events: Vec<TraceEvent>,
}

impl ChainTrace {
    pub fn write_jsonl(&self, w: &mut impl Write) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut *w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn finalizations(&self) -> impl Iterator<Item = (&Address, u64)> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Finalization { sealer, height, .. } => Some((sealer, *height)),
            _ => None,
        })
    }

    pub fn violations(&self) -> impl Iterator<Item = ViolationKind> + '_ {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Violation { kind, .. } => Some(*kind),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoundResult {
    Finalized { block_id: BlockId, height: u64, sealer: Address },
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Message {
    Deliver { to: usize, block: usize },
    Ack { from: usize, block: usize },
}

/// Discrete-event PoA network. One call to [`Self::run_round`] is one
/// sealing attempt.
#[derive(Debug, Clone)]
pub struct PoaEngine {
    cfg: ConsensusConfig,
    net: NetworkConfig,
    faults: FaultConfig,
    candidates: Vec<Address>,
    validators: ValidatorSet,
    chain: ChainState,
    rng: ChaCha8Rng,
    clock: u64,
    attempt: u64,
    failed_rounds: u32,
    since_epoch: u64,
    seal_counts: BTreeMap<Address, u64>,
    rounds: u64,
    trace: ChainTrace,
}

impl PoaEngine {
    /// `candidates` are re-examined for eligibility at every epoch boundary.
    pub fn new(
        candidates: Vec<Address>,
        ledger: &ReputationLedger,
        net: NetworkConfig,
        cfg: ConsensusConfig,
        faults: FaultConfig,
    ) -> Result<Self> {
        net.validate()?;
        let validators = ValidatorSet::eligible(&candidates, ledger);
        Ok(Self {
            cfg,
            net,
            faults,
            candidates,
            validators,
            chain: ChainState::new(),
            rng: ChaCha8Rng::seed_from_u64(net.seed),
            clock: 0,
            attempt: 0,
            failed_rounds: 0,
            since_epoch: 0,
            seal_counts: BTreeMap::new(),
            rounds: 0,
            trace: ChainTrace::default(),
        })
    }

    pub fn validators(&self) -> &ValidatorSet {
        &self.validators
    }

    pub fn chain(&self) -> &ChainState {
        &self.chain
    }

    pub fn trace(&self) -> &ChainTrace {
        &self.trace
    }

    pub fn take_trace(&mut self) -> ChainTrace {
        std::mem::take(&mut self.trace)
    }

    pub fn seal_counts(&self) -> &BTreeMap<Address, u64> {
        &self.seal_counts
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Sealing attempts so far, successful or not.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Adds accounts to consider at the next refresh.
    pub fn add_candidates(&mut self, more: impl IntoIterator<Item = Address>) {
        self.candidates.extend(more);
        self.candidates.sort();
        self.candidates.dedup();
    }

    /// Re-derives the validator set from candidates and current balances.
    pub fn refresh_validators(&mut self, ledger: &ReputationLedger) {
        self.validators = ValidatorSet::eligible(&self.candidates, ledger);
        self.trace.events.push(TraceEvent::EpochRefresh {
            tick: self.clock,
            height: self.chain.height(),
            validators: self.validators.len(),
            understaffed: self.validators.understaffed(),
        });
        if self.validators.understaffed() {
            log::warn!(
                "only {} validators at height {}; at least {MIN_RECOMMENDED_VALIDATORS} recommended",
                self.validators.len(),
                self.chain.height()
            );
        }
    }

    fn timeout(&self) -> u64 {
        if self.cfg.round_timeout > 0 {
            self.cfg.round_timeout
        } else {
            2 * self.net.latency_max + 1
        }
    }

    fn latency(&mut self) -> Option<u64> {
        if self.net.drop_probability > 0.0 && self.rng.random::<f64>() < self.net.drop_probability {
            return None;
        }
        Some(self.rng.random_range(self.net.latency_min..=self.net.latency_max))
    }

    fn fail(&mut self, reason: &str) -> Result<RoundResult> {
        let height = self.chain.height() + 1;
        self.trace.events.push(TraceEvent::RoundFailed {
            tick: self.clock,
            height,
            attempt: self.attempt,
            reason: reason.to_owned(),
        });
        self.attempt += 1;
        self.failed_rounds += 1;
        if self.failed_rounds >= self.cfg.max_failed_rounds {
            return Err(ConsensusError::StalledChain {
                height,
                rounds: self.failed_rounds,
            });
        }
        Ok(RoundResult::Failed)
    }

    fn punish(
        &mut self,
        ledger: &mut ReputationLedger,
        sealer: &Address,
        kind: ViolationKind,
        block_id: BlockId,
    ) -> Result<()> {
        self.trace.events.push(TraceEvent::Violation {
            tick: self.clock,
            height: self.chain.height() + 1,
            sealer: sealer.clone(),
            kind,
            block_id,
        });
        if let Effect::Slash {
            sealer,
            requested,
            deducted,
            balance,
        } = apply_block(
            BlockOutcome::Violation { sealer, kind },
            ledger,
            &self.cfg.incentives,
            self.clock,
        )? {
            self.trace.events.push(TraceEvent::Slash {
                tick: self.clock,
                sealer,
                requested,
                deducted,
                balance,
            });
        }
        Ok(())
    }

    /// One sealing attempt at `now` (or the engine clock if later) carrying
    /// `tx_ids`.
    pub fn run_round(&mut self, ledger: &mut ReputationLedger, tx_ids: &[u64], now: u64) -> Result<RoundResult> {
        self.clock = self.clock.max(now);
        self.rounds += 1;
        let height = self.chain.height() + 1;
        let parent = self.chain.head().block_id;
        let last = self.chain.head().sealer.clone();
        let sealer = next_sealer(&self.validators, height + self.attempt, last.as_ref())?;
        if !ledger.is_validator_eligible(&sealer) {
            return self.fail("scheduled sealer no longer eligible");
        }

        let honest = Block::new(height, parent, sealer.clone(), tx_ids.to_vec(), self.clock);
        let mut proposals = vec![honest];
        if self.faults.faulty.contains(&sealer) {
            if self.rng.random::<f64>() < self.faults.invalid_block_probability {
                proposals[0].block_id.0 ^= 1;
            } else if self.rng.random::<f64>() < self.faults.equivocation_probability {
                let mut alt = tx_ids.to_vec();
                alt.push(u64::MAX);
                proposals.push(Block::new(height, parent, sealer.clone(), alt, self.clock));
            }
        }
        for b in &proposals {
            self.trace.events.push(TraceEvent::Proposal {
                tick: self.clock,
                height,
                block_id: b.block_id,
                parent_id: parent,
                sealer: sealer.clone(),
                attempt: self.attempt,
                tx_count: b.tx_ids.len(),
            });
        }

        let members = self.validators.members().to_vec();
        let n = members.len();
        let sealer_idx = members.binary_search(&sealer).expect("sealer comes from the validator set");
        let mut queue: BinaryHeap<Reverse<(u64, u64, Message)>> = BinaryHeap::new();
        let mut seq = 0u64;
        for to in (0..n).filter(|&i| i != sealer_idx) {
            for block in 0..proposals.len() {
                if let Some(lat) = self.latency() {
                    queue.push(Reverse((self.clock + lat, seq, Message::Deliver { to, block })));
                    seq += 1;
                }
            }
        }

        // The sealer's own acknowledgement is implicit.
        let mut acks = vec![0usize; proposals.len()];
        acks[0] = 1;
        let mut acked: Vec<Option<usize>> = vec![None; n];
        acked[sealer_idx] = Some(0);
        let mut seen: Vec<Vec<bool>> = vec![vec![false; proposals.len()]; n];
        let mut violations: BTreeSet<(ViolationKind, BlockId)> = BTreeSet::new();
        let mut finalized: Option<(usize, u64)> = None;
        let deadline = self.clock + self.timeout();
        let mut end = self.clock;

        while let Some(Reverse((t, _, msg))) = queue.pop() {
            if t > deadline {
                break;
            }
            end = end.max(t);
            match msg {
                Message::Deliver { to, block } => {
                    let b = &proposals[block];
                    if self.cfg.record_messages {
                        self.trace.events.push(TraceEvent::Delivery {
                            tick: t,
                            block_id: b.block_id,
                            to: members[to].clone(),
                        });
                    }
                    seen[to][block] = true;
                    if let Err(kind) = validate_block(b, &self.chain, &self.validators, ledger) {
                        violations.insert((kind, b.block_id));
                        continue;
                    }
                    if seen[to].iter().filter(|&&s| s).count() > 1 {
                        violations.insert((ViolationKind::Equivocation, b.block_id));
                    }
                    if acked[to].is_none() {
                        acked[to] = Some(block);
                        if let Some(lat) = self.latency() {
                            queue.push(Reverse((t + lat, seq, Message::Ack { from: to, block })));
                            seq += 1;
                        }
                    }
                }
                Message::Ack { from, block } => {
                    if self.cfg.record_messages {
                        self.trace.events.push(TraceEvent::Attestation {
                            tick: t,
                            block_id: proposals[block].block_id,
                            from: members[from].clone(),
                        });
                    }
                    acks[block] += 1;
                    if finalized.is_none() && 2 * acks[block] > n {
                        finalized = Some((block, t));
                    }
                }
            }
        }
        if finalized.is_none() && 2 * acks[0] > n && validate_block(&proposals[0], &self.chain, &self.validators, ledger).is_ok() {
            // Single-validator set: the sealer's own acknowledgement is a majority.
            finalized = Some((0, self.clock));
        }

        // One slash per kind of offence per round.
        let mut punished = BTreeSet::new();
        for (kind, block_id) in violations {
            if punished.insert(kind) {
                self.punish(ledger, &sealer, kind, block_id)?;
            }
        }

        let result = match finalized {
            Some((block, t)) => {
                self.clock = self.clock.max(t);
                let b = proposals.swap_remove(block);
                for other in proposals {
                    self.chain.insert(other);
                }
                let id = b.block_id;
                self.chain.finalize(b);
                self.trace.events.push(TraceEvent::Finalization {
                    tick: t,
                    height,
                    block_id: id,
                    sealer: sealer.clone(),
                    acks: acks[block],
                });
                let block_ref = self.chain.get(id).expect("just finalized");
                if let Effect::Reward { sealer, amount, balance } =
                    apply_block(BlockOutcome::Finalized(block_ref), ledger, &self.cfg.incentives, t)?
                {
                    self.trace.events.push(TraceEvent::Reward {
                        tick: t,
                        sealer,
                        amount,
                        balance,
                    });
                }
                *self.seal_counts.entry(sealer.clone()).or_insert(0) += 1;
                self.attempt = 0;
                self.failed_rounds = 0;
                self.since_epoch += 1;
                if self.since_epoch >= self.cfg.epoch_length {
                    self.since_epoch = 0;
                    self.refresh_validators(ledger);
                }
                RoundResult::Finalized {
                    block_id: id,
                    height,
                    sealer,
                }
            }
            None => {
                self.clock = end.max(deadline);
                let r = self.fail("no majority before timeout");
                self.clock += 1;
                return r;
            }
        };
        self.clock += 1;
        Ok(result)
    }
}

/// Everything a standalone consensus run produces.
#[derive(Debug, Clone)]
pub struct ConsensusRun {
    pub trace: ChainTrace,
    pub chain: ChainState,
    pub seal_counts: BTreeMap<Address, u64>,
    pub rounds: u64,
}

/// Runs rounds until `n_blocks` blocks are final.
pub fn simulate_consensus(
    validators: &ValidatorSet,
    network: &NetworkConfig,
    n_blocks: u64,
    ledger: &mut ReputationLedger,
    cfg: &ConsensusConfig,
    faults: &FaultConfig,
) -> Result<ConsensusRun> {
    let mut engine = PoaEngine::new(validators.members().to_vec(), ledger, *network, *cfg, faults.clone())?;
    if engine.validators().understaffed() {
        log::warn!(
            "{} validators; at least {MIN_RECOMMENDED_VALIDATORS} recommended",
            engine.validators().len()
        );
    }
    let mut tx = 0u64;
    while engine.chain().height() < n_blocks {
        let now = engine.clock();
        engine.run_round(ledger, &[tx], now)?;
        tx += 1;
    }
    Ok(ConsensusRun {
        seal_counts: engine.seal_counts.clone(),
        rounds: engine.rounds,
        trace: engine.trace,
        chain: engine.chain,
    })
}

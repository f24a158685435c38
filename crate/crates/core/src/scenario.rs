//! Scenario files: TOML, every table optional, unknown keys rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::consensus::Incentives;
use crate::gating::GateMode;
use crate::governance::TallyRule;
use crate::identity::DUPLICATE_THRESHOLD;
use crate::ledger::VALIDATOR_THRESHOLD;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(String),
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Validation { field: String, message: String },
}

impl ScenarioError {
    fn invalid(field: &str, message: impl Into<String>) -> Self {
        ScenarioError::Validation {
            field: field.to_owned(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum InitialYdr {
    Zero,
    Constant { amount: u64 },
    Uniform { low: u64, high: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidatorBootstrap {
    /// The first `count` citizens start as validators.
    pub count: usize,
    pub initial_balance: u64,
    /// How many of the bootstrap validators misbehave.
    pub faulty: usize,
    pub equivocation_probability: f64,
    pub invalid_block_probability: f64,
}

impl Default for ValidatorBootstrap {
    fn default() -> Self {
        Self {
            count: 23,
            initial_balance: 1_100_000,
            faulty: 0,
            equivocation_probability: 0.0,
            invalid_block_probability: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub latency_min: u64,
    pub latency_max: u64,
    pub drop_probability: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            latency_min: 1,
            latency_max: 3,
            drop_probability: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusSpec {
    pub incentives: Incentives,
    /// Finalized blocks between validator-set refreshes.
    pub epoch_blocks: u64,
    pub round_timeout: u64,
    pub max_failed_rounds: u32,
    pub record_messages: bool,
}

impl Default for ConsensusSpec {
    fn default() -> Self {
        Self {
            incentives: Incentives::default(),
            epoch_blocks: 10,
            round_timeout: 0,
            max_failed_rounds: 100,
            record_messages: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionMode {
    /// Satisfied transactions mint YDR equal to the reaction enthalpy.
    Enthalpy,
    /// Value only changes hands; nothing is minted.
    Transfer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnthalpySchedule {
    /// Formation enthalpy of the bonded pair.
    pub product: f64,
    /// Formation enthalpy of each party alone.
    pub reactant: f64,
}

impl Default for EnthalpySchedule {
    fn default() -> Self {
        Self {
            product: 12.0,
            reactant: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractionSpec {
    pub mode: InteractionMode,
    /// Mean transactions initiated per citizen per tick.
    pub transaction_rate: f64,
    pub satisfaction_probability: f64,
    /// Chance the counterparty comes from the initiator's own community.
    pub intra_community: f64,
    pub fee_min: u64,
    pub fee_max: u64,
    /// Starting balance in the value book that fees are paid from.
    pub initial_value: u64,
    pub enthalpy: EnthalpySchedule,
}

impl Default for InteractionSpec {
    fn default() -> Self {
        Self {
            mode: InteractionMode::Enthalpy,
            transaction_rate: 0.2,
            satisfaction_probability: 0.8,
            intra_community: 0.8,
            fee_min: 1,
            fee_max: 10,
            initial_value: 1_000,
            enthalpy: EnthalpySchedule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GovernanceSpec {
    pub rule: TallyRule,
    /// Per-epoch chance that an ordinary citizen's token is burned.
    pub burn_probability: f64,
    /// Per-epoch chance a burned citizen applies for reinstatement.
    pub reinstatement_probability: f64,
    /// Chance each voter supports a reinstatement.
    pub approval_probability: f64,
    /// Per-epoch chance an ordinary citizen spends YDR.
    pub spend_probability: f64,
    pub spend_amount: u64,
    /// Per-epoch chance an ordinary citizen liquidates and leaves.
    pub liquidation_probability: f64,
}

impl Default for GovernanceSpec {
    fn default() -> Self {
        Self {
            rule: TallyRule::default(),
            burn_probability: 0.0,
            reinstatement_probability: 0.5,
            approval_probability: 0.7,
            spend_probability: 0.0,
            spend_amount: 5,
            liquidation_probability: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatingSpec {
    pub theta: [f64; 3],
    pub eta_short: f64,
    pub eta_long: f64,
    pub mode: GateMode,
    pub timing_min: f64,
    pub timing_max: f64,
}

impl Default for GatingSpec {
    fn default() -> Self {
        Self {
            theta: [1.0, 1.0, 0.5],
            eta_short: 0.05,
            eta_long: 0.01,
            mode: GateMode::Stochastic,
            timing_min: 0.5,
            timing_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecasterSpec {
    pub enabled: bool,
    /// Ticks per snapshot.
    pub delta: u64,
    pub history: usize,
    pub horizon: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub kernel: usize,
    pub diffusion_steps: usize,
    pub steps_per_epoch: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Most recent windows kept for training.
    pub max_windows: usize,
}

impl Default for ForecasterSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            delta: 2,
            history: 6,
            horizon: 2,
            hidden: 4,
            blocks: 2,
            kernel: 2,
            diffusion_steps: 1,
            steps_per_epoch: 20,
            learning_rate: 0.01,
            batch_size: 8,
            max_windows: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub population: usize,
    pub communities: usize,
    /// Run length in ticks.
    pub duration: u64,
    /// Ticks per harness epoch.
    pub epoch_length: u64,
    pub seed: u64,
    pub duplicate_threshold: f64,
    pub initial_ydr: InitialYdr,
    pub validators: ValidatorBootstrap,
    pub network: NetworkSpec,
    pub consensus: ConsensusSpec,
    pub interaction: InteractionSpec,
    pub governance: GovernanceSpec,
    pub gating: GatingSpec,
    pub forecaster: ForecasterSpec,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            population: 30,
            communities: 3,
            duration: 100,
            epoch_length: 20,
            seed: 0,
            duplicate_threshold: DUPLICATE_THRESHOLD,
            initial_ydr: InitialYdr::Uniform { low: 0, high: 1_000 },
            validators: ValidatorBootstrap::default(),
            network: NetworkSpec::default(),
            consensus: ConsensusSpec::default(),
            interaction: InteractionSpec::default(),
            governance: GovernanceSpec::default(),
            gating: GatingSpec::default(),
            forecaster: ForecasterSpec::default(),
        }
    }
}

fn positive<T: PartialOrd + Default + Copy>(field: &str, v: T) -> Result<(), ScenarioError> {
    if v > T::default() {
        Ok(())
    } else {
        Err(ScenarioError::invalid(field, "must be positive"))
    }
}

fn probability(field: &str, p: f64) -> Result<(), ScenarioError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ScenarioError::invalid(field, format!("{p} is not a probability in [0, 1]")))
    }
}

fn finite_nonneg(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::invalid(field, format!("{v} must be finite and >= 0")))
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn epochs(&self) -> u64 {
        self.duration / self.epoch_length
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        positive("population", self.population)?;
        positive("communities", self.communities)?;
        positive("duration", self.duration)?;
        positive("epoch_length", self.epoch_length)?;
        if self.communities > self.population {
            return Err(ScenarioError::invalid("communities", "exceeds population"));
        }
        probability("duplicate_threshold", self.duplicate_threshold)?;
        if let InitialYdr::Uniform { low, high } = self.initial_ydr {
            if low > high {
                return Err(ScenarioError::invalid("initial_ydr.low", "exceeds high"));
            }
        }

        let v = &self.validators;
        if v.count > self.population {
            return Err(ScenarioError::invalid("validators.count", "exceeds population"));
        }
        if v.count > 0 && v.initial_balance <= VALIDATOR_THRESHOLD {
            return Err(ScenarioError::invalid(
                "validators.initial_balance",
                format!("must exceed {VALIDATOR_THRESHOLD} for validators to be eligible"),
            ));
        }
        if v.faulty > v.count {
            return Err(ScenarioError::invalid("validators.faulty", "exceeds validators.count"));
        }
        probability("validators.equivocation_probability", v.equivocation_probability)?;
        probability("validators.invalid_block_probability", v.invalid_block_probability)?;

        probability("network.drop_probability", self.network.drop_probability)?;
        if self.network.latency_min > self.network.latency_max {
            return Err(ScenarioError::invalid("network.latency_min", "exceeds network.latency_max"));
        }
        positive("consensus.epoch_blocks", self.consensus.epoch_blocks)?;
        positive("consensus.max_failed_rounds", self.consensus.max_failed_rounds)?;

        let i = &self.interaction;
        finite_nonneg("interaction.transaction_rate", i.transaction_rate)?;
        probability("interaction.satisfaction_probability", i.satisfaction_probability)?;
        probability("interaction.intra_community", i.intra_community)?;
        positive("interaction.fee_min", i.fee_min)?;
        if i.fee_min > i.fee_max {
            return Err(ScenarioError::invalid("interaction.fee_min", "exceeds interaction.fee_max"));
        }
        if !(i.enthalpy.product.is_finite() && i.enthalpy.reactant.is_finite()) {
            return Err(ScenarioError::invalid("interaction.enthalpy", "values must be finite"));
        }

        let g = &self.governance;
        probability("governance.rule.quorum", g.rule.quorum)?;
        probability("governance.rule.pass_threshold", g.rule.pass_threshold)?;
        probability("governance.burn_probability", g.burn_probability)?;
        probability("governance.reinstatement_probability", g.reinstatement_probability)?;
        probability("governance.approval_probability", g.approval_probability)?;
        probability("governance.spend_probability", g.spend_probability)?;
        probability("governance.liquidation_probability", g.liquidation_probability)?;

        let gt = &self.gating;
        if gt.theta.iter().any(|t| !t.is_finite()) {
            return Err(ScenarioError::invalid("gating.theta", "must be finite"));
        }
        finite_nonneg("gating.eta_short", gt.eta_short)?;
        finite_nonneg("gating.eta_long", gt.eta_long)?;
        positive("gating.timing_min", gt.timing_min)?;
        if !(gt.timing_min <= gt.timing_max && gt.timing_max.is_finite()) {
            return Err(ScenarioError::invalid("gating.timing_max", "must be finite and >= timing_min"));
        }

        let f = &self.forecaster;
        if f.enabled {
            positive("forecaster.delta", f.delta)?;
            positive("forecaster.history", f.history)?;
            positive("forecaster.horizon", f.horizon)?;
            positive("forecaster.hidden", f.hidden)?;
            positive("forecaster.blocks", f.blocks)?;
            positive("forecaster.kernel", f.kernel)?;
            positive("forecaster.batch_size", f.batch_size)?;
            positive("forecaster.max_windows", f.max_windows)?;
            finite_nonneg("forecaster.learning_rate", f.learning_rate)?;
            let receptive = 1 + (0..f.blocks).map(|l| (f.kernel - 1) << l.min(30)).sum::<usize>();
            if receptive > f.history {
                return Err(ScenarioError::invalid(
                    "forecaster.history",
                    format!("shorter than the receptive field {receptive}"),
                ));
            }
        }
        Ok(())
    }
}

//! Value accounting in thermodynamic terms.
//!
//! * enthalpy of reaction: `Δ_rH = Σ ν Δ_fH (products) − Σ ν Δ_fH (reactants)`
//! * enthalpy of atomization: the total bond energy of a community
//! * entropy of holdings: Shannon entropy of asset shares, in nats
//! * game classification by the sign of the summed payoffs

use serde::{Deserialize, Serialize};

use crate::address::Address;

/// Relative tolerance for calling a game zero-sum.
pub const ZERO_SUM_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EconError {
    #[error("coefficient {0} must be positive and finite")]
    NonPositiveCoefficient(f64),
    #[error("bond energy {0} must be nonnegative and finite")]
    NegativeBondEnergy(f64),
    #[error("a bond cannot join {0} to itself")]
    SelfBond(Address),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

pub type Result<T> = std::result::Result<T, EconError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeciesTerm {
    coefficient: f64,
    formation_enthalpy: f64,
}

impl SpeciesTerm {
    pub fn new(coefficient: f64, formation_enthalpy: f64) -> Result<Self> {
        if !(coefficient > 0.0 && coefficient.is_finite()) {
            return Err(EconError::NonPositiveCoefficient(coefficient));
        }
        Ok(Self {
            coefficient,
            formation_enthalpy,
        })
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn formation_enthalpy(&self) -> f64 {
        self.formation_enthalpy
    }
}

pub fn enthalpy_of_reaction(products: &[SpeciesTerm], reactants: &[SpeciesTerm]) -> f64 {
    let side = |terms: &[SpeciesTerm]| terms.iter().map(|t| t.coefficient * t.formation_enthalpy).sum::<f64>();
    side(products) - side(reactants)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityBond {
    endpoints: (Address, Address),
    bond_energy: f64,
}

impl CommunityBond {
    pub fn new(a: Address, b: Address, bond_energy: f64) -> Result<Self> {
        if a == b {
            return Err(EconError::SelfBond(a));
        }
        if !(bond_energy >= 0.0 && bond_energy.is_finite()) {
            return Err(EconError::NegativeBondEnergy(bond_energy));
        }
        Ok(Self {
            endpoints: (a, b),
            bond_energy,
        })
    }

    pub fn endpoints(&self) -> (&Address, &Address) {
        (&self.endpoints.0, &self.endpoints.1)
    }

    pub fn bond_energy(&self) -> f64 {
        self.bond_energy
    }
}

/// Energy needed to break every bond in the community.
pub fn enthalpy_of_atomization(bonds: &[CommunityBond]) -> f64 {
    bonds.iter().map(|b| b.bond_energy).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldingsDistribution(Vec<f64>);

impl HoldingsDistribution {
    /// Accepts `p` when every entry is finite and nonnegative and the sum is
    /// within 1e-12 of one.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(EconError::InvalidDistribution("empty".into()));
        }
        if let Some(bad) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(EconError::InvalidDistribution(format!("entry {bad}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(EconError::InvalidDistribution(format!("sums to {total}")));
        }
        Ok(Self(p))
    }

    /// Shares of a list of holdings. All-zero holdings give the uniform
    /// distribution.
    pub fn from_amounts(amounts: &[u64]) -> Result<Self> {
        if amounts.is_empty() {
            return Err(EconError::InvalidDistribution("empty".into()));
        }
        let total: u128 = amounts.iter().map(|&a| a as u128).sum();
        if total == 0 {
            let n = amounts.len() as f64;
            return Ok(Self(vec![1.0 / n; amounts.len()]));
        }
        Ok(Self(amounts.iter().map(|&a| a as f64 / total as f64).collect()))
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }
}

/// `−Σ p ln p` with `0 ln 0 = 0`.
pub fn entropy(dist: &HoldingsDistribution) -> f64 {
    dist.0.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum::<f64>() + 0.0
}

/// Gini coefficient of nonnegative holdings; 0 for empty or all-zero input.
pub fn gini(amounts: &[u64]) -> f64 {
    let n = amounts.len();
    let total: f64 = amounts.iter().map(|&a| a as f64).sum();
    if n == 0 || total == 0.0 {
        return 0.0;
    }
    let mut sorted: Vec<f64> = amounts.iter().map(|&a| a as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let weighted: f64 = sorted.iter().enumerate().map(|(i, x)| (2.0 * (i as f64 + 1.0) - n as f64 - 1.0) * x).sum();
    weighted / (n as f64 * total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GameClass {
    NegativeSum,
    ZeroSum,
    PositiveSum,
}

impl GameClass {
    /// Zero-sum value flows are treated as a Ponzi warning sign.
    pub fn ponzi_suspect(self) -> bool {
        self == GameClass::ZeroSum
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GameClass::NegativeSum => "NegativeSum",
            GameClass::ZeroSum => "ZeroSum",
            GameClass::PositiveSum => "PositiveSum",
        }
    }
}

/// Zero-sum when `|Σ x| ≤ ε · max(1, Σ |x|)`, otherwise the sign of the sum.
pub fn classify_game(payoffs: &[f64], epsilon: f64) -> GameClass {
    let total: f64 = payoffs.iter().sum();
    let scale: f64 = payoffs.iter().map(|x| x.abs()).sum();
    if total.abs() <= epsilon * scale.max(1.0) {
        GameClass::ZeroSum
    } else if total > 0.0 {
        GameClass::PositiveSum
    } else {
        GameClass::NegativeSum
    }
}

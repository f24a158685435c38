//! Ydentity tokens: mint, search, burn, reinstate.
//!
//! Tokens are non-transferable. Nothing in this module changes a token's
//! owner, and a burned token is never revived; reinstatement mints a new one.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::address::Address;
use crate::governance::GovernanceDecision;
use crate::ledger::{LedgerError, ReputationLedger};

pub const FACE_DIM: usize = 128;

/// Default cosine-similarity threshold at or above which two faces are the
/// same person.
pub const DUPLICATE_THRESHOLD: f64 = 0.85;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IdentityError {
    #[error("face matches active token {existing} with similarity {similarity:.4}")]
    DuplicateFace { existing: TokenId, similarity: f64 },
    #[error("profile field {field} = {value} is outside [0, 1]")]
    InvalidProfile { field: &'static str, value: f64 },
    #[error("face vector has {0} entries, expected 128")]
    BadFaceLength(usize),
    #[error("face vector has a non-finite entry")]
    NonFiniteFace,
    #[error("face vector has zero norm")]
    ZeroNormVector,
    #[error("token {0} is already burned")]
    AlreadyBurned(TokenId),
    #[error("unknown token {0}")]
    UnknownToken(TokenId),
    #[error("token {0} is not burned")]
    NotBurned(TokenId),
    #[error("governance rejected proposal {0}")]
    GovernanceRejected(u64),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("registry dump: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, IdentityError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u64);

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ydt-{:06}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    Other,
    Undisclosed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ambition {
    Low,
    Moderate,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobLevel {
    None,
    Entry,
    Intermediate,
    Senior,
    Executive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EducationLevel {
    None,
    Primary,
    Secondary,
    Tertiary,
    Postgraduate,
}

/// Seven behavioural scores in `[0, 1]` and five demographics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub tolerance: f64,
    pub credibility: f64,
    pub maturity: f64,
    pub autonomy: f64,
    pub emotional_state: f64,
    pub worthiness: f64,
    pub w_range: f64,
    pub age: u32,
    pub gender: Gender,
    pub ambition: Ambition,
    pub job_level: JobLevel,
    pub education_level: EducationLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreField {
    Tolerance,
    Credibility,
    Maturity,
    Autonomy,
    EmotionalState,
    Worthiness,
    WRange,
}

impl ScoreField {
    pub const ALL: [ScoreField; 7] = [
        ScoreField::Tolerance,
        ScoreField::Credibility,
        ScoreField::Maturity,
        ScoreField::Autonomy,
        ScoreField::EmotionalState,
        ScoreField::Worthiness,
        ScoreField::WRange,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreField::Tolerance => "tolerance",
            ScoreField::Credibility => "credibility",
            ScoreField::Maturity => "maturity",
            ScoreField::Autonomy => "autonomy",
            ScoreField::EmotionalState => "emotional_state",
            ScoreField::Worthiness => "worthiness",
            ScoreField::WRange => "w_range",
        }
    }
}

impl Profile {
    /// All scores at `score`, middling demographics.
    pub fn uniform(score: f64) -> Self {
        Self {
            tolerance: score,
            credibility: score,
            maturity: score,
            autonomy: score,
            emotional_state: score,
            worthiness: score,
            w_range: score,
            age: 30,
            gender: Gender::Undisclosed,
            ambition: Ambition::Moderate,
            job_level: JobLevel::Intermediate,
            education_level: EducationLevel::Secondary,
        }
    }

    pub fn score(&self, field: ScoreField) -> f64 {
        match field {
            ScoreField::Tolerance => self.tolerance,
            ScoreField::Credibility => self.credibility,
            ScoreField::Maturity => self.maturity,
            ScoreField::Autonomy => self.autonomy,
            ScoreField::EmotionalState => self.emotional_state,
            ScoreField::Worthiness => self.worthiness,
            ScoreField::WRange => self.w_range,
        }
    }

    /// Mean of the seven scores.
    pub fn mean_score(&self) -> f64 {
        ScoreField::ALL.iter().map(|&f| self.score(f)).sum::<f64>() / 7.0
    }

    pub fn validate(&self) -> Result<()> {
        for field in ScoreField::ALL {
            let value = self.score(field);
            if !(0.0..=1.0).contains(&value) {
                return Err(IdentityError::InvalidProfile {
                    field: field.name(),
                    value,
                });
            }
        }
        Ok(())
    }
}

/// 128 facial features with nonzero norm. Serialized as a plain array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FaceVector(Vec<f64>);

impl FaceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != FACE_DIM {
            return Err(IdentityError::BadFaceLength(values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IdentityError::NonFiniteFace);
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(IdentityError::ZeroNormVector);
        }
        Ok(Self(values))
    }

    /// Unit vector along axis `i`.
    pub fn basis(i: usize) -> Self {
        let mut v = vec![0.0; FACE_DIM];
        v[i % FACE_DIM] = 1.0;
        Self(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for FaceVector {
    type Error = IdentityError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FaceVector> for Vec<f64> {
    fn from(f: FaceVector) -> Self {
        f.0
    }
}

/// Cosine similarity of two equal-length vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(IdentityError::BadFaceLength(b.len()));
    }
    let (na, nb) = (
        a.iter().map(|v| v * v).sum::<f64>().sqrt(),
        b.iter().map(|v| v * v).sum::<f64>().sqrt(),
    );
    if na == 0.0 || nb == 0.0 {
        return Err(IdentityError::ZeroNormVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity of two faces. Symmetric: the sum runs in index order
/// whichever argument comes first.
pub fn match_face(a: &FaceVector, b: &FaceVector) -> f64 {
    cosine_similarity(&a.0, &b.0).expect("face vectors have length 128 and nonzero norm")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenState {
    Active,
    Burned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YdentityToken {
    pub token_id: TokenId,
    pub owner_address: Address,
    pub profile: Profile,
    pub face: FaceVector,
    pub state: TokenState,
    pub minted_at: u64,
    #[serde(default)]
    pub burned_at: Option<u64>,
    /// The burned token this one was reinstated from.
    #[serde(default)]
    pub reinstates: Option<TokenId>,
}

impl YdentityToken {
    pub fn is_active(&self) -> bool {
        self.state == TokenState::Active
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurnReceipt {
    pub token_id: TokenId,
    pub owner_address: Address,
    pub tick: u64,
    pub forfeited: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cmp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Cmp {
    fn holds<T: PartialOrd>(self, lhs: T, rhs: T) -> bool {
        match self {
            Cmp::Lt => lhs < rhs,
            Cmp::Le => lhs <= rhs,
            Cmp::Eq => lhs == rhs,
            Cmp::Ge => lhs >= rhs,
            Cmp::Gt => lhs > rhs,
        }
    }
}

/// A condition on one profile field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "field")]
pub enum Predicate {
    Score { score: ScoreField, cmp: Cmp, value: f64 },
    Age { cmp: Cmp, value: u32 },
    Gender { is: Gender },
    Ambition { cmp: Cmp, value: Ambition },
    JobLevel { cmp: Cmp, value: JobLevel },
    EducationLevel { cmp: Cmp, value: EducationLevel },
}

impl Predicate {
    pub fn score(score: ScoreField, cmp: Cmp, value: f64) -> Self {
        Predicate::Score { score, cmp, value }
    }

    pub fn matches(&self, p: &Profile) -> bool {
        match *self {
            Predicate::Score { score, cmp, value } => cmp.holds(p.score(score), value),
            Predicate::Age { cmp, value } => cmp.holds(p.age, value),
            Predicate::Gender { is } => p.gender == is,
            Predicate::Ambition { cmp, value } => cmp.holds(p.ambition, value),
            Predicate::JobLevel { cmp, value } => cmp.holds(p.job_level, value),
            Predicate::EducationLevel { cmp, value } => cmp.holds(p.education_level, value),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IdentityRegistry {
    tokens: BTreeMap<TokenId, YdentityToken>,
    next_id: u64,
    duplicate_threshold: f64,
}

impl Default for IdentityRegistry {
    fn default() -> Self {
        Self::new(DUPLICATE_THRESHOLD)
    }
}

impl IdentityRegistry {
    pub fn new(duplicate_threshold: f64) -> Self {
        Self {
            tokens: BTreeMap::new(),
            next_id: 1,
            duplicate_threshold,
        }
    }

    pub fn duplicate_threshold(&self) -> f64 {
        self.duplicate_threshold
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.tokens.values().filter(|t| t.is_active()).count()
    }

    pub fn get(&self, id: TokenId) -> Option<&YdentityToken> {
        self.tokens.get(&id)
    }

    /// Tokens in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &YdentityToken> {
        self.tokens.values()
    }

    pub fn active(&self) -> impl Iterator<Item = &YdentityToken> {
        self.tokens.values().filter(|t| t.is_active())
    }

    pub fn by_owner(&self, owner: &Address) -> Option<&YdentityToken> {
        self.tokens.values().find(|t| &t.owner_address == owner)
    }

    fn check_duplicate(&self, face: &FaceVector) -> Result<()> {
        for t in self.active() {
            let similarity = match_face(face, &t.face);
            if similarity >= self.duplicate_threshold {
                return Err(IdentityError::DuplicateFace {
                    existing: t.token_id,
                    similarity,
                });
            }
        }
        Ok(())
    }

    fn insert(
        &mut self,
        ledger: &mut ReputationLedger,
        profile: Profile,
        face: FaceVector,
        tick: u64,
        reinstates: Option<TokenId>,
    ) -> Result<&YdentityToken> {
        profile.validate()?;
        self.check_duplicate(&face)?;
        let id = TokenId(self.next_id);
        // Addresses are derived from the id, so they are unique whenever
        // ids are; the nonce loop only guards against an existing ledger
        // account with the same address.
        let mut nonce = 0;
        let owner = loop {
            let candidate = Address::derive("ydentity-owner", id.0.wrapping_mul(1 << 16) + nonce);
            if ledger.account(&candidate).is_none() {
                break candidate;
            }
            nonce += 1;
        };
        ledger.open_account(owner.clone())?;
        self.next_id += 1;
        self.tokens.insert(
            id,
            YdentityToken {
                token_id: id,
                owner_address: owner,
                profile,
                face,
                state: TokenState::Active,
                minted_at: tick,
                burned_at: None,
                reinstates,
            },
        );
        Ok(&self.tokens[&id])
    }

    /// Registers a new identity and opens its zero-balance YDR account.
    pub fn mint(
        &mut self,
        ledger: &mut ReputationLedger,
        profile: Profile,
        face: FaceVector,
        tick: u64,
    ) -> Result<&YdentityToken> {
        self.insert(ledger, profile, face, tick, None)
    }

    /// Owner addresses of active tokens matching every predicate, in token
    /// id order.
    pub fn search(&self, predicates: &[Predicate]) -> Vec<Address> {
        self.active()
            .filter(|t| predicates.iter().all(|p| p.matches(&t.profile)))
            .map(|t| t.owner_address.clone())
            .collect()
    }

    /// Burns a token. The owner's remaining YDR is destroyed through a slash
    /// tagged `burn`, and the account is frozen.
    pub fn burn(&mut self, ledger: &mut ReputationLedger, id: TokenId, tick: u64) -> Result<BurnReceipt> {
        let token = self.tokens.get_mut(&id).ok_or(IdentityError::UnknownToken(id))?;
        if !token.is_active() {
            return Err(IdentityError::AlreadyBurned(id));
        }
        let owner = token.owner_address.clone();
        let forfeited = ledger.balance(&owner);
        if forfeited > 0 {
            ledger.slash(&owner, forfeited, "burn", tick)?;
        }
        ledger.freeze(&owner)?;
        token.state = TokenState::Burned;
        token.burned_at = Some(tick);
        Ok(BurnReceipt {
            token_id: id,
            owner_address: owner,
            tick,
            forfeited,
        })
    }

    /// Mints a fresh token for a burned identity once governance approves.
    pub fn reinstate(
        &mut self,
        ledger: &mut ReputationLedger,
        old: TokenId,
        profile: Profile,
        face: FaceVector,
        approval: &GovernanceDecision,
        tick: u64,
    ) -> Result<&YdentityToken> {
        let token = self.tokens.get(&old).ok_or(IdentityError::UnknownToken(old))?;
        if token.is_active() {
            return Err(IdentityError::NotBurned(old));
        }
        if !approval.passed {
            return Err(IdentityError::GovernanceRejected(approval.proposal_id));
        }
        self.insert(ledger, profile, face, tick, Some(old))
    }

    /// JSON array of token records in id order.
    pub fn dump_json(&self) -> String {
        let tokens: Vec<&YdentityToken> = self.tokens.values().collect();
        serde_json::to_string_pretty(&tokens).expect("token records serialize")
    }

    /// Rebuilds a registry from [`Self::dump_json`] output. Ledger accounts
    /// are not part of the dump.
    pub fn load_json(text: &str, duplicate_threshold: f64) -> Result<Self> {
        let tokens: Vec<YdentityToken> = serde_json::from_str(text).map_err(|e| IdentityError::Json(e.to_string()))?;
        let mut reg = Self::new(duplicate_threshold);
        for t in tokens {
            t.profile.validate()?;
            if reg.tokens.contains_key(&t.token_id) || reg.by_owner(&t.owner_address).is_some() {
                return Err(IdentityError::Json(format!("token {} or its owner appears twice", t.token_id)));
            }
            reg.next_id = reg.next_id.max(t.token_id.0 + 1);
            reg.tokens.insert(t.token_id, t);
        }
        Ok(reg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approval(passed: bool) -> GovernanceDecision {
        GovernanceDecision {
            proposal_id: 7,
            w: if passed { 1.0 } else { 0.0 },
            passed,
            quorum_met: true,
            tick: 0,
        }
    }

    #[test]
    fn cosine_examples() {
        let v = FaceVector::basis(0);
        let neg = FaceVector::new(v.values().iter().map(|x| -x).collect()).unwrap();
        assert_eq!(match_face(&v, &v), 1.0);
        assert_eq!(match_face(&v, &neg), -1.0);
        let mut w = vec![0.0; FACE_DIM];
        w[0] = 1.0 / 2f64.sqrt();
        w[1] = 1.0 / 2f64.sqrt();
        let w = FaceVector::new(w).unwrap();
        assert!((match_face(&v, &w) - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(FaceVector::new(vec![0.0; FACE_DIM]), Err(IdentityError::ZeroNormVector));
        assert_eq!(FaceVector::new(vec![1.0; 3]), Err(IdentityError::BadFaceLength(3)));
    }

    #[test]
    fn mint_and_duplicate_rules() {
        let mut reg = IdentityRegistry::default();
        let mut ledger = ReputationLedger::new();
        let t = reg.mint(&mut ledger, Profile::uniform(0.5), FaceVector::basis(0), 0).unwrap();
        let owner = t.owner_address.clone();
        assert_eq!(reg.len(), 1);
        assert_eq!(ledger.balance(&owner), 0);
        assert!(ledger.account(&owner).is_some());
        assert!(matches!(
            reg.mint(&mut ledger, Profile::uniform(0.5), FaceVector::basis(0), 1),
            Err(IdentityError::DuplicateFace { .. })
        ));
        reg.mint(&mut ledger, Profile::uniform(0.5), FaceVector::basis(1), 1).unwrap();
        assert_eq!(reg.active_count(), 2);
        let mut bad = Profile::uniform(0.5);
        bad.worthiness = 1.2;
        assert_eq!(
            reg.mint(&mut ledger, bad, FaceVector::basis(2), 2).unwrap_err(),
            IdentityError::InvalidProfile {
                field: "worthiness",
                value: 1.2
            }
        );
    }

    #[test]
    fn search_filters_active_tokens() {
        let mut reg = IdentityRegistry::default();
        let mut ledger = ReputationLedger::new();
        assert!(reg.search(&[]).is_empty());
        let mut low = Profile::uniform(0.5);
        low.credibility = 0.5;
        let mut high = Profile::uniform(0.5);
        high.credibility = 0.95;
        let a = reg.mint(&mut ledger, low, FaceVector::basis(0), 0).unwrap().owner_address.clone();
        let b = reg.mint(&mut ledger, high, FaceVector::basis(1), 0).unwrap().owner_address.clone();
        let c = reg
            .mint(&mut ledger, Profile::uniform(0.1), FaceVector::basis(2), 0)
            .unwrap()
            .owner_address
            .clone();
        assert_eq!(reg.search(&[]), vec![a, b.clone(), c]);
        let q = [Predicate::score(ScoreField::Credibility, Cmp::Ge, 0.9)];
        assert_eq!(reg.search(&q), vec![b]);
        reg.burn(&mut ledger, TokenId(2), 5).unwrap();
        assert!(reg.search(&q).is_empty());
    }

    #[test]
    fn burn_forfeits_and_freezes() {
        let mut reg = IdentityRegistry::default();
        let mut ledger = ReputationLedger::new();
        let owner = reg
            .mint(&mut ledger, Profile::uniform(0.5), FaceVector::basis(0), 0)
            .unwrap()
            .owner_address
            .clone();
        ledger.earn(&owner, 500, "work", 1).unwrap();
        let receipt = reg.burn(&mut ledger, TokenId(1), 2).unwrap();
        assert_eq!(receipt.forfeited, 500);
        assert_eq!(reg.get(TokenId(1)).unwrap().state, TokenState::Burned);
        assert!(ledger.is_frozen(&owner));
        assert_eq!(ledger.balance(&owner), 0);
        assert!(ledger.conservation_holds());
        assert_eq!(reg.burn(&mut ledger, TokenId(1), 3), Err(IdentityError::AlreadyBurned(TokenId(1))));
        assert_eq!(reg.burn(&mut ledger, TokenId(9), 3), Err(IdentityError::UnknownToken(TokenId(9))));
    }

    #[test]
    fn reinstatement_mints_a_new_token() {
        let mut reg = IdentityRegistry::default();
        let mut ledger = ReputationLedger::new();
        reg.mint(&mut ledger, Profile::uniform(0.5), FaceVector::basis(0), 0).unwrap();
        reg.mint(&mut ledger, Profile::uniform(0.5), FaceVector::basis(1), 0).unwrap();
        assert_eq!(
            reg.reinstate(&mut ledger, TokenId(2), Profile::uniform(0.5), FaceVector::basis(2), &approval(true), 1)
                .unwrap_err(),
            IdentityError::NotBurned(TokenId(2))
        );
        reg.burn(&mut ledger, TokenId(1), 1).unwrap();
        assert_eq!(
            reg.reinstate(&mut ledger, TokenId(1), Profile::uniform(0.5), FaceVector::basis(0), &approval(false), 2)
                .unwrap_err(),
            IdentityError::GovernanceRejected(7)
        );
        let t = reg
            .reinstate(&mut ledger, TokenId(1), Profile::uniform(0.6), FaceVector::basis(0), &approval(true), 3)
            .unwrap();
        assert_eq!(t.token_id, TokenId(3));
        assert_eq!(t.reinstates, Some(TokenId(1)));
        assert_eq!(ledger.balance(&t.owner_address.clone()), 0);
        assert_eq!(reg.get(TokenId(1)).unwrap().state, TokenState::Burned);
        assert_eq!(reg.active_count(), 2);
    }

    #[test]
    fn json_round_trip() {
        let mut reg = IdentityRegistry::default();
        let mut ledger = ReputationLedger::new();
        reg.mint(&mut ledger, Profile::uniform(0.5), FaceVector::basis(0), 0).unwrap();
        reg.mint(&mut ledger, Profile::uniform(0.7), FaceVector::basis(5), 3).unwrap();
        reg.burn(&mut ledger, TokenId(1), 4).unwrap();
        let text = reg.dump_json();
        let back = IdentityRegistry::load_json(&text, DUPLICATE_THRESHOLD).unwrap();
        assert_eq!(back.dump_json(), text);
        assert_eq!(back.active_count(), 1);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value[0]["face"].as_array().unwrap().len(), FACE_DIM);
        assert_eq!(value[0]["state"], "burned");
    }
}

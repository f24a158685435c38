//! Admission gate with two learning loops.
//!
//! Acceptance probability is `σ(θ₀ + θ₁·score + θ₂/timing)`. The short loop
//! takes a policy-gradient step on each decision's outcome. The long loop
//! credits the mean gradient trace of all decisions since its last update
//! with an ecosystem-wide retro signal.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GateError {
    #[error("performance score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("timing {0} must be positive and finite")]
    InvalidTiming(f64),
    #[error("learning rate {0} must be finite and >= 0")]
    InvalidLearningRate(f64),
    #[error("feedback {0} is not finite")]
    NonFiniteFeedback(f64),
}

pub type Result<T> = std::result::Result<T, GateError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateSignal {
    performance_score: f64,
    timing: f64,
}

impl GateSignal {
    pub fn new(performance_score: f64, timing: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&performance_score) {
            return Err(GateError::InvalidScore(performance_score));
        }
        if !(timing > 0.0 && timing.is_finite()) {
            return Err(GateError::InvalidTiming(timing));
        }
        Ok(Self {
            performance_score,
            timing,
        })
    }

    pub fn performance_score(&self) -> f64 {
        self.performance_score
    }

    pub fn timing(&self) -> f64 {
        self.timing
    }

    /// `(1, score, 1/timing)`.
    pub fn features(&self) -> [f64; 3] {
        [1.0, self.performance_score, 1.0 / self.timing]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Accept iff `p > 0.5`.
    #[default]
    Deterministic,
    /// Accept with probability `p`.
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub decision: Decision,
    /// Acceptance probability at decision time.
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub theta: [f64; 3],
    pub eta_short: f64,
    pub eta_long: f64,
    pub mode: GateMode,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            theta: [0.0; 3],
            eta_short: 0.05,
            eta_long: 0.01,
            mode: GateMode::Deterministic,
        }
    }
}

/// Counters since the last [`GateAgent::take_stats`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GateStats {
    pub decisions: u64,
    pub accepted: u64,
    pub outcomes: u64,
    pub outcome_sum: f64,
}

impl GateStats {
    pub fn accept_rate(&self) -> f64 {
        if self.decisions == 0 {
            0.0
        } else {
            self.accepted as f64 / self.decisions as f64
        }
    }

    pub fn mean_outcome(&self) -> f64 {
        if self.outcomes == 0 {
            0.0
        } else {
            self.outcome_sum / self.outcomes as f64
        }
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateAgent {
    theta: [f64; 3],
    eta_short: f64,
    eta_long: f64,
    mode: GateMode,
    trace_sum: [f64; 3],
    trace_len: u64,
    stats: GateStats,
}

impl GateAgent {
    pub fn new(cfg: &GateConfig) -> Result<Self> {
        for eta in [cfg.eta_short, cfg.eta_long] {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(GateError::InvalidLearningRate(eta));
            }
        }
        Ok(Self {
            theta: cfg.theta,
            eta_short: cfg.eta_short,
            eta_long: cfg.eta_long,
            mode: cfg.mode,
            trace_sum: [0.0; 3],
            trace_len: 0,
            stats: GateStats::default(),
        })
    }

    pub fn theta(&self) -> [f64; 3] {
        self.theta
    }

    pub fn mode(&self) -> GateMode {
        self.mode
    }

    pub fn acceptance_probability(&self, signal: &GateSignal) -> f64 {
        let x = signal.features();
        logistic(self.theta.iter().zip(x).map(|(t, x)| t * x).sum())
    }

    /// `∇_θ log p(decision)`: `(1−p)x` for Accept, `−p·x` for Reject.
    pub fn log_prob_gradient(&self, signal: &GateSignal, decision: Decision) -> [f64; 3] {
        let p = self.acceptance_probability(signal);
        let coef = match decision {
            Decision::Accept => 1.0 - p,
            Decision::Reject => -p,
        };
        signal.features().map(|x| coef * x)
    }

    /// Chooses for `signal` and adds the decision's gradient to the trace.
    /// `rng` is only drawn from in stochastic mode.
    pub fn decide(&mut self, signal: &GateSignal, rng: &mut impl Rng) -> GateOutcome {
        let p = self.acceptance_probability(signal);
        let accept = match self.mode {
            GateMode::Deterministic => p > 0.5,
            GateMode::Stochastic => rng.random::<f64>() < p,
        };
        let decision = if accept { Decision::Accept } else { Decision::Reject };
        let g = self.log_prob_gradient(signal, decision);
        for (s, g) in self.trace_sum.iter_mut().zip(g) {
            *s += g;
        }
        self.trace_len += 1;
        self.stats.decisions += 1;
        self.stats.accepted += accept as u64;
        GateOutcome { decision, p }
    }

    /// `θ ← θ + η_short · outcome · ∇ log p(decision)`.
    pub fn short_loop_update(&mut self, signal: &GateSignal, decision: Decision, outcome: f64) -> Result<[f64; 3]> {
        if !outcome.is_finite() {
            return Err(GateError::NonFiniteFeedback(outcome));
        }
        let g = self.log_prob_gradient(signal, decision);
        for (t, g) in self.theta.iter_mut().zip(g) {
            *t += self.eta_short * outcome * g;
        }
        self.stats.outcomes += 1;
        self.stats.outcome_sum += outcome;
        Ok(self.theta)
    }

    /// `θ ← θ + η_long · retro · ē` with `ē` the mean trace; the trace resets.
    pub fn long_loop_update(&mut self, retro_signal: f64) -> Result<[f64; 3]> {
        if !retro_signal.is_finite() {
            return Err(GateError::NonFiniteFeedback(retro_signal));
        }
        if self.trace_len > 0 {
            let n = self.trace_len as f64;
            for (t, s) in self.theta.iter_mut().zip(self.trace_sum) {
                *t += self.eta_long * retro_signal * (s / n);
            }
        }
        self.trace_sum = [0.0; 3];
        self.trace_len = 0;
        Ok(self.theta)
    }

    pub fn pending_trace(&self) -> u64 {
        self.trace_len
    }

    pub fn stats(&self) -> GateStats {
        self.stats
    }

    pub fn take_stats(&mut self) -> GateStats {
        std::mem::take(&mut self.stats)
    }
}

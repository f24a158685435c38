//! Per-epoch metrics rows and their CSV form.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::econ::GameClass;

/// Upper edges of the YDR holdings histogram: `0`, `[1,10)`, ..., `[1e6,1e7)`,
/// then everything above.
pub const HISTOGRAM_BINS: usize = 9;

pub fn histogram(balances: impl IntoIterator<Item = u64>) -> [u64; HISTOGRAM_BINS] {
    let mut h = [0u64; HISTOGRAM_BINS];
    for b in balances {
        let bin = if b == 0 { 0 } else { (b.ilog10() as usize + 1).min(HISTOGRAM_BINS - 1) };
        h[bin] += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: u64,
    pub tick: u64,
    pub chain_height: u64,
    pub blocks_finalized: u64,
    pub rounds: u64,
    pub finalization_rate: f64,
    pub validators: usize,
    pub understaffed: bool,
    pub seal_min: u64,
    pub seal_max: u64,
    pub violations: u64,
    pub ydr_total: u64,
    pub ydr_earned: u64,
    pub ydr_spent: u64,
    pub ydr_slashed: u64,
    pub ydr_liquidated: u64,
    pub conservation_ok: bool,
    pub hist_0: u64,
    pub hist_1: u64,
    pub hist_10: u64,
    pub hist_100: u64,
    pub hist_1k: u64,
    pub hist_10k: u64,
    pub hist_100k: u64,
    pub hist_1m: u64,
    pub hist_10m_plus: u64,
    pub gini: f64,
    pub entropy: f64,
    pub active_tokens: usize,
    pub burned_tokens: usize,
    pub transactions: u64,
    pub satisfied: u64,
    pub value_total: i64,
    pub dh_formation: f64,
    pub dh_atomization: f64,
    pub game_class: GameClass,
    pub ponzi_suspect: bool,
    pub gate_accept_rate: f64,
    pub gate_mean_outcome: f64,
    pub gate_theta0: f64,
    pub gate_theta1: f64,
    pub gate_theta2: f64,
    /// Communities whose forecaster was evaluated this epoch.
    pub forecast_communities: usize,
    pub forecast_mse: f64,
    pub baseline_mse: f64,
}

impl MetricsRow {
    pub fn set_histogram(&mut self, h: [u64; HISTOGRAM_BINS]) {
        [
            self.hist_0,
            self.hist_1,
            self.hist_10,
            self.hist_100,
            self.hist_1k,
            self.hist_10k,
            self.hist_100k,
            self.hist_1m,
            self.hist_10m_plus,
        ] = h;
    }

    pub fn all_finite(&self) -> bool {
        [
            self.finalization_rate,
            self.gini,
            self.entropy,
            self.dh_formation,
            self.dh_atomization,
            self.gate_accept_rate,
            self.gate_mean_outcome,
            self.gate_theta0,
            self.gate_theta1,
            self.gate_theta2,
            self.forecast_mse,
            self.baseline_mse,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

const HEADER: &[&str] = &[
    "epoch",
    "tick",
    "chain_height",
    "blocks_finalized",
    "rounds",
    "finalization_rate",
    "validators",
    "understaffed",
    "seal_min",
    "seal_max",
    "violations",
    "ydr_total",
    "ydr_earned",
    "ydr_spent",
    "ydr_slashed",
    "ydr_liquidated",
    "conservation_ok",
    "hist_0",
    "hist_1",
    "hist_10",
    "hist_100",
    "hist_1k",
    "hist_10k",
    "hist_100k",
    "hist_1m",
    "hist_10m_plus",
    "gini",
    "entropy",
    "active_tokens",
    "burned_tokens",
    "transactions",
    "satisfied",
    "value_total",
    "dh_formation",
    "dh_atomization",
    "game_class",
    "ponzi_suspect",
    "gate_accept_rate",
    "gate_mean_outcome",
    "gate_theta0",
    "gate_theta1",
    "gate_theta2",
    "forecast_communities",
    "forecast_mse",
    "baseline_mse",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    /// CSV with a header row; an empty report is just the header.
    pub fn write_csv(&self, w: impl Write) -> csv::Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        out.write_record(HEADER)?;
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl Read) -> csv::Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let rows = rdr.deserialize().collect::<csv::Result<Vec<MetricsRow>>>()?;
        Ok(Self { rows })
    }

    /// Human-readable summary of a run.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let Some(last) = self.rows.last() else {
            return "0 epochs recorded\n".into();
        };
        let n = self.rows.len();
        let rounds: u64 = self.rows.iter().map(|r| r.rounds).sum();
        let finalized: u64 = self.rows.iter().map(|r| r.blocks_finalized).sum();
        let count = |c: GameClass| self.rows.iter().filter(|r| r.game_class == c).count();
        let ponzi = self.rows.iter().filter(|r| r.ponzi_suspect).count();
        let _ = writeln!(s, "epochs               {n}");
        let _ = writeln!(s, "final tick           {}", last.tick);
        let _ = writeln!(s, "chain height         {}", last.chain_height);
        let _ = writeln!(
            s,
            "finalization rate    {:.4} ({finalized} blocks in {rounds} rounds)",
            if rounds == 0 { 0.0 } else { finalized as f64 / rounds as f64 }
        );
        let _ = writeln!(s, "validators           {}{}", last.validators, if last.understaffed { " (understaffed)" } else { "" });
        let _ = writeln!(s, "seal counts          {}..{}", last.seal_min, last.seal_max);
        let _ = writeln!(s, "violations           {}", self.rows.iter().map(|r| r.violations).sum::<u64>());
        let _ = writeln!(s, "YDR supply           {}", last.ydr_total);
        let _ = writeln!(
            s,
            "conservation         {}",
            if self.rows.iter().all(|r| r.conservation_ok) { "holds" } else { "VIOLATED" }
        );
        let _ = writeln!(s, "gini / entropy       {:.4} / {:.4}", last.gini, last.entropy);
        let _ = writeln!(s, "tokens               {} active, {} burned", last.active_tokens, last.burned_tokens);
        let _ = writeln!(
            s,
            "game classes         {} positive, {} zero, {} negative",
            count(GameClass::PositiveSum),
            count(GameClass::ZeroSum),
            count(GameClass::NegativeSum)
        );
        let _ = writeln!(s, "ponzi-suspect epochs {ponzi}");
        let _ = writeln!(s, "gate accept rate     {:.4}", last.gate_accept_rate);
        match self.rows.iter().rev().find(|r| r.forecast_communities > 0) {
            Some(r) => {
                let _ = writeln!(
                    s,
                    "forecaster           mse {:.6} vs persistence {:.6} (epoch {})",
                    r.forecast_mse, r.baseline_mse, r.epoch
                );
            }
            None => {
                let _ = writeln!(s, "forecaster           not evaluated");
            }
        }
        s
    }
}

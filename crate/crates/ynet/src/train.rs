use std::io::Write;

use dan_tensor::{GradCheckReport, ParamStore, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::persistence_baseline;
use crate::data::Sample;
use crate::error::{Result, YnetError};
use crate::loss::mse_loss;
use crate::model::YIdentityNet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Step-size schedule over the run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Schedule {
    #[default]
    Constant,
    /// Cosine decay from `learning_rate` to `final_fraction * learning_rate`.
    Cosine { final_fraction: f64 },
}

impl Schedule {
    pub fn factor(&self, step: usize, steps: usize) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::Cosine { final_fraction } => {
                let progress = if steps > 1 { step as f64 / (steps - 1) as f64 } else { 0.0 };
                final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub optimizer: Optimizer,
    /// Samples per step; `None` uses the whole training set every step.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            learning_rate: 0.01,
            schedule: Schedule::Constant,
            optimizer: Optimizer::default(),
            batch_size: None,
            seed: 0,
        }
    }
}

/// Loss recorded at every optimization step, before that step's update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    /// `step,loss` CSV with a header row.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "step,loss")?;
        for (i, l) in self.losses.iter().enumerate() {
            writeln!(w, "{i},{l:e}")?;
        }
        Ok(())
    }
}

struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
}

fn apply_update(store: &mut ParamStore, cfg: &TrainConfig, lr: f64, adam: &mut Option<AdamState>) {
    match (cfg.optimizer, adam) {
        (Optimizer::Sgd, _) => {
            for p in store.iter_mut() {
                let g = p.grad.data().to_vec();
                for (v, g) in p.value.data_mut().iter_mut().zip(g) {
                    *v -= lr * g;
                }
            }
        }
        (Optimizer::Adam { beta1, beta2, epsilon }, state) => {
            let st = state.get_or_insert_with(|| AdamState {
                m: store.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
                v: store.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
                t: 0,
            });
            st.t += 1;
            let (c1, c2) = (1.0 - beta1.powi(st.t), 1.0 - beta2.powi(st.t));
            for ((p, m), v) in store.iter_mut().zip(&mut st.m).zip(&mut st.v) {
                let grads = p.grad.data().to_vec();
                let (md, vd) = (m.data_mut(), v.data_mut());
                for (i, (x, g)) in p.value.data_mut().iter_mut().zip(grads).enumerate() {
                    md[i] = beta1 * md[i] + (1.0 - beta1) * g;
                    vd[i] = beta2 * vd[i] + (1.0 - beta2) * g * g;
                    *x -= lr * (md[i] / c1) / ((vd[i] / c2).sqrt() + epsilon);
                }
            }
        }
    }
}

/// The objective is taken on the unclamped head output: with nonnegative
/// targets the clamp can only lower the error of a forecast, and a clamped
/// output has no gradient to recover from.
///
/// Accumulates the mean-over-batch MSE gradient into the model's store and
/// returns the batch loss.
fn accumulate_batch(model: &mut YIdentityNet, batch: &[&Sample]) -> Result<f64> {
    model.params.zero_grad();
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for sample in batch {
        let mut tape = Tape::new();
        let pred = model.forward_raw(&mut tape, &sample.history)?;
        let target = tape.constant(sample.target.clone());
        let loss = tape.mse(pred, target)?;
        total += tape.value(loss).data()[0];
        let scaled = tape.scale(loss, scale);
        tape.backward(scaled, &mut model.params)?;
    }
    Ok(total * scale)
}

/// Gradient descent on the mean MSE over `samples`.
pub fn train(model: &mut YIdentityNet, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(YnetError::InvalidConfig("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch = cfg.batch_size.unwrap_or(samples.len()).clamp(1, samples.len());
    let mut cursor = samples.len();
    let mut adam = None;
    let mut report = TrainReport::default();

    for step in 0..cfg.steps {
        let picked: Vec<&Sample> = if batch == samples.len() {
            samples.iter().collect()
        } else {
            if cursor + batch > order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            cursor += batch;
            order[cursor - batch..cursor].iter().map(|&i| &samples[i]).collect()
        };
        let loss = accumulate_batch(model, &picked)?;
        if !loss.is_finite() {
            return Err(YnetError::DivergedLoss { step });
        }
        report.losses.push(loss);
        let lr = cfg.learning_rate * cfg.schedule.factor(step, cfg.steps);
        apply_update(&mut model.params, cfg, lr, &mut adam);
        if !model.params.iter().all(|p| p.value.all_finite()) {
            return Err(YnetError::DivergedLoss { step });
        }
    }
    Ok(report)
}

/// Mean forecast MSE over `samples`.
pub fn evaluate(model: &YIdentityNet, samples: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += mse_loss(&model.predict(&s.history)?, &s.target)?;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Mean MSE of the persistence forecast over `samples`.
pub fn evaluate_persistence(samples: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let h = s.target.shape()[0];
        total += mse_loss(&persistence_baseline(&s.history, h), &s.target)?;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Central-difference check of every model parameter on one sample's loss.
pub fn gradient_check(model: &mut YIdentityNet, sample: &Sample, h: f64) -> Result<GradCheckReport> {
    model.check_input(&sample.history)?;
    let arch = &model.arch;
    let report = dan_tensor::finite_difference_check(&mut model.params, h, |store, tape| {
        let pred = arch
            .forward_raw(store, tape, &sample.history)
            .map_err(|e| match e {
                YnetError::Tensor(t) => t,
                other => dan_tensor::TensorError::Format(other.to_string()),
            })?;
        let target = tape.constant(sample.target.clone());
        tape.mse(pred, target)
    })?;
    Ok(report)
}

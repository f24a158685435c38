use std::io::{Read, Write};

use dan_tensor::{io as tio, Activation, Padding, ParamStore, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::data::GraphSequence;
use crate::error::{shape_mismatch, Result, YnetError};
use crate::init::Initializer;
use crate::linear::Linear;
use crate::spatial::Dgcn;
use crate::temporal::{GatedTcn, GatedTcnConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// `N`, profiles in the graph.
    pub nodes: usize,
    /// `C`, features per node in the input signal.
    pub channels: usize,
    /// `C_A`, width the adjacency is reduced to before fusion.
    pub adjacency_channels: usize,
    /// `C'`, hidden width.
    pub hidden: usize,
    /// `L`, number of spatiotemporal blocks.
    pub blocks: usize,
    /// `K_t`, temporal kernel size.
    pub kernel: usize,
    /// Dilation per block; empty means `1, 2, 4, ...`.
    pub dilations: Vec<usize>,
    /// `K_diff`, powers of the transition matrices.
    pub diffusion_steps: usize,
    /// `H`, forecast horizon.
    pub horizon: usize,
    /// `T`, history length.
    pub history: usize,
    pub padding: Padding,
    pub signal_activation: Activation,
    /// Filter activation of the adjacency-stream TCN. Must keep the stream
    /// nonnegative for the graph normalizations to be meaningful.
    pub adjacency_activation: Activation,
    pub gcn_activation: Activation,
    /// Clamp forecasts at zero.
    pub clamp_output: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            nodes: 10,
            channels: 2,
            adjacency_channels: 2,
            hidden: 8,
            blocks: 2,
            kernel: 2,
            dilations: Vec::new(),
            diffusion_steps: 2,
            horizon: 3,
            history: 12,
            padding: Padding::CausalLeft,
            signal_activation: Activation::Tanh,
            adjacency_activation: Activation::Softplus,
            gcn_activation: Activation::Tanh,
            clamp_output: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn dilation(&self, block: usize) -> usize {
        self.dilations.get(block).copied().unwrap_or(1 << block.min(30))
    }

    /// Number of past snapshots that can influence the final one.
    pub fn receptive_field(&self) -> usize {
        1 + (0..self.blocks)
            .map(|l| self.dilation(l) * (self.kernel - 1))
            .sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("nodes", self.nodes),
            ("channels", self.channels),
            ("adjacency_channels", self.adjacency_channels),
            ("hidden", self.hidden),
            ("blocks", self.blocks),
            ("kernel", self.kernel),
            ("horizon", self.horizon),
            ("history", self.history),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(YnetError::InvalidConfig(format!("{name} must be positive")));
        }
        if !self.dilations.is_empty() && self.dilations.len() != self.blocks {
            return Err(YnetError::InvalidConfig(format!(
                "{} dilations given for {} blocks",
                self.dilations.len(),
                self.blocks
            )));
        }
        if self.dilations.contains(&0) {
            return Err(YnetError::InvalidConfig("dilations must be positive".into()));
        }
        if self.receptive_field() > self.history {
            return Err(YnetError::InvalidConfig(format!(
                "receptive field {} exceeds history {}",
                self.receptive_field(),
                self.history
            )));
        }
        Ok(())
    }
}

/// Reduces the adjacency stream with a 1x1 convolution, concatenates it with
/// the signal, and maps the result to the hidden width with a second one.
#[derive(Debug, Clone)]
pub struct FeatureExtraction {
    pub adjacency_reduce: Linear,
    pub fuse: Linear,
}

impl FeatureExtraction {
    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, v: Var, a: Var) -> Result<Var> {
        let reduced = self.adjacency_reduce.forward(store, tape, a)?;
        let joined = tape.concat(&[reduced, v])?;
        self.fuse.forward(store, tape, joined)
    }
}

/// One spatiotemporal block: `v' = DGCN(H_v(v), H_a(A))`, `A' = H_a(A)`.
#[derive(Debug, Clone)]
pub struct StBlock {
    pub signal_tcn: GatedTcn,
    pub adjacency_tcn: GatedTcn,
    pub dgcn: Dgcn,
    pub index: usize,
}

impl StBlock {
    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, v: Var, a: Var) -> Result<(Var, Var)> {
        let t = tape.shape(v)[0];
        if self.signal_tcn.output_len(t).is_none() {
            return Err(YnetError::TemporalUnderflow {
                block: self.index,
                remaining: t,
                dilation: self.signal_tcn.config.dilation,
            });
        }
        let hv = self.signal_tcn.forward(store, tape, v)?;
        let ha = self.adjacency_tcn.forward_adjacency(store, tape, a)?;
        let out = self.dgcn.forward(store, tape, hv, ha)?;
        Ok((out, ha))
    }
}

#[derive(Debug, Clone)]
pub struct Architecture {
    pub features: FeatureExtraction,
    pub blocks: Vec<StBlock>,
    pub head: Linear,
    pub clamp_output: bool,
}

/// Forward pass with every intermediate stage exposed.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub features: Var,
    /// `(v^{l+1}, A^{l+1})` for each block.
    pub blocks: Vec<(Var, Var)>,
    /// `(H, N)` head output before the nonnegativity clamp.
    pub raw: Var,
    /// `(H, N)` forecast.
    pub output: Var,
}

impl Architecture {
    pub fn trace(&self, store: &ParamStore, tape: &mut Tape, seq: &GraphSequence) -> Result<ForwardTrace> {
        let v = tape.constant(seq.signals().clone());
        let a = tape.constant(seq.adjacency().clone());
        let features = self.features.forward(store, tape, v, a)?;
        let (mut v, mut a) = (features, a);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            (v, a) = block.forward(store, tape, v, a)?;
            blocks.push((v, a));
        }
        let last = tape.shape(v)[0] - 1;
        let final_slice = tape.select(v, last)?;
        let head = self.head.forward(store, tape, final_slice)?;
        let raw = tape.transpose(head)?;
        let output = if self.clamp_output { tape.relu(raw) } else { raw };
        Ok(ForwardTrace {
            features,
            blocks,
            raw,
            output,
        })
    }

    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, seq: &GraphSequence) -> Result<Var> {
        Ok(self.trace(store, tape, seq)?.output)
    }

    /// Unclamped head output; the training objective is taken on this.
    pub fn forward_raw(&self, store: &ParamStore, tape: &mut Tape, seq: &GraphSequence) -> Result<Var> {
        Ok(self.trace(store, tape, seq)?.raw)
    }
}

/// Feature extraction, `L` spatiotemporal blocks, and a 1x1 output head
/// read from the final temporal slice.
#[derive(Debug, Clone)]
pub struct YIdentityNet {
    config: ModelConfig,
    pub params: ParamStore,
    pub arch: Architecture,
}

impl YIdentityNet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut init = Initializer::new(config.seed);
        let mut store = ParamStore::new();
        let c = &config;
        let features = FeatureExtraction {
            adjacency_reduce: Linear::new(&mut store, "features.adjacency", c.nodes, c.adjacency_channels, &mut init),
            fuse: Linear::new(&mut store, "features.fuse", c.adjacency_channels + c.channels, c.hidden, &mut init),
        };
        let blocks = (0..c.blocks)
            .map(|l| {
                let tcn = |activation| GatedTcnConfig {
                    kernel: c.kernel,
                    dilation: c.dilation(l),
                    padding: c.padding,
                    activation,
                };
                StBlock {
                    signal_tcn: GatedTcn::new(
                        &mut store,
                        &format!("block{l}.tcn_v"),
                        c.hidden,
                        c.hidden,
                        tcn(c.signal_activation),
                        &mut init,
                    ),
                    adjacency_tcn: GatedTcn::new(
                        &mut store,
                        &format!("block{l}.tcn_a"),
                        1,
                        1,
                        tcn(c.adjacency_activation),
                        &mut init,
                    ),
                    dgcn: Dgcn::new(
                        &mut store,
                        &format!("block{l}.dgcn"),
                        c.hidden,
                        c.hidden,
                        c.diffusion_steps,
                        c.gcn_activation,
                        &mut init,
                    ),
                    index: l,
                }
            })
            .collect();
        let head = Linear::new(&mut store, "head", c.hidden, c.horizon, &mut init);
        let arch = Architecture {
            features,
            blocks,
            head,
            clamp_output: c.clamp_output,
        };
        Ok(Self {
            config,
            params: store,
            arch,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn check_input(&self, seq: &GraphSequence) -> Result<()> {
        let want = [self.config.history, self.config.nodes, self.config.channels];
        if seq.signals().shape() != want {
            return Err(shape_mismatch("model input signals", &want, seq.signals().shape()));
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, seq: &GraphSequence) -> Result<Var> {
        self.check_input(seq)?;
        self.arch.forward(&self.params, tape, seq)
    }

    pub fn forward_raw(&self, tape: &mut Tape, seq: &GraphSequence) -> Result<Var> {
        self.check_input(seq)?;
        self.arch.forward_raw(&self.params, tape, seq)
    }

    /// `(H, N)` forecast for the snapshots following `seq`.
    pub fn predict(&self, seq: &GraphSequence) -> Result<Tensor> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, seq)?;
        Ok(tape.value(out).clone())
    }

    pub fn zero_head(&mut self) {
        let (w, b) = (self.arch.head.weight, self.arch.head.bias);
        let (ws, bs) = (self.params.value(w).shape().to_vec(), self.params.value(b).shape().to_vec());
        self.params.set_value(w, Tensor::zeros(&ws));
        self.params.set_value(b, Tensor::zeros(&bs));
    }

    pub fn write_checkpoint(&self, w: &mut impl Write) -> Result<()> {
        let entries: Vec<(&str, &Tensor)> = self.params.iter().map(|p| (p.name.as_str(), &p.value)).collect();
        tio::write_bundle(w, entries.into_iter())?;
        Ok(())
    }

    /// Loads parameter values written by [`Self::write_checkpoint`] into a
    /// model built from the same configuration.
    pub fn read_checkpoint(&mut self, r: &mut impl Read) -> Result<()> {
        let entries = tio::read_bundle(r)?;
        if entries.len() != self.params.len() {
            return Err(YnetError::InvalidConfig(format!(
                "checkpoint has {} tensors, model has {}",
                entries.len(),
                self.params.len()
            )));
        }
        let ids: Vec<_> = self.params.ids().collect();
        for (id, (name, value)) in ids.into_iter().zip(entries) {
            let p = self.params.get(id);
            if p.name != name || p.value.shape() != value.shape() {
                return Err(YnetError::InvalidConfig(format!("checkpoint entry {name} does not match {}", p.name)));
            }
            self.params.set_value(id, value);
        }
        Ok(())
    }
}

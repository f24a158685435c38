//! Graph sequences, density targets, and the on-disk dataset layout.
//!
//! A dataset directory holds:
//!
//! * `meta.json` with `nodes`, `history`, `horizon`, `channels`, `delta`,
//!   `seed`, `n_sequences`
//! * `signals.bin`   `(S, T, N, C)`
//! * `adjacency.bin` `(S, T, N, N)`
//! * `targets.bin`   `(S, H, N)`
//!
//! each a single tensor record in the format of [`dan_tensor::io`].

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use dan_tensor::{io, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Result, YnetError};
use crate::graph::check_nonnegative;

/// Channel of the graph signal that carries transaction density.
pub const DENSITY_CHANNEL: usize = 0;

/// `T` snapshots of graph signal `(N, C)` and adjacency `(N, N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSequence {
    signals: Tensor,
    adjacency: Tensor,
    /// Observation window of one snapshot, in ticks.
    pub delta: u64,
    /// Tick at which the first snapshot starts.
    pub t0: u64,
}

impl GraphSequence {
    pub fn new(signals: Tensor, adjacency: Tensor, delta: u64, t0: u64) -> Result<Self> {
        let (&[t, n, _c], &[ta, na, ma]) = (signals.shape(), adjacency.shape()) else {
            return Err(shape_mismatch("graph sequence", signals.shape(), adjacency.shape()));
        };
        if t != ta || n != na || n != ma {
            return Err(shape_mismatch("graph sequence adjacency", &[t, n, n], adjacency.shape()));
        }
        check_nonnegative(&adjacency)?;
        Ok(Self {
            signals,
            adjacency,
            delta,
            t0,
        })
    }

    pub fn signals(&self) -> &Tensor {
        &self.signals
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    pub fn len(&self) -> usize {
        self.signals.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> usize {
        self.signals.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.signals.shape()[2]
    }

    /// Density at snapshot `t` for every node.
    pub fn density(&self, t: usize) -> Vec<f64> {
        let (n, c) = (self.nodes(), self.channels());
        (0..n)
            .map(|i| self.signals.data()[(t * n + i) * c + DENSITY_CHANNEL])
            .collect()
    }
}

/// Per-profile transaction density over time, shape `(T, N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySeries(Tensor);

impl DensitySeries {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.ndim() != 2 {
            return Err(shape_mismatch("density series", &[0, 0], values.shape()));
        }
        if let Some(index) = values.data().iter().position(|&v| v < 0.0) {
            return Err(YnetError::NegativeEntry {
                index,
                value: values.data()[index],
            });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }
}

/// A training pair: `T` observed snapshots and the next `H` densities.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub history: GraphSequence,
    /// `(H, N)`
    pub target: Tensor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub nodes: usize,
    pub history: usize,
    pub horizon: usize,
    pub channels: usize,
    pub delta: u64,
    pub seed: u64,
    pub n_sequences: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Splits into `(train, test)` keeping order; the first `ceil(frac*S)`
    /// samples train.
    pub fn split(&self, train_fraction: f64) -> (&[Sample], &[Sample]) {
        let k = ((self.samples.len() as f64) * train_fraction).ceil() as usize;
        self.samples.split_at(k.min(self.samples.len()))
    }

    /// Writes `meta.json`, `starts.json`, and one stacked tensor per stream.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let signals: Vec<&Tensor> = self.samples.iter().map(|s| s.history.signals()).collect();
        let adjacency: Vec<&Tensor> = self.samples.iter().map(|s| s.history.adjacency()).collect();
        let targets: Vec<&Tensor> = self.samples.iter().map(|s| &s.target).collect();
        for (name, parts) in [
            ("signals.bin", signals),
            ("adjacency.bin", adjacency),
            ("targets.bin", targets),
        ] {
            let stacked = Tensor::stack(&parts)?;
            let mut w = BufWriter::new(File::create(dir.join(name))?);
            io::write_tensor(&mut w, &stacked)?;
        }
        let meta = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(dir.join("meta.json"), meta + "\n")?;
        let starts: Vec<u64> = self.samples.iter().map(|s| s.history.t0).collect();
        std::fs::write(dir.join("starts.json"), serde_json::to_string(&starts)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)?;
        let read = |name: &str| -> Result<Tensor> {
            let mut r = BufReader::new(File::open(dir.join(name))?);
            Ok(io::read_tensor(&mut r)?)
        };
        let (signals, adjacency, targets) = (read("signals.bin")?, read("adjacency.bin")?, read("targets.bin")?);
        let s = meta.n_sequences;
        // Start times are optional; datasets written by other tools may omit them.
        let starts: Vec<u64> = match std::fs::read_to_string(dir.join("starts.json")) {
            Ok(text) => serde_json::from_str(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => vec![0; s],
            Err(e) => return Err(e.into()),
        };
        if starts.len() != s {
            return Err(shape_mismatch("starts.json", &[s], &[starts.len()]));
        }
        let want = |t: &Tensor, shape: [usize; 4], what| {
            if t.shape() != shape {
                Err(shape_mismatch(what, &shape, t.shape()))
            } else {
                Ok(())
            }
        };
        let (t, n, c, h) = (meta.history, meta.nodes, meta.channels, meta.horizon);
        want(&signals, [s, t, n, c], "signals.bin")?;
        want(&adjacency, [s, t, n, n], "adjacency.bin")?;
        if targets.shape() != [s, h, n] {
            return Err(shape_mismatch("targets.bin", &[s, h, n], targets.shape()));
        }
        let samples = (0..s)
            .map(|i| {
                Ok(Sample {
                    history: GraphSequence::new(
                        signals.select(i)?,
                        adjacency.select(i)?,
                        meta.delta,
                        starts[i],
                    )?,
                    target: targets.select(i)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { meta, samples })
    }
}

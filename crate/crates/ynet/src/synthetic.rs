//! Planted-structure datasets whose densities genuinely depend on the graph.
//!
//! Densities follow `f_{t+1} = (1-α) f_t + α P_f(A_t) f_t + noise`, clamped at
//! zero, where `P_f` is the row-normalized adjacency of snapshot `t`. Edge
//! frequencies drift slowly through a clipped log-space random walk.

use dan_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetMeta, GraphSequence, Sample};
use crate::error::{Result, YnetError};
use crate::graph::transition_matrices;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Topology {
    /// Nodes placed uniformly in the unit square, linked within `radius`.
    Geometric { radius: f64 },
    /// Node 0 linked both ways to every other node with frequency 1.
    Star,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialDensity {
    Uniform { low: f64, high: f64 },
    PointMass { node: usize, mass: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub nodes: usize,
    pub history: usize,
    pub horizon: usize,
    pub n_sequences: usize,
    pub seed: u64,
    /// Channel 0 is density; the rest are static per-node profile features.
    pub channels: usize,
    pub alpha: f64,
    pub noise: f64,
    pub drift: f64,
    pub delta: u64,
    pub topology: Topology,
    pub initial: InitialDensity,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            nodes: 10,
            history: 12,
            horizon: 3,
            n_sequences: 200,
            seed: 0,
            channels: 2,
            alpha: 0.1,
            noise: 0.002,
            drift: 0.05,
            delta: 1,
            topology: Topology::Geometric { radius: 0.3 },
            initial: InitialDensity::Uniform { low: 0.0, high: 2.0 },
        }
    }
}

/// Default planted-diffusion dataset.
pub fn generate_synthetic(nodes: usize, history: usize, horizon: usize, n_sequences: usize, seed: u64) -> Result<Dataset> {
    generate(&SyntheticConfig {
        nodes,
        history,
        horizon,
        n_sequences,
        seed,
        ..SyntheticConfig::default()
    })
}

fn base_graph(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = cfg.nodes;
    let mut w = vec![0.0; n * n];
    match cfg.topology {
        Topology::Star => {
            for j in 1..n {
                w[j] = 1.0;
                w[j * n] = 1.0;
            }
        }
        Topology::Geometric { radius } => {
            let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
            let dist = |i: usize, j: usize| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt();
            for i in 0..n {
                for j in 0..n {
                    if i != j && dist(i, j) < radius {
                        w[i * n + j] = (1.0 + 4.0 * (1.0 - dist(i, j) / radius)) * rng.random_range(0.5..1.5);
                    }
                }
            }
            // Every node transacts with at least its nearest neighbour.
            for i in 0..n {
                if n > 1 && w[i * n..(i + 1) * n].iter().all(|&v| v == 0.0) {
                    let j = (0..n)
                        .filter(|&j| j != i)
                        .min_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)))
                        .expect("n > 1");
                    w[i * n + j] = 1.0;
                    w[j * n + i] = w[j * n + i].max(1.0);
                }
            }
        }
    }
    w
}

pub fn generate(cfg: &SyntheticConfig) -> Result<Dataset> {
    let (n, t, h, c) = (cfg.nodes, cfg.history, cfg.horizon, cfg.channels);
    if n == 0 || t == 0 || h == 0 || c == 0 {
        return Err(YnetError::InvalidConfig("synthetic sizes must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.alpha) || cfg.noise < 0.0 || cfg.drift < 0.0 {
        return Err(YnetError::InvalidConfig("alpha in [0,1], noise and drift >= 0".into()));
    }
    if let InitialDensity::PointMass { node, .. } = cfg.initial {
        if node >= n {
            return Err(YnetError::InvalidConfig(format!("point mass node {node} out of range")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = base_graph(cfg, &mut rng);
    let profile: Vec<f64> = (0..n * (c - 1)).map(|_| rng.random()).collect();

    let total = t + h;
    let mut samples = Vec::with_capacity(cfg.n_sequences);
    for s in 0..cfg.n_sequences {
        let mut f: Vec<f64> = match cfg.initial {
            InitialDensity::Uniform { low, high } => (0..n).map(|_| rng.random_range(low..=high)).collect(),
            InitialDensity::PointMass { node, mass } => (0..n).map(|i| if i == node { mass } else { 0.0 }).collect(),
        };
        let mut log_mult = vec![0.0f64; n * n];
        let mut densities = Vec::with_capacity(total);
        let mut adjacency = Vec::with_capacity(total);
        for _ in 0..total {
            let a: Vec<f64> = base
                .iter()
                .zip(&log_mult)
                .map(|(&b, &m)| if b > 0.0 { b * m.exp() } else { 0.0 })
                .collect();
            let a = Tensor::new(vec![n, n], a)?;
            let (pf, _) = transition_matrices(&a)?;
            densities.push(f.clone());
            let pd = pf.data();
            f = (0..n)
                .map(|i| {
                    let mixed: f64 = (0..n).map(|j| pd[i * n + j] * f[j]).sum();
                    let mut next = (1.0 - cfg.alpha) * f[i] + cfg.alpha * mixed;
                    if cfg.noise > 0.0 {
                        next += cfg.noise * rng.sample::<f64, _>(StandardNormal);
                    }
                    next.max(0.0)
                })
                .collect();
            adjacency.push(a);
            if cfg.drift > 0.0 {
                for m in &mut log_mult {
                    *m = (*m + cfg.drift * rng.sample::<f64, _>(StandardNormal)).clamp(-1.0, 1.0);
                }
            }
        }

        let signals = Tensor::from_fn(&[t, n, c], |k| {
            let (step, rest) = (k / (n * c), k % (n * c));
            let (node, ch) = (rest / c, rest % c);
            if ch == 0 {
                densities[step][node]
            } else {
                profile[node * (c - 1) + ch - 1]
            }
        });
        let adj_refs: Vec<&Tensor> = adjacency[..t].iter().collect();
        let history = GraphSequence::new(signals, Tensor::stack(&adj_refs)?, cfg.delta, (s * total) as u64 * cfg.delta)?;
        let target = Tensor::from_fn(&[h, n], |k| densities[t + k / n][k % n]);
        samples.push(Sample { history, target });
    }

    Ok(Dataset {
        meta: DatasetMeta {
            nodes: n,
            history: t,
            horizon: h,
            channels: c,
            delta: cfg.delta,
            seed: cfg.seed,
            n_sequences: cfg.n_sequences,
        },
        samples,
    })
}

//! Transaction-density forecasting over a dynamic social graph.
//!
//! The network ([`YIdentityNet`]) reads `T` snapshots of node signals
//! `V ∈ R^{T×N×C}` and transaction-frequency adjacency `A ∈ R^{T×N×N}` and
//! predicts the density at each node for the next `H` snapshots:
//!
//! 1. feature extraction: a 1x1 convolution shrinks `A` along its last axis,
//!    the result is concatenated with `V`, and a second 1x1 convolution maps
//!    to the hidden width `C'`;
//! 2. `L` spatiotemporal blocks, each `v' = DGCN(H(v), H(A))`, `A' = H(A)`,
//!    where `H` is a gated dilated causal convolution and DGCN sums an
//!    EvolveGCN branch with a bidirectional diffusion branch;
//! 3. a 1x1 head on the final time slice producing `H` channels, clamped at 0.
//!
//! Training minimizes mean squared error with plain gradient descent or Adam.

mod baseline;
pub mod data;
mod error;
pub mod graph;
mod init;
mod linear;
mod loss;
pub mod model;
pub mod spatial;
pub mod synthetic;
pub mod temporal;
pub mod train;

pub use baseline::persistence_baseline;
pub use data::{Dataset, DatasetMeta, DensitySeries, GraphSequence, Sample};
pub use error::{Result, YnetError};
pub use graph::{normalize_adjacency, transition_matrices};
pub use init::Initializer;
pub use linear::Linear;
pub use loss::mse_loss;
pub use model::{ModelConfig, YIdentityNet};
pub use synthetic::{generate_synthetic, SyntheticConfig};
pub use temporal::dilated_causal_conv;
pub use train::{evaluate, evaluate_persistence, gradient_check, train, Optimizer, Schedule, TrainConfig, TrainReport};

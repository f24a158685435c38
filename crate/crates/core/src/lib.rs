pub mod address;
pub mod consensus;
pub mod econ;
pub mod forecast;
pub mod gating;
pub mod governance;
pub mod identity;
pub mod ledger;
pub mod rng;
pub mod metrics;
pub mod scenario;
pub mod sim;

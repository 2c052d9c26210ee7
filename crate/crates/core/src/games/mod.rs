//! Security games, bounds, and the statistics used to report them.

pub mod bounds;
pub mod bz;
pub mod hybrid;
pub mod locc;
pub mod reports;
pub mod stats;

pub use bounds::{locc_bound, xi, BoundValue};
pub use hybrid::{run_hybrid, Hybrid};
pub use locc::{estimate_locc, locc_leakage_game};
pub use stats::{estimate_acceptance, Estimate, MeanEstimate};

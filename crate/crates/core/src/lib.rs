//! Neural-network solvers for Kolmogorov and semilinear heat equations.

pub mod catalog;
pub mod error;
pub mod expr;
pub mod kolmogorov;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod oracles;
pub mod problem;
pub mod rng;
pub mod snapshot;
pub mod splitting;
pub mod stats;

pub use error::{Error, Result};
pub use kolmogorov::{TrainedSurrogate, TrainingPlan};
pub use nn::{FlatParams, NetworkArchitecture};
pub use problem::{HeatProblem, ProblemSpec, SemilinearProblem};
pub use rng::{CubeDomain, RandomStream};
pub use stats::Estimate;

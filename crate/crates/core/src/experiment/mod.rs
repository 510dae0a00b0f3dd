//! Reproducible experiment configs, reconstruction sweeps, and the
//! deterministic worker pool.

mod config;
mod sweep;
mod threads;
mod verify;

pub use config::{ExperimentConfig, Method, ModelRef, SweepAxis, Task, ToyPrior};
pub use sweep::{build_toy_prior, run_sweep, run_testset, SweepOutcome, SweepPoint};
pub use threads::{parallel_map, worker_count};
pub use verify::{
    crossover_trend, verify_adjoints, verify_gradients, verify_theorem1, verify_theorem2,
    AdjointOutcome, CrossoverBudget, CrossoverOutcome, GradientOutcome, Theorem1Budget,
    Theorem1Outcome, Theorem2Outcome, ADJOINT_TOLERANCE, GRADIENT_TOLERANCE,
};

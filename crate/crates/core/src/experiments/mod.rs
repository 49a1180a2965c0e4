//! Monte Carlo experiments, deterministic seeding, configuration and the command line.

mod cli;
mod config;
mod mc;
mod seeding;
mod selftest;

pub use cli::{cli_main, run};
pub use config::{ExperimentConfig, KernelSpec, VerifyLevel, CONFIG_KEYS};
pub use mc::{
    batch_means, convergence_study, default_lags, default_levels, field_refinement, fit_slope, mc_holder_modulus,
    mc_moment, median, mollified_cauchy, moment_window, simulate, with_threads, ConvergenceStudy, HolderStudy,
    BATCHES, BUMP_SCALE, FIELD_CELLS,
};
pub use seeding::{splitmix64, sub_seed};
pub use selftest::{selftest, Check};

use crate::error::{Result, SveError};
use crate::path_independence::CandidateV;

/// Named candidate fields: `exp-sin`, `identity`, `constant`.
pub fn candidate(name: &str) -> Result<CandidateV<f64>> {
    match name {
        "exp-sin" => Ok(CandidateV::exp_sin()),
        "identity" => Ok(CandidateV::identity()),
        "constant" => Ok(CandidateV::constant(1.0)),
        other => Err(SveError::parameter(format!(
            "unknown v {other:?}; expected exp-sin, identity or constant"
        ))),
    }
}

//! Time discretization, Brownian drivers and the Volterra solvers.

mod fractional;
mod grid;
mod kernel;
mod solver;

pub use fractional::{c_alpha, c_alpha_quadrature, frac_forward, frac_inverse, FracInverse, Y0_TOLERANCE};
pub use grid::{BrownianDriver, SamplePath, TimeGrid};
pub use kernel::{power_drift_weight, power_rms_weight, KernelWeights, SingularKernel, StochasticWeights};
pub use solver::{
    default_gap_order, euler_solve, lp_gap, mollified_solve, picard_solve, MollifiedOutcome, PicardOutcome,
    VolterraSolver, BLOW_UP_THRESHOLD,
};

//! Simulation and verification toolkit for stochastic Volterra equations with
//! singular kernels and Hölder coefficients.
//!
//! The numerical modules are generic over [`scalar::Real`]; the aliases below fix `f64`.

pub mod coefficients;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod fbm;
pub mod io;
pub mod path_independence;
pub mod quadrature;
pub mod scalar;
pub mod spde;
pub mod special;
pub mod theta_kernel;

pub use error::{Result, SveError};

pub type HeatKernel = theta_kernel::ThetaHeatKernel<f64>;
pub type Space = theta_kernel::SpatialGrid<f64>;
pub type Grid = engine::TimeGrid<f64>;
pub type Driver = engine::BrownianDriver<f64>;
pub type Path = engine::SamplePath<f64>;
pub type Kernel = engine::SingularKernel<f64>;
pub type Solver = engine::VolterraSolver<f64>;
pub type Coefficient = coefficients::HolderCoefficient<f64>;
pub type Coefficients = coefficients::CoefficientPair<f64>;
pub type Fbm = fbm::FbmParams<f64>;
pub type Field = spde::FieldSolution<f64>;
pub type FieldSetup = spde::FieldProblem<f64>;
pub type Candidate = path_independence::CandidateV<f64>;
pub type Functional = path_independence::AdditiveFunctional<f64>;

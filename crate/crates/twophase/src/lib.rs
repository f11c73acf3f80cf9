//! Constructive solvers for two-phase elliptic transmission problems.

pub mod bent_solver;
pub mod compact_interface;
pub mod dump;
pub mod error;
pub mod fd_oracle;
pub mod fields;
pub mod halfspace_solver;
pub mod helmholtz;
pub mod linalg;
pub mod quadrature;
pub mod scalar;
pub mod spectral_core;
pub mod stencil;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Grid = fields::TwoPhaseGrid<f64>;
pub type ScalarField = fields::TwoPhaseScalarField<f64>;
pub type VectorField = fields::TwoPhaseVectorField<f64>;
pub type Densities = spectral_core::DensityPair<f64>;
pub type Resolvent = spectral_core::ResolventParameter<f64>;

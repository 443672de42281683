//! Tagged particle in a weakly coupled free gas.
//!
//! The crate contains the microscopic particle engine (exact torus and
//! streaming reservoir), the limiting Landau coefficients, an Euler–Maruyama
//! integrator for the limiting SDE, the statistical estimators used to compare
//! the two, and numerical checks of second-order Grönwall bounds.

pub mod bounds;
pub mod coefficients;
pub mod dynamics;
pub mod engine;
pub mod ensemble;
pub mod io;
pub mod error;
pub mod linalg;
pub mod potential;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod testfn;

pub use coefficients::{
    CoefficientTable, Landau, QuadratureScheme, RadialCoefficients, TransportCoefficients,
};
pub use engine::{Engine, EngineConfig, Mode, RunMeta, Selector, TrajectoryRecord};
pub use ensemble::{InitialLaw, G0};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use potential::{FourierTable, PotentialSpec};

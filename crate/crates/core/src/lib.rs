//! Sectorwise constant-perturbation solver for the 1D time-dependent
//! Schrödinger equation `i ∂ψ/∂t = −1/(2μ) ∂²ψ/∂x² + V(x,t) ψ`.
//!
//! The time axis is split into sectors. In each sector the wavefunction is
//! expanded in eigenfunctions of the sector-averaged potential (computed by a
//! CP shooting solver), the coupling matrices are integrated with exponentially
//! fitted quadrature, and the coefficients are propagated with a CP/Neumann
//! stepper and carried across sector boundaries through overlap matrices.
//!
//! The core is generic over [`Real`]; the aliases below fix `f64`.

// `!(a < b)` is used on purpose so that NaN inputs are rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod potential;
pub mod propagator;
pub mod quadrature;
pub mod real;
pub mod reference;
pub mod roots;
pub mod sector;
pub mod specfun;
pub mod stationary;

pub use error::{Error, Result};
pub use propagator::TimeOrder;
pub use real::{Cplx, Real};
pub use stationary::CpOrder;

pub type Complex64 = Cplx<f64>;
pub type Mesh = mesh::SpatialMesh<f64>;
pub type Potential = potential::PotentialModel<f64>;
pub type Problem = potential::ProblemSpec<f64>;
pub type Initial = potential::InitialState<f64>;
pub type Basis = stationary::Basis<f64>;
pub type BasisConfig = stationary::BasisConfig<f64>;
pub type Eigenpair = stationary::Eigenpair<f64>;
pub type Shooter = stationary::Shooter<f64>;
pub type Sector = sector::TimeSector<f64>;
pub type State = sector::CoefficientState<f64>;
pub type PropagatorConfig = propagator::PropagatorConfig<f64>;
pub type Matrix = linalg::Mat<f64>;
pub type GridSolution = reference::GridSolution<f64>;

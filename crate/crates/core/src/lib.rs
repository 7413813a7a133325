//! Mixed finite element discretisation of the linearized rotating
//! shallow-water equations with Coriolis, linear drag and tidal forcing, on
//! planar triangulations and icosahedral approximations of the sphere.
//!
//! Velocity (linearized momentum) lives in Raviart–Thomas spaces, elevation in
//! discontinuous Lagrange spaces. Everything is generic over the scalar type;
//! the `*64` aliases below fix it to `f64`.

pub mod assembly;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub use assembly::CoefficientField;
pub use dynamics::{ForcingSpec, ManufacturedSolution, Model, ModelParams, Scheme, State, StepperConfig};
pub use fem::{Family, Field, FunctionSpace};
pub use mesh::Mesh;

pub type Mesh64 = mesh::Mesh<f64>;
pub type FunctionSpace64 = fem::FunctionSpace<f64>;
pub type Field64 = fem::Field<f64>;
pub type CsrMatrix64 = linalg::CsrMatrix<f64>;
pub type ModelParams64 = dynamics::ModelParams<f64>;
pub type Model64 = dynamics::Model<f64>;
pub type State64 = dynamics::State<f64>;
pub type ForcingSpec64 = dynamics::ForcingSpec<f64>;
pub type EnergyReport64 = diagnostics::EnergyReport<f64>;

//! Reference elements, quadrature, Piola maps, function spaces and the
//! projections between continuous fields and discrete spaces.

pub mod geometry;
pub mod interpolate;
pub mod quadrature;
pub mod reference;
pub mod space;
pub mod tabulation;

pub use geometry::{piola_push_forward, PointGeometry};
pub use interpolate::{evaluate_field, interpolate_hdiv, max_normal_jump, project_l2, projection_error, FieldValue};
pub use quadrature::{gauss_legendre, triangle_quadrature, QuadratureRule};
pub use reference::{reference_dg_basis, reference_rt_basis, rt_dofs, Family, ReferenceBasis};
pub use space::{build_space, Field, FunctionSpace};
pub use tabulation::Tabulation;

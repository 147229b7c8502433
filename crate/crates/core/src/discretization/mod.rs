//! Uniform P1 finite elements on intervals and rectangles.

pub mod assembly;
pub mod mesh;
pub mod norms;
pub mod quadrature;
pub mod sparse;

pub use assembly::{
    assemble_operator, lumped_load, solve_dirichlet, ElementForm, FactoredOperator,
    FormCoefficients, PointwiseForm, SparseOperator,
};
pub use mesh::{Extents, GridFunction, Mesh};
pub use norms::{element_gradient, h1_seminorm, inner_l2, l2_norm, max_gradient, norms, Norms};
pub use quadrature::{element_points, interpolate, local_values, LevelCut, QuadPoint};
pub use sparse::{conjugate_gradient, BandLu, CgResult, CsrMatrix};

//! Hyperelastic large-deformation solver for simplicial meshes: a
//! compressible Mooney-Rivlin material, constant-strain finite elements, an
//! iterative-stiffening mesh untangler, determinant-safeguarded Newton, and a
//! Newton continuation baseline with altitude-controlled load steps.

pub mod assembly;
pub mod bench;
pub mod continuation;
pub mod error;
pub mod field;
pub mod linalg;
pub mod material;
pub mod mesh;
pub mod newton;
pub mod quadrature;
pub mod untangle;

pub use error::{Error, Result};
pub use field::DisplacementField;
pub use material::MaterialParams;
pub use mesh::{DirichletSpec, LoadSpec, ReferenceMesh};
pub use newton::{SolveReport, Status};

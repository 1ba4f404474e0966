//! Multiprecision spectral computation of the Dirichlet--Neumann operator
//! for the 2-D periodic Laplace problem, by five methods: a Taylor
//! expansion of the operator in powers of the surface deformation, the
//! analytic continuation of flat-surface eigenfunctions (direct and
//! adjoint forms), a second-kind boundary-integral formulation, and a
//! transformed-field expansion on a flattened domain.

pub mod afm;
pub mod bim;
pub mod cs;
pub mod error;
pub mod linalg;
pub mod mpnum;
pub mod profiles;
pub mod spectral;
pub mod tfe;

pub use error::{DnoError, Result};
pub use mpnum::{MpComplex, MpReal, PrecisionCtx};

//! Mixed finite elements for the Oseen eigenvalue problem in
//! velocity-pseudostress form.
//!
//! The pseudostress `σ = ν∇u − u⊗β − pI` is approximated row-wise in
//! Raviart-Thomas (`RT_k`) or Brezzi-Douglas-Marini (`BDM_{k+1}`) spaces, the
//! velocity in discontinuous `P_k`, and the pressure is eliminated and recovered
//! afterwards. The resulting non-symmetric pencil is solved by shift-invert
//! Arnoldi on top of a sparse LU factorization.
//!
//! Modules, bottom-up:
//!
//! * [`mesh`] -- structured triangulations of the unit square and the L-shape
//! * [`quadrature`] -- symmetric rules on the reference triangle
//! * [`spaces`] -- reference H(div) bases, Piola maps and global DoF maps
//! * [`assembly`] -- the forms `a`, `b`, `c`, velocity mass and trace functional
//! * [`eigensolver`] -- shift-invert Arnoldi, dense QZ oracle, source solves
//! * [`diagnostics`] -- computable surrogates for stability constants
//! * [`postprocess`] -- pressure recovery, rate fitting, spectrum filtering
//! * [`experiment`] -- configuration and drivers behind the `oseen` CLI

pub mod assembly;
pub mod convection;
pub mod diagnostics;
pub mod eigensolver;
pub mod error;
pub mod experiment;
pub mod mesh;
pub mod polynomial;
pub mod postprocess;
pub mod quadrature;
pub mod spaces;
pub mod sparse;

pub use error::{Error, Result};
pub use faer::c64;

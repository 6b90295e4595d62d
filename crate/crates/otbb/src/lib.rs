//! Dynamic optimal transport on two-level TPFA finite-volume meshes:
//! interior-point continuation, inexact Newton, and saddle-point
//! preconditioners evaluated inside flexible GMRES.

pub mod amg;
pub mod bench;
pub mod cli;
pub mod error;
pub mod krylov;
pub mod mesh;
pub mod ops;
pub mod precond;
pub mod solve;
pub mod sparse;
pub mod state;

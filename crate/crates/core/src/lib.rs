//! Finite-volume solvers for the isentropic Euler-Poisson system on
//! staggered (MAC) grids: a semi-implicit asymptotic-preserving scheme that
//! stays stable for any Debye length, an explicit collocated reference
//! scheme, and the quasineutral limit scheme.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ap;
pub mod cases;
pub mod classical;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod fields;
pub mod limit;
pub mod mesh;
pub mod operators;
pub mod run;
pub mod verify;

pub use ap::{ApConfig, ApSolver};
pub use cases::{preset, CaseKind, CasePreset};
pub use classical::{ClassicalConfig, ClassicalSolver, CollocatedState, WaveSpeed};
pub use diagnostics::{ActiveBound, EnergyTriple, StepReport};
pub use elliptic::{LinearSystem, SolverConfig};
pub use error::{Error, Result};
pub use fields::{CellField, FaceField, State};
pub use limit::LimitSolver;
pub use mesh::{Boundary, GridSpec, Mesh};
pub use run::{RunConfig, RunOutcome, SchemeKind};

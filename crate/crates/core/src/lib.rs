//! Indirect shooting for control-affine optimal control problems with a scalar bounded
//! control, one first-order state constraint and endpoint equality constraints.
//!
//! Each arc of a bang/constrained/singular structure gets its own copy of the state on
//! normalized time, the switching times become unknowns, and the resulting
//! overdetermined shooting system is solved by Gauss-Newton. A discretized second-order
//! form certifies the solution.
//!
//! ```
//! use arcshoot::builtin::Regulator;
//! use arcshoot::shooting::Shooting;
//!
//! let reg = Regulator::default();
//! let sh = Shooting::new(&reg, reg.structure().kinds, 100).unwrap();
//! let r = sh.residual(&reg.exact_omega()).unwrap();
//! assert!(r.amax() < 1e-8);
//! ```

pub mod arcs;
pub mod builtin;
pub mod direct;
pub mod dynamics;
pub mod error;
pub mod gauss_newton;
pub mod io;
pub mod numdiff;
pub mod problem;
pub mod second_order;
pub mod shooting;
pub mod validate;

pub use arcs::{ArcKind, ArcStructure};
pub use error::{Error, Result};
pub use problem::{ControlAffineProblem, ControlBounds, Matrix, Vector};

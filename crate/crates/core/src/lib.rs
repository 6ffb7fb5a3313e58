//! Numerical core for elastodynamic ray geometry and density uniqueness.
//!
//! The crate is `no_std` with `alloc`. Everything here is pure computation:
//! expression evaluation, bicharacteristic integration, amplitude transport,
//! grid stencils, tensor ray transforms and the fourth-order elliptic solve.
//! File formats and the command line live in the `elastoray` crate.
//!
//! Enable the `parallel` feature (default) to fan rays and stencil sweeps out
//! over rayon. Results do not depend on the worker count: every reduction runs
//! in a fixed order.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod eikonal;
pub mod expr;
pub mod fd;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod math;
pub mod medium;
mod par;
pub mod raytrace;
pub mod reconstruct;
pub mod region;
pub mod tensor;
pub mod tensorfield;
pub mod xray;

pub use expr::{Expr, ParseError};
pub use field::{OneFormField, ScalarField, SymTensor2Field, SymTensor4Field};
pub use grid::Grid3;
pub use medium::{MediumModel, MediumPoint};
pub use region::{LensRegion, PointClass};
pub use tensor::{Sym3, Vec3};

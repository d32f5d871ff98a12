//! Deterministic simulator for physically constrained mesh-connected computers.
//!
//! A mesh machine here is a 2-d square or 3-d cubical grid of processors, each
//! holding a fixed number of 64-bit words and talking only to its grid
//! neighbors, one word per link per step. Every step has a communication
//! sub-step followed by a compute sub-step, and every run produces an exact
//! [`StepLedger`] besides its data result.
//!
//! Modules:
//!
//! - [`engine`] — mesh state, lockstep program execution, block routing,
//!   budget/bandwidth enforcement.
//! - [`algebra`] — semirings over 64-bit words, dense matrices, and the serial
//!   reference algorithms the mesh results are checked against.
//! - [`systolic`] — cell-level 2-d programs and the rotating torus matrix
//!   multiplier.
//! - [`stacked`] — simulation of any 2-d cell program on a 3-d cube with a
//!   constant-factor slowdown, with metered and memoized-charge back ends.
//! - [`meshmul`] — matrix products on cubes sized between the diameter-bound
//!   and speedup-bound extremes, plus fast ring products on thinning worker
//!   grids and exact lower-bound reports.
//! - [`paths`] — transitive closure, shortest paths and bottleneck paths by
//!   repeated matrix squaring, with path reconstruction.
//! - [`maze`] — mazes, breadth-first wave solving, and the recursive
//!   quadrant/octant solvers running on expanded meshes.

pub mod algebra;
pub mod engine;
pub mod maze;
pub mod meshmul;
pub mod paths;
pub mod stacked;
pub mod systolic;

pub use algebra::{Matrix, Semiring, Word, INF, NEG_INF};
pub use engine::{EngineError, MeshConfig, MeshDim, MeshState, Region, StepLedger};

//! Least-gradient problems on weighted planar graphs.
//!
//! A [`Space`](space::Space) is a weighted graph with planar node positions,
//! node measures and Cauchy–Crofton edge weights, so that graph cuts measure
//! Euclidean boundary length. On top of it the crate provides relaxed and
//! inner perimeters, the graph p-Dirichlet problem with a continuation to
//! p = 1, direct convex solvers for the two least-gradient Dirichlet problems,
//! a least-gradient verifier and Whitney-type coverings.

pub mod calculus;
pub mod config;
pub mod cut;
pub mod dirichlet;
pub mod error;
pub mod index;
pub mod io;
pub mod nodeset;
pub mod perimeter;
pub mod pharmonic;
pub mod space;
pub mod whitney;

pub use error::{Error, Result};
pub use nodeset::NodeSet;
pub use space::{build_grid, GridOptions, MeasureWeights, NodeClass, Region, Shape, Space};

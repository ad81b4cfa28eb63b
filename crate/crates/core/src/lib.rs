//! Cai–Fürer–Immerman structures over Z/2^q and the machinery for blurring
//! their twists with F2 similarity matrices.
//!
//! The modules build on each other in this order:
//!
//! * [`basegraph`]: ordered base graphs, the named catalog, girth and
//!   connectivity.
//! * [`cfi`]: CFI structures, translation isomorphisms and the CFI-query
//!   solver.
//! * [`orbits`]: automorphism groups as circulation modules, orbit partitions
//!   of k-tuples and tuple types.
//! * [`gf2`]: bit-packed block matrices, the matrix predicates and the
//!   blur verdict.
//! * [`blurer`]: blurer families, their transformations and search.
//! * [`similarity`]: the arity-1 and arity-k similarity matrices and active
//!   regions.
//! * [`game`]: the invertible-map game with an automated Duplicator.

pub mod basegraph;
pub mod blurer;
pub mod cfi;
mod error;
pub mod game;
pub mod gf2;
pub mod orbits;
pub mod ring;
pub mod similarity;
pub mod zmod;

pub use basegraph::{BaseGraph, GraphReport};
pub use blurer::Blurer;
pub use cfi::{CfiStructure, PartialMap, TwistFunction};
pub use error::Error;
pub use gf2::{BitMatrix, BlockMatrix};
pub use orbits::{CirculationBasis, OrbitPartition, TypeDescriptor};
pub use ring::{Modulus, RingValue};

pub type Result<T, E = Error> = std::result::Result<T, E>;

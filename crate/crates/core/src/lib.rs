//! Orthogonal gated recurrent units trained with a Neumann-series Cayley update.
//!
//! The crate is `no_std` and only needs `alloc`. It carries everything that is
//! pure computation: dense linear algebra, the scaled Cayley parameterization
//! with its incremental inverse, GRU / NC-GRU cells with hand-written
//! backpropagation through time, optimizers, Jacobian norm bounds and the
//! synthetic benchmark generators. File formats, timing and the command line
//! live in the `ncgru` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bounds;
pub mod cells;
mod error;
pub mod gradcheck;
pub mod linalg;
pub mod network;
pub mod optim;
pub mod orthocore;
pub mod tasks;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};

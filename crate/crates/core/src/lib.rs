//! Numerical core of a segmentation-guided radiance field for street scenes.
//!
//! Everything here is pure computation over in-memory buffers: the hash-grid
//! field and its sky and appearance heads, discrete volume rendering,
//! least-squares ground-plane fitting, the masked training losses, Adam with
//! cosine annealing, a procedural street-scene generator and a central
//! finite-difference gradient harness. File formats, the parallel training
//! loop and the command line live in the `streetfield` crate.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled.
//! All math is generic over [`Real`] so the same code runs in 32-bit for
//! training and 64-bit for gradient verification.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod batch;
pub mod camera;
pub mod config;
pub mod encoding;
mod error;
pub mod field;
pub mod gradcheck;
pub mod hash_grid;
pub mod image;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod mlp;
pub mod objective;
pub mod optim;
pub mod plane;
mod real;
pub mod render;
pub mod scene;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
pub use real::Real;

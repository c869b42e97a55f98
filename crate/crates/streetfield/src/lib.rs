//! Dataset IO, training, evaluation and the command-line interface built
//! on `streetfield-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod sfm;
pub mod train;

pub use error::{AppError, AppResult};

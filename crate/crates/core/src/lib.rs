pub mod apps;
pub mod cli;
pub mod error;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod model;
pub mod pipeline;
pub mod posterior;
pub mod solvers;

pub use error::{Error, Result};

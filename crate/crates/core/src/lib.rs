pub mod bundle;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod forest;
pub mod matrix;
pub mod persist;
pub mod pipeline;
pub mod svr;
pub mod tree;

pub use error::{Error, Result};
pub use matrix::Matrix;

pub mod ed;
pub mod error;
pub mod linalg;
pub mod model;
mod nullable;
pub mod observables;
pub mod mps;
pub mod ops;
pub mod scf;
pub mod state;
pub mod sweep;
pub mod verify;
pub mod tensor;

pub use error::{Error, Result};

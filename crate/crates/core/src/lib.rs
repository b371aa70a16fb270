pub mod assembly;
pub mod continuous;
pub mod discrete;
pub mod equations;
pub mod error;
mod f2;
pub mod fixtures;
pub mod graph;
pub mod machine;
pub mod optim;
pub mod pauli;
pub mod solver;
pub mod symplectic;
pub mod verifier;

pub use error::{Error, Result};

pub mod error;
pub mod align;
pub mod embed;
pub mod eval;
pub mod exec;
pub mod graph;
pub mod l2ge;
pub mod lanczos;
pub mod linalg;
pub mod partition;
pub mod patch;

pub use error::{Error, Result};
pub use exec::Exec;

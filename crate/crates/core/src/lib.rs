pub mod backbone;
pub mod engine;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod proto;
pub mod seed;
pub mod server;

pub use error::{FedError, Result};

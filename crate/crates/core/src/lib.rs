//! Level-set percolation of the zero-average Gaussian free field on random
//! regular graphs, compared with the free field on the regular tree.

pub mod coupling;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod exploration;
pub mod graph;
pub mod linalg;
pub mod percolation;
pub mod rng;
pub mod stats;
pub mod tree;
pub mod zagff;

pub use error::{Error, Result};

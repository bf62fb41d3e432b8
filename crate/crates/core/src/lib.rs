pub mod candidates;
pub mod cli;
pub mod config;
pub mod degree;
pub mod error;
pub mod estimator;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod oracle;
pub mod poly;
pub mod roots;
pub mod spectral;

pub use config::Tolerances;
pub use error::{Error, Result};
pub use likelihood::Mode;
pub use model::{ModelSpec, VariancePoint};

//! Dense matrices, SVD-based pseudoinverse and two-pass class statistics.

mod matrix;
mod stats;
mod svd;

pub use matrix::Matrix;
pub use stats::{class_statistics, ClassStatistics, Pass, StreamingClassAccumulator};
pub use svd::{default_rel_tol, pseudoinverse, pseudoinverse_svd, pseudoinverse_symmetric, svd, SvdResult};

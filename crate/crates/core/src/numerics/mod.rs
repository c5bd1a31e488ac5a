//! Dense linear algebra and seeded randomness.

mod cholesky;
mod matrix;
mod prng;
mod vector;

pub use cholesky::{cholesky_upper, CholeskyFactor, JITTER_LADDER, SYMMETRY_TOL};
pub use matrix::{matmul, matvec, Matrix};
pub use prng::{prng_standard_normal, prng_uniform, Prng, PRNG_ALGORITHM};
pub use vector::{cosine_similarity, dot, length_normalize, norm, Vector, EPS_NORM};

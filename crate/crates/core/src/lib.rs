//! Acoustic unit discovery with a truncated Dirichlet-process phone loop of
//! Bayesian GMM-HMMs trained by variational Bayes, self-trained LDA feature
//! refinement, and the downstream evaluations used to score discovered units.

pub mod corpus;
pub mod decode;
pub mod error;
pub mod eval;
pub mod math;
pub mod inference;
pub mod lda;
pub mod model;
pub mod persist;

pub use error::{Error, ErrorKind, Result};

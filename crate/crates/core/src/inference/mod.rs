//! Variational Bayesian training of the phone loop: log-space
//! forward-backward over the unified HMM, sufficient-statistic
//! accumulation, conjugate updates and the evidence lower bound.

mod fb;
mod stats;
mod train;
mod update;

pub use fb::{forward_backward, FbResult, TransitionStats};
pub(crate) use fb::{check_inputs, state_emissions};
pub use stats::{accumulate_stats, accumulate_with, merge_stats, SufficientStats};
pub(crate) use train::id_order;
pub use train::{e_step, train_vb, train_vb_with, TrainReport};
pub use update::{elbo, m_step};

//! Individual and joint log-likelihoods by the scaled forward recursion,
//! plus a path-enumeration oracle.

mod brute;
mod forward;
mod history;

pub use brute::{brute_force_loglik, brute_force_loglik_odometer, MAX_PATHS};
pub use forward::{
    forward_loglik_individual, joint_loglik, pattern_loglik, ForwardOptions, JointLogLik,
    ProductOrder,
};
pub use history::{Dataset, EncounterHistory, Patterns};

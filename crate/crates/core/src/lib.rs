pub mod antidote;
pub mod baselines;
pub mod data;
pub mod error;
pub mod factorization;
pub mod harness;
pub mod influence;
pub mod linalg;
pub mod metrics;

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod environment;
pub mod filter;
pub mod numerics;
pub mod regret;
pub mod rng;
pub mod scenario;
pub mod seeker;
pub mod sensing;

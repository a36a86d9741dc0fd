//! Test support: fixture builders and brute-force recomputations used as
//! oracles for the analytics module.

pub mod corpus;
pub mod equivalence;
pub mod oracle;
pub mod tables;

//! Slack-aware SWAP insertion for running quantum circuits on devices with
//! limited qubit connectivity.

pub mod cli;
pub mod ir;
pub mod mapping;
pub mod qasm;
pub mod scheduler;
pub mod search;
pub mod topology;
pub mod verify;

#[cfg(test)]
mod testutil;

//! Synchronization rate optimization for distributed, eventually-consistent
//! SDN control planes.
//!
//! - [`syncmodel`]: policies, budgets and the analytic consistency level.
//! - [`mck`]: exact and approximate consistency-optimal policies through a
//!   multiple-choice knapsack reduction.
//! - [`learn`]: stochastic greedy learning against an observed performance
//!   signal, plus baselines and approximation bounds.
//! - [`netsim`]: a slotted simulator of routing and load-balancing
//!   applications that serves as the performance oracle.
//! - [`harness`]: experiment configs, sweeps and result tables behind the CLI.

pub mod error;
pub mod harness;
pub mod learn;
pub mod mck;
pub mod netsim;
pub mod syncmodel;

pub use error::{Error, Result};
pub use syncmodel::{ConsistencyReport, SyncPolicy, SystemModel};

//! Clinic and pharmacy e-prescription services exchanging prescriptions over
//! a simulated GSM link, with broker failover and feed-based replication.

pub mod broker;
pub mod domain;
pub mod link;
pub mod security;
pub mod sync;
pub mod error;
pub mod pharmacy;
pub mod transport;
pub mod clinic;
pub mod deployment;
pub mod bench;

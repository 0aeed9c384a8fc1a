//! Single-server scheduling of status updates and user queries.
//!
//! The crate simulates and analyses a server shared by an update queue and
//! a query queue, measuring query response time against update freshness
//! (peak and time-average age of information):
//!
//! * [`model`] holds rates, policies and metric records;
//! * [`policy`] encodes FCFS, Query-k, Update-k and Joint-(M,N) as one
//!   transition function;
//! * [`sim`] runs replicated discrete-event simulations;
//! * [`analytic`] evaluates closed forms and solves truncated Markov chains.

pub mod analytic;
pub mod model;
pub mod policy;
pub mod sim;

pub use model::{JobClass, JobRecord, Metric, ModelError, ModelParams, PolicySpec, ReplicationMetrics, Threshold};

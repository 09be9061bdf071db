//! Age of information in cache-updating networks whose links refresh
//! according to independent renewal processes with general inter-update laws.
//!
//! * [`distributions`] inter-update laws, their moments and per-link age share
//! * [`topology`] network description and validation
//! * [`engine`] event-driven simulation of the cache freshness rule
//! * [`oracle`] backward-recurrence evaluation of the same ages from recorded epochs
//! * [`analytic`] closed-form long-run expected age on trees
//! * [`montecarlo`] ensemble and time-average estimators

pub mod analytic;
pub mod distributions;
pub mod engine;
pub mod montecarlo;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod topology;

pub use distributions::{DistributionError, InterUpdateDistribution};
pub use engine::{LinkTrajectory, SimSnapshot};
pub use montecarlo::EnsembleEstimate;
pub use rng::RngStream;
pub use topology::{Link, LinkId, Network, NodeId, ValidationError};

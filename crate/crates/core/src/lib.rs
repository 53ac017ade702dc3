//! Hybrid stream/history query engine.
//!
//! Queries such as
//!
//! ```text
//! EVERY 20 seconds compute the mean value of download_speed of the last 10 minutes
//! FROM influxdb database neubot series speedtest and streaming rabbitmq queue neubotspeed
//! ```
//!
//! are parsed ([`query`]), compiled into pipelines of fetch, window-aggregate
//! and sink stages ([`planner`]) connected by an in-process broker
//! ([`broker`]), and answered by merging partial aggregates computed over a
//! time-series store ([`store`]) with partial aggregates over the live
//! stream ([`operator`]). [`sim`] provides a farm of simulated devices and a
//! log replayer for driving pipelines.

pub mod error;
pub mod model;
pub mod query;
pub mod sim;
pub mod broker;
pub mod clock;
pub mod operator;
pub mod planner;
pub mod store;
pub mod cli;

pub use error::ModelError;
pub use model::{AggregateRow, Interval, TimeUnit, Timestamp, Tuple, Value};

pub mod cache;
pub mod client;
pub mod cluster;
pub mod cql;
pub mod device;
pub mod gateway;
pub mod harness;
pub mod numeric;
pub mod privacy;
pub mod runtime;
pub mod value;

/// Milliseconds, either since the Unix epoch or on a simulated clock.
pub type Millis = u64;

pub use cql::{parse_query, render_query, CqlError, Query};
pub use value::{DataType, Value};

//! Window-aggregate operators: mergeable partial aggregates, window
//! extents, the live buffer, history/live fusion and the operator loop.

mod buffer;
mod hybrid;
mod partial;
mod runner;
mod window;

pub use buffer::{Admission, BufferManager, LiveBuffer};
pub use hybrid::{hybrid_evaluate, SinkRecord, WindowResult};
pub use partial::PartialAggregate;
pub use runner::{run_operator, OperatorContext, OperatorStats, OperatorStatsSnapshot};
pub use window::{window_extent, OperatorConfig, Watermark};

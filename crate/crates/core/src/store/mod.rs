//! Event-log ingestion, increment extraction and sufficient statistics.

mod event;
mod log;
mod panel;
mod periods;
mod stats;

pub use event::{read_events, write_events, Action, EdgeEvent, EVENT_HEADER, KNOWN_DEP_TYPES};
pub use log::{EdgeChange, EvolutionLog, VertexId};
pub use panel::{Increment, IncrementPanel, StepRecord};
pub use periods::{partition_periods, Period, PeriodScheme};
pub use stats::{read_timeline, write_timeline, Category, StepStats, SufficientStats};

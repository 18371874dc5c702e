//! Deterministic closed-loop simulator around the planning and control stack,
//! with scenario loading, run metrics and artifact export.

pub mod error;
pub mod export;
pub mod metrics;
pub mod plant;
pub mod scenario;
pub mod sim;

pub use error::{Issue, SimError, ValidationError};
pub use export::export;
pub use metrics::{compute_metrics, count_interventions, ops_metrics, read_tasks, Metrics, OpsSummary, TaskRecord};
pub use scenario::{load_scenario, parse_scenario, Override, Scenario, World};
pub use sim::{run_scenario, simulate, EsCause, Outcome, SimLog};

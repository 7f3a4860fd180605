//! Leakage-free evaluation: overlap-averaged epoch predictions, metrics,
//! seed aggregation, leakage audit and result tables.

pub mod aggregate;
pub mod audit;
pub mod metrics;
pub mod overlap;
pub mod predict;
pub mod report;

pub use aggregate::{aggregate_seeds, MetricSummary, SeedAggregate};
pub use audit::{leakage_audit, AuditCheck, AuditReport, WindowRecord};
pub use metrics::{compute_metrics, metrics_from_pairs, Confusion, MetricsReport};
pub use overlap::{argmax, overlap_average, EpochPrediction, WindowLogits};
pub use predict::{predict, stack_windows, window_outputs, WindowClassifier};
pub use report::{AblationRow, AblationTable, Metric, TransferCell, TransferTable};

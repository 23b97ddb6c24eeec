//! Dataset generation, SOSD file I/O and the workload harness used to
//! benchmark `reuse-index` against a binary-search baseline.

pub mod baseline;
pub mod datagen;
pub mod sosd;
pub mod workload;

pub use baseline::SortedArray;
pub use datagen::DataKind;
pub use workload::{build_index, run_on, run_workload, BuiltIndex, DataSource, IndexKind, MetricsReport, WorkloadSpec};

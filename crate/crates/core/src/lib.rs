//! Doubly distributed stochastic optimization.
//!
//! The training matrix is partitioned over observations (`P` row groups) and
//! features (`Q` column blocks, each split into `P` sub-blocks). Every outer
//! iteration estimates the full gradient from sampled features, gradient
//! coordinates and observations, then all `Q·P` workers run variance-reduced
//! steps on disjoint sub-blocks of the weight vector in parallel. Setting all
//! sampling fractions to one gives exact anchor gradients (RADiSA).

pub mod engine;
pub mod error;
pub mod estimator;
pub mod grid;
pub mod harness;
pub mod io;
pub mod losses;
pub mod sampling;
pub mod synthetic;
pub mod theory;

pub use engine::{make_radisa_config, run, Engine, EngineState, RunConfig, TraceRecord};
pub use error::{Error, Result};
pub use grid::{DataGrid, FeatureSet, LabelKind, ParameterVector, PartitionScheme};
pub use losses::{LossKind, LossModel};
pub use sampling::{PiPolicy, RngPolicy, SampleSet};
pub use theory::{Schedule, ScheduleKind, TheoryConstants};

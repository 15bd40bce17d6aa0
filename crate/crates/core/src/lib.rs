//! Information-theoretic efficiency measures for social tagging systems.
//!
//! The crate covers the whole pipeline: streaming ingestion of Stack
//! Exchange post dumps into a canonical corpus, monthly longitudinal
//! metrics (entropy, conditional entropy, mutual information, Gini and
//! specificity statistics), Heaps'-law fits, the two-urn
//! reinforcement/novelty/diversity growth model with parameter sweeps, and
//! maximum-likelihood estimation of the model parameters from traces.
//!
//! All entropies are in bits.

pub mod analyzer;
pub mod error;
pub mod estimation;
pub mod ingest;
pub mod metrics;
pub mod report;
pub mod simulator;

pub use analyzer::{
    composite_split_trajectory, heaps_fit, is_composite, monthly_trajectory, stratified_trajectory,
    CompositeSplit, HeapsFit, Metric, MetricsSnapshot, TrajectoryBuilder,
};
pub use error::{Error, Result};
pub use estimation::{AssignmentTrace, DiversityEstimate, DiversityFlag, FitReport};
pub use ingest::{CorpusManifest, Month, PostsParser, QuestionRecord, SkipReport};
pub use metrics::{DistinctCorpus, EfficiencyMetrics, FrequencyTable, JointAssignmentTable};
pub use simulator::{
    simulate, sweep, tail_slope, ModelParams, Selection, SimulationRun, SweepConfig, SweepResult,
    UrnState,
};

//! Hardware-aware hierarchical search over a grid of small VGG-style CNN
//! configurations: accuracy first, then accuracy per latency on each device,
//! then accuracy per power-delay product.

pub mod architecture;
pub mod devices;
pub mod error;
pub mod evaluators;
pub mod pipeline;
pub mod protocol;
pub mod published;
pub mod reporting;
pub mod search_space;
pub mod tpe;

pub use architecture::{build_architecture, build_architecture_in, ArchitectureDescriptor, LayerDescriptor, LayerKind};
pub use devices::{DeviceProfile, LatencyModel, MeasurementProtocol, MeasurementStats, PowerModel};
pub use error::{Error, Result};
pub use evaluators::{AccuracyEvaluator, AccuracyResult, Precision, Surrogate};
pub use pipeline::{
    fitness, run_pipeline, Fitness, FitnessKind, Measurer, PipelineOutput, PipelineSettings, RankedSet, StageContext,
    TrialLog, TrialRecord,
};
pub use published::{shipped_profiles, PublishedTables};
pub use reporting::{pareto_front, pareto_indices, ratio_sheet, summary_table, DeviceSummaryRow, RatioClaim, Report};
pub use search_space::{Configuration, Dropout, Param, ParamSpec, SearchSpace};
pub use tpe::{ObservationHistory, TpeSettings};

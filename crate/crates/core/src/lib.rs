//! Automatic driving-action labeling from trajectories and a lane graph,
//! ordered action-sequence inference, evaluation, and raster export.
//!
//! The usual flow is [`trajectory`] input, [`smoothing`], lane [`matching`]
//! and [`labeling`]; [`pipeline`] chains these per scenario. Predictors emit
//! [`ActionDistribution`]s which [`inference`] turns into ranked ordered
//! sequences and [`evaluation`] scores.

pub mod config;
pub mod evaluation;
pub mod geometry;
pub mod inference;
pub mod knn;
pub mod labeling;
pub mod map;
pub mod matching;
pub mod pipeline;
pub mod raster;
pub mod smoothing;
pub mod synth;
pub mod trajectory;

pub use config::PipelineConfig;
pub use evaluation::{ApReport, TopNReport};
pub use geometry::Point2;
pub use inference::{ActionDistribution, RankedSequence, RankedSequences};
pub use knn::{TrainingIndex, TrajectoryFeature};
pub use labeling::{ActionLabel, ActionSequence, LabelingOutcome, OrderedActionSequence};
pub use map::{GraphMap, LaneSegment, SegmentId, TransitionKind, Turn};
pub use matching::{EmissionModel, LanePath, TransitionWeights};
pub use raster::{RasterStack, RenderConfig};
pub use smoothing::{SmoothedTrack, SmootherConfig};
pub use synth::{SynthKind, SynthSpec};
pub use trajectory::{Scenario, Track, TrackSample};

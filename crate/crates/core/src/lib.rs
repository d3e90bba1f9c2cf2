#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::len_without_is_empty)]

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod metric;
pub mod mlp;
pub mod region;
pub mod scan;
pub mod socp;

pub use dataset::{FeatureVariant, GridRes, MetricSample};
pub use error::{Error, Result};
pub use evaluation::{ExactScorer, FgeConfig, ScrewSampler, TrialConfig, TrialReport};
pub use geometry::{AntipodalPair, OrientedBox, PointCloud, RigidTransform, Screw, Vec3};
pub use io::RunConfig;
pub use metric::{ContactSpec, FrictionModel, MetricEstimate, Physics, TaskInstance};
pub use mlp::{Architecture, MlpModel, TrainConfig};
pub use region::{ClosingPreference, GraspPose, GraspRegion, GripperGeometry, MlpScorer, PipelineConfig};
pub use scan::{TriMesh, VirtualCamera};

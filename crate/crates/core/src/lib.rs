//! Sparse-to-dense depth completion: scale alignment of relative depth,
//! dual-space affinity propagation and residual-slice correction.

pub mod affinity;
pub mod align;
pub mod camera;
pub mod correction;
pub mod error;
pub mod eval;
mod filter;
pub mod io;
pub mod pipeline;
pub mod knn;
pub mod prefill;
pub mod propagation;
pub mod raster;
pub mod scorer;

pub use affinity::{fallback_features, FeatureMap};
pub use align::{apply_scale_shift, fit_scale_shift, fit_scale_shift_trimmed, AlignedDepth, DepthClamp, ScaleShift};
pub use camera::{backproject, CameraIntrinsics, PointCloud};
pub use correction::{apply_correction, CorrectionParams, ResidualScorer, ScorerInput, ScorerOutputs};
pub use error::{Error, Result};
pub use knn::{NeighborSet, SpatialIndex};
pub use prefill::{prefill_gaussian, PrefillParams};
pub use propagation::{run_dual_propagation, PropagationConfig, PropagationMode};
pub use raster::{Raster, SparseDepth};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineInputs, PipelineOutput};

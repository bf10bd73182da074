//! Metrics, sparse-pattern generators and synthetic scenes.

mod metrics;
mod sampling;
mod synth;

pub use metrics::{compute_metrics, write_error_map, DeltaScore, MetricsReport, DEFAULT_THRESHOLDS};
pub use sampling::{
    apply_pseudo_holes, harris_corners, harris_response, pseudo_hole_ellipses, sample_harris, sample_random,
    Ellipse, HARRIS_K, RANDOM_RATE_SPARSE, RANDOM_RATE_STANDARD,
};
pub use synth::{ray_sphere, synth_scene, Plane, SceneLayout, SceneSpec, Sphere, SyntheticScene};

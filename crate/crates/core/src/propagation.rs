//! Dual-space propagation of sparse depth.
//!
//! 3D pass: every unmeasured pixel blends its base depth with the
//! affinity-weighted depths of its `k` nearest measured points in the
//! back-projected cloud. 2D pass: Jacobi iterations of an 8-neighbor
//! affinity stencil, with measured neighbors contributing their sparse depth.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::affinity::{affinity_2d_field, affinity_3d, FeatureMap, NEIGHBOR_OFFSETS};
use crate::camera::{backproject, CameraIntrinsics, PointCloud};
use crate::error::{Error, Result};
use crate::knn::SpatialIndex;
use crate::prefill::{prefill_gaussian, PrefillParams};
use crate::raster::{Raster, SparseDepth};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PropagationMode {
    #[default]
    Serial3dThen2d,
    Serial2dThen3d,
    ParallelMean,
}

impl PropagationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PropagationMode::Serial3dThen2d => "serial_3d_then_2d",
            PropagationMode::Serial2dThen3d => "serial_2d_then_3d",
            PropagationMode::ParallelMean => "parallel_mean",
        }
    }
}

impl fmt::Display for PropagationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PropagationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "serial_3d_then_2d" => Ok(PropagationMode::Serial3dThen2d),
            "serial_2d_then_3d" => Ok(PropagationMode::Serial2dThen3d),
            "parallel_mean" => Ok(PropagationMode::ParallelMean),
            other => Err(Error::Config(format!("unknown propagation mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationConfig {
    /// Nearest measured neighbors per pixel in the 3D pass.
    pub k: usize,
    /// Weight of the neighbor aggregate against the base depth.
    pub eta: f64,
    pub iterations_2d: usize,
    pub mode: PropagationMode,
    /// Reset measured pixels to their sparse depth after each 2D iteration.
    pub anchor_2d: bool,
    pub prefill: PrefillParams,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            k: 1,
            eta: 0.9,
            iterations_2d: 24,
            mode: PropagationMode::Serial3dThen2d,
            anchor_2d: true,
            prefill: PrefillParams::default(),
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::Config(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        if self.iterations_2d == 0 {
            return Err(Error::Config("iterations_2d must be >= 1".into()));
        }
        self.prefill.validate()
    }
}

fn ensure_dense(r: &Raster, what: &str) -> Result<()> {
    r.ensure_single_channel(what)?;
    match r.data().iter().position(|&v| v <= 0.0) {
        Some(pos) => Err(Error::Value(format!(
            "{what} must be dense and positive, got {} at pixel {pos}",
            r.data()[pos]
        ))),
        None => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn propagate_3d(
    base: &Raster,
    sparse: &SparseDepth,
    index: &SpatialIndex,
    cloud: &PointCloud,
    features: &FeatureMap,
    k: usize,
    eta: f64,
) -> Result<Raster> {
    ensure_dense(base, "3D base depth")?;
    base.ensure_dims(sparse.raster(), "base vs sparse")?;
    features.ensure_dims(base, "features vs base")?;
    if cloud.height() != base.height() || cloud.width() != base.width() {
        return Err(Error::Dimension("point cloud vs base".into()));
    }
    if k == 0 {
        return Err(Error::Value("k must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Value(format!("eta must lie in [0, 1], got {eta}")));
    }
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }

    let data = (0..base.pixel_count())
        .into_par_iter()
        .map(|x| {
            if sparse.is_measured(x) {
                return Ok(sparse.value(x));
            }
            let nbrs = index.knn(cloud.point(x), k)?;
            let weights = affinity_3d(features, x, &nbrs);
            let aggregate: f64 = nbrs
                .indices
                .iter()
                .zip(&weights.weights)
                .map(|(&j, a)| a * sparse.value(j))
                .sum();
            Ok((1.0 - eta) * base.data()[x] + eta * aggregate)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Raster::from_parts(base.height(), base.width(), 1, data))
}

pub fn propagate_2d(
    input: &Raster,
    sparse: &SparseDepth,
    features: &FeatureMap,
    iterations: usize,
    anchor: bool,
) -> Result<Raster> {
    input.ensure_single_channel("2D input depth")?;
    input.ensure_dims(sparse.raster(), "input vs sparse")?;
    features.ensure_dims(input, "features vs input")?;

    let (h, w) = (input.height() as isize, input.width() as isize);
    let field = affinity_2d_field(features);
    let mut current = input.data().to_vec();
    for _ in 0..iterations {
        let next: Vec<f64> = (0..current.len())
            .into_par_iter()
            .map(|x| {
                if anchor && sparse.is_measured(x) {
                    return sparse.value(x);
                }
                let a = &field[x];
                let (row, col) = (x as isize / w, x as isize % w);
                let mut acc = a.center_weight * current[x];
                for (slot, &(dr, dc)) in NEIGHBOR_OFFSETS.iter().enumerate() {
                    let (r, c) = (row + dr, col + dc);
                    if r < 0 || c < 0 || r >= h || c >= w {
                        continue;
                    }
                    let j = (r * w + c) as usize;
                    let v = if sparse.is_measured(j) {
                        sparse.value(j)
                    } else {
                        current[j]
                    };
                    acc += a.neighbor_weights[slot] * v;
                }
                acc
            })
            .collect();
        current = next;
    }
    Raster::new(input.height(), input.width(), 1, current)
}

/// Intermediate products of [`run_dual_propagation`].
#[derive(Clone, Debug)]
pub struct DualPropagation {
    pub prefill: Raster,
    pub initial: Raster,
}

/// Pre-fill, back-project, index and run both passes in the configured order.
pub fn run_dual_propagation(
    metric: &Raster,
    sparse: &SparseDepth,
    intrinsics: &CameraIntrinsics,
    features: &FeatureMap,
    cfg: &PropagationConfig,
) -> Result<Raster> {
    Ok(run_dual_propagation_detailed(metric, sparse, intrinsics, features, cfg)?.initial)
}

pub fn run_dual_propagation_detailed(
    metric: &Raster,
    sparse: &SparseDepth,
    intrinsics: &CameraIntrinsics,
    features: &FeatureMap,
    cfg: &PropagationConfig,
) -> Result<DualPropagation> {
    cfg.validate()?;
    metric.ensure_single_channel("metric depth")?;
    metric.ensure_dims(sparse.raster(), "metric vs sparse")?;
    features.ensure_dims(metric, "features vs metric")?;

    let base = prefill_gaussian(sparse, &cfg.prefill)?;
    let cloud = backproject(metric, intrinsics)?.with_measured(sparse)?;
    let index = SpatialIndex::build(&cloud)?;

    let pass_3d = |from: &Raster| propagate_3d(from, sparse, &index, &cloud, features, cfg.k, cfg.eta);
    let pass_2d = |from: &Raster| propagate_2d(from, sparse, features, cfg.iterations_2d, cfg.anchor_2d);

    let initial = match cfg.mode {
        PropagationMode::Serial3dThen2d => pass_2d(&pass_3d(&base)?)?,
        PropagationMode::Serial2dThen3d => {
            let d2 = pass_2d(&base)?;
            ensure_dense(&d2, "2D propagation output")?;
            pass_3d(&d2)?
        }
        PropagationMode::ParallelMean => {
            let d3 = pass_3d(&base)?;
            let d2 = pass_2d(&base)?;
            let data = d3
                .data()
                .iter()
                .zip(d2.data())
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            Raster::new(d3.height(), d3.width(), 1, data)?
        }
    };
    Ok(DualPropagation {
        prefill: base,
        initial,
    })
}

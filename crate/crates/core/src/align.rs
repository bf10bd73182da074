//! Affine alignment of relative (inverse-depth) predictions to metric sparse depth.
//!
//! The relative map `r` is fit so that `gamma * r + rho ≈ 1 / s` over the
//! measured pixels, then converted with `depth = 1 / (gamma * r + rho)`.

use crate::error::{Error, Result};
use crate::raster::{Raster, SparseDepth};

/// Variance of the relative values below which the normal matrix is singular.
pub const MIN_RELATIVE_VARIANCE: f64 = 1e-12;

/// Fraction of worst residuals dropped by the trimmed refit.
pub const TRIM_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleShift {
    pub gamma: f64,
    pub rho: f64,
    /// RMS of `gamma * r + rho - 1 / s` over the samples used by the fit.
    pub residual_rms: f64,
    pub inlier_count: usize,
}

impl ScaleShift {
    /// Sum of squared inverse-depth residuals over `samples`.
    pub fn energy(gamma: f64, rho: f64, samples: &[(f64, f64)]) -> f64 {
        samples
            .iter()
            .map(|&(r, inv)| {
                let e = gamma * r + rho - inv;
                e * e
            })
            .sum()
    }
}

/// Metric depth bounds applied after conversion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthClamp {
    pub min: f64,
    pub max: f64,
}

impl DepthClamp {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min > 0.0 && min < max && max.is_finite()) {
            return Err(Error::Config(format!(
                "clamp must satisfy 0 < min < max, got [{min}, {max}]"
            )));
        }
        Ok(Self { min, max })
    }
}

impl Default for DepthClamp {
    fn default() -> Self {
        Self {
            min: 0.1,
            max: 300.0,
        }
    }
}

fn collect_samples(relative: &Raster, sparse: &SparseDepth) -> Result<Vec<(f64, f64)>> {
    relative.ensure_single_channel("relative depth")?;
    relative.ensure_dims(sparse.raster(), "relative vs sparse")?;
    Ok(sparse
        .measured_indices()
        .into_iter()
        .map(|i| (relative.data()[i], 1.0 / sparse.value(i)))
        .collect())
}

fn solve(samples: &[(f64, f64)]) -> Result<ScaleShift> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::DegenerateSystem(format!(
            "need at least 2 measurements, got {n}"
        )));
    }
    let nf = n as f64;
    let (sum_r, sum_inv) = samples
        .iter()
        .fold((0.0, 0.0), |(a, b), &(r, inv)| (a + r, b + inv));
    let mean_r = sum_r / nf;
    let mean_inv = sum_inv / nf;

    // Centered normal equations.
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(r, inv) in samples {
        let dx = r - mean_r;
        sxx += dx * dx;
        sxy += dx * (inv - mean_inv);
    }
    if sxx / nf < MIN_RELATIVE_VARIANCE {
        return Err(Error::DegenerateSystem(format!(
            "relative depth variance {:.3e} over measurements is below {MIN_RELATIVE_VARIANCE:e}",
            sxx / nf
        )));
    }
    let gamma = sxy / sxx;
    let rho = mean_inv - gamma * mean_r;
    let energy = ScaleShift::energy(gamma, rho, samples);
    Ok(ScaleShift {
        gamma,
        rho,
        residual_rms: (energy / nf).sqrt(),
        inlier_count: n,
    })
}

/// Least-squares scale and shift in inverse-depth space.
pub fn fit_scale_shift(relative: &Raster, sparse: &SparseDepth) -> Result<ScaleShift> {
    solve(&collect_samples(relative, sparse)?)
}

/// Fits once, drops the worst [`TRIM_FRACTION`] of residuals, and refits.
pub fn fit_scale_shift_trimmed(relative: &Raster, sparse: &SparseDepth) -> Result<ScaleShift> {
    let samples = collect_samples(relative, sparse)?;
    let first = solve(&samples)?;
    let drop = (samples.len() as f64 * TRIM_FRACTION).floor() as usize;
    let keep = samples.len() - drop;
    if drop == 0 || keep < 2 {
        return Ok(first);
    }
    let mut ranked: Vec<(f64, (f64, f64))> = samples
        .iter()
        .map(|&(r, inv)| ((first.gamma * r + first.rho - inv).abs(), (r, inv)))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    let kept: Vec<(f64, f64)> = ranked.into_iter().take(keep).map(|(_, s)| s).collect();
    solve(&kept)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignedDepth {
    pub depth: Raster,
    /// Pixels where `gamma * r + rho <= 0`; these are set to the upper clamp.
    pub nonpositive_count: usize,
    /// Pixels whose converted depth fell outside the clamp range.
    pub clamped_count: usize,
}

pub fn apply_scale_shift(relative: &Raster, ss: &ScaleShift, clamp: DepthClamp) -> AlignedDepth {
    let mut nonpositive_count = 0;
    let mut clamped_count = 0;
    let data = relative
        .data()
        .iter()
        .map(|&r| {
            let denom = ss.gamma * r + ss.rho;
            if denom <= 0.0 {
                nonpositive_count += 1;
                return clamp.max;
            }
            let d = 1.0 / denom;
            if d < clamp.min || d > clamp.max || !d.is_finite() {
                clamped_count += 1;
            }
            d.clamp(clamp.min, clamp.max)
        })
        .collect();
    AlignedDepth {
        depth: Raster::from_parts(relative.height(), relative.width(), relative.channels(), data),
        nonpositive_count,
        clamped_count,
    }
}

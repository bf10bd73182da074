//! align → pre-fill → dual propagation → correction.

use crate::affinity::{fallback_features, FeatureMap};
use crate::align::{apply_scale_shift, fit_scale_shift, fit_scale_shift_trimmed, AlignedDepth, DepthClamp, ScaleShift};
use crate::camera::CameraIntrinsics;
use crate::correction::{apply_correction, CorrectionParams, ResidualScorer, ScorerInput, ScorerOutputs};
use crate::error::{Error, Result};
use crate::propagation::{run_dual_propagation_detailed, PropagationConfig};
use crate::raster::{Raster, SparseDepth};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PipelineConfig {
    pub propagation: PropagationConfig,
    pub correction: CorrectionParams,
    pub clamp: DepthClamp,
    /// Refit after dropping the worst-fitting measurements.
    pub trimmed_fit: bool,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.propagation.validate()?;
        self.correction.validate()
    }
}

pub struct PipelineInputs<'a> {
    pub relative: &'a Raster,
    pub sparse: &'a SparseDepth,
    pub intrinsics: &'a CameraIntrinsics,
    /// Used to build fallback features when `features` is absent.
    pub rgb: Option<&'a Raster>,
    pub features: Option<&'a FeatureMap>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub scale_shift: ScaleShift,
    pub aligned: AlignedDepth,
    pub prefill: Raster,
    pub initial: Raster,
    pub scorer: ScorerOutputs,
    pub final_depth: Raster,
    pub fallback_features: bool,
    pub scorer_name: String,
}

impl PipelineOutput {
    /// `key=value` diagnostics, one per line.
    pub fn report(&self) -> String {
        let ss = &self.scale_shift;
        let (lo, hi) = self.final_depth.min_max();
        format!(
            "gamma={}\nrho={}\nfit_residual_rms={}\nfit_inliers={}\naligned_nonpositive={}\naligned_clamped={}\n\
             features={}\nscorer={}\nfinal_min={lo}\nfinal_max={hi}\n",
            ss.gamma,
            ss.rho,
            ss.residual_rms,
            ss.inlier_count,
            self.aligned.nonpositive_count,
            self.aligned.clamped_count,
            if self.fallback_features { "fallback" } else { "supplied" },
            self.scorer_name,
        )
    }
}

pub fn run_pipeline(
    inputs: &PipelineInputs<'_>,
    cfg: &PipelineConfig,
    scorer: &dyn ResidualScorer,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let fallback;
    let (features, fallback_used) = match (inputs.features, inputs.rgb) {
        (Some(f), _) => (f, false),
        (None, Some(rgb)) => {
            fallback = fallback_features(rgb)?;
            (&fallback, true)
        }
        (None, None) => {
            return Err(Error::Config("either features or an RGB image is required".into()));
        }
    };

    let scale_shift = if cfg.trimmed_fit {
        fit_scale_shift_trimmed(inputs.relative, inputs.sparse)?
    } else {
        fit_scale_shift(inputs.relative, inputs.sparse)?
    };
    let aligned = apply_scale_shift(inputs.relative, &scale_shift, cfg.clamp);
    let dual = run_dual_propagation_detailed(
        &aligned.depth,
        inputs.sparse,
        inputs.intrinsics,
        features,
        &cfg.propagation,
    )?;
    let outputs = scorer.score(&ScorerInput {
        initial: &dual.initial,
        sparse: inputs.sparse,
        metric: &aligned.depth,
        features,
        params: &cfg.correction,
    })?;
    let final_depth = apply_correction(&dual.initial, &outputs, &cfg.correction)?;
    Ok(PipelineOutput {
        scale_shift,
        aligned,
        prefill: dual.prefill,
        initial: dual.initial,
        scorer: outputs,
        final_depth,
        fallback_features: fallback_used,
        scorer_name: scorer.name().to_string(),
    })
}

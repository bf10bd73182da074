//! Residual correction of the initial dense depth.
//!
//! A scorer supplies an initial residual `R`, an uncertainty `U`, an offset
//! `O` and per-slice logits `L`. The residual range
//! `[β_min − (1+α_min)(1+U)|R|, β_max + (1+α_max)(1+U)|R|]` is split into
//! `n + 1` evenly spaced slices, shifted by `O`, and combined with
//! `softmax(L)` weights. The result is added to the initial depth.

use std::path::{Path, PathBuf};

use crate::affinity::FeatureMap;
use crate::error::{Error, Result};
use crate::io::{load_raster, write_raster, RasterFormat};
use crate::raster::{Raster, SparseDepth};

/// Lower bound applied to the corrected depth, in meters.
pub const MIN_CORRECTED_DEPTH: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrectionParams {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Number of slice intervals; `n + 1` slice values are produced.
    pub n: usize,
    pub tau: f64,
}

impl Default for CorrectionParams {
    fn default() -> Self {
        Self {
            alpha_min: 0.0,
            alpha_max: 0.0,
            beta_min: 0.0,
            beta_max: 0.0,
            n: 5,
            tau: 0.2,
        }
    }
}

impl CorrectionParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("slice count n must be >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        let scalars = [self.alpha_min, self.alpha_max, self.beta_min, self.beta_max];
        if !scalars.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("alpha/beta must be finite".into()));
        }
        Ok(())
    }

    pub fn slice_count(&self) -> usize {
        self.n + 1
    }
}

/// Residual `S − D_init` at measured pixels. `mask` distinguishes a measured
/// zero residual from an unmeasured pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseResidual {
    pub values: Raster,
    pub mask: Vec<bool>,
}

pub fn sparse_residual(sparse: &SparseDepth, initial: &Raster) -> Result<SparseResidual> {
    initial.ensure_single_channel("initial depth")?;
    initial.ensure_dims(sparse.raster(), "initial vs sparse")?;
    let mask: Vec<bool> = (0..initial.pixel_count()).map(|i| sparse.is_measured(i)).collect();
    let data = mask
        .iter()
        .enumerate()
        .map(|(i, &m)| if m { sparse.value(i) - initial.data()[i] } else { 0.0 })
        .collect();
    Ok(SparseResidual {
        values: Raster::new(initial.height(), initial.width(), 1, data)?,
        mask,
    })
}

pub fn residual_range(
    residual: &Raster,
    uncertainty: &Raster,
    params: &CorrectionParams,
) -> Result<(Raster, Raster)> {
    residual.ensure_single_channel("residual")?;
    uncertainty.ensure_single_channel("uncertainty")?;
    residual.ensure_dims(uncertainty, "residual vs uncertainty")?;
    if let Some(u) = uncertainty.data().iter().find(|u| !(0.0..=1.0).contains(*u)) {
        return Err(Error::Value(format!("uncertainty {u} outside [0, 1]")));
    }
    let (h, w) = (residual.height(), residual.width());
    let (mut lo, mut hi) = (Vec::with_capacity(h * w), Vec::with_capacity(h * w));
    for (&r, &u) in residual.data().iter().zip(uncertainty.data()) {
        let spread = (1.0 + u) * r.abs();
        lo.push(params.beta_min - (1.0 + params.alpha_min) * spread);
        hi.push(params.beta_max + (1.0 + params.alpha_max) * spread);
    }
    Ok((Raster::new(h, w, 1, lo)?, Raster::new(h, w, 1, hi)?))
}

/// `n + 1` evenly spaced values over `[r_min, r_max]`, each shifted by `offset`.
pub fn residual_slices(r_min: &Raster, r_max: &Raster, n: usize, offset: &Raster) -> Result<Raster> {
    if n == 0 {
        return Err(Error::Value("slice count n must be >= 1".into()));
    }
    for (r, what) in [(r_min, "r_min"), (r_max, "r_max"), (offset, "offset")] {
        r.ensure_single_channel(what)?;
        r.ensure_dims(r_min, what)?;
    }
    let mut data = Vec::with_capacity(r_min.pixel_count() * (n + 1));
    for ((&lo, &hi), &o) in r_min.data().iter().zip(r_max.data()).zip(offset.data()) {
        if lo > hi {
            return Err(Error::Value(format!("residual range [{lo}, {hi}] is inverted")));
        }
        let step = (hi - lo) / n as f64;
        data.extend((0..=n).map(|i| lo + i as f64 * step + o));
    }
    Raster::new(r_min.height(), r_min.width(), n + 1, data)
}

/// Softmax-weighted sum of slices per pixel.
pub fn combine_scores(slices: &Raster, logits: &Raster) -> Result<Raster> {
    slices.ensure_dims(logits, "slices vs logits")?;
    if slices.channels() != logits.channels() {
        return Err(Error::Dimension(format!(
            "{} slices vs {} logits",
            slices.channels(),
            logits.channels()
        )));
    }
    let c = slices.channels();
    let data = slices
        .data()
        .chunks_exact(c)
        .zip(logits.data().chunks_exact(c))
        .map(|(s, l)| {
            let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let (mut num, mut den) = (0.0, 0.0);
            for (sv, lv) in s.iter().zip(l) {
                let e = (lv - m).exp();
                num += e * sv;
                den += e;
            }
            num / den
        })
        .collect();
    Raster::new(slices.height(), slices.width(), 1, data)
}

/// The four rasters a residual scorer produces.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerOutputs {
    pub residual: Raster,
    /// Always within `[0, 1]`; clamped on construction.
    pub uncertainty: Raster,
    pub offset: Raster,
    pub logits: Raster,
}

impl ScorerOutputs {
    pub fn new(residual: Raster, uncertainty: Raster, offset: Raster, logits: Raster) -> Result<Self> {
        for (r, what) in [(&residual, "residual"), (&uncertainty, "uncertainty"), (&offset, "offset")] {
            r.ensure_single_channel(what)?;
            r.ensure_dims(&residual, what)?;
        }
        logits.ensure_dims(&residual, "logits")?;
        if logits.channels() < 2 {
            return Err(Error::Dimension(format!(
                "logits need at least 2 slices, got {}",
                logits.channels()
            )));
        }
        let (h, w) = (uncertainty.height(), uncertainty.width());
        let squashed = uncertainty.into_data().into_iter().map(|u| u.clamp(0.0, 1.0)).collect();
        Ok(Self {
            residual,
            uncertainty: Raster::from_parts(h, w, 1, squashed),
            offset,
            logits,
        })
    }

    /// All-zero residual, uncertainty and offset with uniform logits.
    pub fn zero(height: usize, width: usize, slices: usize) -> Result<Self> {
        let z = Raster::zeros(height, width, 1)?;
        Self::new(z.clone(), z.clone(), z, Raster::zeros(height, width, slices)?)
    }

    pub fn height(&self) -> usize {
        self.residual.height()
    }

    pub fn width(&self) -> usize {
        self.residual.width()
    }
}

/// Combined residual `R̂` for the given scorer outputs.
pub fn final_residual(scorer: &ScorerOutputs, params: &CorrectionParams) -> Result<Raster> {
    params.validate()?;
    if scorer.logits.channels() != params.slice_count() {
        return Err(Error::Dimension(format!(
            "scorer produced {} logits, n = {} needs {}",
            scorer.logits.channels(),
            params.n,
            params.slice_count()
        )));
    }
    let (lo, hi) = residual_range(&scorer.residual, &scorer.uncertainty, params)?;
    let slices = residual_slices(&lo, &hi, params.n, &scorer.offset)?;
    combine_scores(&slices, &scorer.logits)
}

/// `D̂ = D_init + R̂`, floored at [`MIN_CORRECTED_DEPTH`].
pub fn apply_correction(initial: &Raster, scorer: &ScorerOutputs, params: &CorrectionParams) -> Result<Raster> {
    initial.ensure_single_channel("initial depth")?;
    initial.ensure_dims(&scorer.residual, "initial vs scorer")?;
    let r_hat = final_residual(scorer, params)?;
    let data = initial
        .data()
        .iter()
        .zip(r_hat.data())
        .map(|(d, r)| (d + r).max(MIN_CORRECTED_DEPTH))
        .collect();
    Raster::new(initial.height(), initial.width(), 1, data)
}

/// `U = 1 − exp(−|pred − gt| / (τ (pred + gt)))` per pixel.
pub fn uncertainty_target(pred: &Raster, gt: &Raster, tau: f64) -> Result<Raster> {
    pred.ensure_single_channel("prediction")?;
    pred.ensure_dims(gt, "prediction vs ground truth")?;
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Value(format!("tau must be > 0, got {tau}")));
    }
    let data = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| {
            if p <= 0.0 || g <= 0.0 {
                return Err(Error::Value(format!("uncertainty target needs positive depths, got {p} / {g}")));
            }
            Ok(1.0 - (-(p - g).abs() / (tau * (p + g))).exp())
        })
        .collect::<Result<Vec<f64>>>()?;
    Raster::new(pred.height(), pred.width(), 1, data)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub l1: f64,
    pub uncertainty: f64,
}

/// Mean L1 depth error plus mean L1 error of the predicted uncertainty against
/// [`uncertainty_target`], both over `valid`.
pub fn loss_total(pred: &Raster, gt: &Raster, u_pred: &Raster, tau: f64, valid: &[bool]) -> Result<LossTerms> {
    pred.ensure_dims(u_pred, "prediction vs uncertainty")?;
    if valid.len() != pred.pixel_count() {
        return Err(Error::Dimension(format!(
            "mask has {} entries for {} pixels",
            valid.len(),
            pred.pixel_count()
        )));
    }
    let count = valid.iter().filter(|&&v| v).count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let target = uncertainty_target(pred, gt, tau)?;
    let (mut l1, mut lu) = (0.0, 0.0);
    for (i, _) in valid.iter().enumerate().filter(|(_, &v)| v) {
        l1 += (pred.data()[i] - gt.data()[i]).abs();
        lu += (u_pred.data()[i] - target.data()[i]).abs();
    }
    let (l1, lu) = (l1 / count as f64, lu / count as f64);
    Ok(LossTerms {
        total: l1 + lu,
        l1,
        uncertainty: lu,
    })
}

/// Everything a scorer may look at.
pub struct ScorerInput<'a> {
    pub initial: &'a Raster,
    pub sparse: &'a SparseDepth,
    /// Aligned metric depth from the relative prediction.
    pub metric: &'a Raster,
    pub features: &'a FeatureMap,
    pub params: &'a CorrectionParams,
}

pub trait ResidualScorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, input: &ScorerInput<'_>) -> Result<ScorerOutputs>;
}

/// Produces zero residual, zero uncertainty, zero offset and uniform logits.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroScorer;

impl ResidualScorer for ZeroScorer {
    fn name(&self) -> &str {
        "zero"
    }

    fn score(&self, input: &ScorerInput<'_>) -> Result<ScorerOutputs> {
        ScorerOutputs::zero(input.initial.height(), input.initial.width(), input.params.slice_count())
    }
}

pub const SCORER_RESIDUAL_FILE: &str = "residual.dfr";
pub const SCORER_UNCERTAINTY_FILE: &str = "uncertainty.dfr";
pub const SCORER_OFFSET_FILE: &str = "offset.dfr";
pub const SCORER_LOGITS_FILE: &str = "logits.dfr";

/// Reads scorer outputs from a directory of four DFR rasters.
#[derive(Clone, Debug)]
pub struct FileScorer {
    dir: PathBuf,
}

impl FileScorer {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn load(&self) -> Result<ScorerOutputs> {
        let read = |name: &str| load_raster(self.dir.join(name), RasterFormat::Dfr);
        ScorerOutputs::new(
            read(SCORER_RESIDUAL_FILE)?,
            read(SCORER_UNCERTAINTY_FILE)?,
            read(SCORER_OFFSET_FILE)?,
            read(SCORER_LOGITS_FILE)?,
        )
    }
}

impl ResidualScorer for FileScorer {
    fn name(&self) -> &str {
        "file"
    }

    fn score(&self, input: &ScorerInput<'_>) -> Result<ScorerOutputs> {
        let out = self.load()?;
        input.initial.ensure_dims(&out.residual, "initial vs scorer bundle")?;
        Ok(out)
    }
}

/// Writes a scorer bundle readable by [`FileScorer`].
pub fn write_scorer_bundle(dir: impl AsRef<Path>, outputs: &ScorerOutputs) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_raster(&outputs.residual, dir.join(SCORER_RESIDUAL_FILE), RasterFormat::Dfr)?;
    write_raster(&outputs.uncertainty, dir.join(SCORER_UNCERTAINTY_FILE), RasterFormat::Dfr)?;
    write_raster(&outputs.offset, dir.join(SCORER_OFFSET_FILE), RasterFormat::Dfr)?;
    write_raster(&outputs.logits, dir.join(SCORER_LOGITS_FILE), RasterFormat::Dfr)
}

//! Network-free residual scorers.

use rayon::prelude::*;

use crate::correction::{sparse_residual, ResidualScorer, ScorerInput, ScorerOutputs};
use crate::error::{Error, Result};
use crate::prefill::{prefill_gaussian, PrefillParams};
use crate::raster::{Raster, SparseDepth};

/// Pixel distance at which the heuristic uncertainty reaches `1 − 1/e`.
pub const UNCERTAINTY_DISTANCE: f64 = 8.0;
/// Relative alignment misfit at which guided trust falls to `1/e`.
pub const TRUST_SCALE: f64 = 0.01;
/// Logit assigned to slices that should receive no weight.
pub const LOGIT_FLOOR: f64 = -1e4;

/// Smooth fill of signed values known on `mask`, via shifted normalized convolution.
pub fn fill_signed(values: &Raster, mask: &[bool], params: &PrefillParams) -> Result<Raster> {
    values.ensure_single_channel("signed values")?;
    let known: Vec<f64> = values.data().iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
    if known.is_empty() {
        return Err(Error::EmptyInput);
    }
    let shift = 1.0 - known.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted = values
        .data()
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m { v + shift } else { 0.0 })
        .collect();
    let sparse = SparseDepth::new(Raster::new(values.height(), values.width(), 1, shifted)?)?;
    let filled = prefill_gaussian(&sparse, params)?;
    Raster::new(
        values.height(),
        values.width(),
        1,
        filled.data().iter().map(|v| v - shift).collect(),
    )
}

/// Euclidean pixel distance to the nearest measurement.
pub fn distance_to_measurement(sparse: &SparseDepth) -> Result<Raster> {
    let w = sparse.width();
    let pts: Vec<(f64, f64)> = sparse
        .measured_indices()
        .into_iter()
        .map(|i| ((i / w) as f64, (i % w) as f64))
        .collect();
    if pts.is_empty() {
        return Err(Error::EmptyInput);
    }
    let data = (0..sparse.height() * w)
        .into_par_iter()
        .map(|i| {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            pts.iter()
                .map(|(pr, pc)| (pr - r).powi(2) + (pc - c).powi(2))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    Raster::new(sparse.height(), w, 1, data)
}

fn squashed_distance(sparse: &SparseDepth) -> Result<Raster> {
    let d = distance_to_measurement(sparse)?;
    let (h, w) = (d.height(), d.width());
    Raster::new(
        h,
        w,
        1,
        d.into_data().into_iter().map(|d| 1.0 - (-d / UNCERTAINTY_DISTANCE).exp()).collect(),
    )
}

/// Smoothed extrapolation of the sparse residual, distance-based uncertainty,
/// zero offset, uniform logits.
///
/// With symmetric ranges (α = β = 0) uniform logits average to zero, so this
/// scorer only moves the depth when the range is made asymmetric.
#[derive(Clone, Debug, Default)]
pub struct HeuristicScorer {
    pub smoothing: PrefillParams,
}

impl ResidualScorer for HeuristicScorer {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn score(&self, input: &ScorerInput<'_>) -> Result<ScorerOutputs> {
        let (h, w) = (input.initial.height(), input.initial.width());
        let res = sparse_residual(input.sparse, input.initial)?;
        let residual = fill_signed(&res.values, &res.mask, &self.smoothing)?;
        ScorerOutputs::new(
            residual,
            squashed_distance(input.sparse)?,
            Raster::zeros(h, w, 1)?,
            Raster::zeros(h, w, input.params.slice_count())?,
        )
    }
}

/// Logits whose softmax places `target` between the two bracketing slices of
/// `[lo, hi]` by linear interpolation. Slices outside the bracket get
/// [`LOGIT_FLOOR`].
pub fn bracket_logits(target: f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut logits = vec![0.0; n + 1];
    if hi <= lo {
        return logits;
    }
    let f = ((target - lo) / (hi - lo) * n as f64).clamp(0.0, n as f64);
    let j = (f.floor() as usize).min(n - 1);
    let frac = f - j as f64;
    logits.iter_mut().for_each(|l| *l = LOGIT_FLOOR);
    let weight = |p: f64| if p > 0.0 { p.ln() } else { LOGIT_FLOOR };
    logits[j] = weight(1.0 - frac);
    logits[j + 1] = weight(frac);
    logits
}

/// Pulls the initial depth toward the aligned depth after re-anchoring it on
/// the measurements.
///
/// The target is `D^M + fill(S − D^M)`. The pull is scaled by
/// `exp(−misfit / TRUST_SCALE)`, where misfit is the RMS relative disagreement
/// between aligned depth and measurements, so a noisy relative prediction
/// leaves the initial depth almost untouched. Measured pixels get a zero
/// residual. The residual is encoded through the slice logits, with zero
/// offset.
#[derive(Clone, Debug, Default)]
pub struct GuidedScorer {
    pub smoothing: PrefillParams,
}

impl GuidedScorer {
    /// Trust in the aligned depth, in `(0, 1]`.
    pub fn trust(metric: &Raster, sparse: &SparseDepth) -> f64 {
        let idx = sparse.measured_indices();
        if idx.is_empty() {
            return 0.0;
        }
        let ms: f64 = idx
            .iter()
            .map(|&i| ((sparse.value(i) - metric.data()[i]) / sparse.value(i)).powi(2))
            .sum::<f64>()
            / idx.len() as f64;
        (-ms.sqrt() / TRUST_SCALE).exp()
    }
}

impl ResidualScorer for GuidedScorer {
    fn name(&self) -> &str {
        "guided"
    }

    fn score(&self, input: &ScorerInput<'_>) -> Result<ScorerOutputs> {
        let ScorerInput { initial, sparse, metric, params, .. } = *input;
        params.validate()?;
        initial.ensure_dims(metric, "initial vs metric")?;
        initial.ensure_dims(sparse.raster(), "initial vs sparse")?;
        let (h, w) = (initial.height(), initial.width());
        let mask: Vec<bool> = (0..h * w).map(|i| sparse.is_measured(i)).collect();
        let misfit = Raster::new(
            h,
            w,
            1,
            (0..h * w)
                .map(|i| if mask[i] { sparse.value(i) - metric.data()[i] } else { 0.0 })
                .collect(),
        )?;
        let fill = fill_signed(&misfit, &mask, &self.smoothing)?;
        let trust = Self::trust(metric, sparse);

        let residual: Vec<f64> = (0..h * w)
            .map(|i| {
                if mask[i] {
                    0.0
                } else {
                    trust * (metric.data()[i] + fill.data()[i] - initial.data()[i])
                }
            })
            .collect();
        let uncertainty = squashed_distance(sparse)?;

        let mut logits = Vec::with_capacity(h * w * params.slice_count());
        for (&r, &u) in residual.iter().zip(uncertainty.data()) {
            let spread = (1.0 + u) * r.abs();
            let lo = params.beta_min - (1.0 + params.alpha_min) * spread;
            let hi = params.beta_max + (1.0 + params.alpha_max) * spread;
            logits.extend(bracket_logits(r, lo, hi, params.n));
        }
        ScorerOutputs::new(
            Raster::new(h, w, 1, residual)?,
            uncertainty,
            Raster::zeros(h, w, 1)?,
            Raster::new(h, w, params.slice_count(), logits)?,
        )
    }
}

/// Scorer names accepted by [`scorer_by_name`].
pub const SCORER_NAMES: [&str; 3] = ["zero", "heuristic", "guided"];

pub fn scorer_by_name(name: &str) -> Result<Box<dyn ResidualScorer>> {
    match name {
        "zero" => Ok(Box::new(crate::correction::ZeroScorer)),
        "heuristic" => Ok(Box::new(HeuristicScorer::default())),
        "guided" => Ok(Box::new(GuidedScorer::default())),
        other => Err(Error::Config(format!(
            "unknown scorer '{other}', expected one of {}",
            SCORER_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::FeatureMap;
    use crate::correction::{apply_correction, CorrectionParams, combine_scores, residual_range, residual_slices};

    fn sparse(h: usize, w: usize, pts: &[(usize, f64)]) -> SparseDepth {
        let mut d = vec![0.0; h * w];
        for &(i, v) in pts {
            d[i] = v;
        }
        SparseDepth::new(Raster::new(h, w, 1, d).unwrap()).unwrap()
    }

    #[test]
    fn signed_fill_reproduces_constant() {
        let v = Raster::new(1, 4, 1, vec![-0.5, 0.0, 0.0, -0.5]).unwrap();
        let out = fill_signed(&v, &[true, false, false, true], &PrefillParams::default()).unwrap();
        for x in out.data() {
            assert!((x + 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn distances() {
        let s = sparse(3, 4, &[(0, 1.0)]);
        let d = distance_to_measurement(&s).unwrap();
        assert_eq!(d.at(0, 0), 0.0);
        assert_eq!(d.at(0, 3), 3.0);
        assert_eq!(d.at(2, 0), 2.0);
        assert!((d.at(2, 2) - 8f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bracket_recovers_target() {
        for &(t, lo, hi, n) in &[(0.3, -1.0, 1.0, 5usize), (-1.0, -1.0, 1.0, 5), (1.0, -1.0, 1.0, 4), (0.0, -2.0, 2.0, 1)] {
            let logits = bracket_logits(t, lo, hi, n);
            let slices = residual_slices(
                &Raster::filled(1, 1, 1, lo).unwrap(),
                &Raster::filled(1, 1, 1, hi).unwrap(),
                n,
                &Raster::zeros(1, 1, 1).unwrap(),
            )
            .unwrap();
            let r = combine_scores(&slices, &Raster::new(1, 1, n + 1, logits).unwrap()).unwrap();
            assert!((r.data()[0] - t).abs() < 1e-12, "{t} -> {}", r.data()[0]);
        }
        assert_eq!(bracket_logits(0.0, 0.0, 0.0, 5), vec![0.0; 6]);
    }

    fn input_fixture() -> (Raster, SparseDepth, Raster, FeatureMap) {
        let (h, w) = (6, 6);
        let gt = Raster::from_fn(h, w, 1, |r, c, _| 2.0 + 0.1 * r as f64 + 0.05 * c as f64).unwrap();
        let s = sparse(h, w, &[(0, gt.data()[0]), (14, gt.data()[14]), (35, gt.data()[35])]);
        let initial = Raster::new(
            h,
            w,
            1,
            (0..h * w).map(|i| if s.is_measured(i) { s.value(i) } else { 3.0 }).collect(),
        )
        .unwrap();
        let f = FeatureMap::new(Raster::filled(h, w, 2, 1.0).unwrap()).unwrap();
        (gt, s, initial, f)
    }

    #[test]
    fn guided_lands_on_exact_metric_depth() {
        let (gt, s, initial, f) = input_fixture();
        let params = CorrectionParams::default();
        let input = ScorerInput { initial: &initial, sparse: &s, metric: &gt, features: &f, params: &params };
        let out = GuidedScorer::default().score(&input).unwrap();
        let corrected = apply_correction(&initial, &out, &params).unwrap();
        for i in 0..gt.pixel_count() {
            assert!((corrected.data()[i] - gt.data()[i]).abs() < 1e-12);
            if s.is_measured(i) {
                assert_eq!(corrected.data()[i].to_bits(), s.value(i).to_bits());
            }
        }
        let (lo, hi) = residual_range(&out.residual, &out.uncertainty, &params).unwrap();
        assert!(lo.data().iter().zip(hi.data()).all(|(a, b)| a <= b));
    }

    #[test]
    fn guided_distrusts_misaligned_metric() {
        let (gt, s, initial, f) = input_fixture();
        let metric = Raster::new(6, 6, 1, gt.data().iter().map(|v| v * 1.3).collect()).unwrap();
        let params = CorrectionParams::default();
        let input = ScorerInput { initial: &initial, sparse: &s, metric: &metric, features: &f, params: &params };
        assert!(GuidedScorer::trust(&metric, &s) < 1e-9);
        let out = GuidedScorer::default().score(&input).unwrap();
        let corrected = apply_correction(&initial, &out, &params).unwrap();
        for (a, b) in corrected.data().iter().zip(initial.data()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn heuristic_is_identity_at_symmetric_range() {
        let (gt, s, initial, f) = input_fixture();
        let params = CorrectionParams::default();
        let input = ScorerInput { initial: &initial, sparse: &s, metric: &gt, features: &f, params: &params };
        let out = HeuristicScorer::default().score(&input).unwrap();
        assert!(out.uncertainty.data().iter().all(|u| (0.0..=1.0).contains(u)));
        let corrected = apply_correction(&initial, &out, &params).unwrap();
        for (a, b) in corrected.data().iter().zip(initial.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn names() {
        for n in SCORER_NAMES {
            assert_eq!(scorer_by_name(n).unwrap().name(), n);
        }
        assert!(scorer_by_name("unet").is_err());
    }
}

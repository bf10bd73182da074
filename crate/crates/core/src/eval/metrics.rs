use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{encode_rgb8_png, write_atomic};
use crate::raster::Raster;

/// `1.25, 1.25², 1.25³`.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [1.25, 1.5625, 1.953125];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaScore {
    pub threshold: f64,
    /// Percentage of pixels with `max(pred/gt, gt/pred) < threshold`.
    pub percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Millimeters.
    pub mae: f64,
    /// Millimeters.
    pub rmse: f64,
    /// Percent.
    pub rel: f64,
    /// Sorted by ascending threshold.
    pub delta: Vec<DeltaScore>,
    pub pixel_count: usize,
}

impl MetricsReport {
    pub fn delta_at(&self, threshold: f64) -> Option<f64> {
        self.delta
            .iter()
            .find(|d| d.threshold == threshold)
            .map(|d| d.percent)
    }

    /// One `metric=value` line per metric.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "mae={}\nrmse={}\nrel={}\n",
            self.mae, self.rmse, self.rel
        );
        for d in &self.delta {
            out.push_str(&format!("delta_{}={}\n", d.threshold, d.percent));
        }
        out.push_str(&format!("pixels={}\n", self.pixel_count));
        out
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics report serializes")
    }
}

fn evaluation_pixels(pred: &Raster, gt: &Raster, valid: Option<&[bool]>) -> Result<Vec<usize>> {
    pred.ensure_single_channel("prediction")?;
    gt.ensure_single_channel("ground truth")?;
    pred.ensure_dims(gt, "prediction vs ground truth")?;
    if let Some(mask) = valid {
        if mask.len() != gt.pixel_count() {
            return Err(Error::Dimension(format!(
                "mask has {} entries for {} pixels",
                mask.len(),
                gt.pixel_count()
            )));
        }
    }
    let pixels: Vec<usize> = (0..gt.pixel_count())
        .filter(|&i| gt.data()[i] > 0.0 && valid.is_none_or(|m| m[i]))
        .collect();
    if pixels.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(pixels)
}

/// MAE, RMSE, REL and δ accuracies over masked pixels with positive ground truth.
pub fn compute_metrics(
    pred: &Raster,
    gt: &Raster,
    valid: Option<&[bool]>,
    thresholds: &[f64],
) -> Result<MetricsReport> {
    let pixels = evaluation_pixels(pred, gt, valid)?;
    let mut thresholds = thresholds.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let (mut abs, mut sq, mut rel) = (0.0, 0.0, 0.0);
    let mut hits = vec![0usize; thresholds.len()];
    for &i in &pixels {
        let (p, g) = (pred.data()[i], gt.data()[i]);
        let e = (g - p).abs();
        abs += e;
        sq += e * e;
        rel += e / g;
        let ratio = if p > 0.0 { (p / g).max(g / p) } else { f64::INFINITY };
        for (h, t) in hits.iter_mut().zip(&thresholds) {
            if ratio < *t {
                *h += 1;
            }
        }
    }
    let n = pixels.len() as f64;
    Ok(MetricsReport {
        mae: abs / n * 1000.0,
        rmse: (sq / n).sqrt() * 1000.0,
        rel: rel / n * 100.0,
        delta: thresholds
            .iter()
            .zip(hits)
            .map(|(&threshold, h)| DeltaScore {
                threshold,
                percent: h as f64 / n * 100.0,
            })
            .collect(),
        pixel_count: pixels.len(),
    })
}

const RAMP: [[f64; 3]; 5] = [
    [0.0, 0.0, 128.0],
    [0.0, 128.0, 255.0],
    [0.0, 200.0, 100.0],
    [255.0, 220.0, 0.0],
    [200.0, 0.0, 0.0],
];

fn ramp_color(t: f64) -> [u8; 3] {
    let x = t.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - i as f64;
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = (RAMP[i][c] + f * (RAMP[i + 1][c] - RAMP[i][c])).round() as u8;
    }
    out
}

/// Writes an absolute-error PNG and a `.txt` sidecar holding the color scale.
///
/// Errors are mapped linearly from 0 to the largest evaluated error; pixels
/// outside the evaluation set are black. Returns the scale maximum in meters.
pub fn write_error_map(pred: &Raster, gt: &Raster, valid: Option<&[bool]>, path: impl AsRef<Path>) -> Result<f64> {
    let path = path.as_ref();
    let pixels = evaluation_pixels(pred, gt, valid)?;
    let err = |i: usize| (pred.data()[i] - gt.data()[i]).abs();
    let max_err = pixels.iter().map(|&i| err(i)).fold(0.0, f64::max);
    let scale = if max_err > 0.0 { max_err } else { 1.0 };

    let mut rgb = vec![0u8; gt.pixel_count() * 3];
    for &i in &pixels {
        rgb[i * 3..i * 3 + 3].copy_from_slice(&ramp_color(err(i) / scale));
    }
    write_atomic(path, &encode_rgb8_png(gt.width(), gt.height(), &rgb)?)?;
    let sidecar = format!(
        "error_min_m=0\nerror_max_m={scale}\nramp=navy,azure,green,yellow,red\n"
    );
    write_atomic(path.with_extension("txt"), sidecar.as_bytes())?;
    Ok(scale)
}

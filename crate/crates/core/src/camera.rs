//! Pinhole intrinsics and back-projection of depth into a per-pixel point cloud.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::raster::{Raster, SparseDepth};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || ![fx, fy, cx, cy].iter().all(|v| v.is_finite()) {
            return Err(Error::Value(format!(
                "intrinsics need finite values and positive focal lengths, got fx={fx} fy={fy} cx={cx} cy={cy}"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Reads the one-line `fx fy cx cy` text format.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    pub fn to_line(&self) -> String {
        format!("{} {} {} {}\n", self.fx, self.fy, self.cx, self.cy)
    }

    /// Pixel `(col, row)` of a camera-frame point.
    pub fn project(&self, p: [f64; 3]) -> (f64, f64) {
        (self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy)
    }
}

impl FromStr for CameraIntrinsics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad intrinsics token {t:?}")))
            })
            .collect::<Result<_>>()?;
        match vals.as_slice() {
            &[fx, fy, cx, cy] => CameraIntrinsics::new(fx, fy, cx, cy),
            _ => Err(Error::Format(format!(
                "intrinsics need 4 values \"fx fy cx cy\", got {}",
                vals.len()
            ))),
        }
    }
}

/// Camera-frame points aligned with the pixels of the source depth raster.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    height: usize,
    width: usize,
    points: Vec<[f64; 3]>,
    measured: Vec<bool>,
}

impl PointCloud {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        self.points[idx]
    }

    pub fn is_measured(&self, idx: usize) -> bool {
        self.measured[idx]
    }

    pub fn measured_count(&self) -> usize {
        self.measured.iter().filter(|&&m| m).count()
    }

    /// Flags the pixels that carry a sparse measurement.
    pub fn with_measured(mut self, sparse: &SparseDepth) -> Result<Self> {
        if sparse.height() != self.height || sparse.width() != self.width {
            return Err(Error::Dimension(format!(
                "cloud {}x{} vs sparse {}x{}",
                self.height,
                self.width,
                sparse.height(),
                sparse.width()
            )));
        }
        for (i, m) in self.measured.iter_mut().enumerate() {
            *m = sparse.is_measured(i);
        }
        Ok(self)
    }

    #[cfg(test)]
    pub(crate) fn from_points(height: usize, width: usize, points: Vec<[f64; 3]>, measured: Vec<bool>) -> Self {
        assert_eq!(points.len(), height * width);
        assert_eq!(measured.len(), height * width);
        Self {
            height,
            width,
            points,
            measured,
        }
    }
}

/// `point(u, v) = d(u, v) * K^-1 * (u, v, 1)`; no pixel is flagged measured.
pub fn backproject(depth: &Raster, k: &CameraIntrinsics) -> Result<PointCloud> {
    depth.ensure_single_channel("depth")?;
    if let Some(pos) = depth.data().iter().position(|&d| d <= 0.0) {
        return Err(Error::Value(format!(
            "back-projection needs positive depth, got {} at pixel {pos}",
            depth.data()[pos]
        )));
    }
    let w = depth.width();
    let points = depth
        .data()
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let (v, u) = ((i / w) as f64, (i % w) as f64);
            [d * (u - k.cx) / k.fx, d * (v - k.cy) / k.fy, d]
        })
        .collect();
    Ok(PointCloud {
        height: depth.height(),
        width: w,
        points,
        measured: vec![false; depth.pixel_count()],
    })
}

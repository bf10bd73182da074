//! Feature maps and the dot-product affinities that weight propagation.
//!
//! Feature vectors are L2-normalized per pixel on construction, so affinities
//! depend only on feature direction. A zero vector stays zero.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter;
use crate::knn::NeighborSet;
use crate::raster::Raster;

/// Largest channel count accepted for externally supplied features.
pub const MAX_FEATURE_CHANNELS: usize = 512;

/// Denominators with magnitude below this trigger the fallback weights.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-9;

pub const FALLBACK_FEATURE_CHANNELS: usize = 12;

/// Row/column offsets of the 8-neighborhood in N, NE, E, SE, S, SW, W, NW order.
pub const NEIGHBOR_OFFSETS: [(isize, isize); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    raster: Raster,
}

impl FeatureMap {
    pub fn new(raster: Raster) -> Result<Self> {
        if raster.channels() > MAX_FEATURE_CHANNELS {
            return Err(Error::Value(format!(
                "feature raster has {} channels, limit is {MAX_FEATURE_CHANNELS}",
                raster.channels()
            )));
        }
        let c = raster.channels();
        let (h, w) = (raster.height(), raster.width());
        let mut data = raster.into_data();
        for px in data.chunks_exact_mut(c) {
            let norm = px.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                px.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Ok(Self {
            raster: Raster::from_parts(h, w, c, data),
        })
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn height(&self) -> usize {
        self.raster.height()
    }

    pub fn width(&self) -> usize {
        self.raster.width()
    }

    pub fn channels(&self) -> usize {
        self.raster.channels()
    }

    #[inline]
    pub fn feature(&self, idx: usize) -> &[f64] {
        self.raster.pixel(idx)
    }

    #[inline]
    pub fn dot(&self, a: usize, b: usize) -> f64 {
        self.feature(a)
            .iter()
            .zip(self.feature(b))
            .map(|(x, y)| x * y)
            .sum()
    }

    pub(crate) fn ensure_dims(&self, other: &Raster, what: &str) -> Result<()> {
        self.raster.ensure_dims(other, what)
    }
}

/// Hand-crafted 12-channel features for when no foundation-model features exist.
///
/// Channels: RGB, RGB blurred at sigma 2, luminance x/y central differences,
/// `u / W`, `v / H`, constant 1, luminance.
pub fn fallback_features(rgb: &Raster) -> Result<FeatureMap> {
    if rgb.channels() != 3 {
        return Err(Error::Value(format!(
            "fallback features need a 3-channel image, got {}",
            rgb.channels()
        )));
    }
    if let Some(v) = rgb.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Value(format!("rgb values must lie in [0, 1], found {v}")));
    }
    let (h, w) = (rgb.height(), rgb.width());
    let planes: Vec<Vec<f64>> = (0..3)
        .map(|ch| rgb.data().iter().skip(ch).step_by(3).copied().collect())
        .collect();
    let blurred: Vec<Vec<f64>> = planes.iter().map(|p| filter::gaussian_blur(p, h, w, 2.0)).collect();
    let luma: Vec<f64> = (0..h * w)
        .map(|i| 0.299 * planes[0][i] + 0.587 * planes[1][i] + 0.114 * planes[2][i])
        .collect();

    let at = |r: usize, c: usize| luma[r * w + c];
    let mut data = Vec::with_capacity(h * w * FALLBACK_FEATURE_CHANNELS);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let gx = 0.5 * (at(r, (c + 1).min(w - 1)) - at(r, c.saturating_sub(1)));
            let gy = 0.5 * (at((r + 1).min(h - 1), c) - at(r.saturating_sub(1), c));
            data.extend_from_slice(&[
                planes[0][i],
                planes[1][i],
                planes[2][i],
                blurred[0][i],
                blurred[1][i],
                blurred[2][i],
                gx,
                gy,
                c as f64 / w as f64,
                r as f64 / h as f64,
                1.0,
                luma[i],
            ]);
        }
    }
    FeatureMap::new(Raster::new(h, w, FALLBACK_FEATURE_CHANNELS, data)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffinityWeights3D {
    pub weights: Vec<f64>,
    /// True when the uniform fallback replaced the dot-product weights.
    pub fallback: bool,
}

/// Normalized dot-product weights of `neighbors` relative to pixel `x`.
///
/// The denominator is the signed sum of dot products; when it is not clearly
/// positive the weights fall back to uniform `1/k`.
pub fn affinity_3d(features: &FeatureMap, x: usize, neighbors: &NeighborSet) -> AffinityWeights3D {
    let k = neighbors.len();
    if k == 0 {
        return AffinityWeights3D {
            weights: Vec::new(),
            fallback: true,
        };
    }
    let dots: Vec<f64> = neighbors.indices.iter().map(|&j| features.dot(j, x)).collect();
    let sum: f64 = dots.iter().sum();
    if sum < DEGENERATE_DENOMINATOR {
        return AffinityWeights3D {
            weights: vec![1.0 / k as f64; k],
            fallback: true,
        };
    }
    AffinityWeights3D {
        weights: dots.iter().map(|d| d / sum).collect(),
        fallback: false,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AffinityWeights2D {
    /// N, NE, E, SE, S, SW, W, NW; out-of-bounds neighbors carry 0.
    pub neighbor_weights: [f64; 8],
    pub center_weight: f64,
}

/// 8-neighborhood weights of pixel `x` with an absolute-value normalizer.
pub fn affinity_2d(features: &FeatureMap, x: usize) -> AffinityWeights2D {
    let (h, w) = (features.height() as isize, features.width() as isize);
    let (row, col) = ((x as isize) / w, (x as isize) % w);
    let mut dots = [0.0; 8];
    let mut denom = 0.0;
    for (slot, &(dr, dc)) in NEIGHBOR_OFFSETS.iter().enumerate() {
        let (r, c) = (row + dr, col + dc);
        if r < 0 || c < 0 || r >= h || c >= w {
            continue;
        }
        let d = features.dot((r * w + c) as usize, x);
        dots[slot] = d;
        denom += d.abs();
    }
    if denom < DEGENERATE_DENOMINATOR {
        return AffinityWeights2D {
            neighbor_weights: [0.0; 8],
            center_weight: 1.0,
        };
    }
    let neighbor_weights = dots.map(|d| d / denom);
    AffinityWeights2D {
        neighbor_weights,
        center_weight: 1.0 - neighbor_weights.iter().sum::<f64>(),
    }
}

/// `affinity_2d` for every pixel.
pub fn affinity_2d_field(features: &FeatureMap) -> Vec<AffinityWeights2D> {
    (0..features.height() * features.width())
        .into_par_iter()
        .map(|x| affinity_2d(features, x))
        .collect()
}

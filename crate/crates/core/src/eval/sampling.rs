//! Sparse-pattern generators: random sampling, Harris corners, pseudo holes.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filter;
use crate::raster::{Raster, SparseDepth};

/// Random sampling rate used for benchmarks without raw depth.
pub const RANDOM_RATE_STANDARD: f64 = 0.01;
/// Lower-density random pattern for robustness sweeps.
pub const RANDOM_RATE_SPARSE: f64 = 0.001;

pub const HARRIS_K: f64 = 0.04;

/// Keeps `round(rate · |valid|)` ground-truth pixels chosen uniformly without replacement.
pub fn sample_random(gt: &Raster, rate: f64, seed: u64) -> Result<SparseDepth> {
    gt.ensure_single_channel("ground truth")?;
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Value(format!("sampling rate must lie in (0, 1], got {rate}")));
    }
    let valid: Vec<usize> = (0..gt.pixel_count()).filter(|&i| gt.data()[i] > 0.0).collect();
    if valid.is_empty() {
        return Err(Error::Value("ground truth has no valid pixels".into()));
    }
    let count = ((rate * valid.len() as f64).round() as usize).min(valid.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; gt.pixel_count()];
    for k in index::sample(&mut rng, valid.len(), count) {
        let i = valid[k];
        data[i] = gt.data()[i];
    }
    SparseDepth::new(Raster::new(gt.height(), gt.width(), 1, data)?)
}

fn luminance(img: &Raster) -> Result<Vec<f64>> {
    match img.channels() {
        1 => Ok(img.data().to_vec()),
        3 => Ok(img
            .data()
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect()),
        c => Err(Error::Value(format!("expected 1 or 3 image channels, got {c}"))),
    }
}

/// Harris response `det(M) − 0.04 tr(M)²` with Sobel gradients and a 3×3
/// binomial window.
pub fn harris_response(img: &Raster) -> Result<Vec<f64>> {
    let (h, w) = (img.height(), img.width());
    let lum = luminance(img)?;
    let (gx, gy) = filter::sobel(&lum, h, w);
    let win = [0.25, 0.5, 0.25];
    let smooth = |v: Vec<f64>| filter::separable(&v, h, w, &win, &win);
    let sxx = smooth(gx.iter().map(|g| g * g).collect());
    let syy = smooth(gy.iter().map(|g| g * g).collect());
    let sxy = smooth(gx.iter().zip(&gy).map(|(a, b)| a * b).collect());
    Ok((0..h * w)
        .map(|i| {
            let tr = sxx[i] + syy[i];
            sxx[i] * syy[i] - sxy[i] * sxy[i] - HARRIS_K * tr * tr
        })
        .collect())
}

/// Positive 3×3 local maxima; equal responses resolve to the lower index.
pub fn harris_corners(response: &[f64], height: usize, width: usize) -> Vec<usize> {
    let (h, w) = (height as isize, width as isize);
    (0..response.len())
        .filter(|&i| {
            let v = response[i];
            if v <= 0.0 {
                return false;
            }
            let (r, c) = (i as isize / w, i as isize % w);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (rr, cc) = (r + dr, c + dc);
                    if (dr == 0 && dc == 0) || rr < 0 || cc < 0 || rr >= h || cc >= w {
                        continue;
                    }
                    let j = (rr * w + cc) as usize;
                    if response[j] > v || (response[j] == v && j < i) {
                        return false;
                    }
                }
            }
            true
        })
        .collect()
}

/// Keeps the `max_points` strongest Harris corners that have valid ground truth.
///
/// Equal responses are ordered by a seeded random key. A textureless image
/// produces an empty map.
pub fn sample_harris(rgb: &Raster, gt: &Raster, max_points: usize, seed: u64) -> Result<SparseDepth> {
    gt.ensure_single_channel("ground truth")?;
    rgb.ensure_dims(gt, "image vs ground truth")?;
    let (h, w) = (gt.height(), gt.width());
    let response = harris_response(rgb)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corners: Vec<(f64, u64, usize)> = harris_corners(&response, h, w)
        .into_iter()
        .filter(|&i| gt.data()[i] > 0.0)
        .map(|i| (response[i], rng.random::<u64>(), i))
        .collect();
    if corners.is_empty() && max_points > 0 {
        log::warn!("no Harris corners found; sparse map is empty");
    }
    corners.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut data = vec![0.0; h * w];
    for &(_, _, i) in corners.iter().take(max_points) {
        data[i] = gt.data()[i];
    }
    SparseDepth::new(Raster::new(h, w, 1, data)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    /// Center column.
    pub cx: f64,
    /// Center row.
    pub cy: f64,
    pub semi_a: f64,
    pub semi_b: f64,
    /// Rotation of the `a` axis from the column axis, radians.
    pub angle: f64,
}

impl Ellipse {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        let (dx, dy) = (col as f64 - self.cx, row as f64 - self.cy);
        let (s, c) = self.angle.sin_cos();
        let u = (dx * c + dy * s) / self.semi_a;
        let v = (-dx * s + dy * c) / self.semi_b;
        u * u + v * v <= 1.0
    }
}

/// Seeded random ellipses with centers inside the frame and semi-axes drawn
/// from `radius_range`.
pub fn pseudo_hole_ellipses(
    height: usize,
    width: usize,
    hole_count: usize,
    radius_range: (f64, f64),
    seed: u64,
) -> Result<Vec<Ellipse>> {
    let (lo, hi) = radius_range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::Value(format!(
            "hole radius range must satisfy 0 < min <= max, got [{lo}, {hi}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..hole_count)
        .map(|_| Ellipse {
            cx: rng.random_range(0.0..width as f64),
            cy: rng.random_range(0.0..height as f64),
            semi_a: rng.random_range(lo..=hi),
            semi_b: rng.random_range(lo..=hi),
            angle: rng.random_range(0.0..std::f64::consts::PI),
        })
        .collect())
}

/// Removes measurements that fall inside seeded random elliptical holes.
pub fn apply_pseudo_holes(
    sparse: &SparseDepth,
    hole_count: usize,
    radius_range: (f64, f64),
    seed: u64,
) -> Result<SparseDepth> {
    let (h, w) = (sparse.height(), sparse.width());
    let holes = pseudo_hole_ellipses(h, w, hole_count, radius_range, seed)?;
    Ok(sparse.retain(|i| !holes.iter().any(|e| e.contains(i / w, i % w))))
}

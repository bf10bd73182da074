//! Dense initialization of sparse depth by iterated normalized Gaussian convolution.
//!
//! Each round, every empty pixel with at least one filled pixel inside its
//! `(2r+1)²` window takes the Gaussian-weighted mean of those pixels. Rounds
//! read only the previous state, so the result does not depend on traversal
//! order. Pixels still empty after `max_rounds` get the mean measured depth.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{Raster, SparseDepth};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrefillParams {
    /// Gaussian width in pixels.
    pub sigma: f64,
    pub kernel_radius: usize,
    pub max_rounds: usize,
}

impl PrefillParams {
    pub fn with_sigma(sigma: f64) -> Self {
        Self {
            sigma,
            kernel_radius: (3.0 * sigma).ceil().max(1.0) as usize,
            max_rounds: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("prefill sigma must be > 0, got {}", self.sigma)));
        }
        if self.max_rounds == 0 {
            return Err(Error::Config("prefill max_rounds must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for PrefillParams {
    fn default() -> Self {
        Self::with_sigma(2.0)
    }
}

pub fn prefill_gaussian(sparse: &SparseDepth, params: &PrefillParams) -> Result<Raster> {
    params.validate()?;
    let measured = sparse.measured_indices();
    if measured.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (h, w) = (sparse.height(), sparse.width());
    let r = params.kernel_radius as isize;
    let inv_two_sigma2 = 1.0 / (2.0 * params.sigma * params.sigma);
    let kernel: Vec<(isize, isize, f64)> = (-r..=r)
        .flat_map(|dr| (-r..=r).map(move |dc| (dr, dc)))
        .filter(|&(dr, dc)| dr != 0 || dc != 0)
        .map(|(dr, dc)| (dr, dc, (-((dr * dr + dc * dc) as f64) * inv_two_sigma2).exp()))
        .collect();

    let mut values = sparse.raster().data().to_vec();
    let mut filled: Vec<bool> = values.iter().map(|&v| v > 0.0).collect();
    let mut remaining = filled.iter().filter(|&&f| !f).count();

    let mut rounds = 0;
    while remaining > 0 && rounds < params.max_rounds {
        let next: Vec<Option<f64>> = (0..h * w)
            .into_par_iter()
            .map(|i| {
                if filled[i] {
                    return None;
                }
                let (row, col) = ((i / w) as isize, (i % w) as isize);
                let (mut num, mut den) = (0.0, 0.0);
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for &(dr, dc, wt) in &kernel {
                    let (rr, cc) = (row + dr, col + dc);
                    if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                        continue;
                    }
                    let j = rr as usize * w + cc as usize;
                    if filled[j] {
                        let v = values[j];
                        num += wt * v;
                        den += wt;
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                // Clamp absorbs rounding so the weighted mean stays inside its sources.
                (den > 0.0).then(|| (num / den).clamp(lo, hi))
            })
            .collect();
        for (i, v) in next.into_iter().enumerate() {
            if let Some(v) = v {
                values[i] = v;
                filled[i] = true;
                remaining -= 1;
            }
        }
        rounds += 1;
    }

    if remaining > 0 {
        let mean = measured.iter().map(|&i| sparse.value(i)).sum::<f64>() / measured.len() as f64;
        for (v, f) in values.iter_mut().zip(&filled) {
            if !f {
                *v = mean;
            }
        }
    }
    Ok(Raster::from_parts(h, w, 1, values))
}

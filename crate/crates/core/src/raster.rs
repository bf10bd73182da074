//! Dense rasters and sparse depth maps.
//!
//! A [`Raster`] is an `H×W×C` row-major, channel-interleaved grid of `f64`.
//! Every public constructor rejects NaN and infinities, so downstream code can
//! assume finite values. A [`SparseDepth`] is a single-channel raster in
//! meters where `0.0` marks a missing measurement.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Value(format!(
                "raster dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} values for {height}x{width}x{channels}, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Value(format!(
                "non-finite value {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, 0.0)
    }

    /// Builds a raster by evaluating `f(row, col, channel)` in storage order.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for row in 0..height {
            for col in 0..width {
                for ch in 0..channels {
                    data.push(f(row, col, ch));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    /// Internal constructor for buffers that are finite by construction.
    pub(crate) fn from_parts(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flat pixel index of `(row, col)`.
    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// Value of a single-channel raster at `(row, col)`.
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.get(row, col, 0)
    }

    /// All channels of the pixel at flat index `idx`.
    #[inline]
    pub fn pixel(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    pub fn channel(&self, channel: usize) -> Result<Raster> {
        if channel >= self.channels {
            return Err(Error::Value(format!(
                "channel {channel} out of range for {} channels",
                self.channels
            )));
        }
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px[channel])
            .collect();
        Ok(Raster::from_parts(self.height, self.width, 1, data))
    }

    pub fn same_dims(&self, other: &Raster) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn ensure_dims(&self, other: &Raster, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )))
        }
    }

    pub(crate) fn ensure_single_channel(&self, what: &str) -> Result<()> {
        if self.channels == 1 {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what} must be single-channel, got {} channels",
                self.channels
            )))
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Single-channel metric depth with `0.0` as the missing-measurement sentinel.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseDepth {
    raster: Raster,
}

impl SparseDepth {
    /// Wraps a raster, rejecting multi-channel input and negative depths.
    pub fn new(raster: Raster) -> Result<Self> {
        raster.ensure_single_channel("sparse depth")?;
        if let Some(pos) = raster.data.iter().position(|&v| v < 0.0) {
            return Err(Error::Value(format!(
                "negative depth {} at pixel {pos}",
                raster.data[pos]
            )));
        }
        Ok(Self { raster })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        Self::new(Raster::zeros(height, width, 1)?)
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn into_raster(self) -> Raster {
        self.raster
    }

    pub fn height(&self) -> usize {
        self.raster.height
    }

    pub fn width(&self) -> usize {
        self.raster.width
    }

    #[inline]
    pub fn value(&self, idx: usize) -> f64 {
        self.raster.data[idx]
    }

    #[inline]
    pub fn is_measured(&self, idx: usize) -> bool {
        self.raster.data[idx] > 0.0
    }

    /// Flat indices of measured pixels in row-major order.
    pub fn measured_indices(&self) -> Vec<usize> {
        self.raster
            .data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn measured_count(&self) -> usize {
        self.raster.data.iter().filter(|&&v| v > 0.0).count()
    }

    /// Returns a copy with every measurement whose flag is false removed.
    pub fn retain(&self, mut keep: impl FnMut(usize) -> bool) -> SparseDepth {
        let data = self
            .raster
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| if v > 0.0 && keep(i) { v } else { 0.0 })
            .collect();
        SparseDepth {
            raster: Raster::from_parts(self.raster.height, self.raster.width, 1, data),
        }
    }
}

/// Interprets a single-channel raster as sparse depth.
pub fn to_sparse(raster: Raster) -> Result<SparseDepth> {
    SparseDepth::new(raster)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let err = Raster::new(1, 2, 1, vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::Value(_)));
        let err = Raster::new(1, 2, 1, vec![f64::INFINITY, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Value(_)));
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(matches!(
            Raster::new(2, 2, 1, vec![0.0; 3]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn interleaved_layout() {
        let r = Raster::from_fn(2, 3, 2, |row, col, ch| (row * 100 + col * 10 + ch) as f64).unwrap();
        assert_eq!(r.get(1, 2, 1), 121.0);
        assert_eq!(r.pixel(r.index(1, 0)), &[100.0, 101.0]);
        assert_eq!(r.channel(1).unwrap().at(0, 2), 21.0);
    }

    #[test]
    fn sparse_all_zero_is_empty() {
        let s = to_sparse(Raster::zeros(4, 4, 1).unwrap()).unwrap();
        assert_eq!(s.measured_count(), 0);
        assert!(s.measured_indices().is_empty());
    }

    #[test]
    fn sparse_single_measurement() {
        let mut data = vec![0.0; 9];
        data[4] = 3.0;
        let s = to_sparse(Raster::new(3, 3, 1, data).unwrap()).unwrap();
        assert_eq!(s.measured_indices(), vec![4]);
    }

    #[test]
    fn sparse_rejects_negative() {
        let r = Raster::new(1, 2, 1, vec![1.0, -0.5]).unwrap();
        assert!(matches!(to_sparse(r), Err(Error::Value(_))));
    }

    #[test]
    fn sparse_rejects_multichannel() {
        let r = Raster::zeros(2, 2, 3).unwrap();
        assert!(matches!(to_sparse(r), Err(Error::Dimension(_))));
    }

    #[test]
    fn measured_count_matches_independent_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let data: Vec<f64> = (0..400)
                .map(|_| if rng.random_bool(0.2) { rng.random_range(0.1..10.0) } else { 0.0 })
                .collect();
            let mut expected = 0;
            for v in &data {
                if *v > 0.0 {
                    expected += 1;
                }
            }
            let s = to_sparse(Raster::new(20, 20, 1, data).unwrap()).unwrap();
            assert_eq!(s.measured_count(), expected);
            assert_eq!(s.measured_indices().len(), expected);
        }
    }
}

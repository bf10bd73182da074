//! Small separable filters on single-plane images with replicated borders.

#[inline]
fn clamp_idx(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Correlates `plane` (row-major `h×w`) with a separable odd-length kernel.
pub(crate) fn separable(plane: &[f64], h: usize, w: usize, kx: &[f64], ky: &[f64]) -> Vec<f64> {
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = kx
                .iter()
                .enumerate()
                .map(|(i, k)| k * plane[r * w + clamp_idx(c as isize + i as isize - rx, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = ky
                .iter()
                .enumerate()
                .map(|(i, k)| k * tmp[clamp_idx(r as isize + i as isize - ry, h) * w + c])
                .sum();
        }
    }
    out
}

pub(crate) fn gaussian_blur(plane: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    separable(plane, h, w, &k, &k)
}

/// Sobel derivatives `(d/dx, d/dy)`.
pub(crate) fn sobel(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let gx = separable(plane, h, w, &[-1.0, 0.0, 1.0], &[1.0, 2.0, 1.0]);
    let gy = separable(plane, h, w, &[1.0, 2.0, 1.0], &[-1.0, 0.0, 1.0]);
    (gx, gy)
}

//! Structural similarity on luma with an 11×11 Gaussian window (σ = 1.5),
//! averaged over every window position fully inside the image.

use crate::error::{Error, Result};
use crate::haze::Image;
use crate::par;

use super::psnr::check_pair;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Dynamic range of the stored intensities.
pub const SSIM_RANGE: f64 = 1.0;

pub fn ssim_constants() -> (f64, f64) {
    ((SSIM_K1 * SSIM_RANGE).powi(2), (SSIM_K2 * SSIM_RANGE).powi(2))
}

/// Normalized 1-d Gaussian taps; the 2-d window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size - 1) as f64 / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" filtering of a `w×h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; ow * h];
    par::for_each_chunk_mut(&mut rows, ow, |y, row| {
        let src = &plane[y * w..(y + 1) * w];
        for (x, o) in row.iter_mut().enumerate() {
            *o = taps.iter().zip(&src[x..x + k]).map(|(t, v)| t * v).sum();
        }
    });
    let mut out = vec![0.0; ow * oh];
    par::for_each_chunk_mut(&mut out, ow, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[(y + i) * ow + x])
                .sum();
        }
    });
    out
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_pair(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w.min(h) < SSIM_WINDOW {
        return Err(Error::Contract(format!(
            "ssim needs at least {SSIM_WINDOW}×{SSIM_WINDOW} pixels, got {w}×{h}"
        )));
    }
    let (x, y) = (a.luma(), b.luma());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let [mx, my, exx, eyy, exy] = [&x, &y, &xx, &yy, &xy].map(|p| filter_valid(p, w, h, &taps));
    let (c1, c2) = ssim_constants();
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mx[i], my[i]);
            let va = exx[i] - ma * ma;
            let vb = eyy[i] - mb * mb;
            let cov = exy[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}

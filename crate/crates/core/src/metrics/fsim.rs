//! Feature similarity (FSIM) on luma.
//!
//! Phase congruency comes from a 4-scale × 4-orientation log-Gabor bank
//! applied in the frequency domain with the noise compensation of Kovesi's
//! `phasecong2`; gradient magnitude uses the 3×3 Scharr pair. Intensities
//! are taken on the 0–255 scale so that `T2 = 160` has its usual meaning.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::Result;
use crate::haze::Image;

use super::psnr::check_pair;

pub const FSIM_T1: f64 = 0.85;
pub const FSIM_T2: f64 = 160.0;

const NSCALE: usize = 4;
const NORIENT: usize = 4;
const MIN_WAVELENGTH: f64 = 6.0;
const MULT: f64 = 2.0;
const SIGMA_ON_F: f64 = 0.55;
const D_THETA_ON_SIGMA: f64 = 1.2;
const NOISE_K: f64 = 2.0;
const EPSILON: f64 = 1e-4;

/// Row-major `rows × cols` plane.
#[derive(Debug, Clone)]
struct Plane {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Plane {
    fn at(&self, r: isize, c: isize) -> f64 {
        if r < 0 || c < 0 || r as usize >= self.rows || c as usize >= self.cols {
            0.0
        } else {
            self.data[r as usize * self.cols + c as usize]
        }
    }
}

fn fft2(buf: &mut [Complex64], rows: usize, cols: usize, inverse: bool, planner: &mut FftPlanner<f64>) {
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(cols), planner.plan_fft_inverse(rows))
    } else {
        (planner.plan_fft_forward(cols), planner.plan_fft_forward(rows))
    };
    for row in buf.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    let mut column = vec![Complex64::default(); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = buf[r * cols + c];
        }
        col_fft.process(&mut column);
        for r in 0..rows {
            buf[r * cols + c] = column[r];
        }
    }
    if inverse {
        let scale = 1.0 / (rows * cols) as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Frequency coordinates of a length-`n` axis, already moved to DFT order
/// (the `ifftshift` of the centred range).
fn freq_axis(n: usize) -> Vec<f64> {
    let centred: Vec<f64> = if n % 2 == 1 {
        let half = (n as f64 - 1.0) / 2.0;
        let denom = (n as f64 - 1.0).max(1.0);
        (0..n).map(|i| (i as f64 - half) / denom).collect()
    } else {
        (0..n).map(|i| (i as f64 - (n / 2) as f64) / n as f64).collect()
    };
    (0..n).map(|i| centred[(i + n / 2) % n]).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn phase_congruency(im: &Plane, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let (rows, cols) = (im.rows, im.cols);
    let npix = rows * cols;
    let mut image_fft: Vec<Complex64> = im.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut image_fft, rows, cols, false, planner);

    let (fx, fy) = (freq_axis(cols), freq_axis(rows));
    let mut radius = vec![0.0; npix];
    let mut sin_t = vec![0.0; npix];
    let mut cos_t = vec![0.0; npix];
    let mut lowpass = vec![0.0; npix];
    for r in 0..rows {
        for c in 0..cols {
            let (x, y) = (fx[c], fy[r]);
            let rad = (x * x + y * y).sqrt();
            let theta = (-y).atan2(x);
            let i = r * cols + c;
            lowpass[i] = 1.0 / (1.0 + (rad / 0.45).powi(30));
            radius[i] = rad;
            sin_t[i] = theta.sin();
            cos_t[i] = theta.cos();
        }
    }
    radius[0] = 1.0;

    let log_gabor: Vec<Vec<f64>> = (0..NSCALE)
        .map(|s| {
            let fo = 1.0 / (MIN_WAVELENGTH * MULT.powi(s as i32));
            let denom = 2.0 * SIGMA_ON_F.ln().powi(2);
            let mut g: Vec<f64> = radius
                .iter()
                .zip(&lowpass)
                .map(|(&rad, &lp)| (-(rad / fo).ln().powi(2) / denom).exp() * lp)
                .collect();
            g[0] = 0.0;
            g
        })
        .collect();

    let theta_sigma = PI / NORIENT as f64 / D_THETA_ON_SIGMA;
    let sqrt_n = (npix as f64).sqrt();
    let mut energy_all = vec![0.0; npix];
    let mut an_all = vec![0.0; npix];
    let mut eo: Vec<Vec<Complex64>> = vec![Vec::new(); NSCALE];
    let mut ifft_filters: Vec<Vec<f64>> = vec![Vec::new(); NSCALE];

    for o in 0..NORIENT {
        let angle = o as f64 * PI / NORIENT as f64;
        let (sa, ca) = angle.sin_cos();
        let spread: Vec<f64> = sin_t
            .iter()
            .zip(&cos_t)
            .map(|(&st, &ct)| {
                let ds = st * ca - ct * sa;
                let dc = ct * ca + st * sa;
                let dtheta = ds.atan2(dc).abs();
                (-dtheta * dtheta / (2.0 * theta_sigma * theta_sigma)).exp()
            })
            .collect();

        let mut sum_e = vec![0.0; npix];
        let mut sum_o = vec![0.0; npix];
        let mut sum_an = vec![0.0; npix];
        let mut em_n = 0.0;
        for s in 0..NSCALE {
            let filter: Vec<f64> = log_gabor[s].iter().zip(&spread).map(|(g, sp)| g * sp).collect();
            let mut spatial: Vec<Complex64> = filter.iter().map(|&f| Complex64::new(f, 0.0)).collect();
            fft2(&mut spatial, rows, cols, true, planner);
            ifft_filters[s] = spatial.iter().map(|v| v.re * sqrt_n).collect();

            let mut resp: Vec<Complex64> =
                image_fft.iter().zip(&filter).map(|(v, &f)| v * f).collect();
            fft2(&mut resp, rows, cols, true, planner);
            for i in 0..npix {
                sum_an[i] += resp[i].norm();
                sum_e[i] += resp[i].re;
                sum_o[i] += resp[i].im;
            }
            if s == 0 {
                em_n = filter.iter().map(|f| f * f).sum();
            }
            eo[s] = resp;
        }

        let mut energy = vec![0.0; npix];
        for i in 0..npix {
            let x_energy = (sum_e[i].powi(2) + sum_o[i].powi(2)).sqrt() + EPSILON;
            let (mean_e, mean_o) = (sum_e[i] / x_energy, sum_o[i] / x_energy);
            for resp in &eo {
                let (e, od) = (resp[i].re, resp[i].im);
                energy[i] += e * mean_e + od * mean_o - (e * mean_o - od * mean_e).abs();
            }
        }

        let median_e2n = median(eo[0].iter().map(|v| v.norm_sqr()).collect());
        let mean_e2n = -median_e2n / 0.5f64.ln();
        let noise_power = if em_n > 0.0 { mean_e2n / em_n } else { 0.0 };
        let mut sum_an2 = 0.0;
        let mut sum_ai_aj = 0.0;
        for i in 0..npix {
            for s in 0..NSCALE {
                sum_an2 += ifft_filters[s][i].powi(2);
                for t in s + 1..NSCALE {
                    sum_ai_aj += ifft_filters[s][i] * ifft_filters[t][i];
                }
            }
        }
        let est_noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_ai_aj;
        let tau = (est_noise_energy2 / 2.0).max(0.0).sqrt();
        let est_noise_energy = tau * (PI / 2.0).sqrt();
        let est_noise_sigma = ((2.0 - PI / 2.0) * tau * tau).sqrt();
        let threshold = (est_noise_energy + NOISE_K * est_noise_sigma) / 1.7;

        for i in 0..npix {
            energy_all[i] += (energy[i] - threshold).max(0.0);
            an_all[i] += sum_an[i];
        }
    }

    energy_all
        .iter()
        .zip(&an_all)
        .map(|(&e, &a)| if a > 0.0 { e / a } else { 0.0 })
        .collect()
}

/// 3×3 Scharr gradient magnitude with zero padding.
fn gradient_magnitude(im: &Plane) -> Vec<f64> {
    const DX: [[f64; 3]; 3] = [[3.0, 0.0, -3.0], [10.0, 0.0, -10.0], [3.0, 0.0, -3.0]];
    const DY: [[f64; 3]; 3] = [[3.0, 10.0, 3.0], [0.0, 0.0, 0.0], [-3.0, -10.0, -3.0]];
    let mut out = Vec::with_capacity(im.rows * im.cols);
    for r in 0..im.rows as isize {
        for c in 0..im.cols as isize {
            let (mut gx, mut gy) = (0.0, 0.0);
            for u in 0..3 {
                for v in 0..3 {
                    // true convolution: the kernel is flipped
                    let p = im.at(r + 1 - u as isize, c + 1 - v as isize);
                    gx += DX[u][v] * p;
                    gy += DY[u][v] * p;
                }
            }
            out.push(((gx / 16.0).powi(2) + (gy / 16.0).powi(2)).sqrt());
        }
    }
    out
}

/// Luma on the 0–255 scale, box-averaged and decimated by the factor
/// `max(1, round(min(H, W) / 256))`.
fn prepared_luma(img: &Image) -> Plane {
    let (rows, cols) = (img.height(), img.width());
    let full = Plane {
        rows,
        cols,
        data: img.luma().into_iter().map(|v| v * 255.0).collect(),
    };
    let f = ((rows.min(cols) as f64 / 256.0).round() as usize).max(1);
    if f == 1 {
        return full;
    }
    let off = (f / 2) as isize;
    let norm = (f * f) as f64;
    let mut data = Vec::new();
    let (mut out_rows, mut out_cols) = (0, 0);
    for r in (0..rows).step_by(f) {
        out_rows += 1;
        out_cols = 0;
        for c in (0..cols).step_by(f) {
            out_cols += 1;
            let mut acc = 0.0;
            for u in 0..f as isize {
                for v in 0..f as isize {
                    acc += full.at(r as isize + off - u, c as isize + off - v);
                }
            }
            data.push(acc / norm);
        }
    }
    Plane {
        rows: out_rows,
        cols: out_cols,
        data,
    }
}

pub fn fsim(a: &Image, b: &Image) -> Result<f64> {
    check_pair(a, b)?;
    let (ya, yb) = (prepared_luma(a), prepared_luma(b));
    let mut planner = FftPlanner::new();
    let pc1 = phase_congruency(&ya, &mut planner);
    let pc2 = phase_congruency(&yb, &mut planner);
    let g1 = gradient_magnitude(&ya);
    let g2 = gradient_magnitude(&yb);

    let (mut num, mut den, mut unweighted) = (0.0, 0.0, 0.0);
    for i in 0..pc1.len() {
        let pc_sim = (2.0 * pc1[i] * pc2[i] + FSIM_T1) / (pc1[i].powi(2) + pc2[i].powi(2) + FSIM_T1);
        let g_sim = (2.0 * g1[i] * g2[i] + FSIM_T2) / (g1[i].powi(2) + g2[i].powi(2) + FSIM_T2);
        let pcm = pc1[i].max(pc2[i]);
        num += g_sim * pc_sim * pcm;
        den += pcm;
        unweighted += g_sim * pc_sim;
    }
    // Featureless pairs (no phase congruency anywhere) fall back to an
    // unweighted mean of the similarity map.
    if den > 0.0 {
        Ok(num / den)
    } else {
        Ok(unweighted / pc1.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn textured(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = RngStream::from_seed(seed);
        let phase = rng.uniform(0.0, 6.0);
        Image::from_fn(w, h, 3, |x, y, c| {
            let v = 0.5
                + 0.3 * ((x as f64 * 0.4 + phase).sin() * (y as f64 * 0.25).cos())
                + 0.1 * if (x / 5 + y / 7) % 2 == 0 { 1.0 } else { -1.0 }
                + 0.02 * c as f64;
            v + 0.05 * rng_like(x, y, seed)
        })
        .unwrap()
    }

    fn rng_like(x: usize, y: usize, seed: u64) -> f64 {
        let h = crate::rng::hash_str(&format!("{x},{y},{seed}"));
        (h % 1000) as f64 / 1000.0 - 0.5
    }

    #[test]
    fn freq_axis_matches_ifftshift() {
        assert_eq!(freq_axis(4), vec![0.0, 0.25, -0.5, -0.25]);
        assert_eq!(freq_axis(5), vec![0.0, 0.25, 0.5, -0.5, -0.25]);
    }

    #[test]
    fn identity_is_one() {
        let a = textured(40, 33, 1);
        assert!((fsim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_bounded_and_flip_invariant() {
        let a = textured(41, 35, 2);
        let b = textured(41, 35, 3);
        let s = fsim(&a, &b).unwrap();
        assert!((0.0..=1.0).contains(&s) && s < 1.0);
        assert!((s - fsim(&b, &a).unwrap()).abs() < 1e-12);
        let f = fsim(&a.flip_horizontal(), &b.flip_horizontal()).unwrap();
        assert!((s - f).abs() < 1e-9, "{s} vs {f}");
    }

    #[test]
    fn degradation_lowers_score() {
        let a = textured(48, 48, 4);
        let mild = Image::new(48, 48, 3, a.data().iter().map(|v| 0.9 * v + 0.05).collect()).unwrap();
        let heavy = Image::new(48, 48, 3, a.data().iter().map(|v| 0.3 * v + 0.6).collect()).unwrap();
        let (sm, sh) = (fsim(&a, &mild).unwrap(), fsim(&a, &heavy).unwrap());
        assert!(sm > sh, "{sm} {sh}");
    }

    #[test]
    fn decimates_large_inputs() {
        let a = Image::constant(400, 384, 1, 0.5).unwrap();
        let p = prepared_luma(&a);
        assert_eq!((p.rows, p.cols), (192, 200));
        assert!((p.data[p.cols * 10 + 10] - 127.5).abs() < 1e-9);
    }

    #[test]
    fn constant_pair_is_finite() {
        let a = Image::constant(16, 16, 1, 0.2).unwrap();
        let b = Image::constant(16, 16, 1, 0.7).unwrap();
        let s = fsim(&a, &b).unwrap();
        assert!(s.is_finite() && (0.0..=1.0).contains(&s));
    }
}

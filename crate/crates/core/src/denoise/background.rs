// SPDX-License-Identifier: Apache-2.0

//! Background image denoisers: identity, or a radial low-pass in the
//! discrete Fourier domain.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::data::BackgroundImage;

pub fn identity_background(b: &BackgroundImage) -> BackgroundImage {
    b.clone()
}

/// Signed frequency of DFT index `k` out of `n`, in cycles per sample.
fn freq(k: usize, n: usize) -> f64 {
    let k = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    k / n as f64
}

/// Radial raised-cosine mask on the `rows x cols` DFT grid.
///
/// Radius is normalised so that 1 is the corner of the spectrum
/// (`|f| = sqrt(2) / 2`). The mask is 1 up to `cutoff`, then falls to 0
/// over a half-cosine of width `cutoff / 2`. `cutoff = 1` passes everything.
pub fn raised_cosine_mask(rows: usize, cols: usize, cutoff: f64) -> Vec<f64> {
    assert!(cutoff > 0.0 && cutoff <= 1.0, "cutoff must be in (0, 1]");
    let rho_max = 0.5 * std::f64::consts::SQRT_2;
    let width = 0.5 * cutoff;
    let mut mask = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let fy = freq(i, rows);
        for j in 0..cols {
            let fx = freq(j, cols);
            let rho = (fx * fx + fy * fy).sqrt() / rho_max;
            let m = if rho <= cutoff {
                1.0
            } else if rho < cutoff + width {
                0.5 * (1.0 + (std::f64::consts::PI * (rho - cutoff) / width).cos())
            } else {
                0.0
            };
            mask.push(m);
        }
    }
    mask
}

/// Row-major low-pass without clamping; linear in `values`.
pub fn fft_lowpass(values: &[f64], rows: usize, cols: usize, cutoff: f64) -> Vec<f64> {
    assert_eq!(values.len(), rows * cols);
    let mask = raised_cosine_mask(rows, cols, cutoff);
    if mask.iter().all(|m| *m == 1.0) {
        return values.to_vec();
    }
    let mut data: Vec<Complex<f64>> = values.iter().map(|v| Complex::new(*v, 0.0)).collect();
    fft2(&mut data, rows, cols, false);
    for (d, m) in data.iter_mut().zip(&mask) {
        *d *= *m;
    }
    fft2(&mut data, rows, cols, true);
    let scale = 1.0 / (rows * cols) as f64;
    data.iter().map(|c| c.re * scale).collect()
}

fn fft2(data: &mut [Complex<f64>], rows: usize, cols: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(cols), planner.plan_fft_inverse(rows))
    } else {
        (planner.plan_fft_forward(cols), planner.plan_fft_forward(rows))
    };
    for row in data.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); rows];
    for j in 0..cols {
        for i in 0..rows {
            column[i] = data[i * cols + j];
        }
        col_fft.process(&mut column);
        for i in 0..rows {
            data[i * cols + j] = column[i];
        }
    }
}

/// Low-pass filtered background, negatives clamped to 0.
pub fn fft_background_denoise(b: &BackgroundImage, cutoff: f64) -> BackgroundImage {
    let out = fft_lowpass(b.values(), b.n_rows(), b.n_cols(), cutoff);
    let out = out.into_iter().map(|v| v.max(0.0)).collect();
    BackgroundImage::from_values(b.n_rows(), b.n_cols(), out).expect("clamped values are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_unchanged() {
        let b = BackgroundImage::constant(8, 6, 0.7);
        let out = fft_background_denoise(&b, 0.3);
        for v in out.values() {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn full_cutoff_is_identity() {
        let vals: Vec<f64> = (0..35).map(|k| ((k * 13) % 7) as f64).collect();
        let b = BackgroundImage::from_values(5, 7, vals).unwrap();
        let out = fft_background_denoise(&b, 1.0);
        for (a, c) in b.values().iter().zip(out.values()) {
            assert!((a - c).abs() < 1e-12);
        }
        assert!(raised_cosine_mask(5, 7, 1.0).iter().all(|m| *m == 1.0));
    }

    #[test]
    fn mask_is_monotone_in_radius() {
        let mask = raised_cosine_mask(16, 16, 0.4);
        assert_eq!(mask[0], 1.0);
        assert_eq!(mask[8 * 16 + 8], 0.0);
        let diag: Vec<f64> = (0..=8).map(|k| mask[k * 16 + k]).collect();
        assert!(diag.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn identity_is_bitwise() {
        let b = BackgroundImage::from_values(2, 2, vec![0.1, 0.2, 0.3, 0.0]).unwrap();
        assert_eq!(identity_background(&b), b);
    }
}

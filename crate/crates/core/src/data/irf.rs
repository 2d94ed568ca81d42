// SPDX-License-Identifier: Apache-2.0

//! Sampled instrumental response function.
//!
//! The response is stored on a uniform grid in bin units together with a
//! derivative sample per node. Between nodes it is evaluated by cubic
//! Hermite interpolation, so `h` is continuously differentiable and the
//! value returned by [`Irf::eval_with_deriv`] is the exact derivative of
//! [`Irf::eval`]. Node derivatives are central differences, limited
//! (Fritsch-Carlson) so that the interpolant never overshoots below zero.
//! At the nodes the interpolant reproduces the samples exactly, and its
//! integral equals `step * sum(samples)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Irf {
    start: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    peak: f64,
}

impl Irf {
    /// Builds a response from nonnegative samples at `start + k * step`
    /// (bin units). Samples are rescaled to unit mass and padded with one
    /// zero node on each side so the support ends flat.
    pub fn from_samples(start: f64, step: f64, samples: &[f64]) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() || !start.is_finite() {
            return Err(Error::argument("irf grid step must be positive and finite"));
        }
        if samples.is_empty() {
            return Err(Error::argument("irf needs at least one sample"));
        }
        if samples.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::argument("irf samples must be finite and >= 0"));
        }
        let sum: f64 = samples.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::argument("irf samples sum to zero"));
        }
        let scale = 1.0 / (sum * step);
        let mut values = Vec::with_capacity(samples.len() + 2);
        values.push(0.0);
        values.extend(samples.iter().map(|v| v * scale));
        values.push(0.0);
        let slopes = limited_slopes(&values, step);
        let peak = values.iter().cloned().fold(0.0, f64::max);
        Ok(Irf {
            start: start - step,
            step,
            values,
            slopes,
            peak,
        })
    }

    /// Gaussian pulse with standard deviation `sigma` bins, truncated at
    /// `half_width` standard deviations and sampled every `step` bins.
    pub fn gaussian(sigma: f64, step: f64, half_width: f64) -> Result<Self> {
        if !(sigma > 0.0) || !(half_width > 0.0) {
            return Err(Error::argument("gaussian irf needs sigma > 0 and half_width > 0"));
        }
        let reach = sigma * half_width;
        let n = (reach / step).ceil() as i64;
        let samples: Vec<f64> = (-n..=n)
            .map(|k| {
                let x = k as f64 * step / sigma;
                (-0.5 * x * x).exp()
            })
            .collect();
        Irf::from_samples(-(n as f64) * step, step, &samples)
    }

    /// Single-node response with all of its mass at offset 0; it is zero
    /// one bin away on either side.
    pub fn delta() -> Self {
        Irf::from_samples(0.0, 1.0, &[1.0]).expect("valid delta irf")
    }

    /// Closed support `[lo, hi]` in bins; `h` is zero outside.
    pub fn support(&self) -> (f64, f64) {
        (self.start, self.start + self.step * (self.values.len() - 1) as f64)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Node positions, values and derivatives (padding nodes included).
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.slopes)
            .enumerate()
            .map(|(k, (v, d))| (self.start + k as f64 * self.step, *v, *d))
    }

    pub fn samples(&self) -> &[f64] {
        &self.values
    }

    pub fn deriv_samples(&self) -> &[f64] {
        &self.slopes
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn eval(&self, tau: f64) -> f64 {
        self.eval_with_deriv(tau).0
    }

    /// `(h(tau), h'(tau))`.
    #[inline]
    pub fn eval_with_deriv(&self, tau: f64) -> (f64, f64) {
        let u = (tau - self.start) / self.step;
        if !(u >= 0.0) {
            return (0.0, 0.0);
        }
        let k = u.floor() as usize;
        if k + 1 >= self.values.len() {
            // beyond the last node, or exactly on it (which is a zero pad)
            return (0.0, 0.0);
        }
        let s = u - k as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * self.step, self.slopes[k + 1] * self.step);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let v = h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -d00;
        let d11 = 3.0 * s2 - 2.0 * s;
        let d = (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / self.step;
        (v, d)
    }

    /// Integer bins `t` in `[0, n_bins)` with `t - centre` inside the support.
    #[inline]
    pub fn bin_range(&self, centre: f64, n_bins: usize) -> std::ops::Range<usize> {
        let (lo, hi) = self.support();
        let first = (centre + lo).ceil().max(0.0);
        let last = (centre + hi).floor().min(n_bins as f64 - 1.0);
        if !(last >= first) {
            return 0..0;
        }
        first as usize..last as usize + 1
    }

    /// Sum of `h(t - centre)` over the bins of the gate `[0, n_bins)`.
    pub fn mass_in_gate(&self, centre: f64, n_bins: usize) -> f64 {
        self.bin_range(centre, n_bins)
            .map(|t| self.eval(t as f64 - centre))
            .sum()
    }

    /// Gate mass and its derivative with respect to `centre`.
    pub fn mass_in_gate_with_deriv(&self, centre: f64, n_bins: usize) -> (f64, f64) {
        let mut mass = 0.0;
        let mut dmass = 0.0;
        for t in self.bin_range(centre, n_bins) {
            let (h, dh) = self.eval_with_deriv(t as f64 - centre);
            mass += h;
            dmass -= dh;
        }
        (mass, dmass)
    }
}

/// Central differences with Fritsch-Carlson limiting. End nodes are zero
/// pads and get zero slope.
fn limited_slopes(values: &[f64], step: f64) -> Vec<f64> {
    let n = values.len();
    let mut slopes = vec![0.0; n];
    if n < 3 {
        return slopes;
    }
    let secants: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]) / step).collect();
    for k in 1..n - 1 {
        let (a, b) = (secants[k - 1], secants[k]);
        if a * b > 0.0 {
            slopes[k] = 0.5 * (a + b);
        }
    }
    for (k, &d) in secants.iter().enumerate() {
        if d == 0.0 {
            slopes[k] = 0.0;
            slopes[k + 1] = 0.0;
            continue;
        }
        let alpha = slopes[k] / d;
        let beta = slopes[k + 1] / d;
        let r2 = alpha * alpha + beta * beta;
        if r2 > 9.0 {
            let tau = 3.0 / r2.sqrt();
            slopes[k] = tau * alpha * d;
            slopes[k + 1] = tau * beta * d;
        }
    }
    slopes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (hi - lo) / n as f64;
        let mut acc = f(lo) + f(hi);
        for k in 1..n {
            acc += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn unit_mass_and_flat_derivative() {
        let skewed = [0.1, 0.8, 1.0, 0.6, 0.35, 0.2, 0.1, 0.05];
        for irf in [
            Irf::gaussian(2.0, 0.25, 4.0).unwrap(),
            Irf::from_samples(-1.3, 0.5, &skewed).unwrap(),
            Irf::delta(),
        ] {
            let sum: f64 = irf.samples().iter().sum();
            assert!((sum * irf.step() - 1.0).abs() < 1e-12);
            let (lo, hi) = irf.support();
            // piecewise cubic: Simpson per interval is exact
            let cells = irf.samples().len() - 1;
            let integral = simpson(|t| irf.eval(t), lo, hi, cells * 2);
            assert!((integral - 1.0).abs() < 1e-12, "{integral}");
            let d_integral = simpson(|t| irf.eval_with_deriv(t).1, lo, hi, cells * 2);
            assert!(d_integral.abs() < 1e-6, "{d_integral}");
            assert!(irf.samples().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn never_negative_between_nodes() {
        let irf = Irf::from_samples(0.0, 1.0, &[0.0, 5.0, 0.0, 0.0, 3.0, 0.1]).unwrap();
        let (lo, hi) = irf.support();
        let mut t = lo - 1.0;
        while t < hi + 1.0 {
            assert!(irf.eval(t) >= 0.0, "h({t}) < 0");
            t += 0.01;
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let irf = Irf::gaussian(1.7, 0.5, 4.0).unwrap();
        let eps = 1e-6;
        for k in 0..200 {
            let t = -7.0 + k as f64 * 0.0713;
            let fd = (irf.eval(t + eps) - irf.eval(t - eps)) / (2.0 * eps);
            assert!((fd - irf.eval_with_deriv(t).1).abs() < 1e-6);
        }
    }

    #[test]
    fn delta_hits_only_its_node() {
        let irf = Irf::delta();
        assert_eq!(irf.eval(0.0), 1.0);
        assert_eq!(irf.eval(1.0), 0.0);
        assert_eq!(irf.eval(-1.0), 0.0);
        assert_eq!(irf.mass_in_gate(10.0, 32), 1.0);
    }

    #[test]
    fn gate_mass_is_truncated_at_edges() {
        let irf = Irf::gaussian(2.0, 0.25, 4.0).unwrap();
        let inside = irf.mass_in_gate(50.0, 100);
        // integer-bin sum of a smooth pulse, not the integral itself
        assert!((inside - 1.0).abs() < 1e-4, "{inside}");
        let edge = irf.mass_in_gate(0.0, 100);
        assert!((edge - 0.5).abs() < 0.15, "{edge}");
        assert_eq!(irf.mass_in_gate(-100.0, 100), 0.0);
    }

    #[test]
    fn rejects_bad_samples() {
        assert!(Irf::from_samples(0.0, 1.0, &[]).is_err());
        assert!(Irf::from_samples(0.0, 1.0, &[0.0, 0.0]).is_err());
        assert!(Irf::from_samples(0.0, 1.0, &[1.0, -0.1]).is_err());
        assert!(Irf::from_samples(0.0, 0.0, &[1.0]).is_err());
    }
}

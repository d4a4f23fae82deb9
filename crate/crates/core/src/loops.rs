//! Uniformly sampled loops `t ↦ γ(t)`, `t ∈ [0, 1)`: spectral derivatives,
//! Hermite resampling and the C¹ loop distance.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::flow::hermite;

/// `dγ/dt` at the sample points, by differentiating the trigonometric
/// interpolant (Nyquist mode dropped for even `N`).
pub fn spectral_derivative(samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = samples.len();
    if n == 0 {
        return vec![];
    }
    let d = samples[0].len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut out = vec![vec![0.0; d]; n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..d {
        for (b, s) in buf.iter_mut().zip(samples) {
            *b = Complex64::new(s[c], 0.0);
        }
        fwd.process(&mut buf);
        for (k, b) in buf.iter_mut().enumerate() {
            let freq = if 2 * k < n {
                k as f64
            } else if 2 * k == n {
                0.0
            } else {
                k as f64 - n as f64
            };
            *b *= Complex64::new(0.0, 2.0 * std::f64::consts::PI * freq / n as f64);
        }
        inv.process(&mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            o[c] = b.re;
        }
    }
    out
}

/// Evaluate the loop at parameter `t` (taken mod 1) by cubic Hermite
/// interpolation between the bracketing samples.
pub fn evaluate(samples: &[Vec<f64>], derivs: &[Vec<f64>], t: f64) -> Vec<f64> {
    let n = samples.len();
    let u = t.rem_euclid(1.0) * n as f64;
    let k = (u.floor() as usize).min(n - 1);
    let s = u - k as f64;
    if s == 0.0 {
        return samples[k].clone();
    }
    let h = 1.0 / n as f64;
    let j = (k + 1) % n;
    hermite(0.0, &samples[k], &derivs[k], h, &samples[j], &derivs[j], s * h)
}

/// Resample a loop at `m` uniform parameters.
pub fn resample(samples: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
    if m == samples.len() {
        return samples.to_vec();
    }
    let derivs = spectral_derivative(samples);
    (0..m).map(|i| evaluate(samples, &derivs, i as f64 / m as f64)).collect()
}

/// Shift the parametrisation so that sample `k` becomes sample 0.
pub fn rotate(samples: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let n = samples.len();
    (0..n).map(|i| samples[(i + k) % n].clone()).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `min_s [max_i |a(t_i) − b(t_i+s)| + max_i |a'(t_i) − b'(t_i+s)|]` over
/// the cyclic sample shifts `s`, together with the minimizing shift.
///
/// `b` is resampled to the resolution of `a` first. Restricting `s` to the
/// sample lattice keeps the value a pseudometric.
pub fn aligned_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> (f64, usize) {
    let n = a.len();
    let b = resample(b, n);
    let da = spectral_derivative(a);
    let db = spectral_derivative(&b);
    let mut best = (f64::INFINITY, 0);
    for s in 0..n {
        let mut c0 = 0.0f64;
        let mut c1 = 0.0f64;
        for i in 0..n {
            let j = (i + s) % n;
            c0 = c0.max(dist(&a[i], &b[j]));
            c1 = c1.max(dist(&da[i], &db[j]));
            if c0 + c1 >= best.0 {
                break;
            }
        }
        if c0 + c1 < best.0 {
            best = (c0 + c1, s);
        }
    }
    best
}

/// Mean of a periodic sampled function (spectrally accurate trapezoid rule).
pub fn loop_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle(n: usize, r: f64, phase: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let t = 2.0 * PI * (i as f64 / n as f64 + phase);
                vec![r * t.cos(), -r * t.sin()]
            })
            .collect()
    }

    #[test]
    fn derivative_of_circle_is_exact() {
        let c = circle(32, 1.5, 0.0);
        let d = spectral_derivative(&c);
        for (i, v) in d.iter().enumerate() {
            let t = 2.0 * PI * i as f64 / 32.0;
            assert!((v[0] + 1.5 * 2.0 * PI * t.sin()).abs() < 1e-12);
            assert!((v[1] + 1.5 * 2.0 * PI * t.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_of_shifted_and_concentric_circles() {
        let a = circle(64, 1.0, 0.0);
        let b = circle(64, 1.0, 5.0 / 64.0);
        assert!(aligned_distance(&a, &b).0 < 1e-9);
        let delta = 1e-3;
        let c = circle(64, 1.0 + delta, 0.0);
        let (d, _) = aligned_distance(&a, &c);
        assert!((d - delta * (1.0 + 2.0 * PI)).abs() < 1e-9, "{d}");
    }

    #[test]
    fn resample_same_size_is_identity() {
        let a = circle(20, 1.0, 0.1);
        assert_eq!(resample(&a, 20), a);
    }
}

//! Independent reference computations shared by the integration suites.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute force: all cosine/sine coefficients over the full square of wave
/// vectors `|k|_∞ ≤ degree` (redundant pairs kept) plus a constant shift,
/// minimized by accelerated gradient descent on a log-sum-exp cooled by
/// decades from random starts, scored by the exact mesh maximum.
pub fn mane_oracle(degree: i64, grid: usize, restarts: usize) -> f64 {
    let mut ks = vec![];
    for a in -degree..=degree {
        for b in -degree..=degree {
            if a != 0 || b != 0 {
                ks.push((a as f64, b as f64));
            }
        }
    }
    let p = 2 + 2 * ks.len();
    let pts: Vec<(f64, f64)> = (0..grid * grid).map(|i| (2.0 * PI * (i / grid) as f64 / grid as f64, 2.0 * PI * (i % grid) as f64 / grid as f64)).collect();
    // rows: d/dq1 and d/dq2 of each parameter's contribution
    let mut d1 = vec![vec![0.0; p]; pts.len()];
    let mut d2 = vec![vec![0.0; p]; pts.len()];
    for (j, &(x, y)) in pts.iter().enumerate() {
        d1[j][0] = 1.0;
        d2[j][1] = 1.0;
        for (m, &(a, b)) in ks.iter().enumerate() {
            let ph = a * x + b * y;
            d1[j][2 + 2 * m] = -a * ph.sin();
            d2[j][2 + 2 * m] = -b * ph.sin();
            d1[j][3 + 2 * m] = a * ph.cos();
            d2[j][3 + 2 * m] = b * ph.cos();
        }
    }
    let dot = |r: &[f64], t: &[f64]| r.iter().zip(t).map(|(a, b)| a * b).sum::<f64>();
    let energies = |t: &[f64]| -> Vec<(f64, f64, f64)> {
        pts.iter()
            .enumerate()
            .map(|(j, &(x, _))| {
                let b1 = dot(&d1[j], t);
                let b2 = x.sin() + dot(&d2[j], t);
                (0.5 * (b1 * b1 + b2 * b2), b1, b2)
            })
            .collect()
    };
    let smooth = |t: &[f64], mu: f64| -> (f64, Vec<f64>) {
        let es = energies(t);
        let top = es.iter().map(|e| e.0).fold(f64::MIN, f64::max);
        let w: Vec<f64> = es.iter().map(|e| ((e.0 - top) / mu).exp()).collect();
        let z: f64 = w.iter().sum();
        let mut g = vec![0.0; p];
        for (j, (wj, e)) in w.iter().zip(&es).enumerate() {
            let c = wj / z;
            for k in 0..p {
                g[k] += c * (e.1 * d1[j][k] + e.2 * d2[j][k]);
            }
        }
        (top + mu * z.ln(), g)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut best = f64::INFINITY;
    for _ in 0..restarts {
        let mut x: Vec<f64> = (0..p).map(|_| rng.gen_range(-0.05..0.05)).collect();
        for mu in [1e-1, 1e-2, 1e-3, 1e-4] {
            let mut y = x.clone();
            let mut step = 1.0;
            for it in 0..400 {
                let (fy, gy) = smooth(&y, mu);
                let gg: f64 = gy.iter().map(|v| v * v).sum();
                let xn = loop {
                    let cand: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a - step * g).collect();
                    if smooth(&cand, mu).0 <= fy - 0.5 * step * gg || step < 1e-12 {
                        break cand;
                    }
                    step *= 0.5;
                };
                let beta = it as f64 / (it as f64 + 3.0);
                y = xn.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
                x = xn;
                step *= 1.5;
            }
        }
        best = best.min(energies(&x).iter().map(|e| e.0).fold(f64::MIN, f64::max));
    }
    best
}

//! Critical value estimates for mechanical Hamiltonians `½|p|²_{m*} + V(q)`
//! on flat tori twisted by a magnetic form.
//!
//! Primitives on the plane-like cover are `β₀ + ξ·dq + df` with `ξ` constant
//! and `f` a trigonometric polynomial; the sup over the cover reduces to a
//! sup over one fundamental domain, sampled on a uniform mesh.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::expr::Expr;

#[derive(Debug, Clone, PartialEq)]
pub enum MagneticTerm {
    Zero,
    /// Periodic primitive `β₀ = Σ β_i dq_i`, optionally with the declared
    /// form `α_ij = ∂_iβ_j − ∂_jβ_i` to be checked against it.
    Exact { primitive: Vec<Expr>, form: Option<Vec<Vec<Expr>>> },
    /// `B dq1∧dq2` plus an exact part; no periodic primitive exists.
    NonExact { b: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManeProblem {
    pub metric: DMatrix<f64>,
    pub potential: Expr,
    pub alpha: MagneticTerm,
    inverse_metric: DMatrix<f64>,
}

fn sample_torus(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect()).collect()
}

fn check_periodic(e: &Expr, what: &str, samples: &[Vec<f64>]) -> Result<()> {
    if !e.depends_only_on_q() {
        return Err(invalid(format!("{what} must depend on q only")));
    }
    for q in samples {
        let v = e.eval(q)?;
        for i in 0..q.len() {
            let mut s = q.clone();
            s[i] += 2.0 * PI;
            let w = e.eval(&s)?;
            if (v - w).abs() > 1e-9 * (1.0 + v.abs()) {
                return Err(invalid(format!("{what} is not 2π-periodic in q{}", i + 1)));
            }
        }
    }
    Ok(())
}

impl ManeProblem {
    pub fn new(metric: DMatrix<f64>, potential: Expr, alpha: MagneticTerm) -> Result<Self> {
        let n = metric.nrows();
        if n == 0 || metric.ncols() != n {
            return Err(invalid("metric must be a nonempty square matrix"));
        }
        if potential.half_dim() != n {
            return Err(invalid(format!("potential is over {} coordinates, metric over {n}", potential.half_dim())));
        }
        if (&metric - metric.transpose()).amax() > 1e-12 * (1.0 + metric.amax()) {
            return Err(invalid("metric is not symmetric"));
        }
        let chol = metric.clone().cholesky().ok_or_else(|| invalid("metric is not positive definite"))?;
        let samples = sample_torus(n, 16, 0x3a4e);
        check_periodic(&potential, "potential", &samples)?;
        match &alpha {
            MagneticTerm::Zero => {}
            MagneticTerm::Exact { primitive, form } => {
                if primitive.len() != n || primitive.iter().any(|b| b.half_dim() != n) {
                    return Err(invalid(format!("primitive needs {n} components over {n} coordinates")));
                }
                for (i, b) in primitive.iter().enumerate() {
                    check_periodic(b, &format!("primitive component {}", i + 1), &samples)?;
                }
                if let Some(form) = form {
                    if form.len() != n || form.iter().any(|r| r.len() != n) {
                        return Err(invalid("declared form must be n×n"));
                    }
                    let active: Vec<usize> = (0..n).collect();
                    for q in &samples {
                        let grads = primitive.iter().map(|b| b.grad(q, &active)).collect::<Result<Vec<_>>>()?;
                        for i in 0..n {
                            for j in 0..n {
                                let d = grads[j][i] - grads[i][j];
                                let a = form[i][j].eval(q)?;
                                if (d - a).abs() > 1e-10 * (1.0 + a.abs()) {
                                    return Err(invalid(format!("dβ₀ does not match the declared form at ({i}, {j}): {d} vs {a}")));
                                }
                            }
                        }
                    }
                }
            }
            MagneticTerm::NonExact { b } => {
                if n < 2 {
                    return Err(invalid("a non-exact form needs at least two coordinates"));
                }
                if !b.is_finite() {
                    return Err(invalid("non-finite magnetic constant"));
                }
            }
        }
        let inverse_metric = chol.inverse();
        Ok(ManeProblem { metric, potential, alpha, inverse_metric })
    }

    pub fn n(&self) -> usize {
        self.metric.nrows()
    }

    /// `½|β|²_{m*} + V(q)`.
    pub fn energy(&self, q: &[f64], beta: &[f64]) -> Result<f64> {
        let b = DVector::from_column_slice(beta);
        Ok(0.5 * b.dot(&(&self.inverse_metric * &b)) + self.potential.eval(q)?)
    }
}

/// Serialize infinities as the string `"inf"`.
mod finite_or_inf {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Str(s) => Err(de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnboundedCertificate {
    pub b: f64,
    pub radii: Vec<f64>,
    /// `∮_{|x|=R} β` for the symmetric-gauge primitive, by quadrature.
    pub circulation: Vec<f64>,
    /// `|B|πR²` from Stokes.
    pub stokes: Vec<f64>,
    /// `|B|R/2`, below which no primitive can stay on the circle of radius R.
    pub sup_lower_bound: Vec<f64>,
    /// Kinetic energy forced by that bound through the smallest eigenvalue of `m*`.
    pub energy_lower_bound: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ManeEstimate {
    #[serde(with = "finite_or_inf")]
    pub c: f64,
    pub degree: usize,
    pub grid: usize,
    pub converged: bool,
    pub restarts_agreeing: usize,
    pub restarts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<UnboundedCertificate>,
    /// Best primitive found: `ξ` followed by Fourier coefficients.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parameters: Vec<f64>,
}

/// Stokes witness that no primitive of `B dq1∧dq2` is bounded on the cover.
pub fn detect_unbounded(prob: &ManeProblem) -> Result<UnboundedCertificate> {
    let b = match prob.alpha {
        MagneticTerm::NonExact { b } if b != 0.0 => b,
        MagneticTerm::NonExact { .. } => return Err(invalid("B = 0: the magnetic form is exact")),
        _ => return Err(invalid("the magnetic form is exact; use the estimate instead")),
    };
    let lam_min = prob.inverse_metric.clone().symmetric_eigen().eigenvalues.min();
    let radii = vec![1.0, 10.0, 100.0, 1000.0];
    let mut cert = UnboundedCertificate { b, radii: radii.clone(), circulation: vec![], stokes: vec![], sup_lower_bound: vec![], energy_lower_bound: vec![] };
    let m = 4096;
    for &r in &radii {
        // β = (B/2)(x dy − y dx) on the (q1, q2) plane
        let mut circ = 0.0;
        for k in 0..m {
            let t = 2.0 * PI * k as f64 / m as f64;
            let (x, y) = (r * t.cos(), r * t.sin());
            let (dx, dy) = (-r * t.sin(), r * t.cos());
            circ += 0.5 * b * (x * dy - y * dx) * 2.0 * PI / m as f64;
        }
        let stokes = b.abs() * PI * r * r;
        if (circ.abs() - stokes).abs() > 1e-9 * stokes {
            return Err(Error::Residual(format!("circulation {circ} disagrees with Stokes {stokes}")));
        }
        let bound = stokes / (2.0 * PI * r);
        cert.circulation.push(circ);
        cert.stokes.push(stokes);
        cert.sup_lower_bound.push(bound);
        cert.energy_lower_bound.push(0.5 * lam_min * bound * bound);
    }
    Ok(cert)
}

/// Wave vectors with `|k|_∞ ≤ degree` in a half space, one per `±k` pair.
fn modes(n: usize, degree: usize) -> Vec<Vec<i64>> {
    let d = degree as i64;
    let mut out = vec![];
    let total = (2 * d + 1).pow(n as u32);
    for idx in 0..total {
        let mut k = vec![0i64; n];
        let mut r = idx;
        for c in k.iter_mut() {
            *c = r % (2 * d + 1) - d;
            r /= 2 * d + 1;
        }
        if k.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0) {
            out.push(k);
        }
    }
    out
}

/// Everything the objective needs, tabulated on the mesh.
struct Mesh {
    n: usize,
    /// Per component `i`: `β₀_i` at each mesh point.
    beta0: Vec<DVector<f64>>,
    potential: DVector<f64>,
    /// Per component `i`: `∂_i` of each basis function, points × parameters.
    basis: Vec<DMatrix<f64>>,
    inv_metric: DMatrix<f64>,
    params: usize,
}

impl Mesh {
    fn new(prob: &ManeProblem, degree: usize, grid: usize) -> Result<Self> {
        let n = prob.n();
        let ks = modes(n, degree);
        let params = n + 2 * ks.len();
        let total = grid.pow(n as u32);
        let mut beta0 = vec![DVector::zeros(total); n];
        let mut potential = DVector::zeros(total);
        let mut basis = vec![DMatrix::zeros(total, params); n];
        for idx in 0..total {
            let mut r = idx;
            let q: Vec<f64> = (0..n)
                .map(|_| {
                    let j = r % grid;
                    r /= grid;
                    2.0 * PI * j as f64 / grid as f64
                })
                .collect();
            potential[idx] = prob.potential.eval(&q)?;
            if let MagneticTerm::Exact { primitive, .. } = &prob.alpha {
                for (i, b) in primitive.iter().enumerate() {
                    beta0[i][idx] = b.eval(&q)?;
                }
            }
            for (i, rows) in basis.iter_mut().enumerate() {
                rows[(idx, i)] = 1.0;
                for (m, k) in ks.iter().enumerate() {
                    let phase: f64 = k.iter().zip(&q).map(|(&a, b)| a as f64 * b).sum();
                    // f = Σ a_k cos(k·q) + b_k sin(k·q)
                    rows[(idx, n + 2 * m)] = -(k[i] as f64) * phase.sin();
                    rows[(idx, n + 2 * m + 1)] = k[i] as f64 * phase.cos();
                }
            }
        }
        Ok(Mesh { n, beta0, potential, basis, inv_metric: prob.inverse_metric.clone(), params })
    }

    /// Energies at every mesh point and `m*β` per component.
    fn energies(&self, theta: &DVector<f64>) -> (DVector<f64>, Vec<DVector<f64>>) {
        let beta: Vec<DVector<f64>> = (0..self.n).map(|i| &self.beta0[i] + &self.basis[i] * theta).collect();
        let mb: Vec<DVector<f64>> = (0..self.n)
            .map(|i| {
                let mut v = DVector::zeros(self.potential.len());
                for (k, b) in beta.iter().enumerate() {
                    v.axpy(self.inv_metric[(i, k)], b, 1.0);
                }
                v
            })
            .collect();
        let mut e = self.potential.clone();
        for (b, m) in beta.iter().zip(&mb) {
            e += 0.5 * b.component_mul(m);
        }
        (e, mb)
    }

    fn grid_max(&self, theta: &DVector<f64>) -> f64 {
        self.energies(theta).0.max()
    }

    /// Log-sum-exp smooth max at temperature `t` and its gradient.
    fn smooth_max(&self, theta: &DVector<f64>, t: f64) -> (f64, DVector<f64>) {
        let (e, mb) = self.energies(theta);
        let top = e.max();
        let w = e.map(|v| ((v - top) / t).exp());
        let z = w.sum();
        let w = w / z;
        let mut g = DVector::zeros(self.params);
        for (b, m) in self.basis.iter().zip(&mb) {
            g.gemv_tr(1.0, b, &w.component_mul(m), 1.0);
        }
        (top + t * z.ln(), g)
    }
}

/// BFGS with Armijo backtracking; returns the minimizer and whether the
/// gradient criterion was met.
fn bfgs(f: impl Fn(&DVector<f64>) -> (f64, DVector<f64>), x0: DVector<f64>, gtol: f64, max_iter: usize) -> (DVector<f64>, bool) {
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut h = DMatrix::<f64>::identity(n, n);
    for it in 0..max_iter {
        if g.amax() <= gtol {
            return (x, true);
        }
        let mut d = -(&h * &g);
        if d.dot(&g) >= 0.0 {
            h = DMatrix::identity(n, n);
            d = -g.clone();
        }
        let slope = d.dot(&g);
        let mut a = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn = &x + a * &d;
            let (fn_, gn) = f(&xn);
            if fn_ <= fx + 1e-4 * a * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            a *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            return (x, g.amax() <= gtol.sqrt());
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if it == 0 && sy > 0.0 {
            h *= sy / y.dot(&y);
        }
        if sy > 1e-14 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (rho * rho * yhy + rho) * (&s * s.transpose()) - rho * (&hy * s.transpose() + &s * hy.transpose());
        }
        x = xn;
        fx = fn_;
        g = gn;
    }
    let ok = g.amax() <= gtol;
    (x, ok)
}

pub const TEMPERATURES: [f64; 4] = [1.0, 0.3, 0.1, 0.03];
pub const RESTARTS: usize = 8;
const SEED: u64 = 0x6d61_6e65;

/// Estimate the critical value with Fourier primitives of the given degree
/// on a `grid^n` mesh. Non-exact forms return `+∞` with a certificate.
pub fn mane_estimate(prob: &ManeProblem, degree: usize, grid: usize, exec: Execution) -> Result<ManeEstimate> {
    if let MagneticTerm::NonExact { b } = prob.alpha {
        if b != 0.0 {
            let cert = detect_unbounded(prob)?;
            return Ok(ManeEstimate {
                c: f64::INFINITY,
                degree,
                grid,
                converged: true,
                restarts_agreeing: 0,
                restarts: 0,
                certificate: Some(cert),
                parameters: vec![],
            });
        }
    }
    if grid < 2 * degree + 2 {
        return Err(invalid(format!("grid {grid} cannot resolve degree {degree}; need at least {}", 2 * degree + 2)));
    }
    let mesh = Mesh::new(prob, degree, grid)?;
    let p = mesh.params;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut starts = vec![vec![0.0; p]];
    for _ in 0..RESTARTS {
        starts.push((0..p).map(|_| rng.gen_range(-0.5..0.5)).collect());
    }
    let runs: Vec<(f64, bool, Vec<f64>)> = exec.map(&starts, |s| {
        let mut x = DVector::from_column_slice(s);
        let mut ok = true;
        for &t in &TEMPERATURES {
            let (xn, conv) = bfgs(|th| mesh.smooth_max(th, t), x, 1e-9, 400);
            x = xn;
            ok &= conv;
        }
        (mesh.grid_max(&x), ok, x.as_slice().to_vec())
    });
    let best = runs.iter().enumerate().min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0.cmp(&b.0))).map(|(i, _)| i).unwrap_or(0);
    let c = runs[best].0;
    let agreeing = runs.iter().filter(|r| (r.0 - c).abs() <= 1e-3 * (1.0 + c.abs())).count();
    Ok(ManeEstimate {
        c,
        degree,
        grid,
        converged: runs[best].1,
        restarts_agreeing: agreeing,
        restarts: runs.len(),
        certificate: None,
        parameters: runs[best].2.clone(),
    })
}

//! Tubular charts around `Σ_σ`, the mollified extensions `λ̄_σ`, `H̄_σ`, the
//! Rabinowitz action functional and the period certificates built on it.
//!
//! The chart is `ψ_σ(r, x) = φ^Y_r(x)` with `Y = X_σ / dH_σ(X_σ)`, so the
//! normal coordinate of a point `p` is simply `r = H_σ(p)` and its foot point
//! is `π(p) = φ^Y_{−r}(p)`. This agrees with a symplectic collar on `Σ_σ`,
//! where all loops of interest live.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::continuation::OrbitCylinder;
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::expr::{seed, Dual, Scalar};
use crate::flow::{flow_with_variational, integrate, VectorField};
use crate::loops;
use crate::orbit::ParametrisedOrbit;
use crate::smooth::step;
use crate::symplectic::{check_stability, f_sigma, reeb_field, sample_level_set, stabilizing_form, HamiltonianHomotopy, SymplecticStructure};

fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = 24;
        let mut x = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for i in 0..n {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            loop {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    let (mut p0, mut p1) = (1.0, z);
                    for k in 2..=n {
                        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                    x.push(z);
                    w.push(2.0 / ((1.0 - z * z) * dp * dp));
                    break;
                }
            }
        }
        (x, w)
    })
}

/// `∫_0^b step(u) du` for `b ≤ ½`, composite Gauss–Legendre.
fn step_head_integral(b: f64) -> f64 {
    let (x, w) = gauss_legendre();
    let panels = 4;
    let len = b / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        let lo = k as f64 * len;
        for (xi, wi) in x.iter().zip(w) {
            acc += wi * step(lo + 0.5 * len * (xi + 1.0));
        }
    }
    acc * 0.5 * len
}

/// `∫_a^1 step(u) du`, using `step(u) = 1 − step(1 − u)` and `∫_0^1 step = ½`
/// so that quadrature only ever sees the flat end of the step.
fn step_tail_integral(a: f64) -> f64 {
    if a <= 0.5 {
        0.5 - step_head_integral(a)
    } else {
        (1.0 - a) - step_head_integral(1.0 - a)
    }
}

/// The cutoffs shaping `λ̄` and `H̄`.
///
/// * `f(r) = r + 1` for `|r| ≤ ε/2`, `f = 0` for `|r| ≥ 0.9ε`;
/// * `h(r) = r` for `|r| ≤ ε/6`, `h = ±ε/3` for `±r ≥ ε/2`, nondecreasing.
///
/// A smooth `h` cannot be the identity all the way up to the level `ε/3` it
/// saturates at, hence the narrower linear window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mollifiers {
    pub epsilon: f64,
}

impl Mollifiers {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Mollifiers { epsilon })
    }

    pub fn f(&self, r: f64) -> f64 {
        let e = self.epsilon;
        (r + 1.0) * step((0.9 * e - r.abs()) / (0.4 * e))
    }

    pub fn h_prime(&self, r: f64) -> f64 {
        let e = self.epsilon;
        step((0.5 * e - r.abs()) / (e / 3.0))
    }

    pub fn h(&self, r: f64) -> f64 {
        let e = self.epsilon;
        let a = r.abs();
        let v = if a <= e / 6.0 {
            a
        } else if a >= e / 2.0 {
            e / 3.0
        } else {
            e / 6.0 + e / 3.0 * step_tail_integral((0.5 * e - a) / (e / 3.0))
        };
        v.copysign(r)
    }
}

/// `Y = ±X/dH(X)`, the field whose flow moves `H` at unit rate.
struct ChartField<'a> {
    sys: &'a HamiltonianHomotopy,
    sigma: f64,
    sign: f64,
}

impl ChartField<'_> {
    fn generic<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        let s = S::constant(self.sigma);
        let xf = self.sys.stabilizer(x, &s)?;
        let f = self.sys.stability_function(x, &s)?;
        if !(f.value() > 0.0) {
            return Err(Error::Regularity(format!("dH(X) = {:e} along the chart flow", f.value())));
        }
        Ok(xf.into_iter().map(|v| v.scale(self.sign) / f.clone()).collect())
    }
}

impl VectorField for ChartField<'_> {
    fn dim(&self) -> usize {
        self.sys.dim()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.generic(x)
    }
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let v = self.generic(&seed(x))?;
        Ok(DMatrix::from_fn(v.len(), x.len(), |i, j| v[i].partial(j)))
    }
}

/// Tubular neighbourhood `U_σ` of `Σ_σ` realised by the normalized `X`-flow.
#[derive(Debug, Clone)]
pub struct TubularChart<'a> {
    sys: &'a HamiltonianHomotopy,
    ss: &'a SymplecticStructure,
    pub sigma: f64,
    pub epsilon: f64,
    cloud: Vec<Vec<f64>>,
    /// Points of `{|H| < ε}` farther than this from the cloud are outside `U`.
    pub reach: f64,
    tol: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl<'a> TubularChart<'a> {
    /// Chart over the sample cloud without validating the flows.
    pub fn unchecked(sys: &'a HamiltonianHomotopy, ss: &'a SymplecticStructure, sigma: f64, epsilon: f64, cloud: Vec<Vec<f64>>) -> Result<Self> {
        if cloud.is_empty() {
            return Err(invalid("chart needs at least one surface sample"));
        }
        let m = cloud.len();
        let mut spacing = 0.0f64;
        for i in 0..m {
            let nn = (0..m).filter(|&j| j != i).map(|j| dist(&cloud[i], &cloud[j])).fold(f64::INFINITY, f64::min);
            if nn.is_finite() {
                spacing = spacing.max(nn);
            }
        }
        let field = ChartField { sys, sigma, sign: 1.0 };
        let mut speed = 0.0f64;
        for x in &cloud {
            let y = field.eval(x)?;
            speed = speed.max(y.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        Ok(TubularChart { sys, ss, sigma, epsilon, reach: 2.0 * spacing + 2.0 * epsilon * speed, cloud, tol: 1e-12 })
    }

    pub fn system(&self) -> &HamiltonianHomotopy {
        self.sys
    }

    pub fn structure(&self) -> &SymplecticStructure {
        self.ss
    }

    /// `ψ_σ(r, x)`.
    pub fn psi(&self, r: f64, x: &[f64]) -> Result<Vec<f64>> {
        if r == 0.0 {
            return Ok(x.to_vec());
        }
        let field = ChartField { sys: self.sys, sigma: self.sigma, sign: r.signum() };
        let tr = integrate(&field, x, r.abs(), self.tol)?;
        Ok(tr.final_state().to_vec())
    }

    /// The normal coordinate `r(p) = H_σ(p)`.
    pub fn r_coord(&self, p: &[f64]) -> Result<f64> {
        self.sys.energy(p, self.sigma)
    }

    pub fn contains(&self, p: &[f64]) -> Result<bool> {
        if self.r_coord(p)?.abs() >= self.epsilon {
            return Ok(false);
        }
        Ok(self.cloud.iter().any(|x| dist(x, p) <= self.reach))
    }

    /// `(r, π(p), Dπ_p)` for `p` in the chart.
    pub fn project(&self, p: &[f64]) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
        let (r, dh) = self.sys.gradient(p, &self.sigma)?;
        let d = p.len();
        let (x, m) = if r == 0.0 {
            (p.to_vec(), DMatrix::identity(d, d))
        } else {
            let field = ChartField { sys: self.sys, sigma: self.sigma, sign: -r.signum() };
            flow_with_variational(&field, p, r.abs(), self.tol)?
        };
        let y = ChartField { sys: self.sys, sigma: self.sigma, sign: 1.0 }.eval(&x)?;
        let dpi = DMatrix::from_fn(d, d, |i, j| m[(i, j)] - y[i] * dh[j]);
        Ok((r, x, dpi))
    }
}

/// Chart over `cloud ⊂ Σ_σ`, checking stability on the cloud and that the
/// normalized flow carries every checked sample to the levels `±ε`.
pub fn build_tubular<'a>(
    sys: &'a HamiltonianHomotopy,
    ss: &'a SymplecticStructure,
    sigma: f64,
    epsilon: f64,
    cloud: Vec<Vec<f64>>,
    stability_tol: f64,
) -> Result<TubularChart<'a>> {
    Mollifiers::new(epsilon)?;
    for x in &cloud {
        if !sys.is_on_level(x, sigma)? && sys.energy(x, sigma)?.abs() > 1e-8 * (1.0 + x.iter().map(|v| v * v).sum::<f64>()) {
            return Err(invalid(format!("chart sample {x:?} is not on the level set")));
        }
        check_stability(sys, ss, x, sigma, stability_tol)?;
    }
    let chart = TubularChart::unchecked(sys, ss, sigma, epsilon, cloud)?;
    let stride = (chart.cloud.len() / 16).max(1);
    for x in chart.cloud.iter().step_by(stride) {
        for r in [epsilon, -epsilon] {
            let end = chart.psi(r, x).map_err(|e| {
                Error::Regularity(format!("normalized X-flow from {x:?} does not reach level {r}: {e}"))
            })?;
            let reached = sys.energy(&end, sigma)?;
            if (reached - r).abs() > 1e-6 * epsilon.max(1.0) {
                return Err(Error::Regularity(format!("chart flow reached level {reached} instead of {r}")));
            }
        }
    }
    Ok(chart)
}

/// `¼ · min |∇H|² / ‖Hess H‖` over the samples (capped at ½): the
/// first-order `H`-distance from `Σ` to where `dH` can degenerate.
pub fn default_epsilon(sys: &HamiltonianHomotopy, sigma: f64, samples: &[Vec<f64>]) -> Result<f64> {
    let mut best = f64::INFINITY;
    for x in samples {
        let lifted = seed(x);
        let (_, g) = sys.gradient(&lifted, &Dual::constant_of(sigma))?;
        let d = x.len();
        let hess = DMatrix::from_fn(d, d, |i, j| 0.5 * (g[i].partial(j) + g[j].partial(i)));
        let g2: f64 = g.iter().map(|v| v.re * v.re).sum();
        let hn = hess.symmetric_eigenvalues().amax();
        if hn > 0.0 {
            best = best.min(g2 / hn);
        }
    }
    Ok((0.25 * best).min(0.5))
}

/// `λ̄_σ(p)` as a covector.
pub fn extended_one_form(chart: &TubularChart, moll: &Mollifiers, p: &[f64]) -> Result<Vec<f64>> {
    if !chart.contains(p)? {
        return Ok(vec![0.0; p.len()]);
    }
    let (r, x, dpi) = chart.project(p)?;
    let fr = moll.f(r);
    if fr == 0.0 {
        return Ok(vec![0.0; p.len()]);
    }
    let lam = stabilizing_form(chart.sys, chart.ss, &x, &chart.sigma)?;
    let d = p.len();
    Ok((0..d).map(|j| fr * (0..d).map(|i| lam[i] * dpi[(i, j)]).sum::<f64>()).collect())
}

/// `H̄_σ(p)`: `h(r)` in the chart, `±ε/3` outside by the sign of `H_σ`.
pub fn extended_hamiltonian(chart: &TubularChart, moll: &Mollifiers, p: &[f64]) -> Result<f64> {
    let r = chart.r_coord(p)?;
    if chart.contains(p)? {
        return Ok(moll.h(r));
    }
    if r.abs() <= chart.sys.level_tolerance(p) {
        return Err(Error::Separation(format!("point {p:?} lies on H = 0 outside the tubular neighbourhood")));
    }
    Ok((moll.epsilon / 3.0).copysign(r))
}

/// `𝒜(γ, τ) = ∫₀¹ λ̄(γ') − τ ∫₀¹ H̄(γ)`, periodic trapezoid rule with
/// spectral `γ'`.
pub fn action_of_loop(samples: &[Vec<f64>], tau: f64, chart: &TubularChart, moll: &Mollifiers) -> Result<f64> {
    let vel = loops::spectral_derivative(samples);
    let mut acc = 0.0;
    for (x, v) in samples.iter().zip(&vel) {
        let lam = extended_one_form(chart, moll, x)?;
        let hb = extended_hamiltonian(chart, moll, x)?;
        acc += lam.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() - tau * hb;
    }
    Ok(acc / samples.len() as f64)
}

pub fn rabinowitz_action(orbit: &ParametrisedOrbit, chart: &TubularChart, moll: &Mollifiers) -> Result<f64> {
    action_of_loop(&orbit.sample_vecs(), orbit.tau, chart, moll)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criticality {
    /// `max_i |γ'(t_i) − τ X_{H̄}(γ(t_i))|`.
    pub ode_defect: f64,
    /// `|∫₀¹ H̄(γ)|`.
    pub mean_hbar: f64,
    /// Central differences of `𝒜` along normalized loop variations.
    pub directional: Vec<f64>,
    /// `∂𝒜/∂τ` by central difference.
    pub tau_derivative: f64,
    pub residual: f64,
}

/// Vanishing of the differential of `𝒜` at `(γ, τ)`.
///
/// On `Σ` the Hamiltonian field of `H̄ = h∘r` is `h'(r) R`, which is what
/// the ODE defect is measured against.
pub fn criticality_residual(orbit: &ParametrisedOrbit, chart: &TubularChart, moll: &Mollifiers, probes: usize, rng_seed: u64) -> Result<Criticality> {
    let samples = orbit.sample_vecs();
    let n = samples.len();
    let d = samples[0].len();
    let vel = loops::spectral_derivative(&samples);
    let mut ode_defect = 0.0f64;
    let mut hsum = 0.0;
    for (x, v) in samples.iter().zip(&vel) {
        let r = chart.r_coord(x)?;
        let hb = extended_hamiltonian(chart, moll, x)?;
        hsum += hb;
        let xh: Vec<f64> = if chart.contains(x)? && moll.h_prime(r) > 0.0 {
            let hp = moll.h_prime(r);
            reeb_field(chart.sys, chart.ss, x, chart.sigma)?.into_iter().map(|c| hp * c).collect()
        } else {
            vec![0.0; d]
        };
        ode_defect = ode_defect.max(dist(v, &xh.iter().map(|c| orbit.tau * c).collect::<Vec<_>>()));
    }
    let mean_hbar = hsum / n as f64;

    let s = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut directional = Vec::with_capacity(probes);
    for _ in 0..probes {
        // random trigonometric variation of degree ≤ 3, unit sup-norm
        let coeffs: Vec<[f64; 7]> = (0..d).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
        let mut xi: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                coeffs
                    .iter()
                    .map(|c| c[0] + (1..=3).map(|k| c[2 * k - 1] * (k as f64 * t).cos() + c[2 * k] * (k as f64 * t).sin()).sum::<f64>())
                    .collect()
            })
            .collect();
        let sup = xi.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        xi.iter_mut().flatten().for_each(|v| *v /= sup);
        let shifted = |sign: f64| -> Vec<Vec<f64>> {
            samples.iter().zip(&xi).map(|(x, e)| x.iter().zip(e).map(|(a, b)| a + sign * s * b).collect()).collect()
        };
        let plus = action_of_loop(&shifted(1.0), orbit.tau, chart, moll)?;
        let minus = action_of_loop(&shifted(-1.0), orbit.tau, chart, moll)?;
        directional.push((plus - minus) / (2.0 * s));
    }
    let ds = 1e-4 * orbit.tau.max(1.0);
    let tau_derivative = (action_of_loop(&samples, orbit.tau + ds, chart, moll)? - action_of_loop(&samples, orbit.tau - ds, chart, moll)?) / (2.0 * ds);

    let residual = directional
        .iter()
        .fold(ode_defect.max(mean_hbar.abs()).max(tau_derivative.abs()), |m, v| m.max(v.abs()));
    Ok(Criticality { ode_defect, mean_hbar: mean_hbar.abs(), directional, tau_derivative, residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityBounds {
    pub kappa: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub max_dsigma_lambda: f64,
    pub max_dsigma_hbar: f64,
    pub sample_count: usize,
}

pub const KAPPA_SAFETY: f64 = 1.25;

/// `κ = 1.25 · max(1, f_max, 1/f_min, 2 max|∂_σ λ̄(R)|, 2 max|∂_σ H̄|)` over
/// level-set samples, one sample set per entry of `sigma_grid`.
///
/// The `σ`-derivatives are central differences at fixed ambient points with
/// step `1e−4 · sigma_span`.
pub fn estimate_kappa(
    sys: &HamiltonianHomotopy,
    ss: &SymplecticStructure,
    sigma_grid: &[f64],
    surface_samples: &[Vec<Vec<f64>>],
    epsilon: f64,
    sigma_span: f64,
    exec: Execution,
) -> Result<StabilityBounds> {
    if sigma_grid.len() != surface_samples.len() || sigma_grid.is_empty() {
        return Err(invalid("need one sample set per grid value"));
    }
    let moll = Mollifiers::new(epsilon)?;
    let delta = 1e-4 * sigma_span.max(1e-3);
    let mut f_min = f64::INFINITY;
    let mut f_max = 0.0f64;
    let mut dl = 0.0f64;
    let mut dh = 0.0f64;
    let mut count = 0;
    for (&sigma, cloud) in sigma_grid.iter().zip(surface_samples) {
        if cloud.is_empty() {
            continue;
        }
        let plus = TubularChart::unchecked(sys, ss, sigma + delta, epsilon, cloud.clone())?;
        let minus = TubularChart::unchecked(sys, ss, sigma - delta, epsilon, cloud.clone())?;
        let per_point = exec.map(cloud, |x| -> Result<(f64, f64, f64)> {
            let f = f_sigma(sys, x, sigma)?;
            let r = reeb_field(sys, ss, x, sigma)?;
            let lp = extended_one_form(&plus, &moll, x)?;
            let lm = extended_one_form(&minus, &moll, x)?;
            let dlam: f64 = (0..x.len()).map(|i| (lp[i] - lm[i]) * r[i]).sum::<f64>() / (2.0 * delta);
            let dhb = (extended_hamiltonian(&plus, &moll, x)? - extended_hamiltonian(&minus, &moll, x)?) / (2.0 * delta);
            if !dlam.is_finite() || !dhb.is_finite() {
                return Err(Error::NonFinite(format!("sigma-derivative at {x:?}")));
            }
            Ok((f, dlam, dhb))
        });
        for item in per_point {
            let (f, a, b) = item?;
            f_min = f_min.min(f);
            f_max = f_max.max(f);
            dl = dl.max(a.abs());
            dh = dh.max(b.abs());
            count += 1;
        }
    }
    if count == 0 {
        return Err(invalid("no surface samples"));
    }
    let kappa = KAPPA_SAFETY * 1f64.max(f_max).max(1.0 / f_min).max(2.0 * dl).max(2.0 * dh);
    Ok(StabilityBounds { kappa, f_min, f_max, max_dsigma_lambda: dl, max_dsigma_hbar: dh, sample_count: count })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSampling {
    /// Number of equally spaced `σ` nodes, endpoints included.
    pub nodes: usize,
    pub samples_per_node: usize,
    /// Sampling box, one interval per phase-space coordinate.
    pub bounds: Vec<(f64, f64)>,
    /// Fixed tube width; otherwise the smallest [`default_epsilon`] over the nodes.
    pub epsilon: Option<f64>,
    pub seed: u64,
}

/// [`estimate_kappa`] over `[sigma_lo, sigma_hi]` with fresh level-set
/// samples at each node. Returns the bounds and the tube width used.
pub fn estimate_kappa_on_range(
    sys: &HamiltonianHomotopy,
    ss: &SymplecticStructure,
    sigma_lo: f64,
    sigma_hi: f64,
    sampling: &KappaSampling,
    exec: Execution,
) -> Result<(StabilityBounds, f64)> {
    if sampling.nodes == 0 || sampling.samples_per_node == 0 {
        return Err(invalid("kappa sampling needs at least one node and one sample"));
    }
    let grid: Vec<f64> = if sampling.nodes == 1 {
        vec![sigma_lo]
    } else {
        (0..sampling.nodes).map(|i| sigma_lo + (sigma_hi - sigma_lo) * i as f64 / (sampling.nodes - 1) as f64).collect()
    };
    let clouds = grid
        .iter()
        .enumerate()
        .map(|(i, &s)| sample_level_set(sys, s, &sampling.bounds, sampling.samples_per_node, sampling.seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let epsilon = match sampling.epsilon {
        Some(e) => e,
        None => {
            let mut e = f64::INFINITY;
            for (&s, c) in grid.iter().zip(&clouds) {
                e = e.min(default_epsilon(sys, s, c)?);
            }
            e
        }
    };
    let bounds = estimate_kappa(sys, ss, &grid, &clouds, epsilon, sigma_hi - sigma_lo, exec)?;
    Ok((bounds, epsilon))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kappa: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub tau0: f64,
    pub sigma_span: f64,
    /// `C = τ_0 e^{κ σ_span}`.
    #[serde(rename = "C")]
    pub c: f64,
    /// `min(1/C, τ_0 e^{−κ σ_span})`.
    pub lower: f64,
    pub pass: bool,
    /// Per orbit, `min(C/τ − 1, τ/lower − 1)`; negative means violated.
    pub margins: Vec<f64>,
}

/// Check every period of the cylinder against `lower ≤ τ_σ ≤ C`.
pub fn period_bound_certificate(cyl: &OrbitCylinder, bounds: &StabilityBounds) -> Result<Certificate> {
    let first = cyl.orbits.first().ok_or_else(|| invalid("empty cylinder"))?;
    let tau0 = first.tau;
    let span = cyl.orbits.last().map_or(0.0, |o| o.sigma) - first.sigma;
    let c = tau0 * (bounds.kappa * span).exp();
    let lower = (1.0 / c).min(tau0 * (-bounds.kappa * span).exp());
    let margins: Vec<f64> = cyl.orbits.iter().map(|o| (c / o.tau - 1.0).min(o.tau / lower - 1.0)).collect();
    let pass = margins.iter().all(|&m| m >= -1e-12);
    Ok(Certificate { kappa: bounds.kappa, f_min: bounds.f_min, f_max: bounds.f_max, tau0, sigma_span: span, c, lower, pass, margins })
}

/// `|𝒜 − τ| / (1 + τ)` for a Reeb orbit, with a chart over its own samples.
pub fn period_action_defect(orbit: &ParametrisedOrbit, sys: &HamiltonianHomotopy, ss: &SymplecticStructure, epsilon: f64) -> Result<(f64, f64)> {
    let chart = TubularChart::unchecked(sys, ss, orbit.sigma, epsilon, orbit.sample_vecs())?;
    let a = rabinowitz_action(orbit, &chart, &Mollifiers::new(epsilon)?)?;
    Ok((a, (a - orbit.tau).abs() / (1.0 + orbit.tau)))
}

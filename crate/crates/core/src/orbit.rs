//! Parametrised periodic orbits `(γ, τ)` on a level set: shooting solver,
//! Reeb re-timing, Floquet analysis and resampling.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::flow::{flow_with_variational, sample_at, IntegratorOptions, VectorField};
use crate::loops;
use crate::symplectic::{f_sigma, tangent_basis, HamiltonianField, HamiltonianHomotopy, PhasePoint, ReebField, SymplecticStructure};

/// Which vector field `V` the loop solves `γ' = τ V(γ)` for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    Hamiltonian,
    Reeb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `max_i |γ'(t_i) − τ V(γ(t_i))|`, derivative taken spectrally.
    pub ode: f64,
    /// `max_i |H_σ(γ(t_i))|`.
    pub level: f64,
    /// `|φ_τ(γ(0)) − γ(0)|`.
    pub closure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloquetData {
    /// Row-major monodromy of the Hamiltonian flow over one period.
    pub monodromy: Vec<Vec<f64>>,
    pub multipliers: Vec<Complex64>,
    /// Two trivial multipliers plus the unit multipliers of the reduced
    /// (section) map.
    pub unit_count: usize,
    pub nondegenerate: bool,
    /// `max |MᵀΩM − Ω|`.
    pub symplectic_defect: f64,
    pub determinant: f64,
}

impl FloquetData {
    pub fn monodromy_matrix(&self) -> DMatrix<f64> {
        let d = self.monodromy.len();
        DMatrix::from_fn(d, d, |i, j| self.monodromy[i][j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametrisedOrbit {
    pub sigma: f64,
    /// Period with respect to the declared normalization.
    pub tau: f64,
    /// Period of the same loop under the Hamiltonian flow.
    pub hamiltonian_period: f64,
    pub normalization: Normalization,
    /// `γ(i/N)`, `i = 0..N`.
    pub samples: Vec<PhasePoint>,
    pub residuals: Residuals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floquet: Option<FloquetData>,
}

impl ParametrisedOrbit {
    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn start(&self) -> &[f64] {
        &self.samples[0].0
    }

    pub fn sample_vecs(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|p| p.0.clone()).collect()
    }

    /// `dγ/dt` at the samples.
    pub fn velocities(&self) -> Vec<Vec<f64>> {
        loops::spectral_derivative(&self.sample_vecs())
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples
            .iter()
            .map(|p| p.0.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// The same loop traversed backwards, `t ↦ γ(−t)`.
    pub fn reversed(&self) -> Self {
        let n = self.samples.len();
        let mut out = self.clone();
        out.samples = (0..n).map(|i| self.samples[(n - i) % n].clone()).collect();
        out.floquet = None;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitOptions {
    pub samples: usize,
    pub newton_tol: f64,
    pub max_iter: usize,
    pub integration_tol: f64,
    pub tau_min: f64,
    pub tol_level: f64,
    pub tol_ode: f64,
    pub tol_floquet: f64,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions {
            samples: 256,
            newton_tol: 1e-10,
            max_iter: 40,
            integration_tol: 1e-12,
            tau_min: 1e-6,
            tol_level: 1e-8,
            tol_ode: 1e-6,
            tol_floquet: 1e-6,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Shooting residual and its Jacobian in the unknowns `(x, τ)`.
fn shooting_system(
    vf: &HamiltonianField,
    x: &[f64],
    tau: f64,
    seed: &[f64],
    normal: &[f64],
    tol: f64,
) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let d = x.len();
    let (end, m) = flow_with_variational(vf, x, tau, tol)?;
    let v_end = vf.eval(&end)?;
    let (h, g) = vf.sys.gradient(x, &vf.sigma)?;
    let mut f = DVector::zeros(d + 2);
    let mut jac = DMatrix::zeros(d + 2, d + 1);
    for i in 0..d {
        f[i] = end[i] - x[i];
        for j in 0..d {
            jac[(i, j)] = m[(i, j)] - if i == j { 1.0 } else { 0.0 };
        }
        jac[(i, d)] = v_end[i];
        jac[(d, i)] = g[i];
        jac[(d + 1, i)] = normal[i];
    }
    f[d] = h;
    f[d + 1] = (0..d).map(|i| normal[i] * (x[i] - seed[i])).sum();
    Ok((f, jac, norm(&g)))
}

/// Solve `φ_τ(x) = x`, `H_σ(x) = 0`, `⟨X_H(seed), x − seed⟩ = 0` by
/// Gauss–Newton with variational Jacobians.
pub fn find_periodic(
    sys: &HamiltonianHomotopy,
    ss: &SymplecticStructure,
    seed: &[f64],
    tau_guess: f64,
    sigma: f64,
    opts: &OrbitOptions,
) -> Result<ParametrisedOrbit> {
    if seed.len() != sys.dim() {
        return Err(invalid(format!("seed has dimension {}, expected {}", seed.len(), sys.dim())));
    }
    if !(tau_guess > 0.0) {
        return Err(invalid(format!("period guess must be positive, got {tau_guess}")));
    }
    let vf = HamiltonianField { sys, ss, sigma };
    let d = seed.len();
    let v0 = vf.eval(seed)?;
    let v0n = norm(&v0);
    let scale = 1.0 + norm(seed);
    if v0n <= 1e-10 * scale {
        return Err(Error::NoConvergence { iterations: 0, residual: v0n });
    }
    let normal: Vec<f64> = v0.iter().map(|v| v / v0n).collect();

    let mut x = seed.to_vec();
    let mut tau = tau_guess;
    let (mut f, mut jac, mut gnorm) = shooting_system(&vf, &x, tau, seed, &normal, opts.integration_tol)?;
    let mut res = f.norm();
    let mut iterations = 0;
    while res > opts.newton_tol {
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence { iterations, residual: res });
        }
        if gnorm <= 1e-10 * scale {
            return Err(Error::NoConvergence { iterations, residual: res });
        }
        iterations += 1;
        let svd = jac.clone().svd(true, true);
        let step = svd
            .solve(&(-&f), 1e-13 * svd.singular_values.max())
            .map_err(|_| Error::NoConvergence { iterations, residual: res })?;
        // damped update: accept the first fraction that reduces the residual
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let xt: Vec<f64> = (0..d).map(|i| x[i] + lambda * step[i]).collect();
            let tt = tau + lambda * step[d];
            if tt <= opts.tau_min {
                lambda *= 0.5;
                continue;
            }
            match shooting_system(&vf, &xt, tt, seed, &normal, opts.integration_tol) {
                Ok((ft, jt, gt)) if ft.norm() < res || ft.norm() <= opts.newton_tol => {
                    x = xt;
                    tau = tt;
                    f = ft;
                    jac = jt;
                    gnorm = gt;
                    res = f.norm();
                    accepted = true;
                    break;
                }
                Ok(_) | Err(Error::NonFinite(_)) | Err(Error::Domain { .. }) | Err(Error::StepUnderflow { .. }) => {
                    lambda *= 0.5
                }
                Err(e) => return Err(e),
            }
        }
        if !accepted {
            if tau + step[d] <= opts.tau_min {
                return Err(Error::PeriodCollapse(tau + step[d]));
            }
            return Err(Error::NoConvergence { iterations, residual: res });
        }
    }
    if tau <= opts.tau_min {
        return Err(Error::PeriodCollapse(tau));
    }
    let closure = norm(&f.as_slice()[..d]);
    let samples = sample_loop(&vf, &x, tau, opts)?;
    let mut orbit = ParametrisedOrbit {
        sigma,
        tau,
        hamiltonian_period: tau,
        normalization: Normalization::Hamiltonian,
        samples: samples.into_iter().map(PhasePoint).collect(),
        residuals: Residuals { ode: 0.0, level: 0.0, closure },
        floquet: None,
    };
    let (ode, level) = measure_residuals(&orbit, sys, ss)?;
    orbit.residuals.ode = ode;
    orbit.residuals.level = level;
    // a small |H| only places the loop on Σ when dH is not small as well
    let mut min_grad = f64::INFINITY;
    let mut offset = 0.0f64;
    for p in &orbit.samples {
        let (h, g) = sys.gradient(&p.0, &sigma)?;
        let gn = norm(&g);
        min_grad = min_grad.min(gn);
        offset = offset.max(h.abs() / gn);
    }
    if min_grad <= 1e-8 * scale || offset > 1e-8 * scale {
        return Err(Error::Regularity(format!(
            "orbit at sigma = {sigma} is collapsing onto a critical point of H (|dH| ≥ {min_grad:e}, distance to Σ ≤ {offset:e})"
        )));
    }
    Ok(orbit)
}

fn sample_loop(vf: &dyn VectorField, x: &[f64], tau: f64, opts: &OrbitOptions) -> Result<Vec<Vec<f64>>> {
    let n = opts.samples;
    if n < 4 {
        return Err(invalid("need at least 4 samples per loop"));
    }
    let times: Vec<f64> = (1..n).map(|k| k as f64 * tau / n as f64).collect();
    let mut samples = vec![x.to_vec()];
    samples.extend(sample_at(vf, x, &times, IntegratorOptions::with_tol(opts.integration_tol))?);
    Ok(samples)
}

/// `(ode, level)` residuals of a stored loop against its declared field.
pub fn measure_residuals(orbit: &ParametrisedOrbit, sys: &HamiltonianHomotopy, ss: &SymplecticStructure) -> Result<(f64, f64)> {
    let vel = orbit.velocities();
    let mut ode = 0.0f64;
    let mut level = 0.0f64;
    for (p, g) in orbit.samples.iter().zip(&vel) {
        let v = match orbit.normalization {
            Normalization::Hamiltonian => HamiltonianField { sys, ss, sigma: orbit.sigma }.eval(&p.0)?,
            Normalization::Reeb => ReebField { sys, ss, sigma: orbit.sigma }.eval(&p.0)?,
        };
        let tv: Vec<f64> = v.iter().map(|x| orbit.tau * x).collect();
        ode = ode.max(norm_diff(g, &tv));
        level = level.max(sys.energy(&p.0, orbit.sigma)?.abs());
    }
    Ok((ode, level))
}

/// Check the stored residuals against the tolerances, scaling the ODE bound
/// by the loop speed.
pub fn verify_residuals(orbit: &ParametrisedOrbit, sys: &HamiltonianHomotopy, ss: &SymplecticStructure, opts: &OrbitOptions) -> Result<Residuals> {
    let (ode, level) = measure_residuals(orbit, sys, ss)?;
    let speed = orbit.velocities().iter().map(|v| norm(v)).fold(0.0, f64::max);
    if !(orbit.tau > 0.0) {
        return Err(Error::Residual(format!("period {} is not positive", orbit.tau)));
    }
    if level > opts.tol_level {
        return Err(Error::Residual(format!("level residual {level:e} exceeds {:e}", opts.tol_level)));
    }
    if ode > opts.tol_ode * (1.0 + speed) {
        return Err(Error::Residual(format!("ODE residual {ode:e} exceeds {:e}", opts.tol_ode * (1.0 + speed))));
    }
    Ok(Residuals { ode, level, closure: orbit.residuals.closure })
}

/// Re-time a Hamiltonian orbit by the Reeb field: `τ_R = ∫₀^{τ_H} f(γ(s)) ds`.
pub fn reeb_normalize(orbit: &ParametrisedOrbit, sys: &HamiltonianHomotopy, ss: &SymplecticStructure, opts: &OrbitOptions) -> Result<ParametrisedOrbit> {
    if orbit.normalization == Normalization::Reeb {
        return Ok(orbit.clone());
    }
    let fs = orbit
        .samples
        .iter()
        .map(|p| f_sigma(sys, &p.0, orbit.sigma))
        .collect::<Result<Vec<_>>>()?;
    let tau_r = orbit.tau * loops::loop_mean(&fs);
    let vf = ReebField { sys, ss, sigma: orbit.sigma };
    let x0 = orbit.start().to_vec();
    let n = orbit.n_samples();
    let times: Vec<f64> = (1..=n).map(|k| k as f64 * tau_r / n as f64).collect();
    let mut pts = vec![x0.clone()];
    pts.extend(sample_at(&vf, &x0, &times, IntegratorOptions::with_tol(opts.integration_tol))?);
    let end = pts.pop().expect("sampled endpoint");
    let mut out = ParametrisedOrbit {
        sigma: orbit.sigma,
        tau: tau_r,
        hamiltonian_period: orbit.hamiltonian_period,
        normalization: Normalization::Reeb,
        samples: pts.into_iter().map(PhasePoint).collect(),
        residuals: Residuals { ode: 0.0, level: 0.0, closure: norm_diff(&end, &x0) },
        floquet: orbit.floquet.clone(),
    };
    let (ode, level) = measure_residuals(&out, sys, ss)?;
    out.residuals.ode = ode;
    out.residuals.level = level;
    Ok(out)
}

/// Monodromy of the Hamiltonian flow over one period and its multipliers.
pub fn floquet(orbit: &ParametrisedOrbit, sys: &HamiltonianHomotopy, ss: &SymplecticStructure, opts: &OrbitOptions) -> Result<FloquetData> {
    let x0 = orbit.start();
    let d = x0.len();
    let vf = HamiltonianField { sys, ss, sigma: orbit.sigma };
    let (_, m) = flow_with_variational(&vf, x0, orbit.hamiltonian_period, opts.integration_tol)?;
    let multipliers: Vec<Complex64> = m.complex_eigenvalues().iter().cloned().collect();

    // reduced map on TΣ ∩ v^⊥, where M acts as the linearised Poincaré map
    let g = sys.gradient_f64(x0, orbit.sigma)?;
    let v = vf.eval(x0)?;
    let gn = norm(&g);
    let vn = norm(&v);
    let mut reduced_units = 0;
    if d > 2 {
        let basis: Vec<Vec<f64>> = tangent_basis(&g)
            .into_iter()
            .map(|b| {
                let c: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>() / (vn * vn);
                b.iter().zip(&v).map(|(x, y)| x - c * y).collect::<Vec<f64>>()
            })
            .collect();
        // re-orthonormalize: the projected set spans a (d−2)-plane
        let mut q: Vec<Vec<f64>> = vec![g.iter().map(|x| x / gn).collect(), v.iter().map(|x| x / vn).collect()];
        for mut b in basis {
            for _ in 0..2 {
                for a in &q {
                    let c: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
                    for i in 0..d {
                        b[i] -= c * a[i];
                    }
                }
            }
            let bn = norm(&b);
            if bn > 1e-6 && q.len() < d {
                q.push(b.iter().map(|x| x / bn).collect());
            }
        }
        let bmat = DMatrix::from_fn(d, q.len() - 2, |i, j| q[j + 2][i]);
        let p = bmat.transpose() * &m * &bmat;
        reduced_units = p
            .complex_eigenvalues()
            .iter()
            .filter(|z| (*z - Complex64::new(1.0, 0.0)).norm() <= opts.tol_floquet)
            .count();
    }
    let unit_count = 2 + reduced_units;
    let omega = ss.form_matrix(x0)?;
    let symplectic_defect = (m.transpose() * &omega * &m - &omega).amax();
    let determinant = m.determinant();
    Ok(FloquetData {
        monodromy: (0..d).map(|i| (0..d).map(|j| m[(i, j)]).collect()).collect(),
        multipliers,
        unit_count,
        nondegenerate: unit_count == 2,
        symplectic_defect,
        determinant,
    })
}

/// Attach Floquet data to an orbit.
pub fn with_floquet(mut orbit: ParametrisedOrbit, sys: &HamiltonianHomotopy, ss: &SymplecticStructure, opts: &OrbitOptions) -> Result<ParametrisedOrbit> {
    orbit.floquet = Some(floquet(&orbit, sys, ss, opts)?);
    Ok(orbit)
}

/// Uniform resampling at `m` parameters (Hermite with spectral slopes).
pub fn loop_resample(orbit: &ParametrisedOrbit, m: usize) -> Result<ParametrisedOrbit> {
    if m < 16 {
        return Err(invalid(format!("resampling needs at least 16 samples, got {m}")));
    }
    let mut out = orbit.clone();
    out.samples = loops::resample(&orbit.sample_vecs(), m).into_iter().map(PhasePoint).collect();
    Ok(out)
}

/// Resample and re-verify residual bounds against the system.
pub fn loop_resample_checked(
    orbit: &ParametrisedOrbit,
    m: usize,
    sys: &HamiltonianHomotopy,
    ss: &SymplecticStructure,
    opts: &OrbitOptions,
) -> Result<ParametrisedOrbit> {
    let mut out = loop_resample(orbit, m)?;
    out.residuals = verify_residuals(&out, sys, ss, opts)?;
    Ok(out)
}

/// Hausdorff distance between two loops as curves: each sample of one loop
/// is projected onto the Hermite interpolant of the other.
pub fn hausdorff(a: &ParametrisedOrbit, b: &ParametrisedOrbit) -> f64 {
    let one = |x: &ParametrisedOrbit, y: &ParametrisedOrbit| {
        let ys = y.sample_vecs();
        let dy = loops::spectral_derivative(&ys);
        let n = ys.len() as f64;
        x.samples
            .iter()
            .map(|p| {
                let k = (0..ys.len())
                    .min_by(|&i, &j| norm_diff(&p.0, &ys[i]).total_cmp(&norm_diff(&p.0, &ys[j])))
                    .unwrap_or(0);
                let dist = |t: f64| norm_diff(&p.0, &loops::evaluate(&ys, &dy, t));
                // golden-section search on the two adjacent intervals
                let (mut lo, mut hi) = ((k as f64 - 1.0) / n, (k as f64 + 1.0) / n);
                let g = 0.5 * (5f64.sqrt() - 1.0);
                for _ in 0..80 {
                    let m1 = hi - g * (hi - lo);
                    let m2 = lo + g * (hi - lo);
                    if dist(m1) < dist(m2) {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                }
                dist(0.5 * (lo + hi)).min(norm_diff(&p.0, &ys[k]))
            })
            .fold(0.0, f64::max)
    };
    one(a, b).max(one(b, a))
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

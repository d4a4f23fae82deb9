//! Natural-parameter continuation of periodic orbits in `σ`, period profiles
//! and the exponential period envelope.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::loops;
use crate::orbit::{find_periodic, floquet, reeb_normalize, Normalization, OrbitOptions, ParametrisedOrbit};
use crate::symplectic::{HamiltonianHomotopy, SymplecticStructure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ReachedTarget,
    NewtonFailure,
    DegenerateFloquet,
    StepUnderflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// Branch-jump guard: the new orbit may move at most `continuity_factor`
    /// times as far from the previous one as the secant extrapolation of the
    /// last two loops predicts (never less than the floor).
    pub continuity_factor: f64,
    pub continuity_floor: f64,
    pub orbit: OrbitOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            initial_step: 0.05,
            max_step: 0.05,
            min_step: 1e-4,
            continuity_factor: 10.0,
            continuity_floor: 1e-6,
            orbit: OrbitOptions::default(),
        }
    }
}

/// Reeb-normalized orbits over strictly increasing `σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitCylinder {
    pub orbits: Vec<ParametrisedOrbit>,
    pub sigma_start: f64,
    /// Last `σ` with a converged orbit; the empirical `σ_∞` unless the target
    /// was reached.
    pub sigma_end: f64,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl OrbitCylinder {
    pub fn len(&self) -> usize {
        self.orbits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbits.is_empty()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.orbits.iter().map(|o| o.sigma).collect()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.orbits.iter().map(|o| o.tau).collect()
    }
}

fn finish(orbit: ParametrisedOrbit, sys: &HamiltonianHomotopy, ss: &SymplecticStructure, opts: &OrbitOptions) -> Result<ParametrisedOrbit> {
    let fl = floquet(&orbit, sys, ss, opts)?;
    let mut r = reeb_normalize(&orbit, sys, ss, opts)?;
    r.floquet = Some(fl);
    Ok(r)
}

/// Continue `start` from its `σ` up to `sigma_target`.
///
/// Secant predictor on `(γ(0), τ_H)`, corrector [`find_periodic`] at fixed
/// `σ`, step halving on failure and doubling (capped at `max_step`) on
/// success, so an undisturbed run visits the uniform grid of spacing
/// `initial_step`.
pub fn continue_family(
    start: &ParametrisedOrbit,
    sigma_target: f64,
    sys: &HamiltonianHomotopy,
    ss: &SymplecticStructure,
    opts: &ContinuationOptions,
) -> Result<OrbitCylinder> {
    if !(opts.min_step > 0.0 && opts.min_step <= opts.initial_step && opts.initial_step <= opts.max_step) {
        return Err(invalid("continuation steps must satisfy 0 < min_step ≤ initial_step ≤ max_step"));
    }
    if sigma_target < start.sigma {
        return Err(invalid(format!("target sigma {sigma_target} lies below the start {}", start.sigma)));
    }
    let oo = &opts.orbit;
    let first = finish(start.clone(), sys, ss, oo)?;
    if !first.floquet.as_ref().is_some_and(|f| f.nondegenerate) {
        return Err(invalid(format!(
            "start orbit is degenerate: {} unit multipliers",
            first.floquet.as_ref().map_or(0, |f| f.unit_count)
        )));
    }

    // Hamiltonian-time data (σ, γ(0), τ_H) of the last two accepted orbits,
    // for the secant predictor
    let mut history: Vec<(f64, Vec<f64>, f64)> = vec![(start.sigma, start.start().to_vec(), start.hamiltonian_period)];
    let mut orbits = vec![first];
    let mut sigma = start.sigma;
    let mut step = opts.initial_step;
    let mut termination = Termination::ReachedTarget;
    let mut failure = None;
    let snap = 1e-12 * (1.0 + sigma_target.abs());

    while sigma_target - sigma > snap {
        let h = if sigma_target - (sigma + step) <= snap { sigma_target - sigma } else { step };
        let next = sigma + h;
        let next = if (sigma_target - next).abs() <= snap { sigma_target } else { next };
        let (s1, x1, t1) = history.last().cloned().expect("history is never empty");
        let secant = (history.len() > 1).then(|| {
            let (s0, _, _) = &history[history.len() - 2];
            (next - s1) / (s1 - s0)
        });
        let (xp, tp) = match secant {
            None => (x1.clone(), t1),
            Some(c) => {
                let (_, x0, t0) = &history[history.len() - 2];
                (x1.iter().zip(x0).map(|(a, b)| a + c * (a - b)).collect::<Vec<_>>(), t1 + c * (t1 - t0))
            }
        };

        let outcome = find_periodic(sys, ss, &xp, tp.max(oo.tau_min * 2.0), next, oo).and_then(|o| {
            let done = finish(o.clone(), sys, ss, oo)?;
            Ok((o, done))
        });
        let (ham, reeb) = match outcome {
            Ok(v) => v,
            Err(e @ Error::StabilityViolation(_)) | Err(e @ Error::Invalid(_)) => return Err(e),
            Err(e) => {
                step = h * 0.5;
                if step < opts.min_step {
                    termination = Termination::NewtonFailure;
                    failure = Some(format!("corrector failed at sigma = {next}: {e}"));
                    break;
                }
                continue;
            }
        };

        // branch-jump guard, measured in the loop metric: the secant
        // extrapolation of the last two loops sets the expected change
        if let Some(c) = secant {
            let prev = &orbits[orbits.len() - 1];
            let before = &orbits[orbits.len() - 2];
            let a = prev.sample_vecs();
            let b = loops::resample(&before.sample_vecs(), a.len());
            let predicted: Vec<Vec<f64>> =
                a.iter().zip(&b).map(|(u, v)| u.iter().zip(v).map(|(x, y)| x + c * (x - y)).collect()).collect();
            let expected = loops::aligned_distance(&a, &predicted).0 + (c * (prev.tau - before.tau)).abs();
            let dist = loops::aligned_distance(&a, &reeb.sample_vecs()).0 + (prev.tau - reeb.tau).abs();
            let tol = (opts.continuity_factor * expected).max(opts.continuity_floor);
            if dist > tol {
                step = h * 0.5;
                if step < opts.min_step {
                    termination = Termination::StepUnderflow;
                    failure = Some(format!("branch jump at sigma = {next}: loop distance {dist:e} > {tol:e}"));
                    break;
                }
                continue;
            }
        }

        let degenerate = !reeb.floquet.as_ref().is_some_and(|f| f.nondegenerate);
        sigma = next;
        history.push((next, ham.start().to_vec(), ham.hamiltonian_period));
        if history.len() > 2 {
            history.remove(0);
        }
        orbits.push(reeb);
        if degenerate {
            termination = Termination::DegenerateFloquet;
            failure = Some(format!("orbit at sigma = {next} has more than two unit multipliers"));
            break;
        }
        step = (h * 2.0).min(opts.max_step).max(step);
    }

    Ok(OrbitCylinder { sigma_start: start.sigma, sigma_end: sigma, orbits, termination, failure })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodProfile {
    pub sigma: Vec<f64>,
    pub tau: Vec<f64>,
    pub dtau: Vec<f64>,
}

/// `dτ/dσ` by three-point Lagrange differences (second order on
/// non-uniform grids), one-sided at the ends.
pub fn period_profile_from(sigma: &[f64], tau: &[f64]) -> PeriodProfile {
    let n = sigma.len();
    let dtau = match n {
        0 => vec![],
        1 => vec![0.0],
        2 => {
            let d = (tau[1] - tau[0]) / (sigma[1] - sigma[0]);
            vec![d, d]
        }
        _ => (0..n)
            .map(|i| {
                let (a, b, c) = if i == 0 {
                    (0, 1, 2)
                } else if i == n - 1 {
                    (n - 3, n - 2, n - 1)
                } else {
                    (i - 1, i, i + 1)
                };
                let (x0, x1, x2) = (sigma[a], sigma[b], sigma[c]);
                let x = sigma[i];
                let l0 = (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2));
                let l1 = (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2));
                let l2 = (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1));
                l0 * tau[a] + l1 * tau[b] + l2 * tau[c]
            })
            .collect(),
    };
    PeriodProfile { sigma: sigma.to_vec(), tau: tau.to_vec(), dtau }
}

pub fn period_profile(cyl: &OrbitCylinder) -> PeriodProfile {
    period_profile_from(&cyl.sigmas(), &cyl.taus())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeNode {
    pub sigma: f64,
    pub tau: f64,
    pub dtau: f64,
    /// `κτ + slack`.
    pub derivative_bound: f64,
    pub lower: f64,
    pub upper: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub kappa: f64,
    pub slack: f64,
    pub pass: bool,
    pub derivative_pass: bool,
    pub envelope_pass: bool,
    pub first_violation: Option<usize>,
    /// `C = τ_0 e^{κ (σ_end − σ_0)}`.
    pub certificate: f64,
    pub nodes: Vec<EnvelopeNode>,
}

/// Check `|dτ/dσ| ≤ κτ + slack` at every node and
/// `τ_0 e^{−κ(σ−σ_0)} ≤ τ_σ ≤ τ_0 e^{κ(σ−σ_0)}`.
///
/// A failure means the cylinder is inconsistent with the stability bounds
/// (a numerical or modeling fault), nothing more.
pub fn envelope_check_profile(profile: &PeriodProfile, kappa: f64, slack: f64) -> Result<EnvelopeReport> {
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(invalid(format!("kappa must be finite and at least 1, got {kappa}")));
    }
    if profile.sigma.is_empty() {
        return Err(invalid("empty period profile"));
    }
    let s0 = profile.sigma[0];
    let t0 = profile.tau[0];
    let mut nodes = Vec::with_capacity(profile.sigma.len());
    let (mut dpass, mut epass) = (true, true);
    let mut first = None;
    for i in 0..profile.sigma.len() {
        let (s, t, d) = (profile.sigma[i], profile.tau[i], profile.dtau[i]);
        let bound = kappa * t + slack;
        let span = s - s0;
        let lower = t0 * (-kappa * span).exp();
        let upper = t0 * (kappa * span).exp();
        let dok = d.abs() <= bound;
        let eok = t >= lower * (1.0 - 1e-12) - slack && t <= upper * (1.0 + 1e-12) + slack;
        dpass &= dok;
        epass &= eok;
        if !(dok && eok) && first.is_none() {
            first = Some(i);
        }
        nodes.push(EnvelopeNode { sigma: s, tau: t, dtau: d, derivative_bound: bound, lower, upper, ok: dok && eok });
    }
    let span = profile.sigma.last().copied().unwrap_or(s0) - s0;
    Ok(EnvelopeReport {
        kappa,
        slack,
        pass: dpass && epass,
        derivative_pass: dpass,
        envelope_pass: epass,
        first_violation: first,
        certificate: t0 * (kappa * span).exp(),
        nodes,
    })
}

pub fn envelope_check(cyl: &OrbitCylinder, kappa: f64, slack: f64) -> Result<EnvelopeReport> {
    if cyl.orbits.iter().any(|o| o.normalization != Normalization::Reeb) {
        return Err(invalid("envelope check needs a Reeb-normalized cylinder"));
    }
    envelope_check_profile(&period_profile(cyl), kappa, slack)
}

/// `sigma,tau,dtau[,lower,upper]` rows for plotting.
pub fn profile_csv(profile: &PeriodProfile, envelope: Option<&EnvelopeReport>) -> String {
    let mut out = String::from(if envelope.is_some() { "sigma,tau,dtau,lower,upper\n" } else { "sigma,tau,dtau\n" });
    for i in 0..profile.sigma.len() {
        out.push_str(&format!("{},{},{}", profile.sigma[i], profile.tau[i], profile.dtau[i]));
        if let Some(env) = envelope {
            out.push_str(&format!(",{},{}", env.nodes[i].lower, env.nodes[i].upper));
        }
        out.push('\n');
    }
    out
}

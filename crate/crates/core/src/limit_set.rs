//! Limit orbits of a cylinder at its terminal parameter: Cauchy behaviour of
//! the tail, corrector refinement at `σ_∞`, clustering and the boundedness
//! report that stands in for compactness.

use serde::{Deserialize, Serialize};

use crate::continuation::OrbitCylinder;
use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::flow::{sample_at, IntegratorOptions};
use crate::loops;
use crate::orbit::{find_periodic, reeb_normalize, verify_residuals, OrbitOptions, ParametrisedOrbit};
use crate::symplectic::{HamiltonianHomotopy, PhasePoint, ReebField, SymplecticStructure};

/// C¹ loop distance: the best lattice-aligned sum of the sup distances of
/// the loops and of their `t`-derivatives, plus the period difference.
pub fn loop_distance(a: &ParametrisedOrbit, b: &ParametrisedOrbit) -> f64 {
    loops::aligned_distance(&a.sample_vecs(), &b.sample_vecs()).0 + (a.tau - b.tau).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitOptions {
    pub tail_fraction: f64,
    /// Defaults to `max(10 × cauchy_defect, 1e−6)`.
    pub eps_cluster: Option<f64>,
    pub max_candidates: usize,
    pub orbit: OrbitOptions,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions { tail_fraction: 0.2, eps_cluster: None, max_candidates: 3, orbit: OrbitOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub orbit: ParametrisedOrbit,
    /// `false` when the corrector at `σ_∞` failed and the tail orbit is kept
    /// as an extrapolant.
    pub refined: bool,
    /// `σ` of the tail orbit the candidate was seeded from.
    pub seed_sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundedness {
    pub max_tau: f64,
    pub min_tau: f64,
    pub max_sup_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSetReport {
    pub sigma_infinity: f64,
    pub candidates: Vec<Candidate>,
    /// Candidate indices per cluster, each sorted, clusters ordered by their
    /// smallest index.
    pub clusters: Vec<Vec<usize>>,
    pub cauchy_defect: f64,
    pub eps_cluster: f64,
    pub connected: bool,
    pub nonempty: bool,
    /// Periods of the tail extrapolate to a blow-up at the next step.
    pub period_blow_up: bool,
    pub tail_size: usize,
    pub bounds: Boundedness,
    /// `(σ, loop distance to the first candidate)` over the tail.
    pub tail_distances: Vec<(f64, f64)>,
}

/// Re-time `orbit` so that it starts at the loop point closest to `target`
/// (exactly on the loop, via the Reeb flow).
fn rephase(orbit: &ParametrisedOrbit, target: &[f64], sys: &HamiltonianHomotopy, ss: &SymplecticStructure, opts: &OrbitOptions) -> Result<ParametrisedOrbit> {
    let samples = orbit.sample_vecs();
    let n = samples.len();
    let derivs = loops::spectral_derivative(&samples);
    let d = |t: f64| -> f64 {
        loops::evaluate(&samples, &derivs, t).iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    };
    let k = (0..n).min_by(|&i, &j| d(i as f64 / n as f64).total_cmp(&d(j as f64 / n as f64))).unwrap_or(0);
    let (mut lo, mut hi) = ((k as f64 - 1.0) / n as f64, (k as f64 + 1.0) / n as f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if d(m1) < d(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let t = (0.5 * (lo + hi)).rem_euclid(1.0);
    if t * n as f64 <= 1e-12 {
        return Ok(orbit.clone());
    }
    let vf = ReebField { sys, ss, sigma: orbit.sigma };
    let io = IntegratorOptions::with_tol(opts.integration_tol);
    let start = sample_at(&vf, orbit.start(), &[t * orbit.tau], io)?.remove(0);
    let times: Vec<f64> = (1..n).map(|i| i as f64 * orbit.tau / n as f64).collect();
    let mut pts = vec![start.clone()];
    pts.extend(sample_at(&vf, &start, &times, io)?);
    let mut out = orbit.clone();
    out.samples = pts.into_iter().map(PhasePoint).collect();
    out.residuals = verify_residuals(&out, sys, ss, opts)?;
    Ok(out)
}

fn refine(
    seed: &ParametrisedOrbit,
    sigma_inf: f64,
    anchor: &[f64],
    sys: &HamiltonianHomotopy,
    ss: &SymplecticStructure,
    opts: &OrbitOptions,
) -> Result<ParametrisedOrbit> {
    let mut oo = *opts;
    oo.samples = seed.n_samples();
    let h = find_periodic(sys, ss, seed.start(), seed.hamiltonian_period, sigma_inf, &oo)?;
    let r = reeb_normalize(&h, sys, ss, &oo)?;
    rephase(&r, anchor, sys, ss, &oo)
}

/// Single-linkage components of the `eps`-graph; deterministic because
/// pairs are visited in index order.
pub fn single_linkage(dist: &[Vec<f64>], eps: f64) -> Vec<Vec<usize>> {
    let n = dist.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut j = i;
        while p[j] != r {
            let next = p[j];
            p[j] = r;
            j = next;
        }
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if dist[i][j] <= eps {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut root_of: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        match root_of[r] {
            Some(c) => clusters[c].push(i),
            None => {
                root_of[r] = Some(clusters.len());
                clusters.push(vec![i]);
            }
        }
    }
    clusters
}

fn is_connected(dist: &[Vec<f64>], nodes: &[usize], eps: f64) -> bool {
    if nodes.is_empty() {
        return false;
    }
    let mut seen = vec![false; nodes.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..nodes.len() {
            if !seen[j] && dist[nodes[i]][nodes[j]] <= eps {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Extract the limit set of `cyl` at `σ_∞ = cyl.sigma_end`.
///
/// Without a system the tail orbits themselves serve as (unrefined)
/// candidates. If the tail periods extrapolate to a blow-up one step past
/// `σ_∞` there is no limit orbit and the report is empty.
pub fn extract_limit_set(
    cyl: &OrbitCylinder,
    system: Option<(&HamiltonianHomotopy, &SymplecticStructure)>,
    opts: &LimitOptions,
    exec: Execution,
) -> Result<LimitSetReport> {
    let last = cyl.orbits.last().ok_or_else(|| invalid("empty cylinder"))?;
    if !(opts.tail_fraction > 0.0 && opts.tail_fraction <= 1.0) {
        return Err(invalid(format!("tail fraction must lie in (0, 1], got {}", opts.tail_fraction)));
    }
    let sigma_inf = cyl.sigma_end;
    let span = sigma_inf - cyl.sigma_start;
    let cut = sigma_inf - opts.tail_fraction * span - 1e-12;
    let tail: Vec<&ParametrisedOrbit> = cyl.orbits.iter().filter(|o| o.sigma >= cut).collect();
    let tail = if tail.is_empty() { vec![last] } else { tail };

    let adjacent: Vec<f64> = exec.map_range(tail.len().saturating_sub(1), |i| loop_distance(tail[i], tail[i + 1]));
    let cauchy_defect = adjacent.iter().cloned().fold(0.0, f64::max);

    let period_blow_up = if tail.len() >= 3 {
        let (a, b) = (tail[tail.len() - 2], tail[tail.len() - 1]);
        let h = b.sigma - a.sigma;
        let slope = (1.0 / b.tau - 1.0 / a.tau) / h;
        1.0 / b.tau + slope * h < 0.5 / b.tau
    } else {
        false
    };

    let candidates: Vec<Candidate> = if period_blow_up {
        vec![]
    } else {
        let seeds: Vec<&ParametrisedOrbit> = tail.iter().rev().take(opts.max_candidates.max(1)).cloned().collect();
        let anchor = last.start().to_vec();
        exec.map(&seeds, |s| match system {
            Some((sys, ss)) => match refine(s, sigma_inf, &anchor, sys, ss, &opts.orbit) {
                Ok(o) => Candidate { orbit: o, refined: true, seed_sigma: s.sigma, note: None },
                Err(e) => Candidate { orbit: (*s).clone(), refined: false, seed_sigma: s.sigma, note: Some(format!("corrector failed: {e}")) },
            },
            None => Candidate { orbit: (*s).clone(), refined: false, seed_sigma: s.sigma, note: Some("no system to refine with".into()) },
        })
    };

    let m = candidates.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let pd = exec.map(&pairs, |&(i, j)| loop_distance(&candidates[i].orbit, &candidates[j].orbit));
    let mut dist = vec![vec![0.0; m]; m];
    for (&(i, j), d) in pairs.iter().zip(pd) {
        dist[i][j] = d;
        dist[j][i] = d;
    }
    let eps_cluster = opts.eps_cluster.unwrap_or((10.0 * cauchy_defect).max(1e-6));
    let clusters = single_linkage(&dist, eps_cluster);
    let reps: Vec<usize> = clusters.iter().map(|c| c[0]).collect();
    let connected = is_connected(&dist, &reps, eps_cluster);

    let all = tail.iter().cloned().chain(candidates.iter().map(|c| &c.orbit));
    let mut bounds = Boundedness { max_tau: 0.0, min_tau: f64::INFINITY, max_sup_norm: 0.0 };
    for o in all {
        bounds.max_tau = bounds.max_tau.max(o.tau);
        bounds.min_tau = bounds.min_tau.min(o.tau);
        bounds.max_sup_norm = bounds.max_sup_norm.max(o.sup_norm());
    }
    let tail_distances = match candidates.first() {
        Some(c) => exec.map(&tail, |o| (o.sigma, loop_distance(o, &c.orbit))),
        None => vec![],
    };

    Ok(LimitSetReport {
        sigma_infinity: sigma_inf,
        nonempty: !candidates.is_empty(),
        candidates,
        clusters,
        cauchy_defect,
        eps_cluster,
        connected,
        period_blow_up,
        tail_size: tail.len(),
        bounds,
        tail_distances,
    })
}

/// `sigma,distance` rows for plotting the approach to the limit.
pub fn distances_csv(report: &LimitSetReport) -> String {
    let mut out = String::from("sigma,distance\n");
    for (s, d) in &report.tail_distances {
        out.push_str(&format!("{s},{d}\n"));
    }
    out
}

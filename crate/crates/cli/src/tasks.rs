//! One function per task kind. Each returns its artifacts and whether every
//! certificate it checked passed.

use anyhow::{Context, Result};
use orbitcyl::action::{
    build_tubular, criticality_residual, default_epsilon, estimate_kappa_on_range, period_action_defect, period_bound_certificate, Certificate,
    Criticality, KappaSampling, Mollifiers, StabilityBounds,
};
use orbitcyl::continuation::{continue_family, envelope_check, period_profile, profile_csv, ContinuationOptions, EnvelopeReport, OrbitCylinder, Termination};
use orbitcyl::limit_set::{distances_csv, extract_limit_set, LimitOptions, LimitSetReport};
use orbitcyl::mane::mane_estimate;
use orbitcyl::orbit::{find_periodic, reeb_normalize, with_floquet, ParametrisedOrbit};
use orbitcyl::symplectic::{f_sigma, sample_level_set, stability_residual};
use orbitcyl::{Error, Execution};
use serde::Serialize;

use crate::config::{Format, LimitTask, Loaded, ManeTask, NormalizationChoice, OrbitTask, StabilityTask, System, TaskConfig};

pub enum Artifact {
    Json(String),
    Csv(String),
}

pub struct Outcome {
    pub pass: bool,
    pub summary: String,
    pub files: Vec<(String, Artifact)>,
}

fn json<T: Serialize>(v: &T) -> Result<Artifact> {
    Ok(Artifact::Json(serde_json::to_string_pretty(v)? + "\n"))
}

pub fn run(loaded: &Loaded) -> Result<Outcome> {
    let cfg = &loaded.config;
    let system = cfg.system.as_ref().map(|s| s.build()).transpose()?;
    let sys = || system.as_ref().context("this task needs a [system] block");
    match &cfg.task {
        TaskConfig::CheckStability(t) => check_stability(loaded, sys()?, t),
        TaskConfig::FindOrbit(t) => find_orbit(loaded, sys()?, t),
        TaskConfig::Continue(t) => continuation(loaded, sys()?, t, false),
        TaskConfig::ActionReport(t) => continuation(loaded, sys()?, t, true),
        TaskConfig::LimitSet(t) => limit_set(loaded, system.as_ref(), t),
        TaskConfig::Mane(t) => mane(loaded, t),
    }
}

fn exec(loaded: &Loaded) -> Execution {
    loaded.config.numerics.execution()
}

fn sampling(loaded: &Loaded, s: &System) -> KappaSampling {
    let nm = &loaded.config.numerics;
    KappaSampling {
        nodes: nm.kappa_nodes,
        samples_per_node: nm.kappa_samples,
        bounds: vec![(-nm.sample_box, nm.sample_box); s.sys.dim()],
        epsilon: nm.epsilon,
        seed: nm.seed,
    }
}

fn sigma_nodes(lo: f64, hi: f64, nodes: usize) -> Vec<f64> {
    if nodes == 1 {
        return vec![lo];
    }
    (0..nodes).map(|i| lo + (hi - lo) * i as f64 / (nodes - 1) as f64).collect()
}

#[derive(Serialize)]
struct StabilityNode {
    sigma: f64,
    points: usize,
    f_min: f64,
    f_max: f64,
    max_residual: f64,
    violations: Vec<String>,
}

#[derive(Serialize)]
struct StabilityReport {
    task: &'static str,
    tolerance: f64,
    pass: bool,
    nodes: Vec<StabilityNode>,
}

fn check_stability(loaded: &Loaded, s: &System, t: &StabilityTask) -> Result<Outcome> {
    let nm = &loaded.config.numerics;
    let bounds = vec![(-nm.sample_box, nm.sample_box); s.sys.dim()];
    let mut nodes = vec![];
    for (i, sigma) in sigma_nodes(s.sigma_range[0], s.sigma_range[1], t.nodes).into_iter().enumerate() {
        let pts = sample_level_set(&s.sys, sigma, &bounds, t.points, nm.seed.wrapping_add(i as u64)).with_context(|| format!("sampling the level set at sigma = {sigma}"))?;
        let per = exec(loaded).map(&pts, |x| -> orbitcyl::Result<(f64, f64)> { Ok((f_sigma(&s.sys, x, sigma)?, stability_residual(&s.sys, &s.ss, x, sigma)?)) });
        let mut node = StabilityNode { sigma, points: pts.len(), f_min: f64::INFINITY, f_max: 0.0, max_residual: 0.0, violations: vec![] };
        for (x, r) in pts.iter().zip(per) {
            match r {
                Ok((f, res)) => {
                    node.f_min = node.f_min.min(f);
                    node.f_max = node.f_max.max(f);
                    node.max_residual = node.max_residual.max(res);
                    if res > nm.stability_tol {
                        node.violations.push(format!("residual {res:e} at {x:?}"));
                    }
                }
                Err(Error::StabilityViolation(m)) => node.violations.push(m),
                Err(e) => return Err(e).with_context(|| format!("stability at sigma = {sigma}")),
            }
        }
        nodes.push(node);
    }
    let pass = nodes.iter().all(|n| n.violations.is_empty());
    let mut csv = String::from("sigma,f_min,f_max,max_residual,violations\n");
    for n in &nodes {
        csv.push_str(&format!("{},{},{},{},{}\n", n.sigma, n.f_min, n.f_max, n.max_residual, n.violations.len()));
    }
    let worst = nodes.iter().map(|n| n.max_residual).fold(0.0, f64::max);
    let report = StabilityReport { task: "check-stability", tolerance: nm.stability_tol, pass, nodes };
    Ok(Outcome {
        pass,
        summary: format!("stability residual max {worst:.3e}, {}", if pass { "stable" } else { "violations found" }),
        files: vec![("check-stability.json".into(), json(&report)?), ("stability.csv".into(), Artifact::Csv(csv))],
    })
}

fn samples_csv(orbit: &ParametrisedOrbit) -> String {
    let n = orbit.samples[0].n();
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",q{i}"));
    }
    for i in 1..=n {
        out.push_str(&format!(",p{i}"));
    }
    out.push('\n');
    let m = orbit.n_samples();
    for (k, x) in orbit.samples.iter().enumerate() {
        out.push_str(&(k as f64 / m as f64).to_string());
        for v in x.as_slice() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct OrbitReport<'a> {
    task: &'static str,
    sigma: f64,
    tau: f64,
    hamiltonian_period: f64,
    unit_count: usize,
    nondegenerate: bool,
    orbit: &'a ParametrisedOrbit,
}

fn find_orbit(loaded: &Loaded, s: &System, t: &OrbitTask) -> Result<Outcome> {
    let opts = loaded.config.numerics.orbit_options();
    let sigma = t.sigma.unwrap_or(s.sigma_range[0]);
    let h = find_periodic(&s.sys, &s.ss, &t.seed_point, t.period_guess, sigma, &opts).context("orbit search")?;
    let orbit = match t.normalization {
        NormalizationChoice::Hamiltonian => h,
        NormalizationChoice::Reeb => reeb_normalize(&h, &s.sys, &s.ss, &opts).context("Reeb normalization")?,
    };
    let orbit = with_floquet(orbit, &s.sys, &s.ss, &opts).context("Floquet analysis")?;
    let fl = orbit.floquet.as_ref().context("missing Floquet data")?;
    let report = OrbitReport {
        task: "find-orbit",
        sigma,
        tau: orbit.tau,
        hamiltonian_period: orbit.hamiltonian_period,
        unit_count: fl.unit_count,
        nondegenerate: fl.nondegenerate,
        orbit: &orbit,
    };
    Ok(Outcome {
        pass: true,
        summary: format!("orbit at sigma = {sigma}: tau = {:.12}, unit count {}", orbit.tau, fl.unit_count),
        files: vec![("find-orbit.json".into(), json(&report)?), ("orbit.csv".into(), Artifact::Csv(samples_csv(&orbit)))],
    })
}

fn start_and_continue(loaded: &Loaded, s: &System, seed: &[f64], period: f64) -> Result<OrbitCylinder> {
    let nm = &loaded.config.numerics;
    let opts = nm.orbit_options();
    let start = find_periodic(&s.sys, &s.ss, seed, period, s.sigma_range[0], &opts).context("starting orbit")?;
    let copts = ContinuationOptions { initial_step: nm.initial_step.min(nm.max_step), max_step: nm.max_step, min_step: nm.min_step, orbit: opts, ..Default::default() };
    continue_family(&start, s.sigma_range[1], &s.sys, &s.ss, &copts).context("continuation")
}

/// Estimated bounds, or the fixed `κ` with `f` measured along the orbits.
fn kappa_bounds(loaded: &Loaded, s: &System, cyl: &OrbitCylinder, fixed: Option<f64>) -> Result<(StabilityBounds, f64)> {
    match fixed {
        None => estimate_kappa_on_range(&s.sys, &s.ss, cyl.sigma_start, cyl.sigma_end, &sampling(loaded, s), exec(loaded)).context("kappa estimate"),
        Some(kappa) => {
            let (mut lo, mut hi, mut count) = (f64::INFINITY, 0.0f64, 0);
            for o in &cyl.orbits {
                for x in &o.samples {
                    let f = f_sigma(&s.sys, x.as_slice(), o.sigma)?;
                    lo = lo.min(f);
                    hi = hi.max(f);
                    count += 1;
                }
            }
            let eps = match loaded.config.numerics.epsilon {
                Some(e) => e,
                None => {
                    let mut e = f64::INFINITY;
                    for o in &cyl.orbits {
                        e = e.min(default_epsilon(&s.sys, o.sigma, &o.sample_vecs())?);
                    }
                    e
                }
            };
            Ok((StabilityBounds { kappa, f_min: lo, f_max: hi, max_dsigma_lambda: 0.0, max_dsigma_hbar: 0.0, sample_count: count }, eps))
        }
    }
}

#[derive(Serialize)]
struct OrbitRow {
    sigma: f64,
    tau: f64,
    unit_count: usize,
    nondegenerate: bool,
    action: f64,
    period_action_defect: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    criticality: Option<Criticality>,
}

#[derive(Serialize)]
struct CylinderReport {
    task: &'static str,
    termination: Termination,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
    sigma_start: f64,
    sigma_end: f64,
    epsilon: f64,
    kappa_bounds: StabilityBounds,
    envelope: EnvelopeReport,
    certificate: Certificate,
    period_action_pass: bool,
    pass: bool,
    orbits: Vec<OrbitRow>,
}

fn continuation(loaded: &Loaded, s: &System, t: &OrbitTask, with_action: bool) -> Result<Outcome> {
    let nm = &loaded.config.numerics;
    let cyl = start_and_continue(loaded, s, &t.seed_point, t.period_guess)?;
    let (bounds, eps) = kappa_bounds(loaded, s, &cyl, t.kappa)?;
    let envelope = envelope_check(&cyl, bounds.kappa, nm.envelope_slack)?;
    let certificate = period_bound_certificate(&cyl, &bounds)?;
    let moll = Mollifiers::new(eps)?;
    let rows = exec(loaded).map(&cyl.orbits, |o| -> Result<OrbitRow> {
        let (action, defect) = period_action_defect(o, &s.sys, &s.ss, eps)?;
        let criticality = if with_action {
            let chart = build_tubular(&s.sys, &s.ss, o.sigma, eps, o.sample_vecs(), nm.stability_tol)?;
            Some(criticality_residual(o, &chart, &moll, 8, nm.seed)?)
        } else {
            None
        };
        let fl = o.floquet.as_ref();
        Ok(OrbitRow {
            sigma: o.sigma,
            tau: o.tau,
            unit_count: fl.map_or(0, |f| f.unit_count),
            nondegenerate: fl.is_some_and(|f| f.nondegenerate),
            action,
            period_action_defect: defect,
            criticality,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let period_action_pass = rows
        .iter()
        .all(|r| r.period_action_defect <= nm.period_action_tol && r.criticality.as_ref().is_none_or(|c| c.residual <= nm.period_action_tol));
    let pass = envelope.pass && certificate.pass && period_action_pass;
    let task = if with_action { "action-report" } else { "continue" };
    let summary = format!(
        "{} orbits over sigma in [{}, {}] ({:?}); kappa = {:.4}, envelope {}, C = {:.6}, certificate {}, period-action {}",
        cyl.len(),
        cyl.sigma_start,
        cyl.sigma_end,
        cyl.termination,
        bounds.kappa,
        verdict(envelope.pass),
        certificate.c,
        verdict(certificate.pass),
        verdict(period_action_pass)
    );
    let mut action_csv = String::from("sigma,tau,action,period_action_defect,criticality\n");
    for r in &rows {
        action_csv.push_str(&format!("{},{},{},{},{}\n", r.sigma, r.tau, r.action, r.period_action_defect, r.criticality.as_ref().map_or(f64::NAN, |c| c.residual)));
    }
    let profile = profile_csv(&period_profile(&cyl), Some(&envelope));
    let report = CylinderReport {
        task,
        termination: cyl.termination,
        failure: cyl.failure.clone(),
        sigma_start: cyl.sigma_start,
        sigma_end: cyl.sigma_end,
        epsilon: eps,
        kappa_bounds: bounds,
        envelope,
        certificate,
        period_action_pass,
        pass,
        orbits: rows,
    };
    Ok(Outcome {
        pass,
        summary,
        files: vec![
            (format!("{task}.json"), json(&report)?),
            ("cylinder.json".into(), json(&cyl)?),
            ("profile.csv".into(), Artifact::Csv(profile)),
            ("action.csv".into(), Artifact::Csv(action_csv)),
        ],
    })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "passed"
    } else {
        "FAILED"
    }
}

#[derive(Serialize)]
struct LimitReport {
    task: &'static str,
    kappa: f64,
    envelope: EnvelopeReport,
    pass: bool,
    limit_set: LimitSetReport,
}

fn limit_set(loaded: &Loaded, system: Option<&System>, t: &LimitTask) -> Result<Outcome> {
    let nm = &loaded.config.numerics;
    let cyl: OrbitCylinder = match &t.input {
        Some(p) => {
            let path = loaded.base_dir.join(p);
            let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read cylinder {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("invalid cylinder JSON {}", path.display()))?
        }
        None => {
            let s = system.context("limit-set without input needs a [system] block")?;
            start_and_continue(loaded, s, t.seed_point.as_deref().unwrap_or_default(), t.period_guess.unwrap_or(1.0))?
        }
    };
    let kappa = match (t.kappa, system) {
        (Some(k), _) => k,
        (None, Some(s)) => kappa_bounds(loaded, s, &cyl, None)?.0.kappa,
        (None, None) => anyhow::bail!("task.kappa is required without a system"),
    };
    let envelope = envelope_check(&cyl, kappa, nm.envelope_slack)?;
    let opts = LimitOptions { tail_fraction: t.tail_fraction, eps_cluster: t.eps_cluster, orbit: nm.orbit_options(), ..Default::default() };
    let report = extract_limit_set(&cyl, system.map(|s| (&s.sys, &s.ss)), &opts, exec(loaded)).context("limit-set extraction")?;
    let pass = envelope.pass && report.nonempty && report.connected;
    let summary = format!(
        "sigma_inf = {}: {} candidates in {} clusters, cauchy defect {:.3e}, nonempty {}, connected {}, period blow-up {}; envelope {}",
        report.sigma_infinity,
        report.candidates.len(),
        report.clusters.len(),
        report.cauchy_defect,
        report.nonempty,
        report.connected,
        report.period_blow_up,
        verdict(envelope.pass)
    );
    let profile = profile_csv(&period_profile(&cyl), Some(&envelope));
    let distances = distances_csv(&report);
    let out = LimitReport { task: "limit-set", kappa, envelope, pass, limit_set: report };
    Ok(Outcome {
        pass,
        summary,
        files: vec![
            ("limit-set.json".into(), json(&out)?),
            ("distances.csv".into(), Artifact::Csv(distances)),
            ("profile.csv".into(), Artifact::Csv(profile)),
        ],
    })
}

fn mane(loaded: &Loaded, t: &ManeTask) -> Result<Outcome> {
    let prob = t.build()?;
    let est = mane_estimate(&prob, t.degree, t.grid, exec(loaded)).context("critical value estimate")?;
    let summary = format!("c = {} (degree {}, grid {}, converged {}, {} of {} restarts agree)", est.c, est.degree, est.grid, est.converged, est.restarts_agreeing, est.restarts);
    Ok(Outcome { pass: true, summary, files: vec![("mane.json".into(), json(&est)?)] })
}

pub fn write(loaded: &Loaded, outcome: &Outcome) -> Result<Vec<std::path::PathBuf>> {
    let dir = loaded.base_dir.join(&loaded.config.output.dir);
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut written = vec![];
    for (name, art) in &outcome.files {
        let (fmt, text) = match art {
            Artifact::Json(t) => (Format::Json, t),
            Artifact::Csv(t) => (Format::Csv, t),
        };
        if !loaded.config.wants(fmt) {
            continue;
        }
        let path = dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

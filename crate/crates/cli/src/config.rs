//! Run configuration: strict TOML schema plus semantic validation.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use orbitcyl::expr::{Bindings, Expr};
use orbitcyl::mane::{MagneticTerm, ManeProblem};
use orbitcyl::orbit::OrbitOptions;
use orbitcyl::symplectic::{HamiltonianHomotopy, SymplecticStructure};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    #[serde(default)]
    pub numerics: Numerics,
    pub task: TaskConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Half-dimension.
    pub n: usize,
    /// `H(x)`, or a full `H(x, σ)` when `coupling` is given.
    pub hamiltonian: String,
    /// How `σ` enters; may refer to `H`. Defaults to `H(x) - sigma`.
    #[serde(default = "default_coupling")]
    pub coupling: String,
    /// Stabilizing field `X`, `2n` components.
    pub stabilizer: Vec<String>,
    /// Magnetic coefficients `α_ij(q)`, an antisymmetric `n×n` table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnetic: Option<Vec<Vec<String>>>,
    #[serde(default = "default_sigma_range")]
    pub sigma_range: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_tolerance: Option<f64>,
}

fn default_coupling() -> String {
    "H(x) - sigma".into()
}

fn default_sigma_range() -> [f64; 2] {
    [0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub samples: usize,
    pub newton_tol: f64,
    pub max_iter: usize,
    pub integration_tol: f64,
    pub tau_min: f64,
    pub tol_level: f64,
    pub tol_ode: f64,
    pub tol_floquet: f64,
    pub stability_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// Tube width for the action functional; derived from the level sets when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub envelope_slack: f64,
    pub period_action_tol: f64,
    pub kappa_nodes: usize,
    pub kappa_samples: usize,
    /// Half-width of the sampling box `[-b, b]^{2n}`.
    pub sample_box: f64,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for Numerics {
    fn default() -> Self {
        let o = OrbitOptions::default();
        Numerics {
            samples: o.samples,
            newton_tol: o.newton_tol,
            max_iter: o.max_iter,
            integration_tol: o.integration_tol,
            tau_min: o.tau_min,
            tol_level: o.tol_level,
            tol_ode: o.tol_ode,
            tol_floquet: o.tol_floquet,
            stability_tol: 1e-8,
            initial_step: 0.05,
            max_step: 0.05,
            min_step: 1e-4,
            epsilon: None,
            envelope_slack: 1e-5,
            period_action_tol: 1e-6,
            kappa_nodes: 7,
            kappa_samples: 24,
            sample_box: 2.0,
            seed: 1,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TaskConfig {
    CheckStability(StabilityTask),
    FindOrbit(OrbitTask),
    Continue(OrbitTask),
    LimitSet(LimitTask),
    ActionReport(OrbitTask),
    Mane(ManeTask),
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::CheckStability(_) => "check-stability",
            TaskConfig::FindOrbit(_) => "find-orbit",
            TaskConfig::Continue(_) => "continue",
            TaskConfig::LimitSet(_) => "limit-set",
            TaskConfig::ActionReport(_) => "action-report",
            TaskConfig::Mane(_) => "mane",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityTask {
    /// Level-set samples per `σ` node.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn default_points() -> usize {
    100
}

fn default_nodes() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationChoice {
    Hamiltonian,
    Reeb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitTask {
    pub seed_point: Vec<f64>,
    pub period_guess: f64,
    /// Parameter for `find-orbit`; continuation always starts at `sigma_range[0]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default = "default_normalization")]
    pub normalization: NormalizationChoice,
    /// Use this `κ` instead of estimating it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

fn default_normalization() -> NormalizationChoice {
    NormalizationChoice::Reeb
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitTask {
    /// Cylinder JSON written by a `continue` run, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Used when no input is given: continue from here first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_guess: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default = "default_tail")]
    pub tail_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_cluster: Option<f64>,
}

fn default_tail() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManeTask {
    pub n: usize,
    /// Row-major metric entries; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<Vec<f64>>>,
    pub potential: String,
    /// Periodic primitive `β₀`, one expression per coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive: Option<Vec<String>>,
    /// Declared `α_ij`, checked against `dβ₀`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<Vec<Vec<String>>>,
    /// Constant `B` of a non-exact `B dq1∧dq2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnetic_constant: Option<f64>,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_degree() -> usize {
    4
}

fn default_grid() -> usize {
    24
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Relative paths resolve against the config file's directory.
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), formats: vec![Format::Json, Format::Csv] }
    }
}

/// A system ready for computation.
pub struct System {
    pub sys: HamiltonianHomotopy,
    pub ss: SymplecticStructure,
    pub sigma_range: [f64; 2],
}

/// A validated configuration with its location.
pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

pub fn parse_expr(src: &str, n: usize, key: &str, bindings: &Bindings) -> Result<Expr> {
    Expr::parse_with(src, n, bindings).with_context(|| format!("{key}: cannot parse `{src}`"))
}

fn positive(v: f64, key: &str) -> Result<()> {
    ensure!(v.is_finite() && v > 0.0, "{key}: must be positive and finite, got {v}");
    Ok(())
}

impl Numerics {
    fn validate(&self) -> Result<()> {
        for (v, k) in [
            (self.newton_tol, "numerics.newton_tol"),
            (self.integration_tol, "numerics.integration_tol"),
            (self.tau_min, "numerics.tau_min"),
            (self.tol_level, "numerics.tol_level"),
            (self.tol_ode, "numerics.tol_ode"),
            (self.tol_floquet, "numerics.tol_floquet"),
            (self.stability_tol, "numerics.stability_tol"),
            (self.initial_step, "numerics.initial_step"),
            (self.max_step, "numerics.max_step"),
            (self.min_step, "numerics.min_step"),
            (self.envelope_slack, "numerics.envelope_slack"),
            (self.period_action_tol, "numerics.period_action_tol"),
            (self.sample_box, "numerics.sample_box"),
        ] {
            positive(v, k)?;
        }
        if let Some(e) = self.epsilon {
            positive(e, "numerics.epsilon")?;
        }
        ensure!(self.samples >= 16, "numerics.samples: need at least 16, got {}", self.samples);
        ensure!(self.max_iter > 0, "numerics.max_iter: must be positive");
        ensure!(self.min_step <= self.max_step, "numerics.min_step: exceeds max_step");
        ensure!(self.kappa_nodes > 0 && self.kappa_samples > 0, "numerics.kappa_nodes/kappa_samples: must be positive");
        Ok(())
    }

    pub fn orbit_options(&self) -> OrbitOptions {
        OrbitOptions {
            samples: self.samples,
            newton_tol: self.newton_tol,
            max_iter: self.max_iter,
            integration_tol: self.integration_tol,
            tau_min: self.tau_min,
            tol_level: self.tol_level,
            tol_ode: self.tol_ode,
            tol_floquet: self.tol_floquet,
        }
    }

    pub fn execution(&self) -> orbitcyl::Execution {
        if self.parallel {
            orbitcyl::Execution::Parallel
        } else {
            orbitcyl::Execution::Sequential
        }
    }
}

impl SystemConfig {
    pub fn build(&self) -> Result<System> {
        let n = self.n;
        ensure!(n >= 1, "system.n: must be at least 1");
        let [a, b] = self.sigma_range;
        ensure!(
            a.is_finite() && b.is_finite() && 0.0 <= a && a <= b && b <= 1.0,
            "system.sigma_range: [{a}, {b}] must be an ordered subinterval of [0, 1]"
        );
        let h = parse_expr(&self.hamiltonian, n, "system.hamiltonian", &Bindings::new())?;
        let mut bind = Bindings::new();
        bind.insert("H".into(), h.root().clone());
        let coupled = parse_expr(&self.coupling, n, "system.coupling", &bind)?;
        ensure!(coupled.depends_on_sigma(), "system.coupling: `{}` does not depend on sigma", self.coupling);
        ensure!(self.stabilizer.len() == 2 * n, "system.stabilizer: need {} components, got {}", 2 * n, self.stabilizer.len());
        let x = self
            .stabilizer
            .iter()
            .enumerate()
            .map(|(i, s)| parse_expr(s, n, &format!("system.stabilizer[{i}]"), &Bindings::new()))
            .collect::<Result<Vec<_>>>()?;
        let mut sys = HamiltonianHomotopy::new(coupled, x).context("system")?;
        if let Some(t) = self.level_tolerance {
            positive(t, "system.level_tolerance")?;
            sys = sys.with_level_tolerance(t);
        }
        let ss = match &self.magnetic {
            None => SymplecticStructure::standard(n),
            Some(rows) => {
                let alpha = rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| r.iter().enumerate().map(|(j, s)| parse_expr(s, n, &format!("system.magnetic[{i}][{j}]"), &Bindings::new())).collect())
                    .collect::<Result<Vec<Vec<_>>>>()?;
                SymplecticStructure::with_magnetic(alpha).context("system.magnetic")?
            }
        };
        Ok(System { sys, ss, sigma_range: self.sigma_range })
    }
}

impl ManeTask {
    pub fn build(&self) -> Result<ManeProblem> {
        let n = self.n;
        ensure!(n >= 1, "task.n: must be at least 1");
        let metric = match &self.metric {
            None => orbitcyl::nalgebra::DMatrix::identity(n, n),
            Some(rows) => {
                ensure!(rows.len() == n && rows.iter().all(|r| r.len() == n), "task.metric: must be {n}×{n}");
                orbitcyl::nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
        };
        let none = Bindings::new();
        let v = parse_expr(&self.potential, n, "task.potential", &none)?;
        let alpha = match (&self.primitive, self.magnetic_constant) {
            (Some(_), Some(_)) => bail!("task: give either `primitive` or `magnetic_constant`, not both"),
            (None, Some(b)) => MagneticTerm::NonExact { b },
            (None, None) => {
                ensure!(self.form.is_none(), "task.form: needs a primitive to check against");
                MagneticTerm::Zero
            }
            (Some(p), None) => {
                let primitive = p.iter().enumerate().map(|(i, s)| parse_expr(s, n, &format!("task.primitive[{i}]"), &none)).collect::<Result<Vec<_>>>()?;
                let form = match &self.form {
                    None => None,
                    Some(rows) => Some(
                        rows.iter()
                            .enumerate()
                            .map(|(i, r)| r.iter().enumerate().map(|(j, s)| parse_expr(s, n, &format!("task.form[{i}][{j}]"), &none)).collect())
                            .collect::<Result<Vec<Vec<_>>>>()?,
                    ),
                };
                MagneticTerm::Exact { primitive, form }
            }
        };
        ManeProblem::new(metric, v, alpha).context("task")
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.numerics.validate()?;
        let system = self.system.as_ref().map(|s| s.build()).transpose()?;
        let need_system = |what: &str| -> Result<&System> {
            system.as_ref().with_context(|| format!("task `{what}` needs a [system] block"))
        };
        match &self.task {
            TaskConfig::CheckStability(t) => {
                need_system("check-stability")?;
                ensure!(t.points > 0 && t.nodes > 0, "task.points/task.nodes: must be positive");
            }
            TaskConfig::FindOrbit(t) | TaskConfig::Continue(t) | TaskConfig::ActionReport(t) => {
                let s = need_system(self.task.name())?;
                ensure!(t.seed_point.len() == s.sys.dim(), "task.seed_point: need {} coordinates, got {}", s.sys.dim(), t.seed_point.len());
                positive(t.period_guess, "task.period_guess")?;
                if let Some(k) = t.kappa {
                    ensure!(k.is_finite() && k >= 1.0, "task.kappa: must be at least 1, got {k}");
                }
                if let Some(sg) = t.sigma {
                    ensure!(
                        (s.sigma_range[0]..=s.sigma_range[1]).contains(&sg),
                        "task.sigma: {sg} lies outside system.sigma_range"
                    );
                }
            }
            TaskConfig::LimitSet(t) => {
                ensure!(t.tail_fraction > 0.0 && t.tail_fraction <= 1.0, "task.tail_fraction: must lie in (0, 1]");
                if let Some(e) = t.eps_cluster {
                    positive(e, "task.eps_cluster")?;
                }
                if let Some(k) = t.kappa {
                    ensure!(k.is_finite() && k >= 1.0, "task.kappa: must be at least 1, got {k}");
                }
                match &t.input {
                    Some(_) => ensure!(t.seed_point.is_none(), "task.seed_point: not used together with task.input"),
                    None => {
                        let s = need_system("limit-set")?;
                        let p = t.seed_point.as_ref().context("task.seed_point: required without task.input")?;
                        ensure!(p.len() == s.sys.dim(), "task.seed_point: need {} coordinates", s.sys.dim());
                        positive(t.period_guess.context("task.period_guess: required without task.input")?, "task.period_guess")?;
                    }
                }
                if t.input.is_some() && system.is_none() {
                    ensure!(t.kappa.is_some(), "task.kappa: required when no system is given to estimate it");
                }
            }
            TaskConfig::Mane(t) => {
                t.build()?;
                ensure!(t.grid >= 2 * t.degree + 2, "task.grid: needs at least {} points for degree {}", 2 * t.degree + 2, t.degree);
            }
        }
        ensure!(!self.output.formats.is_empty(), "output.formats: must name at least one format");
        Ok(())
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

pub fn load(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let config: RunConfig = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    config.validate().with_context(|| format!("invalid config {}", path.display()))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, base_dir })
}

/// Canonical TOML echo of a validated config, defaults filled in.
pub fn normalized(config: &RunConfig) -> Result<String> {
    Ok(toml::to_string(config)?)
}

//! Phase space, the (possibly magnetically twisted) symplectic form, the
//! Hamiltonian homotopy with its stabilizing field, and the derived objects
//! `f_σ`, `R_σ` and `λ_σ`.
//!
//! Sign convention: `i_{X_H} ω = −dH`. With `ω = dp∧dq + π*α` this gives
//! `q̇ = ∂H/∂p`, `ṗ = −∂H/∂q + A(q)·∂H/∂p`, where `A` is the antisymmetric
//! coefficient matrix of `α = ½ Σ A_ij dq_i∧dq_j`. It is the convention for
//! which `dH(X) = ω(X, X_H)`, so `f_σ = dH_σ(X_σ) = λ_σ(X_{H_σ})`.
//!
//! Points are flat slices `[q_1..q_n, p_1..p_n]`. The form is stored as the
//! matrix `Ω` with `Ω v = i_v ω`, i.e. `ω(u, v) = (Ω u)·v`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::expr::{Dual, Expr, Node, Scalar};
use crate::flow::VectorField;
use crate::smooth;

/// A point `(q, p)` of phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhasePoint(pub Vec<f64>);

impl PhasePoint {
    pub fn new(q: &[f64], p: &[f64]) -> Self {
        assert_eq!(q.len(), p.len(), "q and p must have equal length");
        PhasePoint(q.iter().chain(p).cloned().collect())
    }

    pub fn n(&self) -> usize {
        self.0.len() / 2
    }

    pub fn q(&self) -> &[f64] {
        &self.0[..self.n()]
    }

    pub fn p(&self) -> &[f64] {
        &self.0[self.n()..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl AsRef<[f64]> for PhasePoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for PhasePoint {
    fn from(v: Vec<f64>) -> Self {
        PhasePoint(v)
    }
}

/// `ω = dp∧dq + π*α` on ℝ²ⁿ (or a torus quotient in `q`).
#[derive(Debug, Clone)]
pub struct SymplecticStructure {
    n: usize,
    magnetic: Option<Vec<Vec<Expr>>>,
}

impl SymplecticStructure {
    pub fn standard(n: usize) -> Self {
        SymplecticStructure { n, magnetic: None }
    }

    /// Twist by `α` given as an `n × n` matrix of expressions in `q`.
    ///
    /// Antisymmetry is checked at a fixed set of sample configurations; a
    /// non-antisymmetric matrix does not define a 2-form and is rejected.
    pub fn with_magnetic(alpha: Vec<Vec<Expr>>) -> Result<Self> {
        let n = alpha.len();
        if n == 0 || alpha.iter().any(|row| row.len() != n) {
            return Err(invalid("magnetic coefficients must form a square matrix"));
        }
        for e in alpha.iter().flatten() {
            if e.half_dim() != n || !e.depends_only_on_q() {
                return Err(invalid(format!("magnetic coefficient `{e}` must be an expression in q1..q{n}")));
            }
        }
        let ss = SymplecticStructure { n, magnetic: Some(alpha) };
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let samples: Vec<Vec<f64>> = (0..16)
            .map(|_| (0..2 * n).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        ss.check_antisymmetric(&samples, 1e-12)?;
        Ok(ss)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_twisted(&self) -> bool {
        self.magnetic.is_some()
    }

    pub fn alpha<S: Scalar>(&self, x: &[S]) -> Result<Option<Vec<Vec<S>>>> {
        let Some(m) = &self.magnetic else { return Ok(None) };
        let rows = m
            .iter()
            .map(|row| row.iter().map(|e| e.eval_generic(x)).collect::<Result<Vec<S>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(rows))
    }

    pub fn check_antisymmetric(&self, points: &[Vec<f64>], tol: f64) -> Result<()> {
        for x in points {
            if let Some(a) = self.alpha(x)? {
                for i in 0..self.n {
                    for j in 0..self.n {
                        let s = a[i][j] + a[j][i];
                        if s.abs() > tol * (1.0 + a[i][j].abs()) {
                            return Err(Error::SingularForm(format!(
                                "alpha is not antisymmetric at q = {:?}: a[{i}][{j}] + a[{j}][{i}] = {s:e}",
                                &x[..self.n]
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// `i_v ω` as a covector.
    pub fn contract<S: Scalar>(&self, x: &[S], v: &[S]) -> Result<Vec<S>> {
        let n = self.n;
        let mut out: Vec<S> = (0..n).map(|i| v[n + i].clone()).collect();
        if let Some(a) = self.alpha(x)? {
            for i in 0..n {
                for j in 0..n {
                    out[i] = out[i].clone() - a[i][j].clone() * v[j].clone();
                }
            }
        }
        out.extend((0..n).map(|i| -v[i].clone()));
        Ok(out)
    }

    /// `ω(u, v)`.
    pub fn pairing(&self, x: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
        Ok(self.contract(x, u)?.iter().zip(v).map(|(a, b)| a * b).sum())
    }

    pub fn form_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = 2 * self.n;
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            for (i, v) in self.contract(x, &e)?.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    /// Solve `Ω v = −dH` for the Hamiltonian vector field.
    pub fn hamiltonian_vector<S: Scalar>(&self, x: &[S], dh: &[S]) -> Result<Vec<S>> {
        let n = self.n;
        let mut v: Vec<S> = (0..n).map(|i| dh[n + i].clone()).collect();
        let mut vp: Vec<S> = (0..n).map(|i| -dh[i].clone()).collect();
        if let Some(a) = self.alpha(x)? {
            for i in 0..n {
                for j in 0..n {
                    vp[i] = vp[i].clone() + a[i][j].clone() * dh[n + j].clone();
                }
            }
        }
        v.extend(vp);
        Ok(v)
    }
}

#[derive(Debug, Clone)]
enum HamiltonianKind {
    Expr(Expr),
    /// `H / f̄` with `f̄` a smooth clamp of `dH(X)` into `[lo, hi]`.
    Normalized { base: Expr, lo: f64, hi: f64 },
}

/// The family `H(·, σ)` together with the stabilizing field `X(·, σ)`.
#[derive(Debug, Clone)]
pub struct HamiltonianHomotopy {
    n: usize,
    kind: HamiltonianKind,
    stabilizer: Vec<Expr>,
    level_tol: f64,
}

fn with_sigma<S: Scalar>(x: &[S], sigma: &S) -> Vec<S> {
    let mut v = x.to_vec();
    v.push(sigma.clone());
    v
}

impl HamiltonianHomotopy {
    /// `h` is an expression in `(q, p, sigma)`; `stabilizer` lists the `2n`
    /// components of `X`, ordered like the coordinates.
    pub fn new(h: Expr, stabilizer: Vec<Expr>) -> Result<Self> {
        let n = h.half_dim();
        if stabilizer.len() != 2 * n {
            return Err(invalid(format!(
                "stabilizing field needs {} components, got {}",
                2 * n,
                stabilizer.len()
            )));
        }
        if stabilizer.iter().any(|e| e.half_dim() != n) {
            return Err(invalid("stabilizing field and Hamiltonian disagree on dimension"));
        }
        Ok(HamiltonianHomotopy { n, kind: HamiltonianKind::Expr(h), stabilizer, level_tol: 1e-9 })
    }

    /// The autonomous coupling `H_σ(x) := H(x) − σ`.
    pub fn autonomous(h: Expr, stabilizer: Vec<Expr>) -> Result<Self> {
        let n = h.half_dim();
        let root = Node::Sub(Box::new(h.root().clone()), Box::new(Node::Var(2 * n)));
        Self::new(Expr::from_node(root, n), stabilizer)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn expression(&self) -> Option<&Expr> {
        match &self.kind {
            HamiltonianKind::Expr(e) => Some(e),
            HamiltonianKind::Normalized { .. } => None,
        }
    }

    pub fn stabilizer_exprs(&self) -> &[Expr] {
        &self.stabilizer
    }

    pub fn is_normalized(&self) -> bool {
        matches!(self.kind, HamiltonianKind::Normalized { .. })
    }

    /// Set the level-membership scale: `|H_σ(x)| ≤ tol · (1 + |x|²)`.
    pub fn with_level_tolerance(mut self, tol: f64) -> Self {
        self.level_tol = tol;
        self
    }

    pub fn level_tolerance(&self, x: &[f64]) -> f64 {
        self.level_tol * (1.0 + x.iter().map(|v| v * v).sum::<f64>())
    }

    pub fn depends_on_sigma(&self) -> bool {
        match &self.kind {
            HamiltonianKind::Expr(e) => e.depends_on_sigma() || self.stabilizer.iter().any(|s| s.depends_on_sigma()),
            HamiltonianKind::Normalized { base, .. } => {
                base.depends_on_sigma() || self.stabilizer.iter().any(|s| s.depends_on_sigma())
            }
        }
    }

    pub fn value<S: Scalar>(&self, x: &[S], sigma: &S) -> Result<S> {
        match &self.kind {
            HamiltonianKind::Expr(e) => e.eval_generic(&with_sigma(x, sigma)),
            HamiltonianKind::Normalized { base, lo, hi } => {
                let pt = with_sigma(x, sigma);
                let d = x.len();
                let lifted: Vec<Dual<S>> = pt
                    .iter()
                    .enumerate()
                    .map(|(i, v)| if i < d { Dual::variable(v.clone(), i, d) } else { Dual::constant_of(v.clone()) })
                    .collect();
                let h = base.eval_generic(&lifted)?;
                let xf = self.stabilizer(x, sigma)?;
                let mut f = S::zero();
                for (i, xi) in xf.into_iter().enumerate() {
                    f = f + h.partial(i) * xi;
                }
                Ok(h.re / smooth::clamp_generic(&f, *lo, *hi))
            }
        }
    }

    pub fn energy(&self, x: &[f64], sigma: f64) -> Result<f64> {
        self.value(x, &sigma)
    }

    /// Value and exact gradient in the phase variables.
    pub fn gradient<S: Scalar>(&self, x: &[S], sigma: &S) -> Result<(S, Vec<S>)> {
        let d = x.len();
        let lifted: Vec<Dual<S>> = x.iter().enumerate().map(|(i, v)| Dual::variable(v.clone(), i, d)).collect();
        let h = self.value(&lifted, &Dual::constant_of(sigma.clone()))?;
        let g = (0..d).map(|i| h.partial(i)).collect();
        Ok((h.re, g))
    }

    pub fn gradient_f64(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        Ok(self.gradient(x, &sigma)?.1)
    }

    /// `∂_σ H_σ(x)`.
    pub fn sigma_derivative(&self, x: &[f64], sigma: f64) -> Result<f64> {
        let lifted: Vec<Dual<f64>> = x.iter().map(|&v| Dual::constant_of(v)).collect();
        let h = self.value(&lifted, &Dual::variable(sigma, 0, 1))?;
        Ok(h.partial(0))
    }

    pub fn stabilizer<S: Scalar>(&self, x: &[S], sigma: &S) -> Result<Vec<S>> {
        let pt = with_sigma(x, sigma);
        self.stabilizer.iter().map(|e| e.eval_generic(&pt)).collect()
    }

    /// `dH_σ(X_σ)(x)` without any sign check.
    pub fn stability_function<S: Scalar>(&self, x: &[S], sigma: &S) -> Result<S> {
        let (_, g) = self.gradient(x, sigma)?;
        let xf = self.stabilizer(x, sigma)?;
        let mut acc = S::zero();
        for (a, b) in g.into_iter().zip(xf) {
            acc = acc + a * b;
        }
        Ok(acc)
    }

    pub fn is_on_level(&self, x: &[f64], sigma: f64) -> Result<bool> {
        Ok(self.energy(x, sigma)?.abs() <= self.level_tolerance(x))
    }
}

/// `X_{H_σ}` at `x`.
pub fn hamiltonian_vector_field(sys: &HamiltonianHomotopy, ss: &SymplecticStructure, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
    hamiltonian_field_generic(sys, ss, x, &sigma)
}

pub fn hamiltonian_field_generic<S: Scalar>(sys: &HamiltonianHomotopy, ss: &SymplecticStructure, x: &[S], sigma: &S) -> Result<Vec<S>> {
    let (_, g) = sys.gradient(x, sigma)?;
    ss.hamiltonian_vector(x, &g)
}

/// `f_σ(x) = dH_σ(X_σ)(x)`; nonpositive values violate stability.
pub fn f_sigma(sys: &HamiltonianHomotopy, x: &[f64], sigma: f64) -> Result<f64> {
    let f = sys.stability_function(x, &sigma)?;
    if !(f > positivity_floor(sys, x, sigma)?) {
        return Err(Error::StabilityViolation(format!("dH(X) = {f:e} ≤ 0 at x = {x:?}, sigma = {sigma}")));
    }
    Ok(f)
}

// Values of dH(X) at roundoff level relative to |dH||X| count as zero.
fn positivity_floor(sys: &HamiltonianHomotopy, x: &[f64], sigma: f64) -> Result<f64> {
    let g = sys.gradient_f64(x, sigma)?;
    let xf = sys.stabilizer(x, &sigma)?;
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(1e-12 * norm(&g) * norm(&xf))
}

pub fn reeb_field_generic<S: Scalar>(sys: &HamiltonianHomotopy, ss: &SymplecticStructure, x: &[S], sigma: &S) -> Result<Vec<S>> {
    let xh = hamiltonian_field_generic(sys, ss, x, sigma)?;
    let f = sys.stability_function(x, sigma)?;
    if !(f.value() > 0.0) {
        return Err(Error::StabilityViolation(format!("dH(X) = {:e} ≤ 0", f.value())));
    }
    Ok(xh.into_iter().map(|v| v / f.clone()).collect())
}

/// `R_σ = X_{H_σ} / f_σ`.
pub fn reeb_field(sys: &HamiltonianHomotopy, ss: &SymplecticStructure, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
    let f = f_sigma(sys, x, sigma)?;
    Ok(hamiltonian_vector_field(sys, ss, x, sigma)?.into_iter().map(|v| v / f).collect())
}

/// The stabilizing form `λ_σ = i_{X_σ} ω` at `x`.
pub fn stabilizing_form<S: Scalar>(sys: &HamiltonianHomotopy, ss: &SymplecticStructure, x: &[S], sigma: &S) -> Result<Vec<S>> {
    let xf = sys.stabilizer(x, sigma)?;
    ss.contract(x, &xf)
}

/// Orthonormal basis of the orthogonal complement of `normal`.
pub fn tangent_basis(normal: &[f64]) -> Vec<Vec<f64>> {
    let d = normal.len();
    let nn = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut accepted: Vec<Vec<f64>> = vec![normal.iter().map(|v| v / nn).collect()];
    for k in 0..d {
        if accepted.len() == d {
            break;
        }
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        for _ in 0..2 {
            for a in &accepted {
                let dot: f64 = a.iter().zip(&v).map(|(x, y)| x * y).sum();
                for i in 0..d {
                    v[i] -= dot * a[i];
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            accepted.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    accepted.remove(0);
    accepted
}

/// `max_i |dλ_σ(R_σ, v_i)|` over an orthonormal basis `{v_i}` of `T_xΣ_σ`.
///
/// Vanishes exactly when `ker ω_σ ⊆ ker dλ_σ` at `x`. The exterior derivative
/// is taken from the exact Jacobian of the components of `λ_σ`.
pub fn stability_residual(sys: &HamiltonianHomotopy, ss: &SymplecticStructure, x: &[f64], sigma: f64) -> Result<f64> {
    f_sigma(sys, x, sigma)?;
    if sys.n() == 1 {
        return Ok(0.0);
    }
    let d = x.len();
    let lifted = crate::expr::seed(x);
    let lam = stabilizing_form(sys, ss, &lifted, &Dual::constant_of(sigma))?;
    // dλ(u, v) = Σ (∂_i λ_j − ∂_j λ_i) u_i v_j
    let mut dl = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            dl[(i, j)] = lam[j].partial(i) - lam[i].partial(j);
        }
    }
    let r = reeb_field(sys, ss, x, sigma)?;
    let g = sys.gradient_f64(x, sigma)?;
    let mut worst = 0.0f64;
    for v in tangent_basis(&g) {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += dl[(i, j)] * r[i] * v[j];
            }
        }
        worst = worst.max(s.abs());
    }
    Ok(worst)
}

/// [`stability_residual`] turned into a pass/fail check.
pub fn check_stability(sys: &HamiltonianHomotopy, ss: &SymplecticStructure, x: &[f64], sigma: f64, tol: f64) -> Result<f64> {
    let r = stability_residual(sys, ss, x, sigma)?;
    if r > tol {
        return Err(Error::StabilityViolation(format!(
            "i_R dλ does not vanish on TΣ: residual {r:e} > {tol:e} at x = {x:?}, sigma = {sigma}"
        )));
    }
    Ok(r)
}

/// Replace `H` by `H / f̄`, where `f̄` agrees with `f = dH(X)` on `[1/κ̂, κ̂]`
/// and is smoothly clamped into `[1/(2κ̂), 2κ̂]` elsewhere. On the level set
/// the new Hamiltonian vector field is the Reeb field.
///
/// `samples` are points `(x, σ)` of the level sets used to validate `κ̂`.
pub fn normalize_hamiltonian(sys: &HamiltonianHomotopy, kappa_hat: f64, samples: &[(Vec<f64>, f64)]) -> Result<HamiltonianHomotopy> {
    let HamiltonianKind::Expr(base) = &sys.kind else {
        return Err(invalid("Hamiltonian is already normalized"));
    };
    if !(kappa_hat >= 1.0) {
        return Err(invalid(format!("kappa must be at least 1, got {kappa_hat}")));
    }
    for (x, sigma) in samples {
        let f = f_sigma(sys, x, *sigma)?;
        if f < 1.0 / kappa_hat || f > kappa_hat {
            return Err(invalid(format!("f = {f} at a level-set sample lies outside [1/κ, κ] for κ = {kappa_hat}")));
        }
    }
    Ok(HamiltonianHomotopy {
        n: sys.n,
        kind: HamiltonianKind::Normalized { base: base.clone(), lo: 1.0 / kappa_hat, hi: kappa_hat },
        stabilizer: sys.stabilizer.clone(),
        level_tol: sys.level_tol,
    })
}

/// Newton projection onto `Σ_σ` along the gradient.
pub fn project_to_level(sys: &HamiltonianHomotopy, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
    let mut y = x.to_vec();
    for it in 0..60 {
        let (h, g) = sys.gradient(&y, &sigma)?;
        let gg: f64 = g.iter().map(|v| v * v).sum();
        if h.abs() <= 1e-14 * (1.0 + y.iter().map(|v| v * v).sum::<f64>()) {
            return Ok(y);
        }
        if gg < 1e-24 {
            return Err(Error::Regularity(format!("dH vanishes near {y:?}")));
        }
        for i in 0..y.len() {
            y[i] -= h * g[i] / gg;
        }
        if it == 59 {
            break;
        }
    }
    Err(Error::NoConvergence { iterations: 60, residual: sys.energy(&y, sigma)?.abs() })
}

/// Deterministic random samples of `Σ_σ`: uniform draws in `bounds`
/// projected onto the level set.
pub fn sample_level_set(sys: &HamiltonianHomotopy, sigma: f64, bounds: &[(f64, f64)], count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if bounds.len() != sys.dim() {
        return Err(invalid("sampling box must have one interval per coordinate"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 50 * count + 100 {
            return Err(invalid(format!("could only place {} of {count} samples on the level set", out.len())));
        }
        let x: Vec<f64> = bounds.iter().map(|&(a, b)| rng.gen_range(a..b)).collect();
        if let Ok(y) = project_to_level(sys, &x, sigma) {
            if y.iter().all(|v| v.is_finite()) {
                out.push(y);
            }
        }
    }
    Ok(out)
}

fn jacobian_from_duals(cols: usize, rows: &[Dual<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i].partial(j))
}

/// `X_{H_σ}` as a [`VectorField`] at fixed `σ`.
pub struct HamiltonianField<'a> {
    pub sys: &'a HamiltonianHomotopy,
    pub ss: &'a SymplecticStructure,
    pub sigma: f64,
}

impl VectorField for HamiltonianField<'_> {
    fn dim(&self) -> usize {
        self.sys.dim()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        hamiltonian_vector_field(self.sys, self.ss, x, self.sigma)
    }
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let v = hamiltonian_field_generic(self.sys, self.ss, &crate::expr::seed(x), &Dual::constant_of(self.sigma))?;
        Ok(jacobian_from_duals(x.len(), &v))
    }
    fn energy(&self, x: &[f64]) -> Option<f64> {
        self.sys.energy(x, self.sigma).ok()
    }
}

/// `R_σ = X_{H_σ}/f_σ`, extended off the level set by the same formula.
pub struct ReebField<'a> {
    pub sys: &'a HamiltonianHomotopy,
    pub ss: &'a SymplecticStructure,
    pub sigma: f64,
}

impl VectorField for ReebField<'_> {
    fn dim(&self) -> usize {
        self.sys.dim()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        reeb_field(self.sys, self.ss, x, self.sigma)
    }
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let v = reeb_field_generic(self.sys, self.ss, &crate::expr::seed(x), &Dual::constant_of(self.sigma))?;
        Ok(jacobian_from_duals(x.len(), &v))
    }
    fn energy(&self, x: &[f64]) -> Option<f64> {
        self.sys.energy(x, self.sigma).ok()
    }
}

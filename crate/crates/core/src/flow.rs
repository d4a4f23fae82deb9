//! Integration of autonomous vector fields and their variational equations.
//!
//! The workhorse is an adaptive Dormand–Prince 5(4) scheme with cubic Hermite
//! dense output. A fixed-step Störmer–Verlet path is provided for separable
//! mechanical Hamiltonians `½|p|² + V(q)`.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};

/// An autonomous vector field on ℝᵈ with an exact Jacobian.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>>;

    /// Conserved quantity used for drift bookkeeping, if the field has one.
    fn energy(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions {
    /// Local error tolerance, mixed absolute/relative per component.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions { tol: 1e-12, max_steps: 2_000_000 }
    }
}

impl IntegratorOptions {
    pub fn with_tol(tol: f64) -> Self {
        IntegratorOptions { tol, ..Default::default() }
    }
}

/// Accepted steps of an integration, with derivatives for dense output.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
    /// `max_t |E(x(t)) − E(x(0))|` over accepted steps, 0 when the field has no energy.
    pub energy_drift: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least two states")
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least two states")
    }

    /// Cubic Hermite interpolation between the accepted steps bracketing `t`.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let last = self.times.len() - 1;
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[last] {
            return self.states[last].clone();
        }
        let k = match self.times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            Ok(k) => return self.states[k].clone(),
            Err(k) => k - 1,
        };
        hermite(
            self.times[k],
            &self.states[k],
            &self.derivatives[k],
            self.times[k + 1],
            &self.states[k + 1],
            &self.derivatives[k + 1],
            t,
        )
    }
}

pub(crate) fn hermite(t0: f64, y0: &[f64], f0: &[f64], t1: f64, y1: &[f64], f1: &[f64], t: f64) -> Vec<f64> {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    (0..y0.len())
        .map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i])
        .collect()
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn check_finite(y: &[f64], t: f64) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("state at t = {t}")))
    }
}

/// Adaptive integration of `y' = rhs(y)` from 0 to `t_end`.
///
/// Steps are clipped so that every time in `stops` (sorted, inside
/// `(0, t_end]`) is hit exactly; `observe` sees every accepted state, and
/// states at the stop times are returned in order.
fn dopri<F, O>(rhs: F, y0: &[f64], t_end: f64, opts: IntegratorOptions, stops: &[f64], mut observe: O) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
    O: FnMut(f64, &[f64], &[f64]),
{
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(invalid(format!("integration time must be positive, got {t_end}")));
    }
    if !(opts.tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    check_finite(y0, 0.0)?;
    let d = y0.len();
    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut f = rhs(&y)?;
    check_finite(&f, 0.0)?;
    observe(t, &y, &f);

    let ynorm = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let fnorm = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut h = if fnorm > 0.0 { 0.5 * opts.tol.powf(0.2) * ynorm / fnorm } else { t_end };
    h = h.min(t_end).max(1e-12 * t_end);

    let mut out = Vec::with_capacity(stops.len());
    let mut next_stop = 0;
    let mut k: [Vec<f64>; 7] = Default::default();
    let mut steps = 0usize;
    let mut tmp = vec![0.0; d];

    while t < t_end {
        if steps >= opts.max_steps {
            return Err(Error::StepUnderflow { t, h });
        }
        steps += 1;
        let target = stops.get(next_stop).copied().unwrap_or(t_end).min(t_end);
        let mut hit = false;
        let mut h_step = h;
        if t + h_step >= target * (1.0 - 1e-15) - 1e-300 {
            h_step = target - t;
            hit = true;
        }
        if h_step <= 1e-14 * t.abs().max(1.0) && !hit {
            return Err(Error::StepUnderflow { t, h: h_step });
        }

        k[0] = f.clone();
        let mut left_domain = false;
        for s in 1..7 {
            for i in 0..d {
                let mut acc = y[i];
                for j in 0..s {
                    acc += h_step * A[s][j] * k[j][i];
                }
                tmp[i] = acc;
            }
            match rhs(&tmp) {
                Ok(v) => k[s] = v,
                Err(e @ Error::NonFinite(_)) | Err(e @ Error::Domain { .. }) => {
                    if h_step < 1e-14 * t.abs().max(1.0) {
                        return Err(e);
                    }
                    left_domain = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if left_domain {
            h = h_step * 0.2;
            continue;
        }
        let y_new: Vec<f64> = (0..d)
            .map(|i| y[i] + h_step * (0..7).map(|j| B5[j] * k[j][i]).sum::<f64>())
            .collect();
        let mut err = 0.0f64;
        for i in 0..d {
            let e = h_step * (0..7).map(|j| (B5[j] - B4[j]) * k[j][i]).sum::<f64>();
            let sc = opts.tol * 1.0f64.max(y[i].abs()).max(y_new[i].abs());
            err = err.max(e.abs() / sc);
        }
        if !err.is_finite() {
            h = h_step * 0.2;
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::NonFinite(format!("state near t = {t}")));
            }
            continue;
        }
        if err <= 1.0 {
            t = if hit { target } else { t + h_step };
            y = y_new;
            f = k[6].clone();
            check_finite(&y, t)?;
            observe(t, &y, &f);
            if hit && next_stop < stops.len() && target == stops[next_stop].min(t_end) {
                while next_stop < stops.len() && stops[next_stop] <= t {
                    out.push(y.clone());
                    next_stop += 1;
                }
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            // a clipped step says nothing about the natural step size
            h = if hit { h.max(h_step * fac) } else { h_step * fac };
        } else {
            h = h_step * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
    Ok(out)
}

/// Integrate `vf` from `x0` over `[0, t_end]`.
pub fn integrate(vf: &dyn VectorField, x0: &[f64], t_end: f64, tol: f64) -> Result<Trajectory> {
    integrate_with(vf, x0, t_end, IntegratorOptions::with_tol(tol))
}

pub fn integrate_with(vf: &dyn VectorField, x0: &[f64], t_end: f64, opts: IntegratorOptions) -> Result<Trajectory> {
    check_dim(vf, x0)?;
    let mut traj = Trajectory { times: vec![], states: vec![], derivatives: vec![], energy_drift: 0.0 };
    let e0 = vf.energy(x0);
    let mut drift = 0.0f64;
    dopri(|y| vf.eval(y), x0, t_end, opts, &[], |t, y, f| {
        traj.times.push(t);
        traj.states.push(y.to_vec());
        traj.derivatives.push(f.to_vec());
        if let (Some(e0), Some(e)) = (e0, vf.energy(y)) {
            drift = drift.max((e - e0).abs());
        }
    })?;
    traj.energy_drift = drift;
    Ok(traj)
}

/// States at each of `times` (sorted, in `(0, t_end]`), each hit exactly by
/// the step sequence rather than interpolated.
pub fn sample_at(vf: &dyn VectorField, x0: &[f64], times: &[f64], opts: IntegratorOptions) -> Result<Vec<Vec<f64>>> {
    check_dim(vf, x0)?;
    let Some(&t_end) = times.last() else { return Ok(vec![]) };
    if times.windows(2).any(|w| w[1] <= w[0]) || times[0] <= 0.0 {
        return Err(invalid("sample times must be strictly increasing and positive"));
    }
    dopri(|y| vf.eval(y), x0, t_end, opts, times, |_, _, _| {})
}

fn check_dim(vf: &dyn VectorField, x0: &[f64]) -> Result<()> {
    if x0.len() != vf.dim() {
        return Err(invalid(format!("state has dimension {}, field expects {}", x0.len(), vf.dim())));
    }
    Ok(())
}

/// `φ_T(x0)` together with `Dφ_T|x0`, from the variational equations
/// `Ṁ = J(x(t)) M`, `M(0) = I` integrated alongside the state.
pub fn flow_with_variational(vf: &dyn VectorField, x0: &[f64], t_end: f64, tol: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_dim(vf, x0)?;
    let d = x0.len();
    if t_end == 0.0 {
        return Ok((x0.to_vec(), DMatrix::identity(d, d)));
    }
    let mut y0 = x0.to_vec();
    y0.extend(DMatrix::<f64>::identity(d, d).iter());
    let rhs = |y: &[f64]| -> Result<Vec<f64>> {
        let x = &y[..d];
        let mut out = vf.eval(x)?;
        let jac = vf.jacobian(x)?;
        let m = DMatrix::from_column_slice(d, d, &y[d..]);
        out.extend((jac * m).iter());
        Ok(out)
    };
    let mut last = Vec::new();
    dopri(rhs, &y0, t_end, IntegratorOptions::with_tol(tol), &[], |_, y, _| last = y.to_vec())?;
    let x = last[..d].to_vec();
    let m = DMatrix::from_column_slice(d, d, &last[d..]);
    Ok((x, m))
}

/// Fixed-step Störmer–Verlet for `H = ½|p|² + V(q)` on the state `(q, p)`.
pub fn stormer_verlet<G>(grad_v: G, x0: &[f64], t_end: f64, steps: usize) -> Result<Trajectory>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if steps == 0 || !(t_end > 0.0) {
        return Err(invalid("Störmer–Verlet needs steps > 0 and t_end > 0"));
    }
    let n = x0.len() / 2;
    let h = t_end / steps as f64;
    let mut q = x0[..n].to_vec();
    let mut p = x0[n..].to_vec();
    let mut g = grad_v(&q)?;
    let deriv = |p: &[f64], g: &[f64]| -> Vec<f64> { p.iter().cloned().chain(g.iter().map(|v| -v)).collect() };
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        derivatives: vec![deriv(&p, &g)],
        energy_drift: 0.0,
    };
    for k in 1..=steps {
        for i in 0..n {
            p[i] -= 0.5 * h * g[i];
        }
        for i in 0..n {
            q[i] += h * p[i];
        }
        g = grad_v(&q)?;
        for i in 0..n {
            p[i] -= 0.5 * h * g[i];
        }
        let mut x = q.clone();
        x.extend_from_slice(&p);
        check_finite(&x, k as f64 * h)?;
        traj.times.push(k as f64 * h);
        traj.derivatives.push(deriv(&p, &g));
        traj.states.push(x);
    }
    Ok(traj)
}

/// A field given by closures; handy for linear systems and tests.
pub struct FnField<F, J> {
    pub dim: usize,
    pub f: F,
    pub jac: J,
}

impl<F, J> VectorField for FnField<F, J>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
    J: Fn(&[f64]) -> DMatrix<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.f)(x))
    }
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok((self.jac)(x))
    }
}

/// `ẋ = B x`.
pub struct LinearField(pub DMatrix<f64>);

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((&self.0 * nalgebra::DVector::from_column_slice(x)).iter().cloned().collect())
    }
    fn jacobian(&self, _x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.0.clone())
    }
}

//! `exp(−1/t)` glue functions shared by the clamps and mollifiers.

use crate::expr::Scalar;

fn psi(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// C^∞ step: 0 for `t ≤ 0`, 1 for `t ≥ 1`.
pub fn step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = psi(t);
        a / (a + psi(1.0 - t))
    }
}

/// Derivative of [`step`].
pub fn step_derivative(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let a = psi(t);
    let b = psi(1.0 - t);
    let da = a / (t * t);
    let db = -b / ((1.0 - t) * (1.0 - t));
    (da * (a + b) - a * (da + db)) / ((a + b) * (a + b))
}

pub fn step_generic<S: Scalar>(t: &S) -> S {
    let v = t.value();
    if v <= 0.0 {
        S::zero()
    } else if v >= 1.0 {
        S::constant(1.0)
    } else {
        let a = (S::constant(-1.0) / t.clone()).exp();
        let b = (S::constant(-1.0) / (S::constant(1.0) - t.clone())).exp();
        a.clone() / (a + b)
    }
}

/// Smoothly clamp a positive quantity known to lie in `[lo, hi]` on the
/// region of interest: identity there, values confined to `[¾lo, 2hi]`.
pub fn clamp_generic<S: Scalar>(f: &S, lo: f64, hi: f64) -> S {
    let v = f.value();
    if v > hi {
        let phi = step_generic(&((f.clone() - S::constant(hi)) / S::constant(hi)));
        (S::constant(1.0) - phi.clone()) * f.clone() + phi.scale(1.5 * hi)
    } else if v < lo {
        let phi = step_generic(&((S::constant(lo) - f.clone()) / S::constant(0.25 * lo)));
        (S::constant(1.0) - phi.clone()) * f.clone() + phi.scale(0.75 * lo)
    } else {
        f.clone()
    }
}

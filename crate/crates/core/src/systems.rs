//! Built-in homotopies with closed-form orbit families, used by the tests,
//! the acceptance suite and the bundled CLI configs.

use std::f64::consts::PI;

use crate::continuation::{OrbitCylinder, Termination};
use crate::expr::Expr;
use crate::orbit::{Normalization, ParametrisedOrbit, Residuals};
use crate::symplectic::{HamiltonianHomotopy, PhasePoint, SymplecticStructure};

fn parse(src: &str, n: usize) -> Expr {
    Expr::parse(src, n).expect("built-in expression parses")
}

fn radial(n: usize, factor: &str) -> Vec<Expr> {
    (1..=n)
        .map(|i| format!("q{i}"))
        .chain((1..=n).map(|i| format!("p{i}")))
        .map(|v| parse(&format!("({factor})*{v}"), n))
        .collect()
}

/// `½(|q|² + |p|²) − ½ − σ` with the radial Liouville field `½(q∂q + p∂p)`.
pub fn harmonic_oscillator(n: usize) -> (HamiltonianHomotopy, SymplecticStructure) {
    let h = parse("0.5*(norm2(q)+norm2(p))-0.5-sigma", n);
    (HamiltonianHomotopy::new(h, radial(n, "0.5")).expect("valid"), SymplecticStructure::standard(n))
}

/// Unit sphere `½(|q|² + |p|²) − ½` with stabilizing field `c·(q∂q + p∂p)`;
/// `c = ½` is the Liouville field (`f ≡ ½`), `c = 1` the contact case (`f ≡ 1`).
pub fn sphere(n: usize, c: f64) -> (HamiltonianHomotopy, SymplecticStructure) {
    let h = parse("0.5*(norm2(q)+norm2(p))-0.5", n);
    (HamiltonianHomotopy::new(h, radial(n, &format!("{c}"))).expect("valid"), SymplecticStructure::standard(n))
}

/// The unit 3-sphere with `X = ½x + ½q1∂q1`: `dH(X) = ½ + ½q1² > 0`, yet
/// `dλ = ω + ½dp1∧dq1`, so the kernel condition fails away from special points.
pub fn bent_sphere() -> (HamiltonianHomotopy, SymplecticStructure) {
    let h = parse("0.5*(norm2(q)+norm2(p))-0.5", 2);
    let x = ["q1", "0.5*q2", "0.5*p1", "0.5*p2"].iter().map(|s| parse(s, 2)).collect();
    (HamiltonianHomotopy::new(h, x).expect("valid"), SymplecticStructure::standard(2))
}

/// `½|p|² + ½(q1² + 2q2²) − ½ − σ` with `X_σ = (q∂q + p∂p)/(1 + 2σ)`, so that
/// `f_σ ≡ 1` on every level and the q1-circle family has `τ ≡ 2π`.
pub fn anisotropic() -> (HamiltonianHomotopy, SymplecticStructure) {
    let h = parse("0.5*(p1^2+p2^2)+0.5*(q1^2+2*q2^2)-0.5-sigma", 2);
    (HamiltonianHomotopy::new(h, radial(2, "1/(1+2*sigma)")).expect("valid"), SymplecticStructure::standard(2))
}

/// The q1-circle of [`anisotropic`] at `σ`: radius `√(1+2σ)`, clockwise,
/// starting on the positive q1 axis, Reeb-normalized with `τ = 2π`.
pub fn anisotropic_orbit(sigma: f64, samples: usize) -> ParametrisedOrbit {
    let r = (1.0 + 2.0 * sigma).sqrt();
    circle_orbit(sigma, r, 2.0 * PI, samples, 2)
}

/// Clockwise circle `(r cos 2πt, 0.., −r sin 2πt, 0..)` in the (q1, p1) plane.
pub fn circle_orbit(sigma: f64, r: f64, tau: f64, samples: usize, n: usize) -> ParametrisedOrbit {
    let pts = (0..samples)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / samples as f64;
            let mut x = vec![0.0; 2 * n];
            x[0] = r * t.cos();
            x[n] = -r * t.sin();
            PhasePoint(x)
        })
        .collect();
    ParametrisedOrbit {
        sigma,
        tau,
        hamiltonian_period: tau,
        normalization: Normalization::Reeb,
        samples: pts,
        residuals: Residuals { ode: 0.0, level: 0.0, closure: 0.0 },
        floquet: None,
    }
}

/// `½p² − cos q + 1.5σ − ½` with `X = ½(q∂q + p∂p)`: librations shrinking
/// onto the bottom equilibrium as `σ → 1`, where the level set degenerates.
pub fn pendulum_fold() -> (HamiltonianHomotopy, SymplecticStructure) {
    let h = parse("0.5*p1^2-cos(q1)+1.5*sigma-0.5", 1);
    (HamiltonianHomotopy::new(h, radial(1, "0.5")).expect("valid"), SymplecticStructure::standard(1))
}

/// A cylinder of circles `r(σ)` with prescribed periods, for exercising the
/// certificate and limit-set logic on families with known behaviour.
pub fn synthetic_cylinder(sigmas: &[f64], radius: impl Fn(f64) -> f64, tau: impl Fn(f64) -> f64, samples: usize) -> OrbitCylinder {
    let orbits: Vec<_> = sigmas.iter().map(|&s| circle_orbit(s, radius(s), tau(s), samples, 1)).collect();
    OrbitCylinder {
        sigma_start: sigmas[0],
        sigma_end: *sigmas.last().expect("nonempty grid"),
        orbits,
        termination: Termination::ReachedTarget,
        failure: None,
    }
}

use std::f64::consts::PI;

use orbitcyl::action::*;
use orbitcyl::continuation::{continue_family, ContinuationOptions};
use orbitcyl::expr::Expr;
use orbitcyl::orbit::{find_periodic, reeb_normalize, OrbitOptions, ParametrisedOrbit};
use orbitcyl::symplectic::{sample_level_set, stabilizing_form, HamiltonianHomotopy, PhasePoint};
use orbitcyl::{systems, Error, Execution};

fn unit(v: [f64; 4]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn sphere_orbit() -> ParametrisedOrbit {
    let (sys, ss) = systems::sphere(2, 0.5);
    let o = find_periodic(&sys, &ss, &[1.0, 0.0, 0.0, 0.0], 6.0, 0.0, &OrbitOptions::default()).unwrap();
    reeb_normalize(&o, &sys, &ss, &OrbitOptions::default()).unwrap()
}

#[test]
fn mollifier_invariants_on_a_fine_grid() {
    let eps = 0.3;
    let m = Mollifiers::new(eps).unwrap();
    let mut prev_h = f64::NEG_INFINITY;
    for i in 0..=10_000 {
        let r = -2.0 * eps + 4.0 * eps * i as f64 / 10_000.0;
        let (f, h) = (m.f(r), m.h(r));
        if r.abs() <= eps / 2.0 {
            assert_eq!(f, r + 1.0);
        }
        if r.abs() >= 0.9 * eps {
            assert_eq!(f, 0.0);
        }
        if r.abs() <= eps / 6.0 {
            assert_eq!(h, r);
        }
        if r >= eps / 2.0 {
            assert_eq!(h, eps / 3.0);
        }
        if r <= -eps / 2.0 {
            assert_eq!(h, -eps / 3.0);
        }
        assert!(h >= prev_h);
        prev_h = h;
    }
    // C² across the glue: h' matches differences, second differences of f
    // and h stay bounded and vary continuously
    let d = 1e-6;
    let dd = 1e-4;
    let second = |g: &dyn Fn(f64) -> f64, r: f64| (g(r + dd) - 2.0 * g(r) + g(r - dd)) / (dd * dd);
    let (mut prev_h2, mut prev_f2) = (0.0, 0.0);
    for i in 0..=2000 {
        let r = -eps + 2.0 * eps * i as f64 / 2000.0;
        let fd = (m.h(r + d) - m.h(r - d)) / (2.0 * d);
        assert!((fd - m.h_prime(r)).abs() < 1e-6, "{r}: {fd} vs {}", m.h_prime(r));
        let h2 = second(&|x| m.h(x), r);
        let f2 = second(&|x| m.f(x), r);
        assert!(h2.abs() < 7.0 / eps && f2.abs() < 100.0 / (eps * eps));
        if i > 0 {
            assert!((h2 - prev_h2).abs() < 0.05 * 7.0 / eps, "h'' jumps at {r}");
            assert!((f2 - prev_f2).abs() < 0.05 * 100.0 / (eps * eps), "f'' jumps at {r}");
        }
        prev_h2 = h2;
        prev_f2 = f2;
    }
    assert!(Mollifiers::new(0.0).is_err());
}

#[test]
fn chart_moves_h_at_unit_rate() {
    let (sys, ss) = systems::sphere(2, 0.5);
    let cloud = sample_level_set(&sys, 0.0, &[(-1.5, 1.5); 4], 40, 3).unwrap();
    let eps = default_epsilon(&sys, 0.0, &cloud).unwrap();
    assert!((eps - 0.25).abs() < 1e-12);
    let chart = build_tubular(&sys, &ss, 0.0, eps, cloud.clone(), 1e-8).unwrap();
    for x in &cloud {
        assert_eq!(chart.psi(0.0, x).unwrap(), *x);
        for k in -5..=5 {
            let r = k as f64 * eps / 10.0;
            let p = chart.psi(r, x).unwrap();
            assert!((chart.r_coord(&p).unwrap() - r).abs() < 1e-8);
        }
    }
    let p = chart.psi(0.1, &[1.0, 0.0, 0.0, 0.0]).unwrap();
    assert!((sys.energy(&p, 0.0).unwrap() - 0.1).abs() < 1e-8);

    // the flow towards the origin cannot reach H = −0.6
    let err = build_tubular(&sys, &ss, 0.0, 0.6, cloud, 1e-8).unwrap_err();
    assert!(matches!(err, Error::Regularity(_)), "{err:?}");

    let (bent, ss) = systems::bent_sphere();
    let cloud = vec![unit([0.6, 0.3, 0.5, 0.2])];
    assert!(matches!(build_tubular(&bent, &ss, 0.0, 0.1, cloud, 1e-6), Err(Error::StabilityViolation(_))));
}

#[test]
fn extended_forms_on_the_sphere() {
    let (sys, ss) = systems::sphere(2, 0.5);
    let cloud = sample_level_set(&sys, 0.0, &[(-1.5, 1.5); 4], 60, 5).unwrap();
    let eps = 0.25;
    let m = Mollifiers::new(eps).unwrap();
    let chart = build_tubular(&sys, &ss, 0.0, eps, cloud.clone(), 1e-8).unwrap();
    let x = &cloud[7];
    let lam = stabilizing_form(&sys, &ss, x, &0.0).unwrap();
    let bar = extended_one_form(&chart, &m, x).unwrap();
    for i in 0..4 {
        assert!((bar[i] - lam[i]).abs() < 1e-13);
    }
    assert_eq!(extended_hamiltonian(&chart, &m, x).unwrap(), 0.0);

    // p at r = ε/4: the radial projection contributes 1/|p|, f contributes 1 + r
    let r = eps / 4.0;
    let p: Vec<f64> = x.iter().map(|v| v * (1.0 + 2.0 * r).sqrt()).collect();
    let bar = extended_one_form(&chart, &m, &p).unwrap();
    let expected: Vec<f64> = lam.iter().map(|l| (1.0 + r) * l / (1.0 + 2.0 * r).sqrt()).collect();
    for i in 0..4 {
        assert!((bar[i] - expected[i]).abs() < 1e-6);
    }

    // H̄ at r = ε/6 is still linear
    let r = eps / 6.0;
    let p: Vec<f64> = x.iter().map(|v| v * (1.0 + 2.0 * r).sqrt()).collect();
    assert!((extended_hamiltonian(&chart, &m, &p).unwrap() - eps / 6.0).abs() < 1e-8);

    let far = [3.0, 0.0, 0.0, 0.0];
    assert!(extended_one_form(&chart, &m, &far).unwrap().iter().all(|v| *v == 0.0));
    assert_eq!(extended_hamiltonian(&chart, &m, &far).unwrap(), eps / 3.0);
    assert_eq!(extended_hamiltonian(&chart, &m, &[0.0; 4]).unwrap(), -eps / 3.0);
}

#[test]
fn ambiguous_side_outside_the_chart() {
    let (sys, ss) = systems::sphere(1, 0.5);
    let cloud: Vec<Vec<f64>> = (-2..=2).map(|k| {
        let a = 0.02 * k as f64;
        vec![a.cos(), a.sin()]
    }).collect();
    let chart = build_tubular(&sys, &ss, 0.0, 0.1, cloud, 1e-8).unwrap();
    let m = Mollifiers::new(0.1).unwrap();
    assert!(matches!(extended_hamiltonian(&chart, &m, &[-1.0, 0.0]), Err(Error::Separation(_))));
}

#[test]
fn period_action_equality_and_criticality() {
    let (sys, ss) = systems::sphere(2, 0.5);
    let orbit = sphere_orbit();
    let eps = 0.25;
    let m = Mollifiers::new(eps).unwrap();
    let chart = build_tubular(&sys, &ss, 0.0, eps, orbit.sample_vecs(), 1e-8).unwrap();
    let a = rabinowitz_action(&orbit, &chart, &m).unwrap();
    assert!((a - PI).abs() <= 1e-6 * PI, "{a}");
    let back = rabinowitz_action(&orbit.reversed(), &chart, &m).unwrap();
    assert!((back + PI).abs() <= 1e-6 * PI, "{back}");

    let crit = criticality_residual(&orbit, &chart, &m, 4, 11).unwrap();
    assert!(crit.residual <= 1e-6, "{crit:?}");

    let mut off = orbit.clone();
    off.tau += 1e-3;
    let crit = criticality_residual(&off, &chart, &m, 2, 11).unwrap();
    assert!(crit.mean_hbar < 1e-9);
    assert!(crit.tau_derivative.abs() < 1e-9);
    assert!((crit.ode_defect - 2e-3).abs() < 1e-6, "{}", crit.ode_defect);
    assert!(crit.residual >= 1e-3);

    // constant loops
    let constant = |x: Vec<f64>, tau: f64| {
        let mut o = orbit.clone();
        o.samples = vec![PhasePoint(x); 32];
        o.tau = tau;
        o
    };
    let outside = constant(vec![2.0, 0.0, 0.0, 0.0], 1.0);
    assert!((rabinowitz_action(&outside, &chart, &m).unwrap() + eps / 3.0).abs() < 1e-15);
    assert!(criticality_residual(&outside, &chart, &m, 1, 1).unwrap().residual >= eps / 6.0);
    let inside = constant(vec![(1.0f64 + eps / 2.0).sqrt(), 0.0, 0.0, 0.0], 1.0);
    assert!(criticality_residual(&inside, &chart, &m, 1, 1).unwrap().residual >= eps / 6.0);
}

#[test]
fn kappa_for_sigma_independent_systems() {
    let grid = [0.0, 0.5, 1.0];
    for (c, expected) in [(0.5, 2.5), (1.0, 1.25)] {
        let (sys, ss) = systems::sphere(2, c);
        let samples: Vec<Vec<Vec<f64>>> = grid.iter().map(|_| sample_level_set(&sys, 0.0, &[(-1.5, 1.5); 4], 30, 9).unwrap()).collect();
        let b = estimate_kappa(&sys, &ss, &grid, &samples, 0.25, 1.0, Execution::Parallel).unwrap();
        assert!(b.max_dsigma_hbar == 0.0 && b.max_dsigma_lambda < 1e-9);
        assert!((b.kappa - expected).abs() < 1e-9, "{}", b.kappa);
        assert!(1.0 / b.kappa <= b.f_min && b.f_max <= b.kappa);
    }

    // nonconstant f on an ellipse
    let sys = HamiltonianHomotopy::new(
        Expr::parse("0.5*(q1^2+4*p1^2)-0.5", 1).unwrap(),
        vec![Expr::parse("0.5*q1", 1).unwrap(), Expr::parse("0.5*p1", 1).unwrap()],
    )
    .unwrap();
    let ss = orbitcyl::symplectic::SymplecticStructure::standard(1);
    let samples = vec![sample_level_set(&sys, 0.0, &[(-2.0, 2.0); 2], 50, 1).unwrap()];
    let b = estimate_kappa(&sys, &ss, &[0.3], &samples, 0.1, 1.0, Execution::Sequential).unwrap();
    // H is quadratic, so dH(½x) = H + ½ = ½ on the level set
    assert!((b.f_min - 0.5).abs() < 1e-10 && (b.f_max - 0.5).abs() < 1e-10);
    assert!((b.kappa - 2.5).abs() < 1e-9);
}

#[test]
fn parallel_and_sequential_kappa_agree() {
    let (sys, ss) = systems::anisotropic();
    let grid = [0.0, 0.45, 0.9];
    let samples: Vec<Vec<Vec<f64>>> = grid.iter().map(|&s| sample_level_set(&sys, s, &[(-2.0, 2.0); 4], 24, 2).unwrap()).collect();
    let a = estimate_kappa(&sys, &ss, &grid, &samples, 0.1, 0.9, Execution::Sequential).unwrap();
    let b = estimate_kappa(&sys, &ss, &grid, &samples, 0.1, 0.9, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    assert!(a.kappa.is_finite() && a.kappa >= 1.25);
    // ∂σ H = −1 on this family
    assert!((a.max_dsigma_hbar - 1.0).abs() < 1e-6);
}

#[test]
fn certificates() {
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.09).collect();
    let bounds = StabilityBounds { kappa: 2.0, f_min: 1.0, f_max: 1.0, max_dsigma_lambda: 0.0, max_dsigma_hbar: 1.0, sample_count: 1 };
    let flat = systems::synthetic_cylinder(&grid, |_| 1.0, |_| 2.0 * PI, 16);
    let cert = period_bound_certificate(&flat, &bounds).unwrap();
    assert!(cert.pass);
    let c = 2.0 * PI * (2.0f64 * 0.9).exp();
    assert!((cert.c - c).abs() < 1e-9);
    assert!((cert.margins[3] - (c / (2.0 * PI) - 1.0)).abs() < 1e-9);

    let fast = systems::synthetic_cylinder(&grid, |_| 1.0, |s| 2.0 * PI * (4.0 * s * s + 4.0 * s).exp(), 16);
    let cert = period_bound_certificate(&fast, &bounds).unwrap();
    assert!(!cert.pass);
    let json = serde_json::to_value(&cert).unwrap();
    assert!(json.get("C").is_some() && json["margins"].is_array());
}

#[test]
fn anisotropic_cylinder_satisfies_period_action_equality() {
    let (sys, ss) = systems::anisotropic();
    let start = find_periodic(&sys, &ss, &[1.0, 0.0, 0.0, 0.0], 6.0, 0.0, &OrbitOptions::default()).unwrap();
    let cyl = continue_family(&start, 0.3, &sys, &ss, &ContinuationOptions { initial_step: 0.1, max_step: 0.1, ..Default::default() }).unwrap();
    for o in &cyl.orbits {
        let (a, defect) = period_action_defect(o, &sys, &ss, 0.1).unwrap();
        assert!(defect <= 1e-6, "sigma {}: action {a}, tau {}", o.sigma, o.tau);
    }
}

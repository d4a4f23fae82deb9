use std::f64::consts::PI;

use orbitcyl::continuation::*;
use orbitcyl::limit_set::*;
use orbitcyl::orbit::{find_periodic, Normalization, OrbitOptions, ParametrisedOrbit, Residuals};
use orbitcyl::symplectic::PhasePoint;
use orbitcyl::{systems, Execution};
use proptest::prelude::*;

fn fourier_loop(c: &[f64], tau: f64, n: usize) -> ParametrisedOrbit {
    let samples = (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            PhasePoint(vec![
                c[0] * t.cos() + c[1] * (2.0 * t).sin() + c[2],
                c[3] * t.sin() + c[4] * (3.0 * t).cos(),
            ])
        })
        .collect();
    ParametrisedOrbit {
        sigma: 0.0,
        tau,
        hamiltonian_period: tau,
        normalization: Normalization::Reeb,
        samples,
        residuals: Residuals { ode: 0.0, level: 0.0, closure: 0.0 },
        floquet: None,
    }
}

fn coeffs() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (prop::collection::vec(-2.0..2.0f64, 5), 0.5..10.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn loop_distance_is_a_pseudometric(a in coeffs(), b in coeffs(), c in coeffs(), shift in 0usize..32) {
        let (la, lb, lc) = (fourier_loop(&a.0, a.1, 32), fourier_loop(&b.0, b.1, 32), fourier_loop(&c.0, c.1, 32));
        prop_assert!(loop_distance(&la, &la) <= 1e-12);
        let dab = loop_distance(&la, &lb);
        prop_assert!((dab - loop_distance(&lb, &la)).abs() <= 1e-9 * (1.0 + dab));
        let tol = 1e-9 * (1.0 + dab);
        prop_assert!(loop_distance(&la, &lc) <= dab + loop_distance(&lb, &lc) + tol);
        let mut rotated = la.clone();
        rotated.samples.rotate_left(shift);
        prop_assert!(loop_distance(&la, &rotated) <= 1e-9);
    }
}

#[test]
fn removable_endpoint_is_recovered_by_the_corrector() {
    let (sys, ss) = systems::anisotropic();
    let start = find_periodic(&sys, &ss, &[1.0, 0.0, 0.0, 0.0], 6.0, 0.0, &OrbitOptions::default()).unwrap();
    let mut cyl = continue_family(&start, 0.9, &sys, &ss, &ContinuationOptions::default()).unwrap();
    cyl.orbits.pop();
    assert!((cyl.sigma_end - 0.9).abs() < 1e-12);
    let par = extract_limit_set(&cyl, Some((&sys, &ss)), &LimitOptions::default(), Execution::Parallel).unwrap();
    assert!(par.nonempty && !par.period_blow_up && par.connected);
    assert_eq!(par.clusters.len(), 1);
    assert_eq!(par.tail_size, 3);
    assert!(par.candidates.iter().all(|c| c.refined));
    let exact = systems::anisotropic_orbit(0.9, par.candidates[0].orbit.n_samples());
    for c in &par.candidates {
        assert!((c.orbit.sigma - 0.9).abs() < 1e-12);
        assert!(loop_distance(&c.orbit, &exact) <= 1e-4, "{}", loop_distance(&c.orbit, &exact));
    }
    assert!(par.bounds.max_tau < 2.0 * PI + 1e-6);
    assert!((par.bounds.max_sup_norm - 2.8f64.sqrt()).abs() < 1e-6);
    let csv = distances_csv(&par);
    assert_eq!(csv.lines().count(), 1 + par.tail_size);

    let seq = extract_limit_set(&cyl, Some((&sys, &ss)), &LimitOptions::default(), Execution::Sequential).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn single_orbit_cylinder_has_itself_as_limit() {
    let cyl = systems::synthetic_cylinder(&[0.3], |_| 1.0, |_| 2.0 * PI, 64);
    let rep = extract_limit_set(&cyl, None, &LimitOptions::default(), Execution::Sequential).unwrap();
    assert!(rep.nonempty && rep.connected);
    assert_eq!(rep.cauchy_defect, 0.0);
    assert_eq!(rep.eps_cluster, 1e-6);
    assert_eq!(rep.candidates.len(), 1);
    assert!(!rep.candidates[0].refined);
    assert_eq!(loop_distance(&rep.candidates[0].orbit, &cyl.orbits[0]), 0.0);
}

#[test]
fn period_blow_up_leaves_the_limit_set_empty() {
    let sigmas: Vec<f64> = (0..20).map(|i| 0.05 * i as f64).collect();
    let cyl = systems::synthetic_cylinder(&sigmas, |_| 1.0, |s| 1.0 / (1.0 - s), 64);
    let rep = extract_limit_set(&cyl, None, &LimitOptions::default(), Execution::Sequential).unwrap();
    assert!(rep.period_blow_up);
    assert!(!rep.nonempty && !rep.connected);
    assert!(rep.cauchy_defect >= 10.0);
    assert!(rep.bounds.max_tau >= 20.0 - 1e-9);
    let env = envelope_check(&cyl, 1.25, 1e-5).unwrap();
    assert!(!env.pass);
}

#[test]
fn distinct_limits_split_into_clusters() {
    let sigmas = [0.0, 0.5, 1.0];
    let mut cyl = systems::synthetic_cylinder(&sigmas, |_| 1.0, |_| 2.0 * PI, 64);
    cyl.orbits[2] = systems::circle_orbit(1.0, 2.0, 2.0 * PI, 64, 1);
    let opts = LimitOptions { tail_fraction: 1.0, eps_cluster: Some(0.1), ..Default::default() };
    let rep = extract_limit_set(&cyl, None, &opts, Execution::Sequential).unwrap();
    assert_eq!(rep.clusters, vec![vec![0], vec![1, 2]]);
    assert!(!rep.connected);
    assert!(extract_limit_set(&cyl, None, &LimitOptions { tail_fraction: 0.0, ..opts }, Execution::Sequential).is_err());
}

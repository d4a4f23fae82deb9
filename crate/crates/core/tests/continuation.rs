use std::f64::consts::PI;

use orbitcyl::continuation::*;
use orbitcyl::orbit::{find_periodic, OrbitOptions};
use orbitcyl::systems;

fn start_anisotropic() -> orbitcyl::orbit::ParametrisedOrbit {
    let (sys, ss) = systems::anisotropic();
    find_periodic(&sys, &ss, &[1.0, 0.0, 0.0, 0.0], 6.0, 0.0, &OrbitOptions::default()).unwrap()
}

#[test]
fn anisotropic_family_keeps_its_period() {
    let (sys, ss) = systems::anisotropic();
    let cyl = continue_family(&start_anisotropic(), 0.9, &sys, &ss, &ContinuationOptions::default()).unwrap();
    assert_eq!(cyl.termination, Termination::ReachedTarget);
    assert!((cyl.sigma_end - 0.9).abs() < 1e-12);
    assert_eq!(cyl.len(), 19);
    for (w, o) in cyl.orbits.windows(2).zip(cyl.orbits.iter().skip(1)) {
        assert!(w[1].sigma > w[0].sigma && w[1].sigma - w[0].sigma <= 0.05 + 1e-12);
        assert!((o.tau - 2.0 * PI).abs() < 1e-7);
        assert!((o.hamiltonian_period - 2.0 * PI).abs() < 1e-7);
        let r2 = o.start()[0].powi(2) + o.start()[2].powi(2);
        assert!((r2 - (1.0 + 2.0 * o.sigma)).abs() < 1e-9);
        let fl = o.floquet.as_ref().unwrap();
        assert_eq!(fl.unit_count, 2);
        assert!(fl.symplectic_defect < 1e-6);
    }
    let prof = period_profile(&cyl);
    assert!(prof.dtau.iter().all(|d| d.abs() <= 1e-6));
    let env = envelope_check(&cyl, 1.25, 1e-5).unwrap();
    assert!(env.pass);
    assert!((env.certificate - 2.0 * PI * (1.25f64 * 0.9).exp()).abs() < 1e-6);

    let csv = profile_csv(&prof, Some(&env));
    assert!(csv.starts_with("sigma,tau,dtau,lower,upper\n"));
    assert_eq!(csv.lines().count(), 20);
}

#[test]
fn refining_the_step_agrees_on_shared_nodes() {
    let (sys, ss) = systems::anisotropic();
    let coarse = continue_family(&start_anisotropic(), 0.4, &sys, &ss, &ContinuationOptions { initial_step: 0.1, max_step: 0.1, ..Default::default() }).unwrap();
    let fine = continue_family(&start_anisotropic(), 0.4, &sys, &ss, &ContinuationOptions { initial_step: 0.05, max_step: 0.05, ..Default::default() }).unwrap();
    let mut shared = 0;
    for o in &coarse.orbits {
        if let Some(p) = fine.orbits.iter().find(|p| (p.sigma - o.sigma).abs() < 1e-9) {
            assert!((p.tau - o.tau).abs() <= 1e-7);
            shared += 1;
        }
    }
    assert_eq!(shared, 5);
}

#[test]
fn target_equal_to_start_gives_single_orbit() {
    let (sys, ss) = systems::anisotropic();
    let cyl = continue_family(&start_anisotropic(), 0.0, &sys, &ss, &ContinuationOptions::default()).unwrap();
    assert_eq!(cyl.len(), 1);
    assert_eq!(cyl.termination, Termination::ReachedTarget);
}

#[test]
fn pendulum_family_terminates_at_the_fold() {
    let (sys, ss) = systems::pendulum_fold();
    // energy ½ libration at σ = 0
    let q0 = (-0.5f64).acos();
    let start = find_periodic(&sys, &ss, &[q0, 0.0], 7.0, 0.0, &OrbitOptions::default()).unwrap();
    let cyl = continue_family(&start, 1.0, &sys, &ss, &ContinuationOptions::default()).unwrap();
    assert_eq!(cyl.termination, Termination::NewtonFailure, "{:?}", cyl.failure);
    // critical energy: ½p² − cos q = ½ − 1.5σ meets min V = −1 at σ = 1
    assert!((cyl.sigma_end - 1.0).abs() < 1e-3, "{}", cyl.sigma_end);
}

#[test]
fn degenerate_start_is_rejected() {
    let (sys, ss) = systems::harmonic_oscillator(2);
    let start = find_periodic(&sys, &ss, &[1.0, 0.0, 0.0, 0.0], 6.0, 0.0, &OrbitOptions::default()).unwrap();
    assert!(continue_family(&start, 0.5, &sys, &ss, &ContinuationOptions::default()).is_err());
}

#[test]
fn profile_of_synthetic_exponential() {
    let kappa = 1.3;
    let sig: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
    let tau: Vec<f64> = sig.iter().map(|s| 2.0 * (kappa * s).exp()).collect();
    let prof = period_profile_from(&sig, &tau);
    for (d, t) in prof.dtau.iter().zip(&tau) {
        assert!((d - kappa * t).abs() <= 0.01 * kappa * t);
    }
    let constant = period_profile_from(&sig, &vec![3.0; sig.len()]);
    assert!(constant.dtau.iter().all(|d| d.abs() < 1e-12));
    let env = envelope_check_profile(&constant, 1.0, 1e-5).unwrap();
    assert!(env.pass);
    assert!((env.certificate - 3.0 * 1f64.exp()).abs() < 1e-12);

    // doubled rate must break both bounds
    let fast: Vec<f64> = sig.iter().map(|s| 2.0 * (2.0 * kappa * s).exp()).collect();
    let env = envelope_check_profile(&period_profile_from(&sig, &fast), kappa, 1e-5).unwrap();
    assert!(!env.pass && !env.derivative_pass && !env.envelope_pass);
    assert!(!env.nodes[1].ok);
    assert!(env.first_violation.unwrap() <= 1);
}

#[test]
fn cylinder_json_roundtrip() {
    let cyl = systems::synthetic_cylinder(&[0.0, 0.1, 0.2], |_| 1.0, |_| 2.0 * PI, 16);
    let s = serde_json::to_string(&cyl).unwrap();
    assert!(s.contains("\"termination\":\"reached-target\""));
    let back: OrbitCylinder = serde_json::from_str(&s).unwrap();
    assert_eq!(back, cyl);
}

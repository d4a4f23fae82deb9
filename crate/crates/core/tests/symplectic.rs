use std::f64::consts::PI;

use orbitcyl::expr::Expr;
use orbitcyl::flow::{integrate, VectorField};
use orbitcyl::symplectic::*;
use orbitcyl::Error;
use proptest::prelude::*;

fn exprs(src: &[&str], n: usize) -> Vec<Expr> {
    src.iter().map(|s| Expr::parse(s, n).unwrap()).collect()
}

fn circle() -> HamiltonianHomotopy {
    HamiltonianHomotopy::new(Expr::parse("0.5*(q1^2+p1^2)-0.5", 1).unwrap(), exprs(&["0.5*q1", "0.5*p1"], 1)).unwrap()
}

fn sphere(stab: &[&str]) -> HamiltonianHomotopy {
    HamiltonianHomotopy::new(Expr::parse("0.5*(norm2(q)+norm2(p))-0.5", 2).unwrap(), exprs(stab, 2)).unwrap()
}

fn liouville2() -> HamiltonianHomotopy {
    sphere(&["0.5*q1", "0.5*q2", "0.5*p1", "0.5*p2"])
}

fn unit(v: [f64; 4]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn circle_field_is_unit_rotation() {
    let v = hamiltonian_vector_field(&circle(), &SymplecticStructure::standard(1), &[1.0, 0.0], 0.0).unwrap();
    // q̇ = ∂H/∂p = 0, ṗ = −∂H/∂q = −1
    assert_eq!(v, vec![0.0, -1.0]);
}

#[test]
fn constant_hamiltonian_has_zero_field() {
    let sys = HamiltonianHomotopy::new(Expr::parse("3", 2).unwrap(), exprs(&["q1", "q2", "p1", "p2"], 2)).unwrap();
    let v = hamiltonian_vector_field(&sys, &SymplecticStructure::standard(2), &[0.1, 0.2, 0.3, 0.4], 0.0).unwrap();
    assert!(v.iter().all(|&x| x == 0.0));
}

#[test]
fn magnetic_field_gives_lorentz_force() {
    let b = 1.7;
    let ss = SymplecticStructure::with_magnetic(vec![
        exprs(&["0", "1.7"], 2),
        exprs(&["-1.7", "0"], 2),
    ])
    .unwrap();
    let sys = HamiltonianHomotopy::new(Expr::parse("0.5*norm2(p)-0.5", 2).unwrap(), exprs(&["0", "0", "p1", "p2"], 2)).unwrap();
    let x = [0.3, -0.2, 0.6, 0.8];
    let v = hamiltonian_vector_field(&sys, &ss, &x, 0.0).unwrap();
    let expected = [0.6, 0.8, b * 0.8, -b * 0.6];
    for (a, e) in v.iter().zip(expected) {
        assert!((a - e).abs() < 1e-14, "{v:?}");
    }
    // solving Ω v = −dH directly agrees with the closed form
    let omega = ss.form_matrix(&x).unwrap();
    let rhs = nalgebra::DVector::from_vec(vec![0.0, 0.0, -0.6, -0.8]);
    let solved = omega.lu().solve(&rhs).unwrap();
    for i in 0..4 {
        assert!((solved[i] - v[i]).abs() < 1e-13);
    }
    // fiberwise radial field is stabilizing with f = |p|²
    assert!((f_sigma(&sys, &x, 0.0).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn non_antisymmetric_alpha_is_rejected() {
    let err = SymplecticStructure::with_magnetic(vec![exprs(&["0", "q1"], 2), exprs(&["q1", "0"], 2)]).unwrap_err();
    assert!(matches!(err, Error::SingularForm(_)), "{err:?}");
}

#[test]
fn f_sigma_examples() {
    let ss = SymplecticStructure::standard(2);
    let x = unit([0.3, -0.5, 0.7, 0.1]);
    assert!((f_sigma(&liouville2(), &x, 0.0).unwrap() - 0.5).abs() < 1e-14);

    // X = X_H is never stabilizing
    let bad = sphere(&["p1", "p2", "-q1", "-q2"]);
    assert!(matches!(f_sigma(&bad, &x, 0.0), Err(Error::StabilityViolation(_))));
    assert!(matches!(reeb_field(&bad, &ss, &x, 0.0), Err(Error::StabilityViolation(_))));

    // mechanical H = ½|p|² + V with X = p∂p
    let mech = HamiltonianHomotopy::new(
        Expr::parse("0.5*norm2(p)+cos(q1)-2", 2).unwrap(),
        exprs(&["0", "0", "p1", "p2"], 2),
    )
    .unwrap();
    let q = [0.4f64, 1.0];
    let pn = (2.0 * (2.0 - q[0].cos())).sqrt();
    let x = [q[0], q[1], pn * 0.6, pn * 0.8];
    assert!(mech.energy(&x, 0.0).unwrap().abs() < 1e-14);
    assert!((f_sigma(&mech, &x, 0.0).unwrap() - pn * pn).abs() < 1e-13);
}

#[test]
fn reeb_field_examples() {
    let ss = SymplecticStructure::standard(2);
    let x = unit([0.3, -0.5, 0.7, 0.1]);
    let xh = hamiltonian_vector_field(&liouville2(), &ss, &x, 0.0).unwrap();
    let r = reeb_field(&liouville2(), &ss, &x, 0.0).unwrap();
    for i in 0..4 {
        assert!((r[i] - 2.0 * xh[i]).abs() < 1e-14);
    }
    // contact case: X = q∂q + p∂p gives f ≡ 1 on the unit sphere
    let contact = sphere(&["q1", "q2", "p1", "p2"]);
    let r = reeb_field(&contact, &ss, &x, 0.0).unwrap();
    let xh = hamiltonian_vector_field(&contact, &ss, &x, 0.0).unwrap();
    for i in 0..4 {
        assert!((r[i] - xh[i]).abs() < 1e-14);
    }
}

#[test]
fn stability_residual_examples() {
    let ss = SymplecticStructure::standard(2);
    let x = unit([0.6, 0.0, 0.0, 0.8]);
    assert!(stability_residual(&liouville2(), &ss, &x, 0.0).unwrap() <= 1e-8);
    assert_eq!(stability_residual(&circle(), &SymplecticStructure::standard(1), &[1.0, 0.0], 0.0).unwrap(), 0.0);

    // f = ½ + ½q1² > 0 but the kernel condition fails
    let bent = sphere(&["0.5*q1+0.5*q1", "0.5*q2", "0.5*p1", "0.5*p2"]);
    let x = unit([0.6, 0.3, 0.5, 0.2]);
    let res = stability_residual(&bent, &ss, &x, 0.0).unwrap();
    assert!(res > 1e-2, "{res}");
    assert!((res - 0.176683).abs() < 1e-5, "regression value changed: {res}");
    assert!(matches!(check_stability(&bent, &ss, &x, 0.0, 1e-6), Err(Error::StabilityViolation(_))));
    assert!(check_stability(&liouville2(), &ss, &x, 0.0, 1e-8).is_ok());
}

#[test]
fn normalization_turns_hamiltonian_field_into_reeb_field() {
    let ss = SymplecticStructure::standard(2);
    let sys = liouville2();
    let samples: Vec<(Vec<f64>, f64)> = sample_level_set(&sys, 0.0, &[(-1.5, 1.5); 4], 20, 7)
        .unwrap()
        .into_iter()
        .map(|x| (x, 0.0))
        .collect();
    let norm = normalize_hamiltonian(&sys, 2.0, &samples).unwrap();
    assert!(norm.is_normalized());
    for (x, _) in &samples {
        let xh = hamiltonian_vector_field(&norm, &ss, x, 0.0).unwrap();
        let lam = stabilizing_form(&sys, &ss, x, &0.0).unwrap();
        assert!((dot(&lam, &xh) - 1.0).abs() < 1e-8);
        let r = reeb_field(&sys, &ss, x, 0.0).unwrap();
        for i in 0..4 {
            assert!((xh[i] - r[i]).abs() < 1e-12);
        }
    }
    // period scales by f: 2π for X_H, π for the normalized field
    let x0 = [1.0, 0.0, 0.0, 0.0];
    let tr = integrate(&HamiltonianField { sys: &norm, ss: &ss, sigma: 0.0 }, &x0, PI, 1e-12).unwrap();
    let err: f64 = tr.final_state().iter().zip(&x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-9, "{err}");

    // contact case is unchanged on Σ
    let contact = sphere(&["q1", "q2", "p1", "p2"]);
    let norm = normalize_hamiltonian(&contact, 1.5, &samples).unwrap();
    for (x, _) in &samples {
        let a = norm.gradient_f64(x, 0.0).unwrap();
        let b = contact.gradient_f64(x, 0.0).unwrap();
        for i in 0..4 {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }

    assert!(normalize_hamiltonian(&sys, 1.5, &samples).is_err());
    let bad = sphere(&["p1", "p2", "-q1", "-q2"]);
    assert!(matches!(normalize_hamiltonian(&bad, 2.0, &samples), Err(Error::StabilityViolation(_))));
}

#[test]
fn autonomous_coupling_subtracts_sigma() {
    let sys = HamiltonianHomotopy::autonomous(Expr::parse("0.5*(q1^2+p1^2)", 1).unwrap(), exprs(&["q1", "p1"], 1)).unwrap();
    assert_eq!(sys.energy(&[1.0, 1.0], 0.25).unwrap(), 0.75);
    assert_eq!(sys.sigma_derivative(&[1.0, 1.0], 0.25).unwrap(), -1.0);
    assert!(sys.is_on_level(&[1.0, 0.0], 0.5).unwrap());
}

#[test]
fn hamiltonian_field_jacobian_matches_differences() {
    let ss = SymplecticStructure::with_magnetic(vec![exprs(&["0", "sin(q1)"], 2), exprs(&["-sin(q1)", "0"], 2)]).unwrap();
    let sys = HamiltonianHomotopy::new(
        Expr::parse("0.5*norm2(p)+0.3*cos(q1)*cos(q2)-sigma", 2).unwrap(),
        exprs(&["0", "0", "p1", "p2"], 2),
    )
    .unwrap();
    for field in [
        Box::new(HamiltonianField { sys: &sys, ss: &ss, sigma: 0.4 }) as Box<dyn VectorField>,
        Box::new(ReebField { sys: &sys, ss: &ss, sigma: 0.4 }),
    ] {
        let x = [0.3, 1.1, 0.7, -0.4];
        let j = field.jacobian(&x).unwrap();
        let h = 1e-6;
        for c in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let fp = field.eval(&xp).unwrap();
            let fm = field.eval(&xm).unwrap();
            for r in 0..4 {
                assert!(((fp[r] - fm[r]) / (2.0 * h) - j[(r, c)]).abs() < 1e-7);
            }
        }
    }
}

#[test]
fn tangent_basis_is_orthonormal_complement() {
    let g = [0.3, -1.0, 2.0, 0.5, 0.0];
    let b = tangent_basis(&g);
    assert_eq!(b.len(), 4);
    for (i, u) in b.iter().enumerate() {
        assert!(dot(u, &g).abs() < 1e-13);
        for (j, v) in b.iter().enumerate() {
            let e = if i == j { 1.0 } else { 0.0 };
            assert!((dot(u, v) - e).abs() < 1e-13);
        }
    }
}

proptest! {
    #[test]
    fn hamiltonian_field_preserves_energy(x in prop::collection::vec(-2.0f64..2.0, 4), sigma in 0.0f64..1.0) {
        let ss = SymplecticStructure::with_magnetic(vec![exprs(&["0", "cos(q2)"], 2), exprs(&["-cos(q2)", "0"], 2)]).unwrap();
        let sys = HamiltonianHomotopy::new(
            Expr::parse("0.5*(p1^2+2*p2^2)+q1^2*q2+sin(q1)-sigma*q2", 2).unwrap(),
            exprs(&["q1", "q2", "p1", "p2"], 2),
        ).unwrap();
        let v = hamiltonian_vector_field(&sys, &ss, &x, sigma).unwrap();
        let g = sys.gradient_f64(&x, sigma).unwrap();
        let scale = 1.0 + g.iter().map(|a| a * a).sum::<f64>();
        prop_assert!(dot(&g, &v).abs() <= 1e-12 * scale);
    }

    #[test]
    fn reeb_field_normalizes_lambda_and_spans_kernel(raw in prop::collection::vec(-1.0f64..1.0, 4)) {
        prop_assume!(raw.iter().map(|a| a * a).sum::<f64>() > 1e-2);
        let x = unit([raw[0], raw[1], raw[2], raw[3]]);
        let ss = SymplecticStructure::standard(2);
        for sys in [liouville2(), sphere(&["q1", "q2", "p1", "p2"])] {
            let r = reeb_field(&sys, &ss, &x, 0.0).unwrap();
            let lam = stabilizing_form(&sys, &ss, &x, &0.0).unwrap();
            prop_assert!((dot(&lam, &r) - 1.0).abs() <= 1e-9);
            for v in tangent_basis(&sys.gradient_f64(&x, 0.0).unwrap()) {
                prop_assert!(ss.pairing(&x, &r, &v).unwrap().abs() <= 1e-8);
            }
        }
    }
}

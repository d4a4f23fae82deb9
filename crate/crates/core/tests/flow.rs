use nalgebra::DMatrix;
use orbitcyl::flow::{flow_with_variational, integrate, sample_at, stormer_verlet, FnField, IntegratorOptions, LinearField, VectorField};

fn oscillator() -> LinearField {
    LinearField(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]))
}

fn pendulum() -> impl VectorField {
    FnField {
        dim: 2,
        f: |x: &[f64]| vec![x[1], -x[0].sin()],
        jac: |x: &[f64]| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -x[0].cos(), 0.0]),
    }
}

// Taylor series with scaling and squaring.
fn expm(b: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = b.iter().fold(0.0f64, |m, v| m.max(v.abs())) * b.nrows() as f64;
    let s = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
    let a = b / 2f64.powi(s);
    let d = b.nrows();
    let mut term = DMatrix::identity(d, d);
    let mut sum = DMatrix::identity(d, d);
    for k in 1..30 {
        term = &term * &a / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn harmonic_oscillator_returns_after_two_pi() {
    let x0 = [1.0, 0.0];
    let tr = integrate(&oscillator(), &x0, 2.0 * std::f64::consts::PI, 1e-12).unwrap();
    assert!(max_diff(tr.final_state(), &x0) < 1e-8, "{:?}", tr.final_state());
    let mid = tr.interpolate(std::f64::consts::FRAC_PI_2);
    assert!(max_diff(&mid, &[0.0, -1.0]) < 1e-6, "{mid:?}");
}

#[test]
fn zero_field_is_identity() {
    let vf = FnField { dim: 3, f: |_: &[f64]| vec![0.0; 3], jac: |_: &[f64]| DMatrix::zeros(3, 3) };
    let x0 = [0.3, -1.0, 2.0];
    let tr = integrate(&vf, &x0, 5.0, 1e-10).unwrap();
    assert_eq!(tr.final_state(), &x0);
}

#[test]
fn pendulum_self_convergence() {
    let x0 = [2.0, 0.0];
    let a = integrate(&pendulum(), &x0, 10.0, 1e-9).unwrap();
    let b = integrate(&pendulum(), &x0, 10.0, 1e-13).unwrap();
    assert!(max_diff(a.final_state(), b.final_state()) < 1e-7);
}

#[test]
fn sample_times_are_hit_exactly() {
    let times: Vec<f64> = (1..=8).map(|k| k as f64 * std::f64::consts::PI / 4.0).collect();
    let xs = sample_at(&oscillator(), &[1.0, 0.0], &times, IntegratorOptions::default()).unwrap();
    assert_eq!(xs.len(), times.len());
    for (t, x) in times.iter().zip(&xs) {
        assert!(max_diff(x, &[t.cos(), -t.sin()]) < 1e-10);
    }
}

#[test]
fn variational_matrix_matches_finite_differences() {
    let x0 = [1.2, 0.3];
    let t = 3.7;
    let (x, m) = flow_with_variational(&pendulum(), &x0, t, 1e-12).unwrap();
    let plain = integrate(&pendulum(), &x0, t, 1e-12).unwrap();
    assert!(max_diff(&x, plain.final_state()) < 1e-10);
    let h = 1e-5;
    for j in 0..2 {
        let mut xp = x0;
        let mut xm = x0;
        xp[j] += h;
        xm[j] -= h;
        let fp = integrate(&pendulum(), &xp, t, 1e-13).unwrap();
        let fm = integrate(&pendulum(), &xm, t, 1e-13).unwrap();
        for i in 0..2 {
            let fd = (fp.final_state()[i] - fm.final_state()[i]) / (2.0 * h);
            assert!((fd - m[(i, j)]).abs() < 1e-7, "{i}{j}: {fd} vs {}", m[(i, j)]);
        }
    }
    // area preservation
    assert!((m.determinant() - 1.0).abs() < 1e-9);
}

#[test]
fn zero_time_gives_identity() {
    let (x, m) = flow_with_variational(&pendulum(), &[0.5, 0.5], 0.0, 1e-12).unwrap();
    assert_eq!(x, vec![0.5, 0.5]);
    assert_eq!(m, DMatrix::identity(2, 2));
}

#[test]
fn linear_flow_matches_matrix_exponential() {
    let b = DMatrix::from_row_slice(4, 4, &[
        0.1, 1.0, 0.0, 0.3, //
        -1.0, 0.0, 0.2, 0.0, //
        0.0, 0.5, -0.2, 1.0, //
        0.1, 0.0, -1.0, 0.0,
    ]);
    let t = 2.5;
    let (_, m) = flow_with_variational(&LinearField(b.clone()), &[1.0, 0.0, 0.0, 0.0], t, 1e-12).unwrap();
    let e = expm(&(b * t));
    let err = (&m - &e).amax() / e.amax();
    assert!(err < 1e-9, "{err}");
}

#[test]
fn hamiltonian_monodromy_is_symplectic() {
    let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let (_, m) = flow_with_variational(&pendulum(), &[2.5, 0.1], 6.0, 1e-12).unwrap();
    let defect = (m.transpose() * &j * &m - &j).amax();
    assert!(defect < 1e-9, "{defect}");
}

#[test]
fn energy_drift_is_small() {
    struct Pend;
    impl VectorField for Pend {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, x: &[f64]) -> orbitcyl::Result<Vec<f64>> {
            Ok(vec![x[1], -x[0].sin()])
        }
        fn jacobian(&self, x: &[f64]) -> orbitcyl::Result<DMatrix<f64>> {
            Ok(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -x[0].cos(), 0.0]))
        }
        fn energy(&self, x: &[f64]) -> Option<f64> {
            Some(0.5 * x[1] * x[1] - x[0].cos())
        }
    }
    let tr = integrate(&Pend, &[2.0, 0.0], 50.0, 1e-12).unwrap();
    assert!(tr.energy_drift > 0.0 && tr.energy_drift < 1e-9, "{}", tr.energy_drift);
}

#[test]
fn stormer_verlet_is_second_order() {
    let grad = |q: &[f64]| Ok(vec![q[0].sin()]);
    let exact = integrate(&pendulum(), &[1.0, 0.0], 5.0, 1e-13).unwrap();
    let e1 = max_diff(stormer_verlet(grad, &[1.0, 0.0], 5.0, 500).unwrap().final_state(), exact.final_state());
    let e2 = max_diff(stormer_verlet(grad, &[1.0, 0.0], 5.0, 1000).unwrap().final_state(), exact.final_state());
    let ratio = e1 / e2;
    assert!((3.5..4.5).contains(&ratio), "{ratio}");
}

#[test]
fn rejects_nonpositive_times_and_bad_dims() {
    assert!(integrate(&oscillator(), &[1.0, 0.0], -1.0, 1e-10).is_err());
    assert!(integrate(&oscillator(), &[1.0], 1.0, 1e-10).is_err());
}

#[test]
fn blow_up_is_reported() {
    let vf = FnField { dim: 1, f: |x: &[f64]| vec![x[0] * x[0]], jac: |x: &[f64]| DMatrix::from_element(1, 1, 2.0 * x[0]) };
    assert!(integrate(&vf, &[1.0], 2.0, 1e-10).is_err());
}

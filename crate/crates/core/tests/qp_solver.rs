use feederopt::qp::{check_kkt, solve_qp, CooMatrix, QpSettings, QpStatus, QuadraticProgram};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random strictly convex 3-variable objective on the box [-1, 1]^3.
fn random_box_qp(seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut h = vec![vec![0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            h[i][j] = (0..3).map(|k| m[k][i] * m[k][j]).sum::<f64>();
        }
        h[i][i] += 0.1;
    }
    let f = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
    (h, f)
}

fn objective(h: &[Vec<f64>], f: &[f64], x: &[f64; 3]) -> f64 {
    let mut v = 0.0;
    for i in 0..3 {
        v += f[i] * x[i];
        for j in 0..3 {
            v += 0.5 * x[i] * h[i][j] * x[j];
        }
    }
    v
}

/// Minimum over the 201^3 lattice of the box.
fn lattice_min(h: &[Vec<f64>], f: &[f64]) -> f64 {
    let pts: Vec<f64> = (0..201).map(|k| -1.0 + 0.01 * k as f64).collect();
    let mut best = f64::INFINITY;
    for &a in &pts {
        for &b in &pts {
            for &c in &pts {
                best = best.min(objective(h, f, &[a, b, c]));
            }
        }
    }
    best
}

fn box_program(h: &[Vec<f64>], f: &[f64], duplicate_first_row: bool) -> QuadraticProgram {
    let mut a = CooMatrix::identity(3);
    let mut l = vec![-1.0; 3];
    let mut u = vec![1.0; 3];
    if duplicate_first_row {
        let r = a.add_row();
        a.push(r, 0, 1.0);
        l.push(-1.0);
        u.push(1.0);
    }
    QuadraticProgram::new(CooMatrix::from_dense(h), f.to_vec(), a, l, u).unwrap()
}

#[test]
fn box_qp_matches_lattice_search() {
    for seed in 0..5 {
        let (h, f) = random_box_qp(seed);
        let oracle = lattice_min(&h, &f);
        let sol = solve_qp(&box_program(&h, &f, false), &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        let x = [sol.x[0], sol.x[1], sol.x[2]];
        assert!(x.iter().all(|v| v.abs() <= 1.0 + 1e-6));
        let got = objective(&h, &f, &x);
        assert!((got - oracle).abs() <= 1e-3, "seed {seed}: {got} vs {oracle}");
        assert!(got <= oracle + 1e-9, "seed {seed}: solver worse than lattice");
    }
}

#[test]
fn solved_status_certifies_kkt() {
    for seed in 10..30 {
        let (h, f) = random_box_qp(seed);
        let qp = box_program(&h, &f, false);
        let set = QpSettings::default();
        let sol = solve_qp(&qp, &set).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        let r = check_kkt(&qp, &sol.x, &sol.y).unwrap();
        assert_eq!((r.primal, r.dual), (sol.primal_residual, sol.dual_residual));
        assert!(r.primal <= 1e-6 && r.dual <= 1e-6, "{r:?}");
    }
}

#[test]
fn deterministic_for_fixed_input() {
    let (h, f) = random_box_qp(7);
    let qp = box_program(&h, &f, false);
    let a = solve_qp(&qp, &QpSettings::default()).unwrap();
    let b = solve_qp(&qp, &QpSettings::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tolerance_arguments_respected() {
    let (h, f) = random_box_qp(3);
    let qp = box_program(&h, &f, false);
    let set = QpSettings {
        polish: false,
        ..QpSettings::with_tolerances(1e-3, 0.0, 2)
    };
    let sol = solve_qp(&qp, &set).unwrap();
    assert!(sol.iterations <= 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn redundant_row_leaves_solution_unchanged(seed in 0u64..10_000) {
        let (h, f) = random_box_qp(seed);
        let a = solve_qp(&box_program(&h, &f, false), &QpSettings::default()).unwrap();
        let b = solve_qp(&box_program(&h, &f, true), &QpSettings::default()).unwrap();
        prop_assert_eq!(a.status, QpStatus::Solved);
        prop_assert_eq!(b.status, QpStatus::Solved);
        for (p, q) in a.x.iter().zip(&b.x) {
            prop_assert!((p - q).abs() <= 1e-6, "{:?} vs {:?}", a.x, b.x);
        }
    }

    #[test]
    fn solution_is_feasible_and_no_worse_than_vertices(seed in 0u64..10_000) {
        let (h, f) = random_box_qp(seed);
        let sol = solve_qp(&box_program(&h, &f, false), &QpSettings::default()).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Solved);
        let x = [sol.x[0], sol.x[1], sol.x[2]];
        let got = objective(&h, &f, &x);
        for corner in 0..8u32 {
            let v = [0, 1, 2].map(|k| if corner >> k & 1 == 1 { 1.0 } else { -1.0 });
            prop_assert!(got <= objective(&h, &f, &v) + 1e-9);
        }
        prop_assert!(got <= objective(&h, &f, &[0.0; 3]) + 1e-9);
    }
}

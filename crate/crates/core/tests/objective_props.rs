use fedsim_core::datasets::{partition, synthesize_logistic};
use fedsim_core::linalg::{dist_sq, dot};
use fedsim_core::objective::{ClientObjective, Logistic, Quadratic, Sample, SparseVector};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn logistic_client() -> impl Strategy<Value = ClientObjective> {
    let dim = 4usize;
    let sample =
        (prop::collection::vec(-3.0f64..3.0, dim), any::<bool>()).prop_map(|(a, pos)| Sample {
            label: if pos { 1.0 } else { -1.0 },
            features: SparseVector::from_dense(&a),
        });
    (prop::collection::vec(sample, 1..8), 0.0f64..2.0).prop_map(move |(samples, mu)| {
        ClientObjective::Logistic(Logistic::new(dim, samples, mu).unwrap())
    })
}

fn quadratic_client() -> impl Strategy<Value = ClientObjective> {
    (
        prop::collection::vec(0.0f64..10.0, 4),
        prop::collection::vec(-5.0f64..5.0, 4),
    )
        .prop_map(|(d, b)| ClientObjective::Quadratic(Quadratic::diagonal(d, b).unwrap()))
}

fn dense_quadratic_client() -> impl Strategy<Value = ClientObjective> {
    // BᵀB is symmetric positive semidefinite.
    prop::collection::vec(-2.0f64..2.0, 9).prop_map(|b| {
        let mut m = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                m[i * 3 + j] = (0..3).map(|k| b[k * 3 + i] * b[k * 3 + j]).sum();
            }
        }
        ClientObjective::Quadratic(Quadratic::dense(m, vec![0.5, -1.0, 2.0]).unwrap())
    })
}

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, dim)
}

fn mu_of(c: &ClientObjective) -> f64 {
    match c {
        ClientObjective::Logistic(l) => l.mu(),
        ClientObjective::Quadratic(_) => 0.0,
    }
}

fn secant_ratio(c: &ClientObjective, x: &[f64], y: &[f64]) -> Option<f64> {
    let dx = dist_sq(x, y);
    if dx < 1e-16 {
        return None;
    }
    let dg = dist_sq(&c.grad(x).unwrap(), &c.grad(y).unwrap());
    Some((dg / dx).sqrt())
}

proptest! {
    #[test]
    fn logistic_gradient_is_lipschitz(c in logistic_client(), x in point(4), y in point(4)) {
        if let Some(r) = secant_ratio(&c, &x, &y) {
            prop_assert!(r <= c.smoothness_constant().unwrap() * (1.0 + 1e-6));
        }
    }

    #[test]
    fn quadratic_gradient_is_lipschitz(c in quadratic_client(), x in point(4), y in point(4)) {
        if let Some(r) = secant_ratio(&c, &x, &y) {
            prop_assert!(r <= c.smoothness_constant().unwrap() * (1.0 + 1e-6));
        }
    }

    #[test]
    fn dense_quadratic_gradient_is_lipschitz(c in dense_quadratic_client(), x in point(3), y in point(3)) {
        if let Some(r) = secant_ratio(&c, &x, &y) {
            prop_assert!(r <= c.smoothness_constant().unwrap() * (1.0 + 1e-6) + 1e-12);
        }
    }

    #[test]
    fn logistic_is_mu_strongly_monotone(c in logistic_client(), x in point(4), y in point(4)) {
        let gx = c.grad(&x).unwrap();
        let gy = c.grad(&y).unwrap();
        let diff: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
        let dxv: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        prop_assert!(dot(&diff, &dxv) >= mu_of(&c) * dist_sq(&x, &y) * (1.0 - 1e-6) - 1e-12);
    }

    #[test]
    fn logistic_minus_regularizer_is_midpoint_convex(c in logistic_client(), x in point(4), y in point(4)) {
        let mu = mu_of(&c);
        let g = |v: &[f64]| c.value(v).unwrap() - 0.5 * mu * dot(v, v);
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        prop_assert!(g(&mid) <= 0.5 * (g(&x) + g(&y)) + 1e-10);
    }

    #[test]
    fn gradient_matches_central_differences(c in logistic_client(), x in prop::collection::vec(-1.0f64..1.0, 4)) {
        let g = c.grad(&x).unwrap();
        let h = 1e-6;
        let fd: Vec<f64> = (0..4)
            .map(|k| {
                let mut up = x.clone();
                let mut down = x.clone();
                up[k] += h;
                down[k] -= h;
                (c.value(&up).unwrap() - c.value(&down).unwrap()) / (2.0 * h)
            })
            .collect();
        let err = dist_sq(&g, &fd).sqrt();
        let scale = dot(&g, &g).sqrt().max(1e-2);
        prop_assert!(err <= 1e-5 * scale, "err={err} scale={scale}");
    }
}

#[test]
fn power_iteration_matches_dense_eigensolver() {
    let ds = synthesize_logistic(30, 20, 5, 11).unwrap();
    let client = partition(&ds, 2, 0.0, None).unwrap().remove(0);
    let ClientObjective::Logistic(l) = &client else {
        unreachable!()
    };
    let m = l.samples().len();
    let mut a = DMatrix::<f64>::zeros(m, 20);
    for (r, s) in l.samples().iter().enumerate() {
        for (&j, &v) in s.features.indices().iter().zip(s.features.values()) {
            a[(r, j)] = v;
        }
    }
    let gram = a.transpose() * &a;
    let lambda = gram.symmetric_eigen().eigenvalues.max();
    let oracle = lambda / (4.0 * m as f64);
    let got = client.smoothness_constant().unwrap();
    assert!(
        (got - oracle).abs() <= 1e-6 * oracle,
        "got {got}, oracle {oracle}"
    );
}

#[test]
fn power_iteration_on_whole_dataset_matches_dense_eigensolver() {
    let ds = synthesize_logistic(30, 20, 6, 3).unwrap();
    let samples: Vec<Sample> = ds
        .rows()
        .iter()
        .map(|r| Sample {
            label: r.label,
            features: SparseVector::new(
                r.features.iter().map(|&(j, _)| j - 1).collect(),
                r.features.iter().map(|&(_, v)| v).collect(),
            )
            .unwrap(),
        })
        .collect();
    let client = ClientObjective::Logistic(Logistic::new(20, samples, 0.0).unwrap());
    let mut a = DMatrix::<f64>::zeros(30, 20);
    for (r, row) in ds.rows().iter().enumerate() {
        for &(j, v) in &row.features {
            a[(r, j - 1)] = v;
        }
    }
    let oracle = (a.transpose() * &a).symmetric_eigen().eigenvalues.max() / 120.0;
    let got = client.smoothness_constant().unwrap();
    assert!(
        (got - oracle).abs() <= 1e-6 * oracle,
        "got {got}, oracle {oracle}"
    );
}

#[test]
fn dense_quadratic_smoothness_matches_eigensolver() {
    let m = vec![4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
    let q = ClientObjective::Quadratic(Quadratic::dense(m.clone(), vec![0.0; 3]).unwrap());
    let oracle = DMatrix::from_row_slice(3, 3, &m)
        .symmetric_eigen()
        .eigenvalues
        .max();
    let got = q.smoothness_constant().unwrap();
    assert!((got - oracle).abs() <= 1e-6 * oracle);
}

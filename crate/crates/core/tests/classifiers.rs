mod common;

use common::*;
use mwclass::classifiers::{dwd_objective, svm_objective, InterceptConvention, SolverDiagnostics};
use mwclass::{
    dwd_fit, dwd_penalty_from_distance, median_pairwise_distance, svm_fit, DwdConfig, Label,
    LinearModel, Matrix, SvmConfig,
};
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn instance_from(x: &Matrix, y: &[Label], c: f64, lambda: f64) -> Instance {
    Instance {
        name: "generated".into(),
        d: x.nrows(),
        x: x.column_iter().map(|c| c.iter().copied().collect()).collect(),
        y: y.to_vec(),
        dwd_penalty: c,
        svm_lambda: lambda,
    }
}

/// `d × n` data with alternating labels and a class shift along the first axis.
fn dataset() -> impl Strategy<Value = (Matrix, Vec<Label>)> {
    (1usize..5, 4usize..14, 0.0f64..2.0).prop_flat_map(|(d, n, shift)| {
        prop::collection::vec(-2.0f64..2.0, d * n).prop_map(move |v| {
            let y: Vec<Label> = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
            let x = Matrix::from_fn(d, n, |j, i| v[i * d + j] + if j == 0 { shift * f64::from(y[i]) } else { 0.0 });
            (x, y)
        })
    })
}

#[test]
fn dwd_symmetric_pair() {
    let x = Matrix::from_row_slice(1, 2, &[-1.0, 1.0]);
    for c in [1.0, 5.0, 100.0] {
        let m = dwd_fit(&x, &[-1, 1], &DwdConfig::new(c)).unwrap();
        assert!((m.coefficients[0] - 1.0).abs() < 1e-5, "{:?}", m.coefficients);
        assert!(m.intercept.abs() < 1e-5);
        assert!((m.objective_value - 2.0).abs() < 1e-5);
    }
}

#[test]
fn svm_one_dimensional_analytic() {
    let x = Matrix::from_row_slice(1, 2, &[-2.0, 2.0]);
    let m = svm_fit(&x, &[-1, 1], &SvmConfig::new(1e-3)).unwrap();
    assert!((m.coefficients[0] - 0.5).abs() < 1e-4, "{:?}", m.coefficients);
    assert!(m.intercept.abs() < 1e-4);
    assert!((m.objective_value - 1e-3 * 0.25).abs() < 1e-6);
}

#[test]
fn svm_duplicated_samples_same_optimum() {
    let x = Matrix::from_row_slice(2, 5, &[0.1, 1.2, -0.7, 0.4, 2.0, 1.0, -0.3, 0.2, -1.5, 0.8]);
    let y = [1, -1, 1, -1, 1];
    let dup = Matrix::from_fn(2, 10, |j, i| x[(j, i % 5)]);
    let ydup: Vec<Label> = (0..10).map(|i| y[i % 5]).collect();
    let cfg = SvmConfig::new(0.05);
    let a = svm_fit(&x, &y, &cfg).unwrap();
    let b = svm_fit(&dup, &ydup, &cfg).unwrap();
    assert!((a.objective_value - b.objective_value).abs() < 1e-6);
    for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
        assert!((u - v).abs() < 1e-4);
    }
}

#[test]
fn penalty_from_distance_examples() {
    assert!((dwd_penalty_from_distance(2.0, 2.0).unwrap() - 100.0).abs() < 1e-12);
    assert!((dwd_penalty_from_distance(1.0, 2.0).unwrap() - 25.0).abs() < 1e-12);
    assert!((dwd_penalty_from_distance(3.0, 2.0).unwrap() - 225.0).abs() < 1e-12);
    assert!(dwd_penalty_from_distance(0.0, 2.0).is_err());
    assert!(dwd_penalty_from_distance(1.0, -2.0).is_err());
}

#[test]
fn median_distance_examples() {
    let one = Matrix::from_row_slice(1, 2, &[0.0, 3.0]);
    assert_eq!(median_pairwise_distance(&one, &[1, -1]).unwrap(), 3.0);
    let four = Matrix::from_row_slice(1, 4, &[0.0, 0.0, 1.0, 2.0]);
    assert_eq!(median_pairwise_distance(&four, &[1, 1, -1, -1]).unwrap(), 1.5);
    assert!(median_pairwise_distance(&four, &[1, 1, 1, 1]).is_err());
}

#[test]
fn score_and_predict_conventions() {
    let model = |b: Vec<f64>, beta: f64, convention| LinearModel {
        coefficients: b,
        intercept: beta,
        convention,
        objective_value: 0.0,
        diagnostics: SolverDiagnostics::default(),
    };
    let zero = model(vec![0.0], 0.0, InterceptConvention::Plus);
    assert_eq!(zero.predict(&[5.0]).unwrap(), 1);
    let dwd = model(vec![1.0], -1.0, InterceptConvention::Plus);
    assert_eq!(dwd.score(&[2.0]).unwrap(), 1.0);
    assert_eq!(dwd.predict(&[2.0]).unwrap(), 1);
    let svm = model(vec![1.0], -1.0, InterceptConvention::Minus);
    assert_eq!(svm.score(&[2.0]).unwrap(), 3.0);
    assert!(dwd.score(&[1.0, 2.0]).is_err());
}

#[test]
fn fits_reject_bad_input() {
    let x = Matrix::from_row_slice(1, 3, &[0.0, 1.0, 2.0]);
    assert!(dwd_fit(&x, &[1, 1, 1], &DwdConfig::new(1.0)).is_err());
    assert!(svm_fit(&x, &[-1, -1, -1], &SvmConfig::new(0.1)).is_err());
    let bad = Matrix::from_row_slice(1, 3, &[0.0, f64::NAN, 2.0]);
    assert!(dwd_fit(&bad, &[1, -1, 1], &DwdConfig::new(1.0)).is_err());
    assert!(svm_fit(&bad, &[1, -1, 1], &SvmConfig::new(0.1)).is_err());
    assert!(dwd_fit(&x, &[1, -1], &DwdConfig::new(1.0)).is_err());
}

#[test]
fn separable_training_margins_positive() {
    let x = Matrix::from_row_slice(2, 6, &[-2.0, -1.5, -1.8, 1.7, 2.2, 1.4, 0.3, -0.4, 0.1, 0.2, -0.1, 0.5]);
    let y = [-1, -1, -1, 1, 1, 1];
    let dwd = dwd_fit(&x, &y, &DwdConfig::new(100.0)).unwrap();
    let svm = svm_fit(&x, &y, &SvmConfig::new(0.01)).unwrap();
    for (i, col) in x.column_iter().enumerate() {
        let xi: Vec<f64> = col.iter().copied().collect();
        assert!(f64::from(y[i]) * dwd.score(&xi).unwrap() > 0.0);
        assert!(f64::from(y[i]) * svm.score(&xi).unwrap() > 0.0);
    }
}

#[test]
fn dwd_dominates_grid_oracle_on_bundled_instances() {
    for inst in small_instances() {
        let m = dwd_fit(&inst.matrix(), &inst.y, &DwdConfig::new(inst.dwd_penalty)).unwrap();
        let oracle = dwd_grid_oracle(&inst);
        let own = dwd_reference_objective(&inst, &m.coefficients, m.intercept);
        assert!(norm(&m.coefficients) <= 1.0 + 1e-6, "{}", inst.name);
        assert!(own <= oracle + 1e-3, "{}: {own} vs grid {oracle}", inst.name);
        assert!((own - m.objective_value).abs() <= 1e-8 * own.abs().max(1.0), "{}", inst.name);
    }
}

#[test]
fn svm_matches_oracles_on_bundled_instances() {
    for inst in small_instances() {
        let m = svm_fit(&inst.matrix(), &inst.y, &SvmConfig::new(inst.svm_lambda)).unwrap();
        let own = svm_reference_objective(&inst, &m.coefficients, m.intercept);
        let sub = svm_subgradient_oracle(&inst, 20_000);
        let exact = svm_ternary_oracle(&inst);
        assert!(own <= sub + 1e-3, "{}: {own} vs subgradient {sub}", inst.name);
        assert!((own - exact).abs() <= 1e-4, "{}: {own} vs ternary {exact}", inst.name);
        assert!((own - m.objective_value).abs() <= 1e-8 * own.abs().max(1.0), "{}", inst.name);
    }
}

#[test]
fn svm_matches_ternary_oracle_on_random_instances() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let d = rng.random_range(1..=2);
        let n = rng.random_range(4..=10);
        let y: Vec<Label> = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let x = Matrix::from_fn(d, n, |_, i| rng.random_range(-2.0..2.0) + 0.7 * f64::from(y[i]));
        let inst = instance_from(&x, &y, 1.0, rng.random_range(0.005..0.2));
        let m = svm_fit(&x, &y, &SvmConfig::new(inst.svm_lambda)).unwrap();
        let own = svm_reference_objective(&inst, &m.coefficients, m.intercept);
        assert!((own - svm_ternary_oracle(&inst)).abs() <= 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dwd_feasible_and_objective_exact((x, y) in dataset(), c in 0.5f64..200.0) {
        let m = dwd_fit(&x, &y, &DwdConfig::new(c)).unwrap();
        prop_assert!(norm(&m.coefficients) <= 1.0 + 1e-6);
        let inst = instance_from(&x, &y, c, 0.1);
        let reference = dwd_reference_objective(&inst, &m.coefficients, m.intercept);
        prop_assert!((reference - m.objective_value).abs() <= 1e-8 * reference.abs().max(1.0));
        let own = dwd_objective(&x, &y, &m.coefficients, m.intercept, c).unwrap();
        prop_assert!((own - m.objective_value).abs() <= 1e-8 * own.abs().max(1.0));
        prop_assert!(m.objective_value.is_finite());
    }

    #[test]
    fn svm_objective_exact((x, y) in dataset(), lambda in 0.005f64..1.0) {
        let m = svm_fit(&x, &y, &SvmConfig::new(lambda)).unwrap();
        let inst = instance_from(&x, &y, 1.0, lambda);
        let reference = svm_reference_objective(&inst, &m.coefficients, m.intercept);
        prop_assert!((reference - m.objective_value).abs() <= 1e-8 * reference.abs().max(1.0));
        let own = svm_objective(&x, &y, &m.coefficients, m.intercept, lambda).unwrap();
        prop_assert!((own - reference).abs() <= 1e-12 * reference.abs().max(1.0));
    }

    #[test]
    fn dwd_sign_equivariance((x, y) in dataset(), c in 0.5f64..100.0) {
        let flipped: Vec<Label> = y.iter().map(|v| -v).collect();
        let a = dwd_fit(&x, &y, &DwdConfig::new(c)).unwrap();
        let b = dwd_fit(&x, &flipped, &DwdConfig::new(c)).unwrap();
        prop_assert!((a.objective_value - b.objective_value).abs() <= 1e-4 * a.objective_value.abs().max(1.0));
        let inst = instance_from(&x, &flipped, c, 0.1);
        let negated: Vec<f64> = a.coefficients.iter().map(|v| -v).collect();
        let at_negated = dwd_reference_objective(&inst, &negated, -a.intercept);
        prop_assert!((at_negated - b.objective_value).abs() <= 1e-4 * at_negated.abs().max(1.0));
    }

    #[test]
    fn svm_sign_equivariance((x, y) in dataset(), lambda in 0.01f64..0.5) {
        let flipped: Vec<Label> = y.iter().map(|v| -v).collect();
        let a = svm_fit(&x, &y, &SvmConfig::new(lambda)).unwrap();
        let b = svm_fit(&x, &flipped, &SvmConfig::new(lambda)).unwrap();
        prop_assert!((a.objective_value - b.objective_value).abs() <= 1e-4);
    }

    #[test]
    fn dwd_rotation_equivariance(
        (x, y) in dataset(),
        angles in prop::collection::vec(0.0f64..std::f64::consts::TAU, 6),
        c in 1.0f64..50.0,
    ) {
        let d = x.nrows();
        let mut q = Matrix::identity(d, d);
        let mut a = 0;
        for i in 0..d {
            for j in (i + 1)..d {
                let (s, co) = angles[a % angles.len()].sin_cos();
                a += 1;
                let mut g = Matrix::identity(d, d);
                g[(i, i)] = co;
                g[(j, j)] = co;
                g[(i, j)] = -s;
                g[(j, i)] = s;
                q = g * q;
            }
        }
        let base = dwd_fit(&x, &y, &DwdConfig::new(c)).unwrap();
        let rotated = dwd_fit(&(&q * &x), &y, &DwdConfig::new(c)).unwrap();
        prop_assert!((base.objective_value - rotated.objective_value).abs() <= 1e-5 * base.objective_value.abs().max(1.0));
        let qb = &q * Matrix::from_column_slice(d, 1, &base.coefficients);
        for j in 0..d {
            prop_assert!((qb[(j, 0)] - rotated.coefficients[j]).abs() < 1e-3);
        }
        prop_assert!((base.intercept - rotated.intercept).abs() < 1e-3);
    }
}

mod common;

use common::{
    dwd_grid_oracle, dwd_reference_objective, small_instances, svm_reference_objective,
    svm_subgradient_oracle,
};
use mwclass::evaluation::{loocv, stratified_resample};
use mwclass::io::ModelFile;
use mwclass::multiway::{fit_rank1, predict_multiway};
use mwclass::simulation::{generate, run_experiment, ModelSpec, Scenario, ScenarioSpec, Signal};
use mwclass::{
    dwd_fit, fit, kron, median_pairwise_distance, svm_fit, thin_svd, unvectorize, vectorize,
    DwdConfig, FitOptions, Label, LabeledDataset, Matrix, Rank, Solver, SvmConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Ledger {
    results: Vec<(String, bool)>,
}

impl Ledger {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((name.to_string(), pass));
    }
}

fn models(labels: &[&str]) -> Vec<ModelSpec> {
    labels.iter().map(|l| ModelSpec::parse(l).unwrap()).collect()
}

fn scenario(name: &str) -> Scenario {
    ScenarioSpec::named(name).unwrap().resolve().unwrap().0
}

fn simulated(p: usize, m: usize, n: usize, structure: Rank, scale: f64, seed: u64) -> LabeledDataset {
    let mut sc = Scenario::new(p, m, n, Signal::unit(structure).unwrap().scaled(scale));
    sc.seed = seed;
    generate(&sc).unwrap().train
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn small_grid_trend(ledger: &mut Ledger) {
    let sc = scenario("table1_15x4_rank1");
    let t = run_experiment(&sc, &models(&["rank1", "full"]), 100).unwrap();
    let (r1, full) = (t.summary("rank1").unwrap(), t.summary("full").unwrap());
    let ok = (r1.mis - 0.156).abs() <= 0.03 && r1.mis < full.mis;
    ledger.record(
        "1a small grid, rank-1 truth",
        ok,
        format!("rank1 {:.3} (se {:.3}), full {:.3} (se {:.3}); need |rank1-0.156|<=0.03 and rank1<full", r1.mis, r1.se_mis, full.mis, full.se_mis),
    );

    let sc = scenario("table1_15x4_full");
    let t = run_experiment(&sc, &models(&["rank1", "rank2", "full"]), 100).unwrap();
    let (r1, r2, full) = (t.summary("rank1").unwrap(), t.summary("rank2").unwrap(), t.summary("full").unwrap());
    let ok = r1.mis - full.mis >= 0.04 && full.mis < r2.mis;
    ledger.record(
        "1b small grid, full truth",
        ok,
        format!("rank1 {:.3}, rank2 {:.3}, full {:.3}; need full best and rank1-full>=0.04", r1.mis, r2.mis, full.mis),
    );
}

fn large_grid_signature(ledger: &mut Ledger) {
    let sc = scenario("table1_500x30_rank1");
    let t = run_experiment(&sc, &models(&["rank1", "full"]), 25).unwrap();
    let (r1, full) = (t.summary("rank1").unwrap(), t.summary("full").unwrap());
    let ok = r1.mis < 0.05 && (0.15..=0.30).contains(&full.mis) && r1.cor >= 0.60;
    ledger.record(
        "2 large grid, rank-1 truth (25 reps)",
        ok,
        format!(
            "rank1 mis {:.3} (se {:.3}) cor {:.3} (se {:.3}); full mis {:.3} (se {:.3})",
            r1.mis, r1.se_mis, r1.cor, r1.se_cor, full.mis, full.se_mis
        ),
    );
}

fn monotone_approach(ledger: &mut Ledger) {
    let sc = scenario("table1_500x30_full");
    let labels = ["rank1", "rank2", "rank5", "rank15", "full"];
    let t = run_experiment(&sc, &models(&labels), 25).unwrap();
    let rows: Vec<_> = labels.iter().map(|l| t.summary(l).unwrap()).collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for pair in rows.windows(2) {
        let slack = 2.0 * (pair[0].se_mis.powi(2) + pair[1].se_mis.powi(2)).sqrt();
        ok &= pair[1].mis <= pair[0].mis + slack;
    }
    for r in &rows {
        detail.push(format!("{} {:.3}", r.model, r.mis));
    }
    ledger.record("3 rank-r approaches full (25 reps)", ok, detail.join(", "));
}

fn dwd_beats_svm_correlation(ledger: &mut Ledger) {
    let sc = scenario("table1_20x10_rank1");
    let t = run_experiment(&sc, &models(&["rank1", "svm-rank1"]), 100).unwrap();
    let (dwd, svm) = (t.summary("rank1").unwrap(), t.summary("svm-rank1").unwrap());
    ledger.record(
        "4 DWD vs SVM correlation",
        dwd.cor - svm.cor >= 0.1,
        format!("dwd cor {:.3} (se {:.3}), svm cor {:.3} (se {:.3}); need gap>=0.1", dwd.cor, dwd.se_cor, svm.cor, svm.se_cor),
    );
}

fn solver_oracles(ledger: &mut Ledger) {
    let instances = small_instances();
    let mut passed = 0;
    let mut worst = f64::NEG_INFINITY;
    for inst in &instances {
        let x = inst.matrix();
        let d = dwd_fit(&x, &inst.y, &DwdConfig::new(inst.dwd_penalty)).unwrap();
        let s = svm_fit(&x, &inst.y, &SvmConfig::new(inst.svm_lambda)).unwrap();
        let dwd_gap = dwd_reference_objective(inst, &d.coefficients, d.intercept) - dwd_grid_oracle(inst);
        let svm_gap = svm_reference_objective(inst, &s.coefficients, s.intercept) - svm_subgradient_oracle(inst, 20_000);
        worst = worst.max(dwd_gap).max(svm_gap);
        if dwd_gap <= 1e-3 && svm_gap <= 1e-3 {
            passed += 1;
        }
    }
    ledger.record(
        "5 solver oracle equivalence",
        passed == instances.len(),
        format!("{passed}/{} instances; worst objective excess {worst:.2e}", instances.len()),
    );
}

fn reduction_identity(ledger: &mut Ledger) {
    let mut worst = f64::INFINITY;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = rng.random_range(2..12);
        let n = 2 * rng.random_range(5..20);
        let data = simulated(p, 1, n, Rank::Full, rng.random_range(0.3..1.5), seed);
        let model = fit_rank1(&data, &FitOptions::new(Solver::Dwd, Rank::Fixed(1)).with_seed(seed)).unwrap();
        let x = data.tensor.vectorized();
        let d = median_pairwise_distance(&x, &data.labels).unwrap();
        let direct = dwd_fit(&x, &data.labels, &DwdConfig::new(100.0 / (d * d)).with_tolerance(1e-10)).unwrap();
        worst = worst.min(cosine(&model.coefficients(), &direct.coefficients));
    }
    ledger.record("6 one-column reduction", worst >= 1.0 - 1e-6, format!("min cosine over 50 datasets {worst:.10}"));
}

fn acs_monotonicity(ledger: &mut Ledger) {
    let base = scenario("table1_15x4_rank1");
    let mut runs = 0;
    let mut violations = 0;
    let mut converged = 0;
    for seed in 0..50u64 {
        let mut sc = base.clone();
        sc.seed = 1000 + seed;
        let data = generate(&sc).unwrap().train;
        for rank in [1, 2] {
            let model = fit(&data, &FitOptions::new(Solver::Dwd, Rank::Fixed(rank)).with_seed(seed)).unwrap();
            runs += 1;
            let steps = &model.trace.half_steps;
            if steps.windows(2).any(|w| w[1].objective > w[0].objective + 1e-4) {
                violations += 1;
            }
            if model.trace.converged && model.trace.iterations <= 100 {
                converged += 1;
            }
        }
    }
    let rate = converged as f64 / runs as f64;
    ledger.record(
        "7 ACS monotonicity and convergence",
        violations == 0 && rate >= 0.95,
        format!("{violations}/{runs} runs with an increase; converged {converged}/{runs} ({:.0}%)", 100.0 * rate),
    );
}

fn property_spot_checks(ledger: &mut Ledger) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();

    let (p, m) = (5, 3);
    let w: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = Matrix::from_fn(p, m, |i, j| w[i] * v[j]);
    if kron(&v, &w).iter().zip(vectorize(&b)).any(|(a, c)| (a - c).abs() > 1e-14) {
        failures.push("kronecker");
    }

    let b = Matrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
    let svd = thin_svd(&b, 4).unwrap();
    let ordered = svd.singular_values.windows(2).all(|s| s[0] >= s[1]);
    let signed = svd.v.column_iter().all(|c| {
        let k = c.iamax();
        c[k] > 0.0
    });
    let orthonormal = (svd.v.transpose() * &svd.v - Matrix::identity(4, 4)).norm() < 1e-10;
    if !(ordered && signed && orthonormal && (svd.reconstruct() - &b).norm() < 1e-10) {
        failures.push("svd");
    }
    if unvectorize(&vectorize(&b), 6, 4).unwrap() != b {
        failures.push("vectorize");
    }

    let data = simulated(6, 3, 16, Rank::Fixed(1), 0.8, 4);
    let opts = FitOptions::new(Solver::Dwd, Rank::Fixed(2)).with_seed(5);
    let a = fit(&data, &opts).unwrap();
    let again = fit(&data, &opts).unwrap();
    if a.b != again.b || a.intercept != again.intercept {
        failures.push("determinism");
    }

    let labels: Vec<Label> = (0..17).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
    for seed in 0..20 {
        let idx = stratified_resample(&labels, seed);
        let pos = idx.iter().filter(|&&i| labels[i] == 1).count();
        if idx.len() != labels.len() || pos != labels.iter().filter(|&&y| y == 1).count() {
            failures.push("stratification");
            break;
        }
    }

    // a held-out score is affine in the held-out sample
    let opts = FitOptions::new(Solver::Dwd, Rank::Fixed(1)).with_seed(1);
    let shift: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
    let shifted = |t: f64| {
        let mut values = data.tensor.values().to_vec();
        for (x, s) in values[..18].iter_mut().zip(&shift) {
            *x += t * s;
        }
        let tensor = mwclass::Tensor3::new(data.n(), 6, 3, values).unwrap();
        let d = LabeledDataset::new(tensor, data.labels.clone()).unwrap();
        loocv(&d, &opts).unwrap().per_sample_scores[0]
    };
    let (s0, s1, s2) = (shifted(0.0), shifted(1.0), shifted(2.0));
    if (s2 - 2.0 * s1 + s0).abs() > 1e-6 * (1.0 + s0.abs() + s2.abs()) {
        failures.push("loocv exclusion");
    }

    let file = ModelFile::from_model(&a, &opts, None, None);
    let restored = ModelFile::from_json(&file.to_json().unwrap()).unwrap().to_model().unwrap();
    for _ in 0..200 {
        let x = Matrix::from_fn(6, 3, |_, _| rng.random_range(-5.0..5.0));
        if predict_multiway(&a, &x).unwrap().0.to_bits() != predict_multiway(&restored, &x).unwrap().0.to_bits() {
            failures.push("model file round-trip");
            break;
        }
    }

    ledger.record(
        "8 property suite spot checks",
        failures.is_empty(),
        if failures.is_empty() {
            "kronecker, svd, determinism, stratification, loocv exclusion, round-trip hold; full proptest suites run in their own targets".into()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    );
}

#[test]
fn acceptance() {
    let mut ledger = Ledger { results: Vec::new() };
    small_grid_trend(&mut ledger);
    large_grid_signature(&mut ledger);
    monotone_approach(&mut ledger);
    dwd_beats_svm_correlation(&mut ledger);
    solver_oracles(&mut ledger);
    reduction_identity(&mut ledger);
    acs_monotonicity(&mut ledger);
    property_spot_checks(&mut ledger);
    println!(
        "[INFO] 9 real-data numbers: not gated; the gene and MRS datasets are not bundled. \
         With a user-supplied gene tensor, `mwclass rank-select` is expected near 17% (rank 1) and 23% (full)."
    );
    let failed: Vec<&str> = ledger.results.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

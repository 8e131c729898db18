use mwclass::evaluation::{
    bootstrap_weights, cross_validate, loocv, partition, quantile_sorted, rank_selection,
    stratified_resample, t_statistic, CvScheme,
};
use mwclass::simulation::{generate, Scenario, Signal};
use mwclass::{FitOptions, Label, LabeledDataset, Rank, Solver, Tensor3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn dwd(rank: Rank, seed: u64) -> FitOptions {
    FitOptions::new(Solver::Dwd, rank).with_seed(seed)
}

/// Class `+1` centred at `scale·w v⊺`, class `-1` at zero, unit noise.
fn planted(n: usize, w: &[f64], v: &[f64], scale: f64, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<Label> = (0..n).map(|i| if i < n / 2 { 1 } else { -1 }).collect();
    let t = Tensor3::from_fn(n, w.len(), v.len(), |i, j, k| {
        let z: f64 = StandardNormal.sample(&mut rng);
        let mean = if labels[i] == 1 { scale * w[j] * v[k] } else { 0.0 };
        mean + z
    })
    .unwrap();
    LabeledDataset::new(t, labels).unwrap()
}

fn simulated(p: usize, m: usize, n: usize, structure: Rank, scale: f64, seed: u64) -> LabeledDataset {
    let mut sc = Scenario::new(p, m, n, Signal::unit(structure).unwrap().scaled(scale));
    sc.seed = seed;
    generate(&sc).unwrap().train
}

fn welch(scores: &[f64], labels: &[Label]) -> f64 {
    let group = |c: Label| -> Vec<f64> {
        scores.iter().zip(labels).filter(|(_, &y)| y == c).map(|(s, _)| *s).collect()
    };
    let (a, b) = (group(1), group(-1));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
    };
    (mean(&a) - mean(&b)) / (var(&a) / a.len() as f64 + var(&b) / b.len() as f64).sqrt()
}

#[test]
fn t_statistic_examples() {
    let t = t_statistic(&[0.0, 1.0, 3.0, 4.0], &[-1, -1, 1, 1]).unwrap();
    assert!((t - 3.0 / 0.5f64.sqrt()).abs() < 1e-12);
    assert_eq!(t_statistic(&[1.0, 2.0, 2.0, 1.0], &[1, 1, -1, -1]).unwrap(), 0.0);
    assert_eq!(t_statistic(&[1.0, 1.0, 1.0, 1.0], &[1, 1, -1, -1]).unwrap(), 0.0);
    assert!(t_statistic(&[0.0, 0.0, 1.0, 1.0], &[-1, -1, 1, 1]).is_err());
    assert!(t_statistic(&[0.0, 1.0, 3.0], &[-1, 1, 1]).is_err());
}

#[test]
fn separated_clusters_have_zero_loocv_error() {
    // ‖Δμ‖ = 10 with unit noise
    let w = [1.0, 1.0, 1.0];
    let v = [1.0, 1.0];
    let data = planted(20, &w, &v, 10.0 / 6f64.sqrt(), 1);
    for rank in [Rank::Fixed(1), Rank::Full] {
        let report = loocv(&data, &dwd(rank, 0)).unwrap();
        assert_eq!(report.misclassification_rate, 0.0);
        assert!(report.t_statistic.unwrap() > 0.0);
        assert!(report.per_sample_scores.iter().all(|s| s.is_finite()));
    }
}

#[test]
fn permuted_labels_give_chance_error() {
    let mut total = 0.0;
    let reps = 8;
    for seed in 0..reps {
        let data = planted(20, &[1.0, -1.0, 0.5], &[1.0, 0.5], 2.0, 100 + seed);
        let mut labels = data.labels.clone();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted = LabeledDataset::new(data.tensor.clone(), labels).unwrap();
        total += loocv(&permuted, &dwd(Rank::Fixed(1), seed)).unwrap().misclassification_rate;
    }
    let mean = total / reps as f64;
    assert!((mean - 0.5).abs() <= 0.15, "{mean}");
}

#[test]
fn loocv_is_deterministic_and_excludes_held_out_sample() {
    let data = simulated(6, 3, 16, Rank::Fixed(1), 0.8, 2);
    let opts = dwd(Rank::Fixed(1), 42);
    let a = loocv(&data, &opts).unwrap();
    let b = loocv(&data, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.folds.len(), data.n());
    for (i, fold) in a.folds.iter().enumerate() {
        assert_eq!(fold, &vec![i]);
    }
    let errors = a
        .per_sample_scores
        .iter()
        .zip(&data.labels)
        .filter(|(s, &y)| (if **s >= 0.0 { 1 } else { -1 }) != y)
        .count();
    assert_eq!(a.misclassification_rate, errors as f64 / data.n() as f64);
    assert!((a.t_statistic.unwrap() - welch(&a.per_sample_scores, &data.labels)).abs() < 1e-12);

    // fold 0 never sees sample 0, so its model is unchanged when sample 0
    // moves and the held-out score is affine in the shift
    let shifted = |delta: f64| {
        let mut values = data.tensor.values().to_vec();
        let pm = data.tensor.p() * data.tensor.m();
        for v in &mut values[0..pm] {
            *v += delta;
        }
        let t = Tensor3::new(data.n(), data.tensor.p(), data.tensor.m(), values).unwrap();
        loocv(&LabeledDataset::new(t, data.labels.clone()).unwrap(), &opts).unwrap()
    };
    let (s0, s1, s2) = (a.per_sample_scores[0], shifted(5.0).per_sample_scores[0], shifted(10.0).per_sample_scores[0]);
    assert!(((s2 - s0) - 2.0 * (s1 - s0)).abs() < 1e-9 * (1.0 + s2.abs()));
    assert_ne!(shifted(5.0).per_sample_scores[1], a.per_sample_scores[1]);
}

#[test]
fn folds_that_empty_a_class_are_rejected() {
    let t = Tensor3::from_fn(4, 2, 2, |i, j, k| (i + j + k) as f64).unwrap();
    let data = LabeledDataset::new(t, vec![1, -1, -1, -1]).unwrap();
    assert!(loocv(&data, &dwd(Rank::Fixed(1), 0)).is_err());
    let tiny = LabeledDataset::new(Tensor3::from_fn(2, 2, 2, |i, _, _| i as f64).unwrap(), vec![1, -1]).unwrap();
    assert!(loocv(&tiny, &dwd(Rank::Fixed(1), 0)).is_err());
}

#[test]
fn kfold_partition_is_stratified_and_seeded() {
    let labels: Vec<Label> = (0..23).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
    let folds = partition(&labels, CvScheme::KFold(4), 9).unwrap();
    assert_eq!(folds, partition(&labels, CvScheme::KFold(4), 9).unwrap());
    let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..23).collect::<Vec<_>>());
    let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    for fold in &folds {
        let pos = fold.iter().filter(|&&i| labels[i] == 1).count();
        assert!((1..=3).contains(&pos));
    }
    assert!(partition(&labels, CvScheme::KFold(1), 0).is_err());
    let data = simulated(5, 3, 24, Rank::Fixed(1), 1.0, 3);
    let report = cross_validate(&data, &dwd(Rank::Fixed(1), 1), CvScheme::KFold(4)).unwrap();
    assert_eq!(report.folds.len(), 4);
    assert!(report.per_sample_scores.iter().all(|s| s.is_finite()));
}

#[test]
fn bootstrap_on_duplicated_rows_has_zero_width() {
    let labels: Vec<Label> = vec![1, 1, 1, -1, -1, -1];
    let t = Tensor3::from_fn(6, 3, 2, |i, j, k| {
        let base = [0.4, -1.0, 0.7][j] * [1.0, 0.5][k];
        if labels[i] == 1 { base } else { -base }
    })
    .unwrap();
    let data = LabeledDataset::new(t, labels).unwrap();
    let report = bootstrap_weights(&data, &dwd(Rank::Fixed(1), 0), 2).unwrap();
    assert_eq!(report.n_failed(), 0);
    for (lo, hi) in report.lower95.iter().zip(&report.upper95) {
        assert!((hi - lo).abs() < 1e-8);
    }
}

#[test]
fn bootstrap_intervals_cover_strong_signal() {
    let w = [1.0, -1.0, 0.8, -0.6, 0.5, 0.9];
    let v = [1.0, 0.7, -0.8, 0.6];
    let data = planted(40, &w, &v, 1.5, 5);
    let report = bootstrap_weights(&data, &dwd(Rank::Fixed(1), 3), 500).unwrap();
    assert_eq!(report.replicates.len() + report.n_failed(), 500);
    let params = report.point.parameters();
    assert_eq!(params.len(), w.len() + v.len());
    let excluded = report
        .lower95
        .iter()
        .zip(&report.upper95)
        .filter(|(lo, hi)| **lo > 0.0 || **hi < 0.0)
        .count();
    assert!(excluded as f64 >= 0.9 * params.len() as f64, "{excluded}/{}", params.len());
    let (lo90, hi90) = report.interval(0.90).unwrap();
    for j in 0..params.len() {
        assert!(report.lower95[j] <= report.upper95[j]);
        assert!(report.lower95[j] <= lo90[j] && lo90[j] <= hi90[j] && hi90[j] <= report.upper95[j]);
    }
    let again = bootstrap_weights(&data, &dwd(Rank::Fixed(1), 3), 500).unwrap();
    assert_eq!(report.lower95, again.lower95);
    assert_eq!(report.resample_seeds, again.resample_seeds);
}

#[test]
fn rank_selection_reduces_to_loocv() {
    let data = simulated(6, 3, 16, Rank::Fixed(1), 0.8, 4);
    for rank in [Rank::Full, Rank::Fixed(2)] {
        let opts = dwd(rank, 8);
        let sel = rank_selection(&data, &[rank], &opts, CvScheme::LeaveOneOut).unwrap();
        let direct = loocv(&data, &opts).unwrap();
        assert_eq!(sel.rows.len(), 1);
        assert_eq!(sel.selected, rank);
        assert_eq!(sel.reports[0], direct);
        assert_eq!(sel.rows[0].misclassification, direct.misclassification_rate);
        assert_eq!(sel.rows[0].t_statistic, direct.t_statistic);
    }
    assert!(rank_selection(&data, &[Rank::Fixed(4)], &dwd(Rank::Fixed(1), 0), CvScheme::LeaveOneOut).is_err());
}

#[test]
fn rank_selection_prefers_true_rank() {
    let mut wins = 0;
    for seed in 0..5 {
        let data = simulated(10, 4, 30, Rank::Fixed(1), 0.8, 20 + seed);
        let sel = rank_selection(&data, &[Rank::Fixed(1), Rank::Fixed(2), Rank::Full], &dwd(Rank::Fixed(1), seed), CvScheme::LeaveOneOut).unwrap();
        if sel.selected == Rank::Fixed(1) {
            wins += 1;
        }
    }
    assert!(wins >= 3, "{wins}/5");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn t_statistic_matches_hand_formula(
        pos in prop::collection::vec(-5.0f64..5.0, 2..12),
        neg in prop::collection::vec(-5.0f64..5.0, 2..12),
        shift in -100.0f64..100.0,
    ) {
        let scores: Vec<f64> = pos.iter().chain(&neg).copied().collect();
        let labels: Vec<Label> = pos.iter().map(|_| 1).chain(neg.iter().map(|_| -1)).collect();
        let t = t_statistic(&scores, &labels).unwrap();
        let hand = welch(&scores, &labels);
        prop_assert!((t - hand).abs() <= 1e-12 * hand.abs().max(1.0));
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let ts = t_statistic(&shifted, &labels).unwrap();
        prop_assert!((ts - t).abs() <= 1e-8 * t.abs().max(1.0));
    }

    #[test]
    fn resamples_preserve_class_counts(
        labels in prop::collection::vec(prop::bool::ANY, 2..40),
        seed in any::<u64>(),
    ) {
        let labels: Vec<Label> = labels.iter().map(|&b| if b { 1 } else { -1 }).collect();
        let idx = stratified_resample(&labels, seed);
        prop_assert_eq!(idx.len(), labels.len());
        let count = |v: &mut dyn Iterator<Item = Label>| v.filter(|&y| y == 1).count();
        prop_assert_eq!(count(&mut idx.iter().map(|&i| labels[i])), count(&mut labels.iter().copied()));
    }

    #[test]
    fn quantiles_are_monotone(mut data in prop::collection::vec(-10.0f64..10.0, 1..50), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        data.sort_by(|x, y| x.total_cmp(y));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantile_sorted(&data, lo) <= quantile_sorted(&data, hi));
        prop_assert_eq!(quantile_sorted(&data, 0.0), data[0]);
        prop_assert_eq!(quantile_sorted(&data, 1.0), *data.last().unwrap());
    }
}

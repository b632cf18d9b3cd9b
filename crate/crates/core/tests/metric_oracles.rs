use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use survkit::metrics::*;
use survkit::predictions::{PredictionSet, Truth};

fn auroc_pairs(s: &[f64], y: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] && !y[j] {
                den += 1.0;
                if s[i] > s[j] {
                    num += 1.0;
                } else if s[i] == s[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

fn ap_direct(s: &[f64], y: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = s.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let p = y.iter().filter(|&&v| v).count() as f64;
    let (mut ap, mut prev_r) = (0.0, 0.0);
    for &t in &thresholds {
        let tp = (0..s.len()).filter(|&i| s[i] >= t && y[i]).count() as f64;
        let fp = (0..s.len()).filter(|&i| s[i] >= t && !y[i]).count() as f64;
        let r = tp / p;
        ap += (r - prev_r) * tp / (tp + fp);
        prev_r = r;
    }
    ap
}

fn cindex_pairs(r: &[f64], t: &[f64], e: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..r.len() {
        for j in 0..r.len() {
            if e[i] && t[j] > t[i] {
                den += 1.0;
                if r[i] > r[j] {
                    num += 1.0;
                } else if r[i] == r[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

fn spearman_two_step(a: &[f64], b: &[f64]) -> f64 {
    let ranks = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let below = v.iter().filter(|&&o| o < x).count() as f64;
                let equal = v.iter().filter(|&&o| o == x).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn binary_metrics_match_pair_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 200 {
        let n = rng.random_range(2..=30);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64 / 5.0).collect();
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
            continue;
        }
        assert!((auroc(&s, &y).unwrap() - auroc_pairs(&s, &y)).abs() < 1e-12);
        assert!((average_precision(&s, &y).unwrap() - ap_direct(&s, &y)).abs() < 1e-12);
        checked += 1;
    }
}

#[test]
fn concordance_matches_pair_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut checked = 0;
    while checked < 200 {
        let n = rng.random_range(2..=30);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(1..8) as f64).collect();
        let e: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        let comparable = (0..n).any(|i| e[i] && (0..n).any(|j| t[j] > t[i]));
        if !comparable {
            assert!(matches!(
                concordance_index(&r, &t, &e),
                Err(survkit::SurvError::NoComparablePairs)
            ));
            continue;
        }
        assert!((concordance_index(&r, &t, &e).unwrap() - cindex_pairs(&r, &t, &e)).abs() < 1e-12);
        checked += 1;
    }
}

#[test]
fn uncensored_concordance_with_thresholded_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.random_range(3..=30);
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..48.0)).collect();
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64).collect();
        let e = vec![true; n];
        assert!((concordance_index(&r, &t, &e).unwrap() - cindex_pairs(&r, &t, &e)).abs() < 1e-12);
    }
}

#[test]
fn hand_examples() {
    // comparable pairs (0,1), (0,2), (1,2): risks 3>1, 3>2, 1<2
    let c = concordance_index(&[3.0_f64, 1.0, 2.0], &[2.0, 4.0, 6.0], &[true, true, false]).unwrap();
    assert!((c - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(concordance_index(&[1.0_f64; 4], &[1.0, 2.0, 3.0, 4.0], &[true; 4]).unwrap(), 0.5);
    assert_eq!(concordance_index(&[4.0_f64, 3.0, 2.0, 1.0], &[1.0, 2.0, 3.0, 4.0], &[true; 4]).unwrap(), 1.0);
    assert_eq!(spearman(&[1.0_f64, 2.0, 3.0], &[10.0, 20.0, 40.0]).unwrap(), 1.0);
    assert_eq!(spearman(&[1.0_f64, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    assert_eq!(fdr_select(&[1.0; 4], 0.05), vec![false; 4]);
    assert_eq!(fdr_select(&[0.0; 4], 0.05), vec![true; 4]);
    // thresholds 0.0125, 0.025, 0.0375, 0.05
    assert_eq!(fdr_select(&[0.01, 0.02, 0.04, 0.5], 0.05), vec![true, true, false, false]);
    let bins = calibration_curve(&[0.5_f64; 6], &[true, false, true, false, true, false], 10).unwrap();
    assert_eq!(bins.len(), 1);
    assert_eq!((bins[0].mean_pred, bins[0].frac_pos, bins[0].count), (0.5, 0.5, 6));
}

fn truth_from(time: Vec<f64>, event: Vec<bool>) -> Truth<f64> {
    Truth {
        ids: (0..time.len()).map(|i| format!("p{i}")).collect(),
        label: time.iter().zip(&event).map(|(&t, &e)| e && t <= 24.0).collect(),
        time,
        event,
    }
}

fn preds_from(truth: &Truth<f64>, prob: Vec<f64>) -> PredictionSet<f64> {
    PredictionSet::new(truth.ids.clone(), prob, None, None).unwrap()
}

fn random_cohort(n: usize, signal: f64, seed: u64) -> (Truth<f64>, PredictionSet<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prob = Vec::new();
    let mut time = Vec::new();
    let mut event = Vec::new();
    for _ in 0..n {
        let z: f64 = rng.random_range(-2.0..2.0);
        let rate = 0.03 * (signal * z).exp();
        let u: f64 = rng.random();
        time.push(-u.ln() / rate);
        event.push(rng.random_bool(0.8));
        prob.push(1.0 / (1.0 + (-z).exp()));
    }
    let truth = truth_from(time, event);
    let preds = preds_from(&truth, prob);
    (truth, preds)
}

#[test]
fn bootstrap_interval_contains_point() {
    let mut contained = 0;
    for seed in 0..100 {
        let (truth, preds) = random_cohort(150, 1.0, seed);
        let point = auroc(&preds.prob_2yr, &truth.label).unwrap();
        let (lo, hi) = stratified_bootstrap_ci(Metric::Auroc, &preds, &truth, 300, 0.95, seed).unwrap();
        contained += usize::from(lo <= point && point <= hi);
    }
    assert!(contained >= 99, "{contained}/100");
}

#[test]
fn bootstrap_narrows_with_sample_size() {
    for seed in 0..5 {
        let (ts, ps) = random_cohort(50, 1.0, seed);
        let (tl, pl) = random_cohort(5000, 1.0, seed + 100);
        let (a, b) = stratified_bootstrap_ci(Metric::Auroc, &ps, &ts, 300, 0.95, seed).unwrap();
        let (c, d) = stratified_bootstrap_ci(Metric::Auroc, &pl, &tl, 300, 0.95, seed).unwrap();
        assert!(b - a > d - c);
    }
}

#[test]
fn bootstrap_is_deterministic_and_degenerate_width_zero() {
    let (truth, preds) = random_cohort(80, 1.0, 3);
    for m in Metric::ALL {
        let a = stratified_bootstrap_ci(m, &preds, &truth, 200, 0.9, 5).unwrap();
        let b = stratified_bootstrap_ci(m, &preds, &truth, 200, 0.9, 5).unwrap();
        assert_eq!(a, b);
    }
    let flat = preds_from(&truth, vec![0.5; 80]);
    let (lo, hi) = stratified_bootstrap_ci(Metric::Auroc, &flat, &truth, 200, 0.95, 1).unwrap();
    assert_eq!((lo, hi), (0.5, 0.5));
}

#[test]
fn permutation_p_values() {
    let (truth, _) = random_cohort(60, 1.0, 4);
    let perfect: Vec<f64> = truth.label.iter().map(|&y| if y { 0.9 } else { 0.1 }).collect();
    let p = permutation_test(Metric::Auroc, &preds_from(&truth, perfect.clone()), &truth, 999, 1).unwrap();
    assert!(p <= 0.05);
    let p1 = permutation_test(Metric::Auroc, &preds_from(&truth, perfect), &truth, 1, 1).unwrap();
    assert!(p1 == 0.5 || p1 == 1.0);

    let mut above = 0;
    for seed in 0..100 {
        let (truth, _) = random_cohort(80, 1.0, 1000 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise: Vec<f64> = (0..80).map(|_| rng.random()).collect();
        let p = permutation_test(Metric::Auroc, &preds_from(&truth, noise), &truth, 200, seed).unwrap();
        above += usize::from(p > 0.05);
    }
    assert!(above >= 90, "{above}/100");
}

#[test]
fn evaluate_report_is_ordered_and_stable() {
    let (truth, preds) = random_cohort(120, 1.0, 8);
    let opts = EvalOptions {
        n_boot: 200,
        n_perm: 100,
        level: 0.95,
        seed: 3,
    };
    let r = evaluate(&preds, &truth, &opts).unwrap();
    for m in Metric::ALL {
        let i = r.get(m);
        assert!(i.lo <= i.point && i.point <= i.hi);
    }
    assert!(r.p_perm.auroc > 0.0 && r.p_perm.auroc <= 1.0);
    assert_eq!(r, evaluate(&preds, &truth, &opts).unwrap());
    let json = serde_json::to_value(&r).unwrap();
    for key in ["auroc", "ap", "c_index", "p_perm", "n_boot", "seed"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn calibrated_generator_reads_calibrated() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let p: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
    let y: Vec<bool> = p.iter().map(|&p| rng.random_bool(p)).collect();
    let bins = calibration_curve(&p, &y, 10).unwrap();
    assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 10_000);
    let worst = bins.iter().map(|b| (b.mean_pred - b.frac_pos).abs()).fold(0.0, f64::max);
    assert!(worst < 0.05, "{worst}");
}

fn scored(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (3..max_n).prop_flat_map(|n| {
        (
            proptest::collection::vec(-5.0..5.0f64, n),
            proptest::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #[test]
    fn auroc_reverses_under_negation((s, y) in scored(40)) {
        prop_assume!(y.iter().any(|&v| v) && y.iter().any(|&v| !v));
        let mut sorted = s.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assume!(sorted.windows(2).all(|w| w[0] < w[1]));
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((auroc(&s, &y).unwrap() + auroc(&neg, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ranking_metrics_ignore_monotone_transforms((s, y) in scored(40), t in proptest::collection::vec(0.5..60.0f64, 40)) {
        prop_assume!(y.iter().any(|&v| v) && y.iter().any(|&v| !v));
        let g: Vec<f64> = s.iter().map(|v| (v / 2.0).exp() + 3.0).collect();
        prop_assert_eq!(auroc(&s, &y).unwrap(), auroc(&g, &y).unwrap());
        prop_assert_eq!(average_precision(&s, &y).unwrap(), average_precision(&g, &y).unwrap());
        let t = &t[..s.len()];
        if let Ok(c) = concordance_index(&s, t, &y) {
            prop_assert_eq!(c, concordance_index(&g, t, &y).unwrap());
        }
    }

    #[test]
    fn perfect_ranker_has_unit_ap((s, y) in scored(40)) {
        prop_assume!(y.iter().any(|&v| v));
        let perfect: Vec<f64> = y.iter().zip(&s).map(|(&l, &v)| if l { 10.0 + v } else { v }).collect();
        prop_assert_eq!(average_precision(&perfect, &y).unwrap(), 1.0);
    }

    #[test]
    fn spearman_matches_two_step_oracle(a in proptest::collection::vec(0u8..5, 3..25), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = a.iter().map(|&x| x + rng.random_range(0..3) as f64).collect();
        let oracle = spearman_two_step(&a, &b);
        match spearman(&a, &b) {
            Ok(v) => prop_assert!((v - oracle).abs() < 1e-12),
            Err(_) => prop_assert!(oracle.is_nan()),
        }
    }

    #[test]
    fn fdr_rejections_are_a_prefix_of_sorted_p(p in proptest::collection::vec(0.0..1.0f64, 1..30), q in 0.01..0.3f64) {
        let reject = fdr_select(&p, q);
        let max_rejected = p.iter().zip(&reject).filter(|(_, &r)| r).map(|(&v, _)| v).fold(f64::NEG_INFINITY, f64::max);
        for (v, r) in p.iter().zip(&reject) {
            if !r {
                prop_assert!(*v >= max_rejected);
            }
        }
    }
}

//! Ranking metrics, resampling statistics and the evaluation report.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, SurvError};
use crate::predictions::{PredictionSet, Truth};
use crate::scalar::{mid_ranks, quantile_sorted, Scalar};

fn check_finite<T: Scalar>(values: &[T], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SurvError::NonFinite(what))
    }
}

/// Indices sorted by descending score.
fn order_desc<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    order
}

/// Ranges of `order` sharing one score value.
fn tie_groups<'a, T: Scalar>(
    scores: &'a [T],
    order: &'a [usize],
) -> impl Iterator<Item = &'a [usize]> + 'a {
    order.chunk_by(move |&a, &b| scores[a] == scores[b])
}

/// Area under the ROC curve as the Mann–Whitney statistic with half credit
/// for tied positive/negative pairs.
pub fn auroc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<T> {
    check_len(scores.len(), labels.len())?;
    check_finite(scores, "scores")?;
    let n_pos = labels.iter().filter(|&&y| y).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(SurvError::OneClassOnly);
    }
    let order = order_desc(scores);
    let (mut wins, mut ties) = (0u64, 0u64);
    let mut neg_seen = 0u64;
    for group in tie_groups(scores, &order) {
        let pos = group.iter().filter(|&&i| labels[i]).count() as u64;
        let neg = group.len() as u64 - pos;
        wins += pos * (n_neg - neg_seen - neg);
        ties += pos * neg;
        neg_seen += neg;
    }
    let num = T::count(wins as usize) + T::count(ties as usize) / T::lit(2.0);
    Ok(num / T::count((n_pos * n_neg) as usize))
}

/// Non-interpolated average precision `Σ (R_n − R_{n−1}) P_n`, one threshold
/// per distinct score.
pub fn average_precision<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<T> {
    check_len(scores.len(), labels.len())?;
    check_finite(scores, "scores")?;
    let n_pos = labels.iter().filter(|&&y| y).count();
    if n_pos == 0 {
        return Err(SurvError::NoPositives);
    }
    let order = order_desc(scores);
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = T::zero();
    let mut ap = T::zero();
    for group in tie_groups(scores, &order) {
        tp += group.iter().filter(|&&i| labels[i]).count();
        seen += group.len();
        let recall = T::count(tp) / T::count(n_pos);
        let precision = T::count(tp) / T::count(seen);
        ap = ap + (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Fenwick tree of counts over dense ranks.
struct CountTree(Vec<u64>);

impl CountTree {
    fn new(n: usize) -> Self {
        Self(vec![0; n + 1])
    }

    fn add(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks `< rank`.
    fn below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Harrell's concordance: over pairs with `i` uncensored and `t_j > t_i`,
/// credit 1 when `r_i > r_j` and ½ when `r_i = r_j`.
pub fn concordance_index<T: Scalar>(risk: &[T], time: &[T], event: &[bool]) -> Result<T> {
    check_len(risk.len(), time.len())?;
    check_len(risk.len(), event.len())?;
    check_finite(risk, "risk")?;
    check_finite(time, "time")?;
    let n = risk.len();

    let mut by_risk: Vec<usize> = (0..n).collect();
    by_risk.sort_by(|&a, &b| risk[a].partial_cmp(&risk[b]).expect("finite risk"));
    let mut rank = vec![0usize; n];
    let mut distinct = 0;
    for (k, &i) in by_risk.iter().enumerate() {
        if k > 0 && risk[i] != risk[by_risk[k - 1]] {
            distinct += 1;
        }
        rank[i] = distinct;
    }

    let mut by_time: Vec<usize> = (0..n).collect();
    by_time.sort_by(|&a, &b| time[b].partial_cmp(&time[a]).expect("finite time"));
    let mut tree = CountTree::new(distinct + 1);
    let mut inserted = 0u64;
    let (mut wins, mut ties, mut pairs) = (0u64, 0u64, 0u64);
    for group in by_time.chunk_by(|&a, &b| time[a] == time[b]) {
        for &i in group.iter().filter(|&&i| event[i]) {
            let below = tree.below(rank[i]);
            let equal = tree.below(rank[i] + 1) - below;
            wins += below;
            ties += equal;
            pairs += inserted;
        }
        for &j in group {
            tree.add(rank[j]);
        }
        inserted += group.len() as u64;
    }
    if pairs == 0 {
        return Err(SurvError::NoComparablePairs);
    }
    let num = T::count(wins as usize) + T::count(ties as usize) / T::lit(2.0);
    Ok(num / T::count(pairs as usize))
}

pub fn pearson<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_len(a.len(), b.len())?;
    let n = T::count(a.len());
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        sab = sab + (x - ma) * (y - mb);
        saa = saa + (x - ma) * (x - ma);
        sbb = sbb + (y - mb) * (y - mb);
    }
    if saa == T::zero() || sbb == T::zero() {
        return Err(SurvError::ConstantInput);
    }
    // sqrt of the product keeps identical inputs at exactly 1
    Ok((sab / (saa * sbb).sqrt()).max(-T::one()).min(T::one()))
}

/// Spearman rank correlation (Pearson correlation of mid-ranks).
pub fn spearman<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_len(a.len(), b.len())?;
    if a.len() < 3 {
        return Err(SurvError::TooShort {
            needed: 3,
            found: a.len(),
        });
    }
    check_finite(a, "spearman input")?;
    check_finite(b, "spearman input")?;
    pearson(&mid_ranks(a), &mid_ranks(b))
}

/// Metrics scored against a [`Truth`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auroc,
    AveragePrecision,
    CIndex,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Auroc, Metric::AveragePrecision, Metric::CIndex];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Auroc => "auroc",
            Metric::AveragePrecision => "ap",
            Metric::CIndex => "c_index",
        }
    }

    /// Prediction column the metric reads: the 2-year probability for the
    /// binary metrics, the risk score (or its probability proxy) for C-index.
    pub fn scores<T: Scalar>(self, preds: &PredictionSet<T>) -> &[T] {
        match self {
            Metric::Auroc | Metric::AveragePrecision => &preds.prob_2yr,
            Metric::CIndex => preds.risk_or_prob(),
        }
    }

    /// Bootstrap stratum: the 2-year label, or the event indicator for C-index.
    pub fn strata<T: Scalar>(self, truth: &Truth<T>) -> &[bool] {
        match self {
            Metric::Auroc | Metric::AveragePrecision => &truth.label,
            Metric::CIndex => &truth.event,
        }
    }

    pub fn compute<T: Scalar>(self, scores: &[T], truth: &Truth<T>) -> Result<T> {
        match self {
            Metric::Auroc => auroc(scores, &truth.label),
            Metric::AveragePrecision => average_precision(scores, &truth.label),
            Metric::CIndex => concordance_index(scores, &truth.time, &truth.event),
        }
    }

    /// Scores rows `score_rows[k]` against truth rows `truth_rows[k]`.
    fn compute_rows<T: Scalar>(
        self,
        scores: &[T],
        truth: &Truth<T>,
        score_rows: &[usize],
        truth_rows: &[usize],
    ) -> Result<T> {
        let s: Vec<T> = score_rows.iter().map(|&i| scores[i]).collect();
        self.compute(&s, &truth.subset(truth_rows))
    }
}

fn check_ids<T: Scalar>(preds: &PredictionSet<T>, truth: &Truth<T>) -> Result<()> {
    if preds.ids != truth.ids {
        return Err(SurvError::IdMismatch(
            "predictions must be aligned to the truth ids".into(),
        ));
    }
    Ok(())
}

/// Independent RNG stream for replicate `r`, so results do not depend on
/// evaluation order.
fn replicate_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

fn stratified_resample(strata: &[bool], rng: &mut impl Rng) -> Vec<usize> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..strata.len()).partition(|&i| strata[i]);
    let mut rows = Vec::with_capacity(strata.len());
    for group in [&pos, &neg] {
        for _ in 0..group.len() {
            rows.push(group[rng.random_range(0..group.len())]);
        }
    }
    rows
}

/// Metric values over stratified bootstrap replicates; replicate `r` uses
/// stream `r` of `seed`.
pub fn bootstrap_replicates<T: Scalar>(
    metric: Metric,
    preds: &PredictionSet<T>,
    truth: &Truth<T>,
    n: usize,
    seed: u64,
) -> Result<Vec<T>> {
    check_ids(preds, truth)?;
    let scores = metric.scores(preds);
    let strata = metric.strata(truth);
    (0..n)
        .into_par_iter()
        .map(|r| {
            let rows = stratified_resample(strata, &mut replicate_rng(seed, r));
            metric.compute_rows(scores, truth, &rows, &rows)
        })
        .collect()
}

/// Percentile interval from stratified bootstrap replicates.
pub fn stratified_bootstrap_ci<T: Scalar>(
    metric: Metric,
    preds: &PredictionSet<T>,
    truth: &Truth<T>,
    n: usize,
    level: f64,
    seed: u64,
) -> Result<(T, T)> {
    if n == 0 || !(level > 0.0 && level < 1.0) {
        return Err(SurvError::InvalidConfig(
            "bootstrap needs n >= 1 and level in (0, 1)".into(),
        ));
    }
    let mut reps = bootstrap_replicates(metric, preds, truth, n, seed)?;
    reps.sort_by(|a, b| a.partial_cmp(b).expect("finite replicates"));
    let alpha = T::lit((1.0 - level) / 2.0);
    Ok((
        quantile_sorted(&reps, alpha),
        quantile_sorted(&reps, T::one() - alpha),
    ))
}

/// One-sided paired bootstrap p-value for `metric(a) > metric(b)`:
/// `(1 + #{replicates with metric(a) − metric(b) ≤ 0}) / (n + 1)`.
pub fn paired_bootstrap_p<T: Scalar>(
    metric: Metric,
    a: &PredictionSet<T>,
    b: &PredictionSet<T>,
    truth: &Truth<T>,
    n: usize,
    seed: u64,
) -> Result<f64> {
    check_ids(a, truth)?;
    check_ids(b, truth)?;
    let (sa, sb) = (metric.scores(a), metric.scores(b));
    let strata = metric.strata(truth);
    let not_better = (0..n)
        .into_par_iter()
        .map(|r| {
            let rows = stratified_resample(strata, &mut replicate_rng(seed, r));
            let da = metric.compute_rows(sa, truth, &rows, &rows)?;
            let db = metric.compute_rows(sb, truth, &rows, &rows)?;
            Ok(usize::from(da - db <= T::zero()))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok((1 + not_better) as f64 / (n + 1) as f64)
}

/// Permutation p-value `(1 + #{permuted ≥ observed}) / (n + 1)`. Outcomes
/// (labels, or time and event jointly) are permuted against fixed predictions.
pub fn permutation_test<T: Scalar>(
    metric: Metric,
    preds: &PredictionSet<T>,
    truth: &Truth<T>,
    n: usize,
    seed: u64,
) -> Result<f64> {
    check_ids(preds, truth)?;
    if n == 0 {
        return Err(SurvError::InvalidConfig("permutation test needs n >= 1".into()));
    }
    let scores = metric.scores(preds);
    let observed = metric.compute(scores, truth)?;
    let identity: Vec<usize> = (0..truth.len()).collect();
    let exceed = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut perm = identity.clone();
            perm.shuffle(&mut replicate_rng(seed, r));
            let v = metric.compute_rows(scores, truth, &identity, &perm)?;
            Ok(usize::from(v >= observed))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok((1 + exceed) as f64 / (n + 1) as f64)
}

/// Benjamini–Hochberg step-up rejections at false discovery rate `q`.
pub fn fdr_select(p_values: &[f64], q: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let k_star = (1..=m)
        .rev()
        .find(|&k| p_values[order[k - 1]] <= k as f64 * q / m as f64);
    let mut reject = vec![false; m];
    if let Some(k) = k_star {
        for &i in &order[..k] {
            reject[i] = true;
        }
    }
    reject
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin<T> {
    pub mean_pred: T,
    pub frac_pos: T,
    pub count: usize,
}

/// Reliability table over equal-width bins of [0, 1]; empty bins are omitted.
pub fn calibration_curve<T: Scalar>(
    prob: &[T],
    labels: &[bool],
    n_bins: usize,
) -> Result<Vec<CalibrationBin<T>>> {
    check_len(prob.len(), labels.len())?;
    if n_bins == 0 {
        return Err(SurvError::InvalidConfig("n_bins must be positive".into()));
    }
    if prob.iter().any(|&p| !(p >= T::zero() && p <= T::one())) {
        return Err(SurvError::InvalidPredictions("probabilities must lie in [0, 1]".into()));
    }
    let mut sums = vec![(T::zero(), 0usize, 0usize); n_bins];
    for (&p, &y) in prob.iter().zip(labels) {
        let b = (p * T::count(n_bins)).floor().to_usize().unwrap_or(0).min(n_bins - 1);
        sums[b].0 = sums[b].0 + p;
        sums[b].1 += usize::from(y);
        sums[b].2 += 1;
    }
    Ok(sums
        .into_iter()
        .filter(|s| s.2 > 0)
        .map(|(sp, pos, count)| CalibrationBin {
            mean_pred: sp / T::count(count),
            frac_pos: T::count(pos) / T::count(count),
            count,
        })
        .collect())
}

/// Point estimate with a percentile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub point: T,
    pub lo: T,
    pub hi: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationPValues {
    pub auroc: f64,
    pub ap: f64,
    pub c_index: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub n_boot: usize,
    pub n_perm: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            n_boot: 10_000,
            n_perm: 1_000,
            level: 0.95,
            seed: 0,
        }
    }
}

/// Scores with bootstrap intervals and permutation p-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<T> {
    pub auroc: Interval<T>,
    pub ap: Interval<T>,
    pub c_index: Interval<T>,
    pub p_perm: PermutationPValues,
    pub n_boot: usize,
    pub n_perm: usize,
    pub level: f64,
    pub seed: u64,
}

impl<T: Scalar> EvalReport<T> {
    pub fn get(&self, metric: Metric) -> Interval<T> {
        match metric {
            Metric::Auroc => self.auroc,
            Metric::AveragePrecision => self.ap,
            Metric::CIndex => self.c_index,
        }
    }
}

/// Full evaluation of one prediction set. Each metric draws from its own
/// seed offset so adding a metric never shifts another's replicates.
pub fn evaluate<T: Scalar>(
    preds: &PredictionSet<T>,
    truth: &Truth<T>,
    opts: &EvalOptions,
) -> Result<EvalReport<T>> {
    let mut intervals = Vec::new();
    let mut p = Vec::new();
    for (k, metric) in Metric::ALL.into_iter().enumerate() {
        let seed = opts.seed.wrapping_add(k as u64);
        let point = metric.compute(metric.scores(preds), truth)?;
        let (lo, hi) = stratified_bootstrap_ci(metric, preds, truth, opts.n_boot, opts.level, seed)?;
        // percentile intervals need not bracket the point estimate
        intervals.push(Interval {
            point,
            lo: lo.min(point),
            hi: hi.max(point),
        });
        p.push(permutation_test(metric, preds, truth, opts.n_perm, seed)?);
    }
    Ok(EvalReport {
        auroc: intervals[0],
        ap: intervals[1],
        c_index: intervals[2],
        p_perm: PermutationPValues {
            auroc: p[0],
            ap: p[1],
            c_index: p[2],
        },
        n_boot: opts.n_boot,
        n_perm: opts.n_perm,
        level: opts.level,
        seed: opts.seed,
    })
}

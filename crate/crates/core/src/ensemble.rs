//! Prediction averaging, ranked submissions and the volume-correlation audit.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, SurvError};
use crate::metrics::{auroc, average_precision, concordance_index, fdr_select, paired_bootstrap_p, spearman, Metric};
use crate::predictions::{PredictionSet, Truth};
use crate::scalar::Scalar;

/// Unweighted mean of member predictions, in the first member's id order.
///
/// Members without a risk column contribute their 2-year event probability
/// to the risk mean. Curves are averaged over the members that have them.
pub fn ensemble_average<T: Scalar>(members: &[PredictionSet<T>]) -> Result<PredictionSet<T>> {
    let first = members.first().ok_or(SurvError::EmptyList)?;
    let ids = first.ids.clone();
    let aligned = members
        .iter()
        .map(|m| m.aligned_to(&ids))
        .collect::<Result<Vec<_>>>()?;
    let n = ids.len();
    let m = T::count(aligned.len());
    let mean_of = |col: &dyn Fn(&PredictionSet<T>) -> &[T]| -> Vec<T> {
        (0..n)
            .map(|i| aligned.iter().map(|a| col(a)[i]).sum::<T>() / m)
            .collect()
    };
    let mut prob = mean_of(&|a| &a.prob_2yr);
    // rounding can leave the mean a hair outside the members' range
    for (i, p) in prob.iter_mut().enumerate() {
        let (lo, hi) = aligned.iter().fold((T::one(), T::zero()), |(lo, hi), a| {
            (lo.min(a.prob_2yr[i]), hi.max(a.prob_2yr[i]))
        });
        *p = p.max(lo).min(hi);
    }
    let any_risk = aligned.iter().any(|a| a.risk.is_some());
    let risk = any_risk.then(|| mean_of(&|a| a.risk_or_prob()));
    let with_curves: Vec<&Vec<Vec<T>>> = aligned.iter().filter_map(|a| a.curves.as_ref()).collect();
    let curves = (!with_curves.is_empty()).then(|| {
        let k = T::count(with_curves.len());
        (0..n)
            .map(|i| {
                let mut c: Vec<T> = (0..with_curves[0][i].len())
                    .map(|t| with_curves.iter().map(|cs| cs[i][t]).sum::<T>() / k)
                    .collect();
                for t in 1..c.len() {
                    c[t] = c[t].min(c[t - 1]);
                }
                c
            })
            .collect()
    });
    PredictionSet::new(ids, prob, risk, curves)
}

/// AUROC of the average of the top `m` members for `m = 1..=M`. Members
/// must already be ranked best first.
pub fn partial_ensembles<T: Scalar>(ranked: &[PredictionSet<T>], truth: &Truth<T>) -> Result<Vec<T>> {
    if ranked.is_empty() {
        return Err(SurvError::EmptyList);
    }
    (1..=ranked.len())
        .map(|m| {
            let avg = ensemble_average(&ranked[..m])?.aligned_to(&truth.ids)?;
            auroc(&avg.prob_2yr, &truth.label)
        })
        .collect()
}

/// A named prediction set.
#[derive(Debug, Clone, PartialEq)]
pub struct Submission<T> {
    pub name: String,
    pub preds: PredictionSet<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow<T> {
    pub rank: usize,
    pub name: String,
    pub auroc: T,
    pub ap: T,
    pub c_index: T,
    /// One-sided p-value that the leader beats this entry; absent for the leader.
    pub p_vs_best: Option<f64>,
    /// Inferiority to the leader survives FDR control.
    pub worse_than_best: bool,
}

/// Ranks by AUROC, then AP, then name.
pub fn rank_submissions<T: Scalar>(subs: &[Submission<T>], truth: &Truth<T>) -> Result<Vec<LeaderboardRow<T>>> {
    let mut rows = subs
        .iter()
        .map(|s| {
            let p = s.preds.aligned_to(&truth.ids)?;
            Ok(LeaderboardRow {
                rank: 0,
                name: s.name.clone(),
                auroc: auroc(&p.prob_2yr, &truth.label)?,
                ap: average_precision(&p.prob_2yr, &truth.label)?,
                c_index: concordance_index(p.risk_or_prob(), &truth.time, &truth.event)?,
                p_vs_best: None,
                worse_than_best: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        b.auroc
            .partial_cmp(&a.auroc)
            .unwrap_or(Ordering::Equal)
            .then(b.ap.partial_cmp(&a.ap).unwrap_or(Ordering::Equal))
            .then_with(|| a.name.cmp(&b.name))
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(rows)
}

/// Ranked table plus leader-versus-rest paired bootstrap AUROC tests with
/// Benjamini–Hochberg control at `q`.
pub fn leaderboard<T: Scalar>(
    subs: &[Submission<T>],
    truth: &Truth<T>,
    n_boot: usize,
    q: f64,
    seed: u64,
) -> Result<Vec<LeaderboardRow<T>>> {
    if subs.is_empty() {
        return Err(SurvError::EmptyList);
    }
    let mut rows = rank_submissions(subs, truth)?;
    let by_name = |name: &str| -> Result<PredictionSet<T>> {
        subs.iter()
            .find(|s| s.name == name)
            .expect("ranked rows come from submissions")
            .preds
            .aligned_to(&truth.ids)
    };
    let best = by_name(&rows[0].name)?;
    let mut p = Vec::with_capacity(rows.len() - 1);
    for row in &rows[1..] {
        p.push(paired_bootstrap_p(Metric::Auroc, &best, &by_name(&row.name)?, truth, n_boot, seed)?);
    }
    let reject = fdr_select(&p, q);
    for (k, row) in rows[1..].iter_mut().enumerate() {
        row.p_vs_best = Some(p[k]);
        row.worse_than_best = reject[k];
    }
    Ok(rows)
}

pub fn write_leaderboard_csv<T: Scalar>(rows: &[LeaderboardRow<T>], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rank", "name", "auroc", "ap", "c_index", "p_vs_best", "worse_than_best"])?;
    for r in rows {
        w.write_record([
            r.rank.to_string(),
            r.name.clone(),
            r.auroc.to_string(),
            r.ap.to_string(),
            r.c_index.to_string(),
            r.p_vs_best.map_or(String::new(), |p| p.to_string()),
            r.worse_than_best.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow<T> {
    pub name: String,
    /// Spearman correlation of prob_2yr with tumour volume.
    pub spearman: T,
    pub auroc: T,
    pub c_index: T,
}

/// Per-member rank correlation with volume next to its performance.
/// `volumes` follows `truth.ids`.
pub fn volume_correlation_audit<T: Scalar>(
    subs: &[Submission<T>],
    volumes: &[T],
    truth: &Truth<T>,
) -> Result<Vec<AuditRow<T>>> {
    check_len(truth.len(), volumes.len())?;
    subs.iter()
        .map(|s| {
            let p = s.preds.aligned_to(&truth.ids)?;
            Ok(AuditRow {
                name: s.name.clone(),
                spearman: spearman(&p.prob_2yr, volumes)?,
                auroc: auroc(&p.prob_2yr, &truth.label)?,
                c_index: concordance_index(p.risk_or_prob(), &truth.time, &truth.event)?,
            })
        })
        .collect()
}

pub fn write_audit_csv_to<T: Scalar, W: Write>(rows: &[AuditRow<T>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["name", "spearman", "auroc", "c_index"])?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            r.spearman.to_string(),
            r.auroc.to_string(),
            r.c_index.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_audit_csv<T: Scalar>(rows: &[AuditRow<T>], path: impl AsRef<Path>) -> Result<()> {
    write_audit_csv_to(rows, std::fs::File::create(path)?)
}

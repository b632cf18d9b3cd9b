//! Kaplan-Meier curves, risk-group stratification, Cox proportional-hazards
//! fitting and hazard ratios.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, SurvError};
use crate::linalg::{cholesky, cholesky_inverse, solve_spd_with_jitter};
use crate::predictions::CURVE_POINTS;
use crate::scalar::Scalar;

/// Product-limit estimate; only times with at least one event are listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaplanMeierCurve<T> {
    pub event_times: Vec<T>,
    pub survival: Vec<T>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
}

impl<T: Scalar> KaplanMeierCurve<T> {
    /// `S(t)`, right-continuous, 1 before the first event.
    pub fn survival_at(&self, t: T) -> T {
        let k = self.event_times.partition_point(|&e| e <= t);
        if k == 0 {
            T::one()
        } else {
            self.survival[k - 1]
        }
    }

    /// `time,survival,at_risk,events` rows for plotting.
    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "survival", "at_risk", "events"])?;
        for k in 0..self.event_times.len() {
            w.write_record([
                self.event_times[k].to_string(),
                self.survival[k].to_string(),
                self.at_risk[k].to_string(),
                self.events[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn kaplan_meier<T: Scalar>(time: &[T], event: &[bool]) -> Result<KaplanMeierCurve<T>> {
    check_len(time.len(), event.len())?;
    if time.is_empty() {
        return Err(SurvError::EmptyInput);
    }
    if time.iter().any(|t| !t.is_finite()) {
        return Err(SurvError::NonFinite("time"));
    }
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[a].partial_cmp(&time[b]).expect("finite times"));
    let mut curve = KaplanMeierCurve {
        event_times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
    };
    let mut s = T::one();
    let mut remaining = time.len();
    for group in order.chunk_by(|&a, &b| time[a] == time[b]) {
        let d = group.iter().filter(|&&i| event[i]).count();
        if d > 0 {
            s = s * (T::one() - T::count(d) / T::count(remaining));
            curve.event_times.push(time[group[0]]);
            curve.survival.push(s);
            curve.at_risk.push(remaining);
            curve.events.push(d);
        }
        remaining -= group.len();
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskGroup {
    Low,
    High,
}

/// High risk iff the 2-year event probability is at least `threshold`.
pub fn stratify<T: Scalar>(prob_2yr: &[T], threshold: T) -> Vec<RiskGroup> {
    prob_2yr
        .iter()
        .map(|&p| if p >= threshold { RiskGroup::High } else { RiskGroup::Low })
        .collect()
}

/// Breslow cumulative baseline hazard at the distinct event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard<T> {
    pub times: Vec<T>,
    pub cumulative: Vec<T>,
}

impl<T: Scalar> BaselineHazard<T> {
    pub fn at(&self, t: T) -> T {
        let k = self.times.partition_point(|&e| e <= t);
        if k == 0 {
            T::zero()
        } else {
            self.cumulative[k - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel<T> {
    pub coefficients: Array1<T>,
    /// From the inverse of the penalized observed information.
    pub std_errors: Array1<T>,
    pub columns: Vec<String>,
    pub l2: T,
    pub iterations: usize,
    pub gradient_norm: T,
    pub log_likelihood: T,
    pub baseline: BaselineHazard<T>,
}

impl<T: Scalar> CoxModel<T> {
    pub fn linear_predictor(&self, x: ArrayView2<T>) -> Result<Array1<T>> {
        if x.ncols() != self.coefficients.len() {
            return Err(SurvError::ShapeMismatch(format!(
                "{} columns for {} coefficients",
                x.ncols(),
                self.coefficients.len()
            )));
        }
        Ok(x.dot(&self.coefficients))
    }

    pub fn survival_at(&self, eta: T, t: T) -> T {
        (-self.baseline.at(t) * eta.exp()).exp()
    }

    /// Survival at months 0..=23 for a patient with linear predictor `eta`.
    pub fn curve(&self, eta: T) -> Vec<T> {
        (0..CURVE_POINTS)
            .map(|m| self.survival_at(eta, T::count(m)))
            .collect()
    }

    pub fn two_year_probability(&self, eta: T) -> T {
        T::one() - self.survival_at(eta, T::lit(crate::data::TWO_YEARS))
    }
}

/// Penalized log partial likelihood with its gradient and Hessian.
struct PartialLikelihood<T> {
    value: T,
    gradient: Array1<T>,
    hessian: Array2<T>,
}

/// Rows sorted by descending time, grouped by tied time.
struct RiskSets {
    order: Vec<usize>,
    groups: Vec<(usize, usize)>,
}

impl RiskSets {
    fn new<T: Scalar>(time: &[T]) -> Self {
        let mut order: Vec<usize> = (0..time.len()).collect();
        order.sort_by(|&a, &b| time[b].partial_cmp(&time[a]).expect("finite times"));
        let mut groups = Vec::new();
        let mut start = 0;
        for g in order.chunk_by(|&a, &b| time[a] == time[b]) {
            groups.push((start, start + g.len()));
            start += g.len();
        }
        Self { order, groups }
    }
}

fn partial_likelihood<T: Scalar>(
    x: ArrayView2<T>,
    event: &[bool],
    sets: &RiskSets,
    beta: &Array1<T>,
    l2: T,
    with_hessian: bool,
) -> PartialLikelihood<T> {
    let d = x.ncols();
    let eta = x.dot(beta);
    let shift = eta.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s0 = T::zero();
    let mut s1 = Array1::<T>::zeros(d);
    let mut s2 = Array2::<T>::zeros((d, d));
    let mut value = T::zero();
    let mut gradient = Array1::<T>::zeros(d);
    let mut hessian = Array2::<T>::zeros((d, d));
    for &(start, end) in &sets.groups {
        let rows = &sets.order[start..end];
        for &i in rows {
            let w = (eta[i] - shift).exp();
            let xi = x.row(i);
            s0 = s0 + w;
            s1.scaled_add(w, &xi);
            if with_hessian {
                for a in 0..d {
                    let wa = w * xi[a];
                    for b in 0..=a {
                        s2[[a, b]] = s2[[a, b]] + wa * xi[b];
                    }
                }
            }
        }
        let events = rows.iter().filter(|&&i| event[i]).count();
        if events == 0 {
            continue;
        }
        let dk = T::count(events);
        for &i in rows.iter().filter(|&&i| event[i]) {
            value = value + eta[i];
            gradient = gradient + x.row(i);
        }
        value = value - dk * (s0.ln() + shift);
        let mean = &s1 / s0;
        gradient.scaled_add(-dk, &mean);
        if with_hessian {
            for a in 0..d {
                for b in 0..=a {
                    let h = dk * (s2[[a, b]] / s0 - mean[a] * mean[b]);
                    hessian[[a, b]] = hessian[[a, b]] - h;
                }
            }
        }
    }
    if with_hessian {
        for a in 0..d {
            for b in 0..a {
                hessian[[b, a]] = hessian[[a, b]];
            }
            hessian[[a, a]] = hessian[[a, a]] - l2;
        }
    }
    value = value - l2 / T::lit(2.0) * beta.dot(beta);
    gradient.scaled_add(-l2, beta);
    PartialLikelihood {
        value,
        gradient,
        hessian,
    }
}

fn max_abs<T: Scalar>(v: &Array1<T>) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// L2-penalized Cox regression with Breslow ties, fitted by Newton
/// iterations with step halving.
#[derive(Debug, Clone, Copy)]
pub struct CoxRegression<T> {
    pub l2: T,
    pub max_iter: usize,
    /// Convergence threshold on the largest absolute gradient component.
    pub tol: T,
}

impl<T: Scalar> CoxRegression<T> {
    pub fn new(l2: T) -> Self {
        Self {
            l2,
            max_iter: 100,
            tol: T::lit(1e-7),
        }
    }

    pub fn fit(&self, x: ArrayView2<T>, time: &[T], event: &[bool]) -> Result<CoxModel<T>> {
        let (n, d) = x.dim();
        check_len(n, time.len())?;
        check_len(n, event.len())?;
        if n == 0 {
            return Err(SurvError::EmptyInput);
        }
        if !(self.l2 >= T::zero()) {
            return Err(SurvError::InvalidConfig("l2 must be non-negative".into()));
        }
        if x.iter().chain(time).any(|v| !v.is_finite()) {
            return Err(SurvError::NonFinite("cox inputs"));
        }
        if !event.iter().any(|&e| e) {
            return Err(SurvError::NoEvents);
        }
        if self.l2 == T::zero() {
            for (j, col) in x.axis_iter(Axis(1)).enumerate() {
                if col.iter().all(|&v| v == col[0]) {
                    return Err(SurvError::Singular(format!(
                        "column {j} is constant and unpenalized"
                    )));
                }
            }
        }
        // f32 cannot resolve a 1e-7 gradient on large samples
        let tol = self.tol.max(T::epsilon() * T::lit(100.0) * T::count(n));
        let sets = RiskSets::new(time);
        let mut beta = Array1::<T>::zeros(d);
        let mut current = partial_likelihood(x, event, &sets, &beta, self.l2, true);
        let mut iterations = 0;
        while max_abs(&current.gradient) >= tol {
            if iterations == self.max_iter {
                return Err(SurvError::Diverged {
                    iterations,
                    reason: format!(
                        "gradient {} above tolerance",
                        max_abs(&current.gradient)
                    ),
                });
            }
            iterations += 1;
            let info = current.hessian.mapv(|h| -h);
            let (step, _) = solve_spd_with_jitter(&info, &current.gradient).ok_or_else(|| {
                SurvError::Diverged {
                    iterations,
                    reason: "information matrix could not be factorized".into(),
                }
            })?;
            // rounding in an n-term sum grows with n
            let slack = T::epsilon() * T::count(n.max(64)) * (current.value.abs() + T::one());
            let mut scale = T::one();
            let mut accepted = None;
            for k in 0..40 {
                let candidate = &beta + &(&step * scale);
                let trial = partial_likelihood(x, event, &sets, &candidate, self.l2, false);
                if trial.value.is_finite()
                    && (trial.value > current.value || k == 0 && trial.value >= current.value - slack)
                {
                    accepted = Some(candidate);
                    break;
                }
                scale = scale / T::lit(2.0);
            }
            let Some(next) = accepted else {
                // no ascent direction left at working precision
                break;
            };
            if next.iter().any(|b| !b.is_finite()) {
                return Err(SurvError::Diverged {
                    iterations,
                    reason: "non-finite coefficients".into(),
                });
            }
            beta = next;
            current = partial_likelihood(x, event, &sets, &beta, self.l2, true);
        }
        let gradient_norm = max_abs(&current.gradient);
        if gradient_norm >= tol {
            return Err(SurvError::Diverged {
                iterations,
                reason: format!("stalled with gradient {gradient_norm}"),
            });
        }
        let info = current.hessian.mapv(|h| -h);
        let std_errors = match cholesky(&info) {
            Some(l) => cholesky_inverse(&l).diag().mapv(|v| v.sqrt()),
            None if self.l2 == T::zero() => {
                return Err(SurvError::Singular(
                    "information matrix is singular at the optimum".into(),
                ))
            }
            None => Array1::from_elem(d, T::infinity()),
        };
        let baseline = breslow_baseline(x.dot(&beta).view(), time, event, &sets);
        Ok(CoxModel {
            coefficients: beta,
            std_errors,
            columns: Vec::new(),
            l2: self.l2,
            iterations,
            gradient_norm,
            log_likelihood: current.value,
            baseline,
        })
    }
}

fn breslow_baseline<T: Scalar>(
    eta: ArrayView1<T>,
    time: &[T],
    event: &[bool],
    sets: &RiskSets,
) -> BaselineHazard<T> {
    let mut s0 = T::zero();
    let mut increments = Vec::new();
    for &(start, end) in &sets.groups {
        let rows = &sets.order[start..end];
        for &i in rows {
            s0 = s0 + eta[i].exp();
        }
        let d = rows.iter().filter(|&&i| event[i]).count();
        if d > 0 {
            increments.push((time[rows[0]], T::count(d) / s0));
        }
    }
    increments.reverse();
    let mut cumulative = Vec::with_capacity(increments.len());
    let mut h = T::zero();
    for &(_, inc) in &increments {
        h = h + inc;
        cumulative.push(h);
    }
    BaselineHazard {
        times: increments.iter().map(|&(t, _)| t).collect(),
        cumulative,
    }
}

/// Convenience wrapper around [`CoxRegression`].
pub fn cox_fit<T: Scalar>(x: ArrayView2<T>, time: &[T], event: &[bool], l2: T) -> Result<CoxModel<T>> {
    CoxRegression::new(l2).fit(x, time, event)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardRatio {
    /// Hazard of the high group relative to the low group.
    pub hr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Two-sided Wald p-value.
    pub p: f64,
    pub beta: f64,
    pub se: f64,
}

/// Univariate Cox fit on the high-group indicator with a Wald test.
pub fn hazard_ratio<T: Scalar>(groups: &[RiskGroup], time: &[T], event: &[bool]) -> Result<HazardRatio> {
    check_len(groups.len(), time.len())?;
    let n_high = groups.iter().filter(|&&g| g == RiskGroup::High).count();
    if n_high == 0 || n_high == groups.len() {
        return Err(SurvError::DegenerateGroup(
            "both risk groups must be non-empty".into(),
        ));
    }
    let x = Array2::from_shape_fn((groups.len(), 1), |(i, _)| {
        if groups[i] == RiskGroup::High {
            T::one()
        } else {
            T::zero()
        }
    });
    let model = cox_fit(x.view(), time, event, T::zero())?;
    let beta = model.coefficients[0].as_f64();
    let se = model.std_errors[0].as_f64();
    let z = beta / se;
    let p = statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2);
    Ok(HazardRatio {
        hr: beta.exp(),
        ci_low: (beta - 1.959_963_984_540_054 * se).exp(),
        ci_high: (beta + 1.959_963_984_540_054 * se).exp(),
        p,
        beta,
        se,
    })
}

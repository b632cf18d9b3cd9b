//! Challenger models: penalized logistic regression, MRMR feature selection,
//! stratified grid-search cross-validation, the volume-gated fuzzy mixture and
//! the three benchmark baselines.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{EncodedMatrix, FeatureGroup};
use crate::error::{check_len, Result, SurvError};
use crate::linalg::solve_spd_with_jitter;
use crate::metrics::auroc;
use crate::predictions::{PredictionSet, Truth};
use crate::scalar::{quantile_sorted, Scalar};
use crate::survival_np::{CoxModel, CoxRegression};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel<T> {
    pub weights: Array1<T>,
    pub bias: T,
    pub l2: T,
    /// Inverse-class-frequency sample weights were used.
    pub class_weighted: bool,
    pub iterations: usize,
    pub gradient_norm: T,
    pub converged: bool,
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl<T: Scalar> LogisticModel<T> {
    pub fn decision(&self, x: ArrayView2<T>) -> Result<Array1<T>> {
        if x.ncols() != self.weights.len() {
            return Err(SurvError::ShapeMismatch(format!(
                "{} columns for {} weights",
                x.ncols(),
                self.weights.len()
            )));
        }
        Ok(x.dot(&self.weights) + self.bias)
    }

    pub fn predict_proba(&self, x: ArrayView2<T>) -> Result<Array1<T>> {
        Ok(self.decision(x)?.mapv(sigmoid))
    }
}

/// L2-penalized (optionally class-weighted) logistic regression fitted by
/// Newton iterations with step halving. The intercept is not penalized.
#[derive(Debug, Clone, Copy)]
pub struct LogisticRegression<T> {
    pub l2: T,
    pub class_weighted: bool,
    pub max_iter: usize,
    pub tol: T,
}

struct LogisticState<T> {
    value: T,
    gradient: Array1<T>,
    hessian: Array2<T>,
}

impl<T: Scalar> LogisticRegression<T> {
    pub fn new(l2: T) -> Self {
        Self {
            l2,
            class_weighted: false,
            max_iter: 200,
            tol: T::lit(1e-7),
        }
    }

    pub fn class_weighted(mut self, on: bool) -> Self {
        self.class_weighted = on;
        self
    }

    fn sample_weights(&self, labels: &[bool]) -> Vec<T> {
        let n = labels.len();
        let n_pos = labels.iter().filter(|&&y| y).count();
        if !self.class_weighted {
            return vec![T::one(); n];
        }
        let w_pos = T::count(n) / T::count(2 * n_pos);
        let w_neg = T::count(n) / T::count(2 * (n - n_pos));
        labels.iter().map(|&y| if y { w_pos } else { w_neg }).collect()
    }

    /// Objective over the augmented parameter `[w, b]`.
    fn state(
        &self,
        x: ArrayView2<T>,
        labels: &[bool],
        sw: &[T],
        params: &Array1<T>,
        with_hessian: bool,
    ) -> LogisticState<T> {
        let d = x.ncols();
        let w = params.slice(ndarray::s![..d]);
        let b = params[d];
        let z = x.dot(&w) + b;
        let mut value = T::zero();
        let mut gradient = Array1::<T>::zeros(d + 1);
        let mut hessian = Array2::<T>::zeros((d + 1, d + 1));
        for i in 0..x.nrows() {
            let zi = z[i];
            let y = if labels[i] { T::one() } else { T::zero() };
            value = value + sw[i] * (softplus(zi) - y * zi);
            let p = sigmoid(zi);
            let r = sw[i] * (p - y);
            let xi = x.row(i);
            for a in 0..d {
                gradient[a] = gradient[a] + r * xi[a];
            }
            gradient[d] = gradient[d] + r;
            if with_hessian {
                let h = sw[i] * p * (T::one() - p);
                for a in 0..d {
                    let ha = h * xi[a];
                    for c in 0..=a {
                        hessian[[a, c]] = hessian[[a, c]] + ha * xi[c];
                    }
                    hessian[[d, a]] = hessian[[d, a]] + ha;
                }
                hessian[[d, d]] = hessian[[d, d]] + h;
            }
        }
        for a in 0..d {
            value = value + self.l2 / T::lit(2.0) * w[a] * w[a];
            gradient[a] = gradient[a] + self.l2 * w[a];
        }
        if with_hessian {
            for a in 0..=d {
                for c in 0..a {
                    hessian[[c, a]] = hessian[[a, c]];
                }
                if a < d {
                    hessian[[a, a]] = hessian[[a, a]] + self.l2;
                }
            }
        }
        LogisticState {
            value,
            gradient,
            hessian,
        }
    }

    pub fn fit(&self, x: ArrayView2<T>, labels: &[bool]) -> Result<LogisticModel<T>> {
        let d = x.ncols();
        self.fit_from(x, labels, Array1::zeros(d), T::zero())
    }

    /// Fits starting from the given parameters.
    pub fn fit_from(
        &self,
        x: ArrayView2<T>,
        labels: &[bool],
        init_weights: Array1<T>,
        init_bias: T,
    ) -> Result<LogisticModel<T>> {
        let (n, d) = x.dim();
        check_len(n, labels.len())?;
        check_len(d, init_weights.len())?;
        let n_pos = labels.iter().filter(|&&y| y).count();
        if n_pos == 0 || n_pos == n {
            return Err(SurvError::OneClassOnly);
        }
        if !(self.l2 >= T::zero()) {
            return Err(SurvError::InvalidConfig("l2 must be non-negative".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SurvError::NonFinite("logistic features"));
        }
        let sw = self.sample_weights(labels);
        let tol = self.tol.max(T::epsilon() * T::lit(100.0) * T::count(n));
        let mut params = Array1::<T>::zeros(d + 1);
        params.slice_mut(ndarray::s![..d]).assign(&init_weights);
        params[d] = init_bias;
        let mut current = self.state(x, labels, &sw, &params, true);
        let mut iterations = 0;
        let max_abs = |g: &Array1<T>| g.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        while max_abs(&current.gradient) >= tol && iterations < self.max_iter {
            iterations += 1;
            let (step, _) = solve_spd_with_jitter(&current.hessian, &current.gradient)
                .ok_or_else(|| SurvError::Diverged {
                    iterations,
                    reason: "Hessian could not be factorized".into(),
                })?;
            // near the optimum the decrease is below the objective's rounding,
            // which grows with the number of summed terms
            let slack = T::epsilon() * T::count(n.max(64)) * (current.value.abs() + T::one());
            let mut scale = T::one();
            let mut accepted = None;
            for k in 0..40 {
                let candidate = &params - &(&step * scale);
                let trial = self.state(x, labels, &sw, &candidate, false);
                if trial.value.is_finite()
                    && (trial.value < current.value || k == 0 && trial.value <= current.value + slack)
                {
                    accepted = Some(candidate);
                    break;
                }
                scale = scale / T::lit(2.0);
            }
            let Some(next) = accepted else { break };
            params = next;
            current = self.state(x, labels, &sw, &params, true);
        }
        let gradient_norm = max_abs(&current.gradient);
        if gradient_norm >= tol || params.iter().any(|p| !p.is_finite()) {
            return Err(SurvError::Diverged {
                iterations,
                reason: format!("gradient {gradient_norm} above tolerance"),
            });
        }
        Ok(LogisticModel {
            weights: params.slice(ndarray::s![..d]).to_owned(),
            bias: params[d],
            l2: self.l2,
            class_weighted: self.class_weighted,
            iterations,
            gradient_norm,
            converged: true,
        })
    }
}

pub fn logistic_fit<T: Scalar>(
    x: ArrayView2<T>,
    labels: &[bool],
    l2: T,
    class_weighted: bool,
) -> Result<LogisticModel<T>> {
    LogisticRegression::new(l2)
        .class_weighted(class_weighted)
        .fit(x, labels)
}

/// Quartile bin (0..=3) of each value; tied cut points merge bins.
pub fn discretize_quartiles<T: Scalar>(column: ArrayView1<T>) -> Vec<usize> {
    let mut sorted: Vec<T> = column.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite column"));
    let mut cuts: Vec<T> = [0.25, 0.5, 0.75]
        .iter()
        .map(|&p| quantile_sorted(&sorted, T::lit(p)))
        .collect();
    cuts.dedup();
    column
        .iter()
        .map(|&v| cuts.iter().filter(|&&c| v > c).count())
        .collect()
}

/// Plug-in mutual information (nats) between two discrete codes.
pub fn mutual_information(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![0usize; ka * kb];
    let mut pa = vec![0usize; ka];
    let mut pb = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * kb + y] += 1;
        pa[x] += 1;
        pb[y] += 1;
    }
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let c = joint[x * kb + y];
            if c > 0 {
                let pxy = c as f64 / n;
                mi += pxy * (pxy / (pa[x] as f64 / n * pb[y] as f64 / n)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Greedy minimum-redundancy maximum-relevance selection (difference form):
/// each step picks the column maximizing `I(f; y) − mean_{s ∈ S} I(f; s)`.
/// Ties go to the lower column index.
pub fn mrmr_select<T: Scalar>(x: ArrayView2<T>, labels: &[bool], k: usize) -> Result<Vec<usize>> {
    let d = x.ncols();
    check_len(x.nrows(), labels.len())?;
    if k == 0 || k > d {
        return Err(SurvError::BadK { k, d });
    }
    let codes: Vec<Vec<usize>> = x.axis_iter(Axis(1)).map(discretize_quartiles).collect();
    let y: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    let relevance: Vec<f64> = codes.iter().map(|c| mutual_information(c, &y)).collect();
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut redundancy = vec![0.0; d];
    while selected.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..d).filter(|j| !selected.contains(j)) {
            let score = if selected.is_empty() {
                relevance[j]
            } else {
                relevance[j] - redundancy[j] / selected.len() as f64
            };
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let (j, _) = best.expect("k <= d leaves a candidate");
        selected.push(j);
        for (c, r) in redundancy.iter_mut().enumerate() {
            *r += mutual_information(&codes[c], &codes[j]);
        }
    }
    Ok(selected)
}

/// One grid-search candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub l2: f64,
    /// Columns kept by MRMR; all columns when `None`.
    pub n_features: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: GridPoint,
    /// Mean validation AUROC per grid point, in grid order.
    pub scores: Vec<f64>,
}

/// Fold index per row; each label class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    for class in [true, false] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut rng);
        for (k, &i) in rows.iter().enumerate() {
            assignment[i] = k % folds;
        }
    }
    assignment
}

/// MRMR (when requested) followed by penalized logistic regression; returns
/// the fitted column subset and model.
pub fn fit_logistic_point<T: Scalar>(
    point: &GridPoint,
    x: ArrayView2<T>,
    labels: &[bool],
    class_weighted: bool,
) -> Result<(Vec<usize>, LogisticModel<T>)> {
    let columns = match point.n_features {
        Some(k) => mrmr_select(x, labels, k)?,
        None => (0..x.ncols()).collect(),
    };
    let sub = x.select(Axis(1), &columns);
    let model = logistic_fit(sub.view(), labels, T::lit(point.l2), class_weighted)?;
    Ok((columns, model))
}

/// Stratified k-fold search maximizing mean validation AUROC. `fit_predict`
/// trains on the first matrix and scores the second. Ties prefer the
/// stronger penalty, then fewer features, then grid order.
pub fn grid_search_cv<T, F>(
    grid: &[GridPoint],
    x: ArrayView2<T>,
    labels: &[bool],
    folds: usize,
    seed: u64,
    fit_predict: F,
) -> Result<GridSearchResult>
where
    T: Scalar,
    F: Fn(&GridPoint, ArrayView2<T>, &[bool], ArrayView2<T>) -> Result<Vec<T>>,
{
    if grid.is_empty() {
        return Err(SurvError::EmptyGrid);
    }
    check_len(x.nrows(), labels.len())?;
    if grid.len() == 1 {
        return Ok(GridSearchResult {
            best: grid[0],
            scores: vec![f64::NAN],
        });
    }
    if folds < 2 {
        return Err(SurvError::InvalidConfig("cross-validation needs at least 2 folds".into()));
    }
    let assignment = stratified_folds(labels, folds, seed);
    let mut scores = Vec::with_capacity(grid.len());
    for point in grid {
        let mut total = 0.0;
        for f in 0..folds {
            let train: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] != f).collect();
            let val: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] == f).collect();
            let train_y: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
            let val_y: Vec<bool> = val.iter().map(|&i| labels[i]).collect();
            let xt = x.select(Axis(0), &train);
            let xv = x.select(Axis(0), &val);
            let s = fit_predict(point, xt.view(), &train_y, xv.view())?;
            total += auroc(&s, &val_y)?.as_f64();
        }
        scores.push(total / folds as f64);
    }
    let mut best = 0;
    for i in 1..grid.len() {
        let (a, b) = (&grid[i], &grid[best]);
        let better = scores[i] > scores[best]
            || (scores[i] == scores[best]
                && (a.l2 > b.l2
                    || (a.l2 == b.l2
                        && a.n_features.unwrap_or(usize::MAX) < b.n_features.unwrap_or(usize::MAX))));
        if better {
            best = i;
        }
    }
    Ok(GridSearchResult {
        best: grid[best],
        scores,
    })
}

/// Expert input columns for the fuzzy and logistic challengers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    /// Clinical and treatment columns.
    Emr,
    #[default]
    EmrRadiomic,
    Radiomic,
    /// Every encoded column, volume included.
    All,
}

impl FeatureSet {
    pub fn columns<T: Scalar>(self, x: &EncodedMatrix<T>) -> Vec<usize> {
        match self {
            Self::Emr => x.column_indices(|c| c.group.is_emr()),
            Self::EmrRadiomic => {
                x.column_indices(|c| c.group.is_emr() || c.group == FeatureGroup::Radiomic)
            }
            Self::Radiomic => x.column_indices(|c| c.group == FeatureGroup::Radiomic),
            Self::All => (0..x.ncols()).collect(),
        }
    }
}

/// Endpoint handled by a fuzzy model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FuzzyTask {
    /// Logistic experts on the 2-year label.
    Binary,
    /// Cox experts on the survival outcome.
    Risk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateInputs {
    #[default]
    VolumeOnly,
    AllFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expert<T> {
    Logistic(LogisticModel<T>),
    Cox(CoxModel<T>),
}

impl<T: Scalar> Expert<T> {
    /// Probability (logistic) or linear risk score (Cox).
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Array1<T>> {
        match self {
            Expert::Logistic(m) => m.predict_proba(x),
            Expert::Cox(m) => m.linear_predictor(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyConfig {
    pub task: FuzzyTask,
    pub gate_inputs: GateInputs,
    /// Encoded columns the experts see.
    pub expert_columns: Vec<usize>,
    /// Encoded column holding (transformed) tumour volume.
    pub volume_column: usize,
    pub gate_l2: f64,
    pub expert_l2: f64,
    pub class_weighted: bool,
}

/// Soft mixture of two volume-subgroup experts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyModel<T> {
    pub task: FuzzyTask,
    /// Predicts membership of the above-median volume group.
    pub gate: LogisticModel<T>,
    pub gate_columns: Vec<usize>,
    pub expert_columns: Vec<usize>,
    pub expert_low: Expert<T>,
    pub expert_high: Expert<T>,
    /// Training-split median volume; ties belong to the low group.
    pub volume_median: T,
}

/// Gate on `1{volume > median}` plus one expert per volume subgroup.
pub fn fuzzy_fit<T: Scalar>(
    x: ArrayView2<T>,
    volume: &[T],
    truth: &Truth<T>,
    config: &FuzzyConfig,
) -> Result<FuzzyModel<T>> {
    let n = x.nrows();
    check_len(n, volume.len())?;
    check_len(n, truth.len())?;
    let d = x.ncols();
    if config.volume_column >= d || config.expert_columns.iter().any(|&c| c >= d) {
        return Err(SurvError::ShapeMismatch("fuzzy column index out of range".into()));
    }
    let mut sorted = volume.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite volumes"));
    let median = quantile_sorted(&sorted, T::lit(0.5));
    let high: Vec<bool> = volume.iter().map(|&v| v > median).collect();
    let n_high = high.iter().filter(|&&h| h).count();
    if n_high == 0 || n_high == n {
        return Err(SurvError::DegenerateGroup(
            "volume median does not split the cohort".into(),
        ));
    }
    let gate_columns = match config.gate_inputs {
        GateInputs::VolumeOnly => vec![config.volume_column],
        GateInputs::AllFeatures => {
            let mut c = config.expert_columns.clone();
            if !c.contains(&config.volume_column) {
                c.push(config.volume_column);
            }
            c
        }
    };
    let gate = logistic_fit(
        x.select(Axis(1), &gate_columns).view(),
        &high,
        T::lit(config.gate_l2),
        false,
    )?;
    let fit_expert = |rows: Vec<usize>, name: &str| -> Result<Expert<T>> {
        let sub = x.select(Axis(0), &rows).select(Axis(1), &config.expert_columns);
        let part = truth.subset(&rows);
        match config.task {
            FuzzyTask::Binary => {
                if part.label.iter().all(|&y| y) || part.label.iter().all(|&y| !y) {
                    return Err(SurvError::DegenerateGroup(format!(
                        "{name}-volume group has a single outcome class"
                    )));
                }
                Ok(Expert::Logistic(logistic_fit(
                    sub.view(),
                    &part.label,
                    T::lit(config.expert_l2),
                    config.class_weighted,
                )?))
            }
            FuzzyTask::Risk => {
                if !part.event.iter().any(|&e| e) {
                    return Err(SurvError::DegenerateGroup(format!(
                        "{name}-volume group has no events"
                    )));
                }
                Ok(Expert::Cox(
                    CoxRegression::new(T::lit(config.expert_l2)).fit(sub.view(), &part.time, &part.event)?,
                ))
            }
        }
    };
    let expert_low = fit_expert((0..n).filter(|&i| !high[i]).collect(), "low")?;
    let expert_high = fit_expert((0..n).filter(|&i| high[i]).collect(), "high")?;
    Ok(FuzzyModel {
        task: config.task,
        gate,
        gate_columns,
        expert_columns: config.expert_columns.clone(),
        expert_low,
        expert_high,
        volume_median: median,
    })
}

impl<T: Scalar> FuzzyModel<T> {
    pub fn gate_probability(&self, x: ArrayView2<T>) -> Result<Array1<T>> {
        self.gate.predict_proba(x.select(Axis(1), &self.gate_columns).view())
    }
}

/// `g(x)·expert_high(x) + (1 − g(x))·expert_low(x)`.
pub fn fuzzy_predict<T: Scalar>(model: &FuzzyModel<T>, x: ArrayView2<T>) -> Result<Vec<T>> {
    let g = model.gate_probability(x)?;
    let sub = x.select(Axis(1), &model.expert_columns);
    let hi = model.expert_high.predict(sub.view())?;
    let lo = model.expert_low.predict(sub.view())?;
    Ok(g.iter()
        .zip(hi.iter().zip(lo.iter()))
        .map(|(&g, (&h, &l))| g * h + (T::one() - g) * l)
        .collect())
}

/// The three benchmark baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    /// Age, sex, stage and HPV columns.
    Clinical,
    /// Tumour volume alone.
    Volume,
    /// MRMR-selected image-derived columns.
    Radiomics,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [Self::Clinical, Self::Volume, Self::Radiomics];

    pub fn name(self) -> &'static str {
        match self {
            Self::Clinical => "baseline-clinical",
            Self::Volume => "baseline-volume",
            Self::Radiomics => "baseline-radiomics",
        }
    }

    fn group(self) -> FeatureGroup {
        match self {
            Self::Clinical => FeatureGroup::Clinical,
            Self::Volume => FeatureGroup::Volume,
            Self::Radiomics => FeatureGroup::Radiomic,
        }
    }
}

/// Logistic head for the 2-year label and Cox head for risk on a fixed
/// column subset of the encoded matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel<T> {
    pub kind: BaselineKind,
    /// Indices into the full encoded matrix.
    pub columns: Vec<usize>,
    pub choice: GridPoint,
    pub logistic: LogisticModel<T>,
    pub cox: CoxModel<T>,
}

impl<T: Scalar> BaselineModel<T> {
    pub fn predict(&self, x: &EncodedMatrix<T>) -> Result<PredictionSet<T>> {
        let sub = x.values.select(Axis(1), &self.columns);
        let prob = self.logistic.predict_proba(sub.view())?.to_vec();
        let eta = self.cox.linear_predictor(sub.view())?;
        let curves = eta.iter().map(|&e| self.cox.curve(e)).collect();
        PredictionSet::new(x.ids.clone(), prob, Some(eta.to_vec()), Some(curves))
    }
}

/// Default penalty grid shared by the baselines.
pub const BASELINE_L2_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// Fits the clinical, volume and radiomics-style baselines. Penalties (and
/// the MRMR feature count for the radiomics baseline) come from 5-fold
/// stratified grid search on the 2-year label.
pub fn baseline_suite<T: Scalar>(
    x: &EncodedMatrix<T>,
    truth: &Truth<T>,
    seed: u64,
) -> Result<Vec<BaselineModel<T>>> {
    check_len(x.nrows(), truth.len())?;
    BaselineKind::ALL
        .iter()
        .map(|&kind| {
            let columns = x.column_indices(|c| c.group == kind.group());
            if columns.is_empty() {
                return Err(SurvError::SchemaMismatch(format!(
                    "{} needs {:?} columns",
                    kind.name(),
                    kind.group()
                )));
            }
            let sub = x.values.select(Axis(1), &columns);
            let mut grid = Vec::new();
            let counts: Vec<Option<usize>> = match kind {
                BaselineKind::Radiomics => {
                    let mut k = 1;
                    let mut c = Vec::new();
                    while k < columns.len() {
                        c.push(Some(k));
                        k *= 2;
                    }
                    c.push(Some(columns.len()));
                    c
                }
                _ => vec![None],
            };
            for &n_features in &counts {
                for &l2 in &BASELINE_L2_GRID {
                    grid.push(GridPoint { l2, n_features });
                }
            }
            let search = grid_search_cv(&grid, sub.view(), &truth.label, 5, seed, |p, xt, yt, xv| {
                let (cols, m) = fit_logistic_point(p, xt, yt, false)?;
                Ok(m.predict_proba(xv.select(Axis(1), &cols).view())?.to_vec())
            })?;
            let (picked, logistic) = fit_logistic_point(&search.best, sub.view(), &truth.label, false)?;
            let columns: Vec<usize> = picked.iter().map(|&c| columns[c]).collect();
            let cox = CoxRegression::new(T::lit(search.best.l2)).fit(
                x.values.select(Axis(1), &columns).view(),
                &truth.time,
                &truth.event,
            )?;
            Ok(BaselineModel {
                kind,
                columns,
                choice: search.best,
                logistic,
                cox,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn separable_data_with_penalty_stays_finite() {
        let x = array![[-2.0_f64], [-1.0], [1.0], [2.0]];
        let y = [false, false, true, true];
        let m = logistic_fit(x.view(), &y, 0.1, false).unwrap();
        assert!(m.weights[0].is_finite() && m.weights[0] > 0.0);
        assert!(m.gradient_norm < 1e-7);
        let p = m.predict_proba(x.view()).unwrap();
        let acc = p.iter().zip(&y).filter(|(&p, &y)| (p >= 0.5) == y).count();
        assert_eq!(acc, 4);
        assert!(matches!(
            logistic_fit(x.view(), &[true; 4], 0.1, false),
            Err(SurvError::OneClassOnly)
        ));
    }

    #[test]
    fn balanced_weighting_is_a_no_op() {
        let x = array![[0.1_f64, 1.0], [0.5, -1.0], [1.5, 0.3], [-0.7, 0.2], [0.9, 0.9], [-1.2, -0.4]];
        let y = [false, true, true, false, true, false];
        let a = logistic_fit(x.view(), &y, 0.5, false).unwrap();
        let b = logistic_fit(x.view(), &y, 0.5, true).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
    }

    #[test]
    fn quartile_codes() {
        let col = array![1.0_f64, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        assert_eq!(discretize_quartiles(col.view()), vec![0, 0, 1, 1, 2, 2, 3, 3]);
        let binary = array![0.0_f64, 0.0, 0.0, 1.0];
        let codes = discretize_quartiles(binary.view());
        assert_eq!(codes[0], codes[1]);
        assert_ne!(codes[0], codes[3]);
    }

    #[test]
    fn mutual_information_limits() {
        let a = [0, 1, 0, 1, 0, 1];
        assert!((mutual_information(&a, &a) - 2f64.ln()).abs() < 1e-12);
        assert!(mutual_information(&a, &[0, 0, 1, 1, 2, 2]).abs() < 1e-12);
    }

    #[test]
    fn label_copy_selected_first() {
        let y = [true, false, true, true, false, false, true, false];
        let x = Array2::from_shape_fn((8, 3), |(i, j)| match j {
            1 => f64::from(u8::from(y[i])),
            _ => ((i * 7 + j * 3) % 5) as f64,
        });
        assert_eq!(mrmr_select(x.view(), &y, 1).unwrap(), vec![1]);
        let all = mrmr_select(x.view(), &y, 3).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all[0], 1);
        assert!(matches!(mrmr_select(x.view(), &y, 4), Err(SurvError::BadK { .. })));
        assert!(matches!(mrmr_select(x.view(), &y, 0), Err(SurvError::BadK { .. })));
    }

    #[test]
    fn folds_are_stratified_and_deterministic() {
        let y: Vec<bool> = (0..53).map(|i| i % 4 == 0).collect();
        let a = stratified_folds(&y, 5, 9);
        assert_eq!(a, stratified_folds(&y, 5, 9));
        for f in 0..5 {
            let pos = (0..53).filter(|&i| a[i] == f && y[i]).count();
            assert!((2..=3).contains(&pos));
        }
    }

    #[test]
    fn single_grid_point_returned() {
        let x = array![[1.0_f64], [2.0]];
        let point = GridPoint { l2: 3.0, n_features: None };
        let r = grid_search_cv(&[point], x.view(), &[true, false], 5, 0, |_, _, _, _| {
            unreachable!("no fitting for a single point")
        })
        .unwrap();
        assert_eq!(r.best, point);
        assert!(matches!(
            grid_search_cv::<f64, _>(&[], x.view(), &[true, false], 5, 0, |_, _, _, _| Ok(vec![])),
            Err(SurvError::EmptyGrid)
        ));
    }

    #[test]
    fn ties_prefer_stronger_penalty() {
        let x = Array2::from_shape_fn((20, 1), |(i, _)| i as f64);
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let grid = [
            GridPoint { l2: 0.1, n_features: None },
            GridPoint { l2: 10.0, n_features: None },
            GridPoint { l2: 1.0, n_features: None },
        ];
        let r = grid_search_cv(&grid, x.view(), &y, 2, 1, |_, _, _, xv| {
            Ok(xv.column(0).to_vec())
        })
        .unwrap();
        assert_eq!(r.best.l2, 10.0);
    }
}

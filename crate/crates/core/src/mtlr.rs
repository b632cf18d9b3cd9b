//! (Deep) multi-task logistic regression.
//!
//! A patient's event bin `j ∈ {0, …, K−1}` is modelled jointly through the
//! `K−1` per-edge logits `a_k = θ_k·φ(x) + b_k`: the bin-`j` outcome sequence
//! `y_k = 1{k ≥ j}` scores `s_j = Σ_{k ≥ j} a_k` and the sequence softmax over
//! all `K` valid sequences gives the event-bin distribution. `φ` is an MLP
//! with ELU activations (the identity when no hidden layers are configured).
//!
//! The training objective is the batch-mean negative log-likelihood
//! (uncensored sequence scores, censored marginals over the bins at or after
//! the censoring bin, the log normalizer) plus `C_1/2 Σ_k ‖θ_k‖²`.

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::TWO_YEARS;
use crate::error::{check_len, Result, SurvError};
use crate::optim::Adam;
use crate::predictions::CURVE_POINTS;
use crate::scalar::{log_sum_exp, quantile_sorted, Scalar};

/// Interior bin edges `t_1 < … < t_{K−1}` in months; bin `K` is open-ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T> {
    pub edges: Vec<T>,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(edges: Vec<T>) -> Result<Self> {
        if edges.is_empty() {
            return Err(SurvError::InvalidConfig("a time grid needs at least one edge".into()));
        }
        let ok = edges.iter().all(|e| e.is_finite() && *e > T::zero())
            && edges.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(SurvError::InvalidConfig(
                "time grid edges must be positive and strictly increasing".into(),
            ));
        }
        Ok(Self { edges })
    }

    /// Number of bins `K`.
    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    /// Smallest 0-based bin `j` with `t ≤ t_{j+1}`, or the last bin.
    pub fn bin_index(&self, t: T) -> usize {
        self.edges.partition_point(|&e| e < t)
    }
}

/// Bin count `⌈√N_uncensored⌉` with edges at equally spaced type-7 quantiles
/// of the uncensored times. Tied quantiles are collapsed.
pub fn make_time_grid<T: Scalar>(time: &[T], event: &[bool]) -> Result<TimeGrid<T>> {
    check_len(time.len(), event.len())?;
    let mut times: Vec<T> = time
        .iter()
        .zip(event)
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t)
        .collect();
    if times.len() < 4 {
        return Err(SurvError::TooFewEvents {
            needed: 4,
            found: times.len(),
        });
    }
    if times.iter().any(|t| !(t.is_finite() && *t > T::zero())) {
        return Err(SurvError::NonFinite("event times"));
    }
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    let k = (times.len() as f64).sqrt().ceil() as usize;
    let mut edges: Vec<T> = (1..k)
        .map(|i| quantile_sorted(&times, T::count(i) / T::count(k)))
        .collect();
    let requested = edges.len();
    edges.dedup();
    if edges.len() < requested {
        warn!(
            "collapsed {} tied quantile edges; using {} bins instead of {k}",
            requested - edges.len(),
            edges.len() + 1
        );
    }
    TimeGrid::new(edges)
}

/// Training target of one patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    /// Death observed in this 0-based bin.
    Event(usize),
    /// Censored; the event lies in this bin or later.
    Censored(usize),
}

impl Target {
    /// Indicator sequence `y_k = 1{k ≥ j}` of an uncensored target.
    pub fn indicators(&self, n_bins: usize) -> Option<Vec<u8>> {
        match *self {
            Target::Event(j) => Some((0..n_bins - 1).map(|k| u8::from(k >= j)).collect()),
            Target::Censored(_) => None,
        }
    }
}

pub fn encode_targets<T: Scalar>(time: &[T], event: &[bool], grid: &TimeGrid<T>) -> Result<Vec<Target>> {
    check_len(time.len(), event.len())?;
    Ok(time
        .iter()
        .zip(event)
        .map(|(&t, &e)| {
            let bin = grid.bin_index(t);
            if e {
                Target::Event(bin)
            } else {
                Target::Censored(bin)
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer<T> {
    /// `out × in`.
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> DenseLayer<T> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }
}

fn elu<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z
    } else {
        z.exp_m1()
    }
}

fn elu_grad<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        T::one()
    } else {
        z.exp()
    }
}

/// Trainable parameters plus the time grid they refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlrModel<T> {
    /// Hidden layers of the feature transform; empty for linear MTLR.
    pub hidden: Vec<DenseLayer<T>>,
    /// `(K−1) × width` output weights `θ_k`.
    pub theta: Array2<T>,
    /// Per-edge biases `b_k`.
    pub bias: Array1<T>,
    pub grid: TimeGrid<T>,
    pub c1: T,
    /// Dropout on hidden activations during training.
    pub dropout: T,
    /// Full-data loss before training and after every epoch.
    #[serde(default)]
    pub loss_history: Vec<T>,
}

/// Gradient with the same layout as [`MtlrModel`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MtlrGradient<T> {
    pub hidden: Vec<DenseLayer<T>>,
    pub theta: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> MtlrGradient<T> {
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in &self.hidden {
            out.extend(l.weights.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out.extend(self.theta.iter().copied());
        out.extend(self.bias.iter().copied());
        out
    }
}

/// Minibatch view: encoded features and aligned targets.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a, T> {
    pub x: ArrayView2<'a, T>,
    pub targets: &'a [Target],
}

struct Forward<T> {
    /// Layer inputs, starting with `x`; the last entry is `φ(x)`.
    activations: Vec<Array2<T>>,
    pre_activations: Vec<Array2<T>>,
    masks: Vec<Option<Array2<T>>>,
    logits: Array2<T>,
}

impl<T: Scalar> MtlrModel<T> {
    /// All-zero parameters: every patient gets the uniform bin distribution.
    pub fn zeros(inputs: usize, hidden_sizes: &[usize], grid: TimeGrid<T>, c1: T) -> Self {
        let mut hidden = Vec::new();
        let mut width = inputs;
        for &h in hidden_sizes {
            hidden.push(DenseLayer::zeros(width, h));
            width = h;
        }
        let edges = grid.edges.len();
        Self {
            hidden,
            theta: Array2::zeros((edges, width)),
            bias: Array1::zeros(edges),
            grid,
            c1,
            dropout: T::zero(),
            loss_history: Vec::new(),
        }
    }

    /// Hidden layers drawn from `U(±1/√fan_in)`, output weights
    /// Xavier-normal, output biases zero.
    pub fn random<R: Rng>(
        inputs: usize,
        hidden_sizes: &[usize],
        grid: TimeGrid<T>,
        c1: T,
        rng: &mut R,
    ) -> Self {
        let mut model = Self::zeros(inputs, hidden_sizes, grid, c1);
        for layer in &mut model.hidden {
            let bound = 1.0 / (layer.weights.ncols() as f64).sqrt();
            let u = Uniform::new_inclusive(-bound, bound).expect("positive bound");
            layer.weights.mapv_inplace(|_| T::lit(u.sample(rng)));
            layer.bias.mapv_inplace(|_| T::lit(u.sample(rng)));
        }
        let (out, fan_in) = model.theta.dim();
        let sd = (2.0 / (fan_in + out) as f64).sqrt();
        let normal = Normal::new(0.0, sd).expect("positive sd");
        model.theta.mapv_inplace(|_| T::lit(normal.sample(rng)));
        model
    }

    pub fn n_bins(&self) -> usize {
        self.grid.n_bins()
    }

    pub fn n_inputs(&self) -> usize {
        match self.hidden.first() {
            Some(l) => l.weights.ncols(),
            None => self.theta.ncols(),
        }
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.hidden.iter().map(|l| l.bias.len()).collect()
    }

    pub fn n_params(&self) -> usize {
        self.hidden
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum::<usize>()
            + self.theta.len()
            + self.bias.len()
    }

    /// Parameters in a fixed order: each hidden layer's weights then bias,
    /// then `θ`, then `b`.
    pub fn flat_params(&self) -> Vec<T> {
        MtlrGradient {
            hidden: self.hidden.clone(),
            theta: self.theta.clone(),
            bias: self.bias.clone(),
        }
        .flat()
    }

    pub fn set_flat_params(&mut self, params: &[T]) {
        assert_eq!(params.len(), self.n_params(), "parameter count");
        let mut it = params.iter().copied();
        for l in &mut self.hidden {
            l.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|w| *w = it.next().unwrap());
        }
        self.theta.iter_mut().for_each(|w| *w = it.next().unwrap());
        self.bias.iter_mut().for_each(|w| *w = it.next().unwrap());
    }

    fn check_inputs(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.n_inputs() {
            return Err(SurvError::ShapeMismatch(format!(
                "model expects {} features, got {}",
                self.n_inputs(),
                x.ncols()
            )));
        }
        Ok(())
    }

    fn forward<R: Rng>(&self, x: ArrayView2<T>, mut dropout_rng: Option<&mut R>) -> Forward<T> {
        let mut activations = vec![x.to_owned()];
        let mut pre_activations = Vec::new();
        let mut masks = Vec::new();
        let keep = T::one() - self.dropout;
        for layer in &self.hidden {
            let z = activations.last().unwrap().dot(&layer.weights.t()) + &layer.bias;
            let mut a = z.mapv(elu);
            let mask = match dropout_rng.as_deref_mut() {
                Some(rng) if self.dropout > T::zero() => {
                    let keep_p = keep.as_f64();
                    let m = Array2::from_shape_fn(a.dim(), |_| {
                        if rng.random::<f64>() < keep_p {
                            T::one() / keep
                        } else {
                            T::zero()
                        }
                    });
                    a = a * &m;
                    Some(m)
                }
                _ => None,
            };
            pre_activations.push(z);
            masks.push(mask);
            activations.push(a);
        }
        let logits = activations.last().unwrap().dot(&self.theta.t()) + &self.bias;
        Forward {
            activations,
            pre_activations,
            masks,
            logits,
        }
    }

    /// Per-edge logits `a_k` for each row.
    pub fn logits(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_inputs(&x)?;
        Ok(self.forward::<ChaCha8Rng>(x, None).logits)
    }

    fn regularizer(&self) -> T {
        self.c1 / T::lit(2.0) * self.theta.iter().map(|&w| w * w).sum::<T>()
    }

    fn loss_and_gradient<R: Rng>(
        &self,
        batch: Batch<T>,
        dropout_rng: Option<&mut R>,
        want_gradient: bool,
    ) -> Result<(T, Option<MtlrGradient<T>>)> {
        let n = batch.x.nrows();
        if n == 0 {
            return Err(SurvError::ShapeMismatch("empty batch".into()));
        }
        check_len(n, batch.targets.len())?;
        self.check_inputs(&batch.x)?;
        let k = self.n_bins();
        if let Some(t) = batch.targets.iter().find(|t| match t {
            Target::Event(j) | Target::Censored(j) => *j >= k,
        }) {
            return Err(SurvError::ShapeMismatch(format!("target {t:?} outside {k} bins")));
        }
        let fwd = self.forward(batch.x, dropout_rng);
        let inv_n = T::one() / T::count(n);
        let mut nll = T::zero();
        let mut d_logits = Array2::<T>::zeros((n, k - 1));
        let mut scores = vec![T::zero(); k];
        for (i, target) in batch.targets.iter().enumerate() {
            let a = fwd.logits.row(i);
            sequence_scores(a, &mut scores);
            let log_z = log_sum_exp(&scores);
            let (log_num, first) = match *target {
                Target::Event(j) => (scores[j], j),
                Target::Censored(c) => (log_sum_exp(&scores[c..]), c),
            };
            nll = nll + log_z - log_num;
            if want_gradient {
                // d nll / d a_k = P(bin ≤ k) − P(bin ≤ k | observed outcome)
                let mut cdf = T::zero();
                let mut cdf_obs = T::zero();
                for kk in 0..k - 1 {
                    cdf = cdf + (scores[kk] - log_z).exp();
                    if kk >= first {
                        cdf_obs = match *target {
                            Target::Event(_) => T::one(),
                            Target::Censored(_) => cdf_obs + (scores[kk] - log_num).exp(),
                        };
                    }
                    d_logits[[i, kk]] = (cdf - cdf_obs) * inv_n;
                }
            }
        }
        let loss = nll * inv_n + self.regularizer();
        if !want_gradient {
            return Ok((loss, None));
        }

        let phi = fwd.activations.last().unwrap();
        let theta_grad = d_logits.t().dot(phi) + &(&self.theta * self.c1);
        let bias_grad = d_logits.sum_axis(Axis(0));
        let mut upstream = d_logits.dot(&self.theta);
        let mut hidden_grads = Vec::with_capacity(self.hidden.len());
        for l in (0..self.hidden.len()).rev() {
            if let Some(mask) = &fwd.masks[l] {
                upstream = upstream * mask;
            }
            let dz = upstream * &fwd.pre_activations[l].mapv(elu_grad);
            let dw = dz.t().dot(&fwd.activations[l]);
            let db = dz.sum_axis(Axis(0));
            upstream = dz.dot(&self.hidden[l].weights);
            hidden_grads.push(DenseLayer {
                weights: dw,
                bias: db,
            });
        }
        hidden_grads.reverse();
        Ok((
            loss,
            Some(MtlrGradient {
                hidden: hidden_grads,
                theta: theta_grad,
                bias: bias_grad,
            }),
        ))
    }

    /// Event-bin probabilities (`K` per row, summing to one).
    pub fn bin_probabilities(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        let logits = self.logits(x)?;
        let k = self.n_bins();
        let mut out = Array2::<T>::zeros((logits.nrows(), k));
        let mut scores = vec![T::zero(); k];
        for (i, a) in logits.outer_iter().enumerate() {
            sequence_scores(a, &mut scores);
            let log_z = log_sum_exp(&scores);
            for j in 0..k {
                out[[i, j]] = (scores[j] - log_z).exp();
            }
        }
        Ok(out)
    }

    /// Survival curves at months 0..=23.
    pub fn predict_curves(&self, x: ArrayView2<T>) -> Result<Vec<Vec<T>>> {
        let probs = self.bin_probabilities(x)?;
        Ok(probs
            .outer_iter()
            .map(|p| {
                let edges = survival_at_edges(p);
                (0..CURVE_POINTS)
                    .map(|m| interpolate_survival(&self.grid, &edges, T::count(m)))
                    .collect()
            })
            .collect())
    }

    pub fn predict_curve(&self, x: ArrayView1<T>) -> Result<Vec<T>> {
        let row = x.insert_axis(Axis(0));
        Ok(self.predict_curves(row)?.remove(0))
    }

    /// `1 − S(24 months)`.
    pub fn predict_two_year(&self, x: ArrayView2<T>) -> Result<Vec<T>> {
        let probs = self.bin_probabilities(x)?;
        let horizon = T::lit(TWO_YEARS);
        Ok(probs
            .outer_iter()
            .map(|p| T::one() - interpolate_survival(&self.grid, &survival_at_edges(p), horizon))
            .collect())
    }

    /// `Σ_k (1 − S(t_k))` over the grid edges.
    pub fn lifetime_risk(&self, x: ArrayView2<T>) -> Result<Vec<T>> {
        let probs = self.bin_probabilities(x)?;
        Ok(probs.outer_iter().map(lifetime_risk_from_probabilities).collect())
    }
}

/// `s_j = Σ_{k ≥ j} a_k`, with `s_{K−1} = 0`.
fn sequence_scores<T: Scalar>(logits: ArrayView1<T>, out: &mut [T]) {
    let k = out.len();
    out[k - 1] = T::zero();
    for j in (0..k - 1).rev() {
        out[j] = out[j + 1] + logits[j];
    }
}

/// `S(t_k) = 1 − Σ_{j ≤ k} p_j` at each of the `K−1` edges.
pub fn survival_at_edges<T: Scalar>(probs: ArrayView1<T>) -> Vec<T> {
    let mut cdf = T::zero();
    probs
        .iter()
        .take(probs.len() - 1)
        .map(|&p| {
            cdf = cdf + p;
            (T::one() - cdf).max(T::zero()).min(T::one())
        })
        .collect()
}

/// Piecewise-linear survival through `(0, 1)` and the edge values, held
/// constant after the last edge.
pub fn interpolate_survival<T: Scalar>(grid: &TimeGrid<T>, at_edges: &[T], t: T) -> T {
    if t <= T::zero() {
        return T::one();
    }
    let k = grid.edges.partition_point(|&e| e < t);
    if k == grid.edges.len() {
        return *at_edges.last().expect("at least one edge");
    }
    let (t0, s0) = if k == 0 {
        (T::zero(), T::one())
    } else {
        (grid.edges[k - 1], at_edges[k - 1])
    };
    let (t1, s1) = (grid.edges[k], at_edges[k]);
    let frac = (t - t0) / (t1 - t0);
    s0 + frac * (s1 - s0)
}

/// Summed cumulative incidence over the edges; higher means earlier death.
pub fn lifetime_risk_from_probabilities<T: Scalar>(probs: ArrayView1<T>) -> T {
    survival_at_edges(probs)
        .into_iter()
        .map(|s| T::one() - s)
        .sum()
}

/// Batch-mean negative log-likelihood plus the `θ` penalty, without dropout.
pub fn mtlr_loss<T: Scalar>(model: &MtlrModel<T>, batch: Batch<T>) -> Result<T> {
    Ok(model.loss_and_gradient::<ChaCha8Rng>(batch, None, false)?.0)
}

/// Exact gradient of [`mtlr_loss`] with respect to every parameter.
pub fn mtlr_gradient<T: Scalar>(model: &MtlrModel<T>, batch: Batch<T>) -> Result<MtlrGradient<T>> {
    Ok(model
        .loss_and_gradient::<ChaCha8Rng>(batch, None, true)?
        .1
        .expect("gradient requested"))
}

/// Optimisation settings. The defaults are the tuned single-network
/// configuration: batch 512, dropout 0.24, one hidden layer of 128 units,
/// `C_1 = 10`, learning rate 0.006, weight decay 6e-5, 100 epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub c1: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            learning_rate: 0.006,
            weight_decay: 6e-5,
            dropout: 0.24,
            epochs: 100,
            hidden: vec![128],
            c1: 10.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// The EMR-only network: three hidden layers of 32, batch 1024,
    /// dropout 0.14, weight decay 1.3e-6.
    pub fn emr_only() -> Self {
        Self {
            batch_size: 1024,
            dropout: 0.14,
            hidden: vec![32, 32, 32],
            weight_decay: 1.3e-6,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.epochs > 0
            && self.learning_rate > 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.dropout)
            && self.c1 >= 0.0
            && self.hidden.iter().all(|&h| h > 0);
        if ok {
            Ok(())
        } else {
            Err(SurvError::InvalidConfig(format!("invalid MTLR training config {self:?}")))
        }
    }
}

/// Minibatch Adam training on encoded features. The time grid comes from
/// the training times; shuffling, initialisation and dropout masks all
/// derive from `config.seed`.
pub fn train_mtlr<T: Scalar>(
    x: ArrayView2<T>,
    time: &[T],
    event: &[bool],
    config: &TrainConfig,
) -> Result<MtlrModel<T>> {
    config.validate()?;
    check_len(x.nrows(), time.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SurvError::NonFinite("features"));
    }
    let grid = make_time_grid(time, event)?;
    let targets = encode_targets(time, event, &grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MtlrModel::random(x.ncols(), &config.hidden, grid, T::lit(config.c1), &mut rng);
    model.dropout = T::lit(config.dropout);
    let mut adam = Adam::new(
        model.n_params(),
        T::lit(config.learning_rate),
        T::lit(config.weight_decay),
    );
    let full = Batch {
        x,
        targets: &targets,
    };
    model.loss_history.push(mtlr_loss(&model, full)?);

    let n = x.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut params = model.flat_params();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (b, rows) in order.chunks(config.batch_size).enumerate() {
            let bx = x.select(Axis(0), rows);
            let bt: Vec<Target> = rows.iter().map(|&i| targets[i]).collect();
            let (loss, grad) = model.loss_and_gradient(
                Batch {
                    x: bx.view(),
                    targets: &bt,
                },
                Some(&mut rng),
                true,
            )?;
            let grad = grad.expect("gradient requested").flat();
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(SurvError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    detail: format!("loss {loss}, batch of {} rows", rows.len()),
                });
            }
            adam.step(&mut params, &grad);
            model.set_flat_params(&params);
        }
        let epoch_loss = mtlr_loss(&model, full)?;
        if !epoch_loss.is_finite() {
            return Err(SurvError::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
                detail: "full-data loss after epoch".into(),
            });
        }
        model.loss_history.push(epoch_loss);
    }
    Ok(model)
}

impl<T: Scalar> MtlrModel<T> {
    /// Loss recorded after the last epoch.
    pub fn final_loss(&self) -> Option<T> {
        self.loss_history.last().copied()
    }

    /// Dropout-free forward pass of the hidden transform `φ(x)`.
    pub fn features(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_inputs(&x)?;
        let mut fwd = self.forward::<ChaCha8Rng>(x, None);
        Ok(fwd.activations.pop().unwrap())
    }
}

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, Normal};
use serde::{Deserialize, Serialize};

use super::{
    FeatureGroup, FeatureKind, FeatureSchema, FeatureSpec, SurvivalDataset, SurvivalRecord, Value,
    MISSING_LEVEL,
};
use crate::error::{Result, SurvError};

/// Log-hazard coefficient: a slope for continuous features, one entry per
/// level (optionally including `missing`) for categorical ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Slope(f64),
    PerLevel(Vec<f64>),
}

impl Default for Coefficient {
    fn default() -> Self {
        Coefficient::Slope(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorFeature {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub group: FeatureGroup,
    /// Continuous draws are `Normal(mean, sd)`.
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "one")]
    pub sd: f64,
    #[serde(default)]
    pub levels: Vec<String>,
    /// Level probabilities; the remainder goes to `missing`.
    #[serde(default)]
    pub probs: Vec<f64>,
    #[serde(default)]
    pub beta: Coefficient,
}

fn one() -> f64 {
    1.0
}

/// Tumour volume is log-normal; `beta` multiplies the z-score of `ln(volume)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorVolume {
    pub log_mean: f64,
    pub log_sd: f64,
    #[serde(default)]
    pub beta: f64,
}

/// Settings for the exponential proportional-hazards cohort generator.
///
/// Event times follow `T ~ Exp(lambda * exp(eta))` with `eta` the linear
/// predictor; censoring times are `min_followup + Exp(censor_rate)`
/// (no censoring when `censor_rate` is zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub lambda: f64,
    #[serde(default)]
    pub censor_rate: f64,
    #[serde(default)]
    pub min_followup: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(rename = "feature", default)]
    pub features: Vec<GeneratorFeature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<GeneratorVolume>,
}

/// Side-channel record of how a synthetic cohort was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTruth {
    pub lambda: f64,
    pub beta: Vec<Coefficient>,
    pub volume_beta: Option<f64>,
    pub seed: u64,
    /// True linear predictor, aligned with the dataset records.
    pub ids: Vec<String>,
    pub linear_predictor: Vec<f64>,
}

impl GeneratorTruth {
    pub(crate) fn subset(&self, rows: &[usize]) -> Self {
        Self {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            linear_predictor: rows.iter().map(|&i| self.linear_predictor[i]).collect(),
            ..self.clone()
        }
    }
}

impl GeneratorConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.schema()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Schema of the generated dataset.
    pub fn schema(&self) -> Result<FeatureSchema> {
        let invalid = |m: String| Err(SurvError::InvalidConfig(m));
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return invalid("lambda must be positive".into());
        }
        if !(self.censor_rate.is_finite() && self.censor_rate >= 0.0) {
            return invalid("censor_rate must be non-negative".into());
        }
        if !(self.min_followup.is_finite() && self.min_followup >= 0.0) {
            return invalid("min_followup must be non-negative".into());
        }
        if let Some(v) = &self.volume {
            if !(v.log_sd.is_finite() && v.log_sd > 0.0 && v.log_mean.is_finite() && v.beta.is_finite()) {
                return invalid("volume needs finite log_mean, beta and positive log_sd".into());
            }
        }
        let mut specs = Vec::with_capacity(self.features.len());
        for f in &self.features {
            let spec = match f.kind {
                FeatureKind::Continuous => {
                    if !(f.sd.is_finite() && f.sd > 0.0 && f.mean.is_finite()) {
                        return invalid(format!("feature `{}` needs a positive sd", f.name));
                    }
                    if !matches!(f.beta, Coefficient::Slope(b) if b.is_finite()) {
                        return invalid(format!("feature `{}` needs a scalar beta", f.name));
                    }
                    FeatureSpec::continuous(&f.name)
                }
                FeatureKind::Categorical => {
                    if f.levels.is_empty() || f.levels.iter().any(|l| l == MISSING_LEVEL) {
                        return invalid(format!(
                            "feature `{}` needs levels (excluding `missing`)",
                            f.name
                        ));
                    }
                    let total: f64 = f.probs.iter().sum();
                    if f.probs.len() != f.levels.len()
                        || f.probs.iter().any(|p| !(*p >= 0.0))
                        || total > 1.0 + 1e-12
                    {
                        return invalid(format!(
                            "feature `{}` needs one probability per level summing to at most 1",
                            f.name
                        ));
                    }
                    let levels: Vec<&str> = f.levels.iter().map(String::as_str).collect();
                    FeatureSpec::categorical(&f.name, &levels)
                }
            };
            specs.push(spec.in_group(f.group));
        }
        let schema = FeatureSchema::new(specs)?;
        for f in &self.features {
            if let (FeatureKind::Categorical, Coefficient::PerLevel(b)) = (f.kind, &f.beta) {
                let n = f.levels.len();
                if !(b.len() == n || b.len() == n + 1) || b.iter().any(|x| !x.is_finite()) {
                    return invalid(format!(
                        "feature `{}` needs {n} or {} finite coefficients",
                        f.name,
                        n + 1
                    ));
                }
            }
        }
        Ok(schema)
    }
}

fn level_coefficient(beta: &Coefficient, level: usize) -> f64 {
    match beta {
        Coefficient::Slope(_) => 0.0,
        Coefficient::PerLevel(b) => b.get(level).copied().unwrap_or(0.0),
    }
}

/// Draws a cohort from the exponential proportional-hazards model.
/// Equal `(config, seed)` pairs give identical datasets.
pub fn synthesize_cohort(config: &GeneratorConfig, seed: u64) -> Result<SurvivalDataset> {
    if config.n == 0 {
        return Err(SurvError::EmptyDataset);
    }
    let schema = config.schema()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let censor = (config.censor_rate > 0.0)
        .then(|| Exp::new(config.censor_rate))
        .transpose()
        .map_err(|e| SurvError::InvalidConfig(e.to_string()))?;

    let mut records = Vec::with_capacity(config.n);
    let mut eta_all = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let mut values = Vec::with_capacity(config.features.len());
        let mut eta = 0.0;
        for (f, spec) in config.features.iter().zip(&schema.features) {
            match f.kind {
                FeatureKind::Continuous => {
                    let x = Normal::new(f.mean, f.sd)
                        .expect("validated sd")
                        .sample(&mut rng);
                    if let Coefficient::Slope(b) = f.beta {
                        eta += b * x;
                    }
                    values.push(Value::Number(x));
                }
                FeatureKind::Categorical => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut level = spec.missing_index();
                    for (l, p) in f.probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            level = l;
                            break;
                        }
                    }
                    eta += level_coefficient(&f.beta, level);
                    values.push(Value::Level(level));
                }
            }
        }
        let volume = config.volume.as_ref().map(|v| {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            eta += v.beta * z;
            (v.log_mean + v.log_sd * z).exp()
        });
        let e: f64 = Exp1.sample(&mut rng);
        let event_time = (e / (config.lambda * eta.exp())).max(f64::MIN_POSITIVE);
        let censor_time = censor
            .as_ref()
            .map(|c| config.min_followup + c.sample(&mut rng))
            .unwrap_or(f64::INFINITY);
        let (time, event) = if event_time <= censor_time {
            (event_time, true)
        } else {
            (censor_time.max(f64::MIN_POSITIVE), false)
        };
        records.push(SurvivalRecord {
            id: format!("P{i:05}"),
            values,
            time,
            event,
            volume,
        });
        eta_all.push(eta);
    }
    let mut ds = SurvivalDataset::new(schema, records)?;
    ds.truth = Some(GeneratorTruth {
        lambda: config.lambda,
        beta: config.features.iter().map(|f| f.beta.clone()).collect(),
        volume_beta: config.volume.as_ref().map(|v| v.beta),
        seed,
        ids: ds.ids(),
        linear_predictor: eta_all,
    });
    Ok(ds)
}

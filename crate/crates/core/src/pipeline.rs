//! Training recipes behind each model kind: feature encoding, column
//! choice and per-model settings.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::classic_models::{
    baseline_suite, fuzzy_fit, logistic_fit, FeatureSet, FuzzyConfig, FuzzyTask, GateInputs,
};
use crate::data::{EncodeOptions, EncodedMatrix, Encoder, FeatureGroup, SurvivalDataset};
use crate::error::{Result, SurvError};
use crate::model_file::{ModelFile, ModelKind, Payload, FORMAT_VERSION};
use crate::mtlr::{train_mtlr, TrainConfig};
use crate::predictions::Truth;
use crate::scalar::Scalar;
use crate::survival_np::CoxRegression;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoxSettings {
    pub l2: f64,
    pub features: FeatureSet,
}

impl Default for CoxSettings {
    fn default() -> Self {
        Self {
            l2: 0.1,
            features: FeatureSet::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticSettings {
    pub l2: f64,
    pub class_weighted: bool,
    pub features: FeatureSet,
}

impl Default for LogisticSettings {
    fn default() -> Self {
        Self {
            l2: 1.0,
            class_weighted: true,
            features: FeatureSet::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuzzySettings {
    pub features: FeatureSet,
    pub gate_inputs: GateInputs,
    pub gate_l2: f64,
    pub binary_l2: f64,
    pub risk_l2: f64,
    pub class_weighted: bool,
}

impl Default for FuzzySettings {
    fn default() -> Self {
        Self {
            features: FeatureSet::EmrRadiomic,
            gate_inputs: GateInputs::VolumeOnly,
            gate_l2: 0.01,
            binary_l2: 1.0,
            risk_l2: 0.1,
            class_weighted: true,
        }
    }
}

fn parse<C: DeserializeOwned + Default>(config: Option<&str>) -> Result<C> {
    match config {
        Some(text) => toml::from_str(text).map_err(|e| SurvError::InvalidConfig(e.to_string())),
        None => Ok(C::default()),
    }
}

/// MTLR settings: keys absent from `config` keep the kind's own defaults.
pub fn mtlr_config(kind: ModelKind, config: Option<&str>, seed: u64) -> Result<TrainConfig> {
    let base = if kind == ModelKind::Mtlr {
        TrainConfig::emr_only()
    } else {
        TrainConfig::default()
    };
    let mut cfg = match config {
        Some(text) => {
            let invalid = |e: &dyn std::fmt::Display| SurvError::InvalidConfig(e.to_string());
            let mut table = toml::Table::try_from(&base).map_err(|e| invalid(&e))?;
            let user: toml::Table = toml::from_str(text).map_err(|e| invalid(&e))?;
            table.extend(user);
            table.try_into().map_err(|e| invalid(&e))?
        }
        None => base,
    };
    cfg.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

fn echo<S: Serialize>(s: &S) -> serde_json::Value {
    serde_json::to_value(s).expect("settings serialize")
}

fn nonempty(columns: Vec<usize>, what: &str) -> Result<Vec<usize>> {
    if columns.is_empty() {
        Err(SurvError::SchemaMismatch(format!("no {what} columns in the schema")))
    } else {
        Ok(columns)
    }
}

/// Fits one model kind on a training dataset. `config` is the TOML text of
/// the kind's settings. The baseline suite yields three model files, every
/// other kind one.
pub fn train_model<T: Scalar>(
    kind: ModelKind,
    train: &SurvivalDataset,
    config: Option<&str>,
    seed: u64,
) -> Result<Vec<ModelFile<T>>> {
    let has_volume = train.volumes().is_some();
    if matches!(kind, ModelKind::Fuzzy | ModelKind::BaselineSuite) && !has_volume {
        return Err(SurvError::InvalidConfig(format!(
            "{} needs a volume for every record",
            kind.name()
        )));
    }
    let encoder = Encoder::fit(
        train,
        EncodeOptions {
            standardize: true,
            include_volume: has_volume,
        },
    )?;
    let x: EncodedMatrix<T> = encoder.transform(train)?;
    let truth = Truth::<T>::from_dataset(train);
    let schema_hash = train.schema.hash();
    let file = |name: &str, config, payload| ModelFile {
        format: FORMAT_VERSION,
        kind,
        name: name.to_string(),
        schema_hash: schema_hash.clone(),
        encoder: encoder.clone(),
        config,
        payload,
    };
    let one = match kind {
        ModelKind::Mtlr | ModelKind::DeepMtlr => {
            let cfg = mtlr_config(kind, config, seed)?;
            let columns = if kind == ModelKind::Mtlr {
                nonempty(x.column_indices(|c| c.group.is_emr()), "EMR")?
            } else {
                (0..x.ncols()).collect()
            };
            let sub = x.select_columns(&columns);
            let model = train_mtlr(sub.values.view(), &truth.time, &truth.event, &cfg)?;
            file(kind.name(), echo(&cfg), Payload::Mtlr { columns, model })
        }
        ModelKind::Cox => {
            let s: CoxSettings = parse(config)?;
            let columns = nonempty(s.features.columns(&x), "selected")?;
            let model = CoxRegression::new(T::lit(s.l2)).fit(
                x.select_columns(&columns).values.view(),
                &truth.time,
                &truth.event,
            )?;
            file(kind.name(), echo(&s), Payload::Cox { columns, model })
        }
        ModelKind::Logistic => {
            let s: LogisticSettings = parse(config)?;
            let columns = nonempty(s.features.columns(&x), "selected")?;
            let model = logistic_fit(
                x.select_columns(&columns).values.view(),
                &truth.label,
                T::lit(s.l2),
                s.class_weighted,
            )?;
            file(kind.name(), echo(&s), Payload::Logistic { columns, model })
        }
        ModelKind::Fuzzy => {
            let s: FuzzySettings = parse(config)?;
            let volume_column = x.column_indices(|c| c.group == FeatureGroup::Volume)[0];
            let expert_columns: Vec<usize> = s
                .features
                .columns(&x)
                .into_iter()
                .filter(|&c| c != volume_column)
                .collect();
            let expert_columns = nonempty(expert_columns, "expert")?;
            let volumes: Vec<T> = train
                .volumes()
                .expect("checked above")
                .into_iter()
                .map(T::lit)
                .collect();
            let fit = |task, l2| {
                let cfg = FuzzyConfig {
                    task,
                    gate_inputs: s.gate_inputs,
                    expert_columns: expert_columns.clone(),
                    volume_column,
                    gate_l2: s.gate_l2,
                    expert_l2: l2,
                    class_weighted: s.class_weighted,
                };
                fuzzy_fit(x.values.view(), &volumes, &truth, &cfg)
            };
            let binary = fit(FuzzyTask::Binary, s.binary_l2)?;
            let risk = fit(FuzzyTask::Risk, s.risk_l2)?;
            file(kind.name(), echo(&s), Payload::Fuzzy { binary, risk })
        }
        ModelKind::BaselineSuite => {
            if config.is_some() {
                return Err(SurvError::InvalidConfig(
                    "baseline-suite takes no config; its grid is fixed".into(),
                ));
            }
            return Ok(baseline_suite(&x, &truth, seed)?
                .into_iter()
                .map(|m| file(m.kind.name(), echo(&m.choice), Payload::Baseline(m)))
                .collect());
        }
    };
    Ok(vec![one])
}

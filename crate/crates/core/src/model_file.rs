//! Trained-model container: fitted encoder, config echo and payload,
//! serialized as JSON with round-trip-exact floats.

use std::path::Path;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::classic_models::{fuzzy_predict, BaselineModel, FuzzyModel, LogisticModel};
use crate::data::{EncodedMatrix, Encoder, SurvivalDataset};
use crate::error::{Result, SurvError};
use crate::mtlr::MtlrModel;
use crate::predictions::PredictionSet;
use crate::scalar::Scalar;
use crate::survival_np::CoxModel;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// EMR-only network.
    Mtlr,
    DeepMtlr,
    Cox,
    Logistic,
    Fuzzy,
    BaselineSuite,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        Self::Mtlr,
        Self::DeepMtlr,
        Self::Cox,
        Self::Logistic,
        Self::Fuzzy,
        Self::BaselineSuite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mtlr => "mtlr",
            Self::DeepMtlr => "deep-mtlr",
            Self::Cox => "cox",
            Self::Logistic => "logistic",
            Self::Fuzzy => "fuzzy",
            Self::BaselineSuite => "baseline-suite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[allow(clippy::large_enum_variant)]
pub enum Payload<T> {
    Mtlr {
        columns: Vec<usize>,
        model: MtlrModel<T>,
    },
    Cox {
        columns: Vec<usize>,
        model: CoxModel<T>,
    },
    Logistic {
        columns: Vec<usize>,
        model: LogisticModel<T>,
    },
    /// Binary head for `prob_2yr`, risk head for `risk`.
    Fuzzy {
        binary: FuzzyModel<T>,
        risk: FuzzyModel<T>,
    },
    Baseline(BaselineModel<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ModelFile<T> {
    pub format: u32,
    pub kind: ModelKind,
    pub name: String,
    pub schema_hash: String,
    pub encoder: Encoder,
    pub config: serde_json::Value,
    pub payload: Payload<T>,
}

impl<T: Scalar> ModelFile<T> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        if file.format != FORMAT_VERSION {
            return Err(SurvError::InvalidConfig(format!(
                "unsupported model format {}",
                file.format
            )));
        }
        if file.schema_hash != file.encoder.schema.hash() {
            return Err(SurvError::SchemaMismatch(
                "model file schema hash does not match its encoder".into(),
            ));
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Encodes `dataset` with the stored encoder and predicts.
    pub fn predict_dataset(&self, dataset: &SurvivalDataset) -> Result<PredictionSet<T>> {
        self.predict(&self.encoder.transform(dataset)?)
    }

    pub fn predict(&self, x: &EncodedMatrix<T>) -> Result<PredictionSet<T>> {
        let ids = x.ids.clone();
        let sub = |cols: &[usize]| x.values.select(Axis(1), cols);
        match &self.payload {
            Payload::Mtlr { columns, model } => {
                let v = sub(columns);
                PredictionSet::new(
                    ids,
                    model.predict_two_year(v.view())?,
                    Some(model.lifetime_risk(v.view())?),
                    Some(model.predict_curves(v.view())?),
                )
            }
            Payload::Cox { columns, model } => {
                let eta = model.linear_predictor(sub(columns).view())?;
                PredictionSet::new(
                    ids,
                    eta.iter().map(|&e| model.two_year_probability(e)).collect(),
                    Some(eta.to_vec()),
                    Some(eta.iter().map(|&e| model.curve(e)).collect()),
                )
            }
            Payload::Logistic { columns, model } => {
                PredictionSet::new(ids, model.predict_proba(sub(columns).view())?.to_vec(), None, None)
            }
            Payload::Fuzzy { binary, risk } => PredictionSet::new(
                ids,
                fuzzy_predict(binary, x.values.view())?,
                Some(fuzzy_predict(risk, x.values.view())?),
                None,
            ),
            Payload::Baseline(model) => model.predict(x),
        }
    }
}

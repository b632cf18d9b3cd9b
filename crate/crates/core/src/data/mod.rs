//! Censored tabular cohorts: schema, records, CSV IO, encoding, splitting and
//! the synthetic proportional-hazards generator.

mod encode;
mod io;
mod schema;
mod synth;

pub use encode::{encode, ColumnLabel, EncodeOptions, EncodedMatrix, Encoder};
pub use io::{load_dataset, read_dataset, write_dataset, write_dataset_to};
pub use schema::{FeatureGroup, FeatureKind, FeatureSchema, FeatureSpec, MISSING_LEVEL};
pub use synth::{synthesize_cohort, Coefficient, GeneratorConfig, GeneratorFeature, GeneratorTruth, GeneratorVolume};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SurvError};

/// Horizon of the binary endpoint, in months.
pub const TWO_YEARS: f64 = 24.0;

/// One encoded-ready cell of a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Number(f64),
    /// Index into the feature's level list.
    Level(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub id: String,
    /// One value per schema feature, in schema order.
    pub values: Vec<Value>,
    /// Months from diagnosis to death or censoring.
    pub time: f64,
    /// `true` when death was observed.
    pub event: bool,
    /// Primary tumour volume in mm³.
    pub volume: Option<f64>,
}

impl SurvivalRecord {
    /// Binarized 2-year outcome: death observed within 24 months.
    pub fn label_2yr(&self) -> bool {
        self.event && self.time <= TWO_YEARS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
    #[default]
    None,
}

/// Immutable collection of records conforming to one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    pub schema: FeatureSchema,
    pub records: Vec<SurvivalRecord>,
    pub split: SplitTag,
    /// Generating parameters when the cohort is synthetic.
    pub truth: Option<GeneratorTruth>,
}

impl SurvivalDataset {
    pub fn new(schema: FeatureSchema, records: Vec<SurvivalRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(SurvError::EmptyDataset);
        }
        for (row, r) in records.iter().enumerate() {
            schema.check_record(row + 1, r)?;
        }
        Ok(Self {
            schema,
            records,
            split: SplitTag::None,
            truth: None,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_censored(&self) -> usize {
        self.records.iter().filter(|r| !r.event).count()
    }

    pub fn n_events(&self) -> usize {
        self.len() - self.n_censored()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn labels_2yr(&self) -> Vec<bool> {
        self.records.iter().map(SurvivalRecord::label_2yr).collect()
    }

    /// All volumes, or `None` if any record lacks one.
    pub fn volumes(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.volume).collect()
    }

    /// Copy holding the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            records: rows.iter().map(|&i| self.records[i].clone()).collect(),
            split: self.split,
            truth: self.truth.as_ref().map(|t| t.subset(rows)),
        }
    }
}

/// Ordering used by [`split_train_test`] as a pseudo-date.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitKey {
    /// File / generation order.
    RecordIndex,
    /// A continuous feature (e.g. a diagnosis date encoded as a number).
    Feature(String),
}

/// Deterministic prefix/suffix split by the ordering key; ties keep record order.
pub fn split_train_test(
    dataset: &SurvivalDataset,
    fraction: f64,
    key: &SplitKey,
) -> Result<(SurvivalDataset, SurvivalDataset)> {
    let n = dataset.len();
    let n_train = if fraction > 0.0 && fraction < 1.0 {
        (fraction * n as f64).round() as usize
    } else {
        0
    };
    if n_train == 0 || n_train >= n {
        return Err(SurvError::DegenerateSplit {
            train: n_train.min(n),
            test: n - n_train.min(n),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    if let SplitKey::Feature(name) = key {
        let idx = dataset
            .schema
            .position(name)
            .ok_or_else(|| SurvError::MissingColumn(name.clone()))?;
        if dataset.schema.features[idx].kind != FeatureKind::Continuous {
            return Err(SurvError::InvalidConfig(format!(
                "split key `{name}` must be continuous"
            )));
        }
        let key_of = |i: usize| match dataset.records[i].values[idx] {
            Value::Number(v) => v,
            Value::Level(_) => unreachable!("continuous feature holds numbers"),
        };
        order.sort_by(|&a, &b| key_of(a).total_cmp(&key_of(b)));
    }
    let mut train = dataset.subset(&order[..n_train]);
    let mut test = dataset.subset(&order[n_train..]);
    train.split = SplitTag::Train;
    test.split = SplitTag::Test;
    Ok((train, test))
}

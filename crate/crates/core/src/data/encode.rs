use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{FeatureGroup, FeatureKind, FeatureSchema, SurvivalDataset, Value};
use crate::error::{Result, SurvError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeOptions {
    /// Standardize continuous columns with training mean and sd.
    pub standardize: bool,
    /// Append `ln(1 + volume)` as a continuous column.
    pub include_volume: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self {
            standardize: true,
            include_volume: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnLabel {
    pub name: String,
    pub feature: String,
    pub level: Option<String>,
    pub group: FeatureGroup,
}

/// Dense design matrix with row ids and column provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix<T> {
    pub ids: Vec<String>,
    pub values: Array2<T>,
    pub columns: Vec<ColumnLabel>,
}

impl<T: Scalar> EncodedMatrix<T> {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_indices(&self, keep: impl Fn(&ColumnLabel) -> bool) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| keep(c))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            ids: self.ids.clone(),
            values: self.values.select(Axis(1), cols),
            columns: cols.iter().map(|&c| self.columns[c].clone()).collect(),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            values: self.values.select(Axis(0), rows),
            columns: self.columns.clone(),
        }
    }
}

/// Encoding fitted on a training split and replayed on any split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub schema: FeatureSchema,
    pub options: EncodeOptions,
    /// `(mean, sd)` per feature; `None` for categorical features.
    pub stats: Vec<Option<(f64, f64)>>,
    pub volume_stats: Option<(f64, f64)>,
    pub columns: Vec<ColumnLabel>,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn volume_feature(v: f64) -> f64 {
    v.ln_1p()
}

impl Encoder {
    pub fn fit(train: &SurvivalDataset, options: EncodeOptions) -> Result<Self> {
        if train.is_empty() {
            return Err(SurvError::EmptyDataset);
        }
        let schema = &train.schema;
        let mut stats = Vec::with_capacity(schema.len());
        let mut columns = Vec::new();
        for (j, f) in schema.features.iter().enumerate() {
            match f.kind {
                FeatureKind::Continuous => {
                    let (mean, sd) = match (f.mean, f.sd) {
                        (Some(m), Some(s)) => (m, s),
                        _ => mean_sd(train.records.iter().map(|r| match r.values[j] {
                            Value::Number(x) => x,
                            Value::Level(_) => unreachable!(),
                        })),
                    };
                    if options.standardize && !(sd > 0.0) {
                        return Err(SurvError::ZeroVariance(f.name.clone()));
                    }
                    stats.push(Some((mean, sd)));
                    columns.push(ColumnLabel {
                        name: f.name.clone(),
                        feature: f.name.clone(),
                        level: None,
                        group: f.group,
                    });
                }
                FeatureKind::Categorical => {
                    stats.push(None);
                    for level in &f.levels {
                        columns.push(ColumnLabel {
                            name: format!("{}={}", f.name, level),
                            feature: f.name.clone(),
                            level: Some(level.clone()),
                            group: f.group,
                        });
                    }
                }
            }
        }
        let volume_stats = if options.include_volume {
            let vols = train.volumes().ok_or_else(|| {
                SurvError::InvalidConfig("volume required for every record".into())
            })?;
            let (mean, sd) = mean_sd(vols.iter().map(|&v| volume_feature(v)));
            if options.standardize && !(sd > 0.0) {
                return Err(SurvError::ZeroVariance("volume".into()));
            }
            columns.push(ColumnLabel {
                name: "volume".into(),
                feature: "volume".into(),
                level: None,
                group: FeatureGroup::Volume,
            });
            Some((mean, sd))
        } else {
            None
        };
        Ok(Self {
            schema: schema.clone(),
            options,
            stats,
            volume_stats,
            columns,
        })
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn transform<T: Scalar>(&self, dataset: &SurvivalDataset) -> Result<EncodedMatrix<T>> {
        if dataset.schema != self.schema {
            return Err(SurvError::SchemaMismatch(
                "dataset schema differs from the encoder's".into(),
            ));
        }
        let n = dataset.len();
        let d = self.n_columns();
        let mut values = Array2::<T>::zeros((n, d));
        let scale = |x: f64, (mean, sd): (f64, f64)| {
            if self.options.standardize {
                (x - mean) / sd
            } else {
                x
            }
        };
        for (i, r) in dataset.records.iter().enumerate() {
            let mut c = 0;
            for (f, (v, st)) in self
                .schema
                .features
                .iter()
                .zip(r.values.iter().zip(&self.stats))
            {
                match (v, st) {
                    (Value::Number(x), Some(st)) => {
                        values[[i, c]] = T::lit(scale(*x, *st));
                        c += 1;
                    }
                    (Value::Level(l), None) => {
                        values[[i, c + l]] = T::one();
                        c += f.levels.len();
                    }
                    _ => unreachable!("records are validated against the schema"),
                }
            }
            if let Some(st) = self.volume_stats {
                let v = r.volume.ok_or_else(|| SurvError::BadValue {
                    row: i + 1,
                    column: "volume".into(),
                    reason: "missing volume".into(),
                })?;
                values[[i, c]] = T::lit(scale(volume_feature(v), st));
            }
        }
        Ok(EncodedMatrix {
            ids: dataset.ids(),
            values,
            columns: self.columns.clone(),
        })
    }
}

/// One-hot plus standardization of `dataset` using statistics of `stats_from`.
pub fn encode<T: Scalar>(
    dataset: &SurvivalDataset,
    stats_from: &SurvivalDataset,
) -> Result<EncodedMatrix<T>> {
    Encoder::fit(stats_from, EncodeOptions::default())?.transform(dataset)
}

//! Per-patient predictions and ground-truth files exchanged between commands.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::SurvivalDataset;
use crate::error::{Result, SurvError};
use crate::scalar::Scalar;

/// Survival curves are reported at months 0..=23.
pub const CURVE_POINTS: usize = 24;

/// Model output for a set of patients.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet<T> {
    pub ids: Vec<String>,
    /// Probability of death within 24 months.
    pub prob_2yr: Vec<T>,
    /// Lifetime risk score, higher is worse.
    pub risk: Option<Vec<T>>,
    /// Survival probability at months 0..=23.
    pub curves: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> PredictionSet<T> {
    pub fn new(
        ids: Vec<String>,
        prob_2yr: Vec<T>,
        risk: Option<Vec<T>>,
        curves: Option<Vec<Vec<T>>>,
    ) -> Result<Self> {
        let set = Self {
            ids,
            prob_2yr,
            risk,
            curves,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ids.len();
        let invalid = |m: String| Err(SurvError::InvalidPredictions(m));
        if self.prob_2yr.len() != n {
            return invalid(format!("{} probabilities for {n} ids", self.prob_2yr.len()));
        }
        if let Some(p) = self.prob_2yr.iter().position(|&p| !(p >= T::zero() && p <= T::one())) {
            return invalid(format!("prob_2yr of `{}` outside [0, 1]", self.ids[p]));
        }
        if let Some(r) = &self.risk {
            if r.len() != n || r.iter().any(|v| !v.is_finite()) {
                return invalid("risk column must be finite, one per id".into());
            }
        }
        if let Some(curves) = &self.curves {
            if curves.len() != n {
                return invalid(format!("{} curves for {n} ids", curves.len()));
            }
            for (id, c) in self.ids.iter().zip(curves) {
                let ok = c.len() == CURVE_POINTS
                    && c.iter().all(|&s| s >= T::zero() && s <= T::one())
                    && c.windows(2).all(|w| w[1] <= w[0]);
                if !ok {
                    return invalid(format!(
                        "curve of `{id}` must hold {CURVE_POINTS} non-increasing values in [0, 1]"
                    ));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.ids.iter().find(|id| !seen.insert(id.as_str())) {
            return invalid(format!("duplicate id `{dup}`"));
        }
        Ok(())
    }

    /// Risk column, or the 2-year event probability when no risk was supplied.
    pub fn risk_or_prob(&self) -> &[T] {
        self.risk.as_deref().unwrap_or(&self.prob_2yr)
    }

    /// Reorders rows to follow `ids`; fails unless the id sets are identical.
    pub fn aligned_to(&self, ids: &[String]) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(SurvError::IdMismatch(format!(
                "{} predictions for {} ids",
                self.len(),
                ids.len()
            )));
        }
        let pos: HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let order = ids
            .iter()
            .map(|id| {
                pos.get(id.as_str())
                    .copied()
                    .ok_or_else(|| SurvError::IdMismatch(format!("no prediction for `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ids: ids.to_vec(),
            prob_2yr: order.iter().map(|&i| self.prob_2yr[i]).collect(),
            risk: self.risk.as_ref().map(|r| order.iter().map(|&i| r[i]).collect()),
            curves: self
                .curves
                .as_ref()
                .map(|c| order.iter().map(|&i| c[i].clone()).collect()),
        })
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string(), "prob_2yr".into()];
        if self.risk.is_some() {
            header.push("risk".into());
        }
        if self.curves.is_some() {
            header.extend((0..CURVE_POINTS).map(|m| format!("surv_m{m}")));
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.ids[i].clone(), self.prob_2yr[i].to_string()];
            if let Some(r) = &self.risk {
                row.push(r[i].to_string());
            }
            if let Some(c) = &self.curves {
                row.extend(c[i].iter().map(|s| s.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Parses and validates a prediction file.
    pub fn read_csv_from<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut expected = vec!["id".to_string(), "prob_2yr".into()];
        let has_risk = header.get(2).map(String::as_str) == Some("risk");
        if has_risk {
            expected.push("risk".into());
        }
        let has_curves = header.len() > expected.len();
        if has_curves {
            expected.extend((0..CURVE_POINTS).map(|m| format!("surv_m{m}")));
        }
        if header != expected {
            return Err(SurvError::InvalidPredictions(format!(
                "header {header:?} does not match id,prob_2yr[,risk][,surv_m0..surv_m23]"
            )));
        }
        let mut set = Self {
            ids: Vec::new(),
            prob_2yr: Vec::new(),
            risk: has_risk.then(Vec::new),
            curves: has_curves.then(Vec::new),
        };
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let num = |c: usize| -> Result<T> {
                row[c]
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| SurvError::BadValue {
                        row: i + 1,
                        column: header[c].clone(),
                        reason: format!("cannot parse `{}`", &row[c]),
                    })
            };
            set.ids.push(row[0].to_string());
            set.prob_2yr.push(num(1)?);
            let mut c = 2;
            if let Some(r) = &mut set.risk {
                r.push(num(2)?);
                c = 3;
            }
            if let Some(curves) = &mut set.curves {
                curves.push((c..c + CURVE_POINTS).map(num).collect::<Result<_>>()?);
            }
        }
        set.validate()?;
        Ok(set)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv_from(std::fs::File::open(path)?)
    }
}

/// Observed outcomes used for scoring: `id,time,event,label_2yr`.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth<T> {
    pub ids: Vec<String>,
    pub time: Vec<T>,
    pub event: Vec<bool>,
    pub label: Vec<bool>,
}

impl<T: Scalar> Truth<T> {
    pub fn from_dataset(ds: &SurvivalDataset) -> Self {
        Self {
            ids: ds.ids(),
            time: ds.records.iter().map(|r| T::lit(r.time)).collect(),
            event: ds.events(),
            label: ds.labels_2yr(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            time: rows.iter().map(|&i| self.time[i]).collect(),
            event: rows.iter().map(|&i| self.event[i]).collect(),
            label: rows.iter().map(|&i| self.label[i]).collect(),
        }
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "time", "event", "label_2yr"])?;
        for i in 0..self.len() {
            w.write_record([
                self.ids[i].clone(),
                self.time[i].to_string(),
                u8::from(self.event[i]).to_string(),
                u8::from(self.label[i]).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_csv_from<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != ["id", "time", "event", "label_2yr"] {
            return Err(SurvError::SchemaMismatch(format!(
                "truth header {header:?} must be id,time,event,label_2yr"
            )));
        }
        let mut t = Self {
            ids: Vec::new(),
            time: Vec::new(),
            event: Vec::new(),
            label: Vec::new(),
        };
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let bad = |c: usize| SurvError::BadValue {
                row: i + 1,
                column: header[c].clone(),
                reason: format!("cannot parse `{}`", &row[c]),
            };
            let flag = |c: usize| match &row[c] {
                "1" => Ok(true),
                "0" => Ok(false),
                _ => Err(bad(c)),
            };
            let time: f64 = row[1].parse().map_err(|_| bad(1))?;
            if !(time.is_finite() && time > 0.0) {
                return Err(bad(1));
            }
            t.ids.push(row[0].to_string());
            t.time.push(T::lit(time));
            t.event.push(flag(2)?);
            t.label.push(flag(3)?);
        }
        if t.is_empty() {
            return Err(SurvError::EmptyDataset);
        }
        Ok(t)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv_from(std::fs::File::open(path)?)
    }
}

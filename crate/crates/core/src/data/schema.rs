use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{SurvivalRecord, Value};
use crate::error::{Result, SurvError};

/// Reserved level that absent categorical cells map to.
pub const MISSING_LEVEL: &str = "missing";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

/// Role of a feature when models restrict their inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureGroup {
    /// Standard prognostic factors (age, sex, stage, HPV).
    Clinical,
    /// Treatment descriptors (dose, chemotherapy).
    Treatment,
    /// Image-derived descriptors.
    Radiomic,
    /// The tumour volume column appended by the encoder.
    Volume,
    #[default]
    Other,
}

impl FeatureGroup {
    /// Electronic-medical-record features.
    pub fn is_emr(self) -> bool {
        matches!(self, Self::Clinical | Self::Treatment | Self::Other)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    #[serde(default)]
    pub group: FeatureGroup,
    /// Fixed normalization for continuous features; fitted from training data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
}

impl FeatureSpec {
    pub fn continuous(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Continuous,
            levels: Vec::new(),
            group: FeatureGroup::Other,
            mean: None,
            sd: None,
        }
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Categorical,
            levels: levels.iter().map(|s| s.to_string()).collect(),
            group: FeatureGroup::Other,
            mean: None,
            sd: None,
        }
    }

    pub fn in_group(mut self, group: FeatureGroup) -> Self {
        self.group = group;
        self
    }

    pub fn level_index(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == label)
    }

    pub fn missing_index(&self) -> usize {
        self.level_index(MISSING_LEVEL)
            .expect("validated categorical features carry the missing level")
    }
}

/// Ordered feature list shared by a dataset and every model trained on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    #[serde(rename = "feature", default)]
    pub features: Vec<FeatureSpec>,
}

const RESERVED: [&str; 4] = ["id", "time", "event", "volume"];

impl FeatureSchema {
    /// Validates the features and appends the `missing` level to categorical
    /// features that do not declare it.
    pub fn new(mut features: Vec<FeatureSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &mut features {
            if f.name.is_empty() || RESERVED.contains(&f.name.as_str()) {
                return Err(SurvError::InvalidConfig(format!(
                    "feature name `{}` is empty or reserved",
                    f.name
                )));
            }
            if !seen.insert(f.name.clone()) {
                return Err(SurvError::InvalidConfig(format!(
                    "duplicate feature `{}`",
                    f.name
                )));
            }
            match f.kind {
                FeatureKind::Categorical => {
                    let mut levels = HashSet::new();
                    for l in &f.levels {
                        if l.is_empty() || !levels.insert(l.as_str()) {
                            return Err(SurvError::InvalidConfig(format!(
                                "feature `{}` has an empty or duplicate level",
                                f.name
                            )));
                        }
                    }
                    if f.level_index(MISSING_LEVEL).is_none() {
                        f.levels.push(MISSING_LEVEL.to_string());
                    }
                    if f.mean.is_some() || f.sd.is_some() {
                        return Err(SurvError::InvalidConfig(format!(
                            "categorical feature `{}` cannot carry normalization",
                            f.name
                        )));
                    }
                }
                FeatureKind::Continuous => {
                    if !f.levels.is_empty() {
                        return Err(SurvError::InvalidConfig(format!(
                            "continuous feature `{}` cannot declare levels",
                            f.name
                        )));
                    }
                    match (f.mean, f.sd) {
                        (None, None) => {}
                        (Some(m), Some(s)) if m.is_finite() && s.is_finite() && s > 0.0 => {}
                        _ => {
                            return Err(SurvError::InvalidConfig(format!(
                                "feature `{}` needs both mean and a positive sd",
                                f.name
                            )))
                        }
                    }
                }
            }
        }
        Ok(Self { features })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: FeatureSchema = toml::from_str(text)?;
        Self::new(raw.features)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Hex SHA-256 of the canonical JSON form; models record it to reject
    /// data encoded under a different schema.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub(crate) fn check_record(&self, row: usize, r: &SurvivalRecord) -> Result<()> {
        let bad = |column: &str, reason: &str| SurvError::BadValue {
            row,
            column: column.to_string(),
            reason: reason.to_string(),
        };
        if !(r.time.is_finite() && r.time > 0.0) {
            return Err(bad("time", "time must be finite and positive"));
        }
        if let Some(v) = r.volume {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad("volume", "volume must be finite and non-negative"));
            }
        }
        if r.values.len() != self.len() {
            return Err(SurvError::SchemaMismatch(format!(
                "record `{}` has {} values for {} features",
                r.id,
                r.values.len(),
                self.len()
            )));
        }
        for (f, v) in self.features.iter().zip(&r.values) {
            match (f.kind, v) {
                (FeatureKind::Continuous, Value::Number(x)) if x.is_finite() => {}
                (FeatureKind::Categorical, Value::Level(i)) if *i < f.levels.len() => {}
                _ => return Err(bad(&f.name, "value does not match the feature kind")),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = r#"
[[feature]]
name = "age"
kind = "continuous"
group = "clinical"

[[feature]]
name = "hpv"
kind = "categorical"
levels = ["positive", "negative"]
group = "clinical"
"#;

    #[test]
    fn parses_and_appends_missing_level() {
        let s = FeatureSchema::from_toml_str(SCHEMA).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.features[1].levels, vec!["positive", "negative", "missing"]);
        assert_eq!(s.features[0].group, FeatureGroup::Clinical);
        let again = FeatureSchema::from_toml_str(&s.to_toml_string().unwrap()).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.hash(), again.hash());
    }

    #[test]
    fn rejects_duplicates_and_reserved_names() {
        let dup = vec![FeatureSpec::continuous("a"), FeatureSpec::continuous("a")];
        assert!(FeatureSchema::new(dup).is_err());
        assert!(FeatureSchema::new(vec![FeatureSpec::continuous("time")]).is_err());
        let mut bad_sd = FeatureSpec::continuous("a");
        bad_sd.mean = Some(0.0);
        bad_sd.sd = Some(0.0);
        assert!(FeatureSchema::new(vec![bad_sd]).is_err());
    }
}

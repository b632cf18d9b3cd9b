use std::io::{Read, Write};
use std::path::Path;

use super::{FeatureKind, FeatureSchema, SurvivalDataset, SurvivalRecord, Value};
use crate::error::{Result, SurvError};

/// Loads `id,time,event,<features...>[,volume]` rows under `schema`.
pub fn load_dataset(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<SurvivalDataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: Read>(reader: R, schema: &FeatureSchema) -> Result<SurvivalDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h == name);

    let id_col = col("id").ok_or_else(|| SurvError::MissingColumn("id".into()))?;
    let time_col = col("time").ok_or_else(|| SurvError::MissingColumn("time".into()))?;
    let event_col = col("event").ok_or_else(|| SurvError::MissingColumn("event".into()))?;
    let volume_col = col("volume");
    let feature_cols = schema
        .features
        .iter()
        .map(|f| col(&f.name).ok_or_else(|| SurvError::MissingColumn(f.name.clone())))
        .collect::<Result<Vec<_>>>()?;
    let known = 3 + usize::from(volume_col.is_some()) + feature_cols.len();
    if header.len() != known {
        let extra: Vec<&str> = header
            .iter()
            .filter(|h| {
                !["id", "time", "event", "volume"].contains(&h.as_str())
                    && schema.position(h).is_none()
            })
            .map(String::as_str)
            .collect();
        return Err(SurvError::SchemaMismatch(format!(
            "unexpected or repeated columns: {extra:?}"
        )));
    }

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let bad = |column: &str, reason: String| SurvError::BadValue {
            row: row_no,
            column: column.to_string(),
            reason,
        };
        let id = row[id_col].to_string();
        if id.is_empty() {
            return Err(bad("id", "empty id".into()));
        }
        let time: f64 = row[time_col]
            .parse()
            .map_err(|_| bad("time", format!("cannot parse `{}`", &row[time_col])))?;
        if !(time.is_finite() && time > 0.0) {
            return Err(bad("time", format!("time must be positive, got {time}")));
        }
        let event = match &row[event_col] {
            "1" => true,
            "0" => false,
            other => return Err(bad("event", format!("expected 0 or 1, got `{other}`"))),
        };
        let volume = match volume_col.map(|c| &row[c]) {
            None | Some("") => None,
            Some(cell) => {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| bad("volume", format!("cannot parse `{cell}`")))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(bad("volume", format!("volume must be non-negative, got {v}")));
                }
                Some(v)
            }
        };
        let mut values = Vec::with_capacity(schema.len());
        for (f, &c) in schema.features.iter().zip(&feature_cols) {
            let cell = &row[c];
            let value = match f.kind {
                FeatureKind::Continuous => {
                    if cell.is_empty() {
                        return Err(bad(&f.name, "missing continuous value".into()));
                    }
                    let x: f64 = cell
                        .parse()
                        .map_err(|_| bad(&f.name, format!("cannot parse `{cell}`")))?;
                    if !x.is_finite() {
                        return Err(bad(&f.name, "non-finite value".into()));
                    }
                    Value::Number(x)
                }
                FeatureKind::Categorical => {
                    if cell.is_empty() {
                        Value::Level(f.missing_index())
                    } else {
                        Value::Level(
                            f.level_index(cell)
                                .ok_or_else(|| bad(&f.name, format!("unknown level `{cell}`")))?,
                        )
                    }
                }
            };
            values.push(value);
        }
        records.push(SurvivalRecord {
            id,
            values,
            time,
            event,
            volume,
        });
    }
    SurvivalDataset::new(schema.clone(), records)
}

/// Writes the dataset in the same layout [`read_dataset`] accepts. The
/// `missing` level is written as an empty cell.
pub fn write_dataset_to<W: Write>(dataset: &SurvivalDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let has_volume = dataset.records.iter().any(|r| r.volume.is_some());
    let mut header = vec!["id".to_string(), "time".into(), "event".into()];
    header.extend(dataset.schema.features.iter().map(|f| f.name.clone()));
    if has_volume {
        header.push("volume".into());
    }
    w.write_record(&header)?;
    for r in &dataset.records {
        let mut row = vec![
            r.id.clone(),
            r.time.to_string(),
            if r.event { "1".into() } else { "0".into() },
        ];
        for (f, v) in dataset.schema.features.iter().zip(&r.values) {
            row.push(match v {
                Value::Number(x) => x.to_string(),
                Value::Level(i) if *i == f.missing_index() => String::new(),
                Value::Level(i) => f.levels[*i].clone(),
            });
        }
        if has_volume {
            row.push(r.volume.map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(dataset: &SurvivalDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset_to(dataset, std::io::BufWriter::new(file))
}

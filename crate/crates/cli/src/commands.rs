use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;
use survkit::data::{
    load_dataset, split_train_test, synthesize_cohort, write_dataset, FeatureSchema, GeneratorConfig,
    SplitKey, SurvivalDataset,
};
use survkit::ensemble::{
    ensemble_average, leaderboard, partial_ensembles, volume_correlation_audit, write_audit_csv,
    write_leaderboard_csv, Submission,
};
use survkit::metrics::{calibration_curve, evaluate, CalibrationBin, EvalOptions, EvalReport};
use survkit::model_file::ModelKind;
use survkit::pipeline::train_model;
use survkit::predictions::{PredictionSet, Truth};
use survkit::survival_np::{hazard_ratio, kaplan_meier, stratify, HazardRatio, KaplanMeierCurve, RiskGroup};
use survkit::{SavedModel, SurvError};

use crate::Command;

/// Exit code 2 for bad invocations or configuration, 1 for everything else.
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<SurvError> for Failure {
    fn from(e: SurvError) -> Self {
        match e {
            SurvError::InvalidConfig(_) | SurvError::Toml(_) => Failure::Usage(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow!(msg.into()))
}

fn load_schema(path: &Path) -> CmdResult<FeatureSchema> {
    FeatureSchema::load(path)
        .with_context(|| format!("loading schema {}", path.display()))
        .map_err(Failure::Usage)
}

fn load_data(path: &Path, schema: &FeatureSchema) -> CmdResult<SurvivalDataset> {
    Ok(load_dataset(path, schema).with_context(|| format!("loading {}", path.display()))?)
}

fn write_json<S: Serialize>(value: &S, path: &Path) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(anyhow::Error::from)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_predictions(path: &Path) -> CmdResult<PredictionSet<f64>> {
    Ok(PredictionSet::read_csv(path).with_context(|| format!("reading {}", path.display()))?)
}

fn read_truth(path: &Path) -> CmdResult<Truth<f64>> {
    Ok(Truth::read_csv(path).with_context(|| format!("reading {}", path.display()))?)
}

/// `cohort.csv` → `cohort.<suffix>`.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn run(command: Command) -> CmdResult {
    match command {
        Command::Synth { config, out, seed } => synth(&config, &out, seed),
        Command::Split {
            data,
            schema,
            fraction,
            key,
            train_out,
            test_out,
        } => {
            let schema = load_schema(&schema)?;
            let ds = load_data(&data, &schema)?;
            let key = key.map_or(SplitKey::RecordIndex, SplitKey::Feature);
            let (train, test) = split_train_test(&ds, fraction, &key).map_err(|e| match e {
                SurvError::DegenerateSplit { .. } => Failure::Usage(e.into()),
                e => e.into(),
            })?;
            write_dataset(&train, &train_out)?;
            write_dataset(&test, &test_out)?;
            Ok(())
        }
        Command::Truth { data, schema, out } => {
            let schema = load_schema(&schema)?;
            let ds = load_data(&data, &schema)?;
            Truth::<f64>::from_dataset(&ds).write_csv(&out)?;
            Ok(())
        }
        Command::Train {
            model,
            data,
            schema,
            config,
            seed,
            out,
        } => train(model.into(), &data, &schema, config.as_deref(), seed, &out),
        Command::Predict {
            model,
            data,
            schema,
            out,
        } => predict(&model, &data, schema.as_deref(), &out),
        Command::Evaluate {
            preds,
            truth,
            n_boot,
            n_perm,
            level,
            calibration_bins,
            seed,
            out,
            plots,
        } => {
            let opts = EvalOptions {
                n_boot,
                n_perm,
                level,
                seed,
            };
            evaluate_cmd(&preds, &truth, &opts, calibration_bins, &out, plots.as_deref())
        }
        Command::Leaderboard {
            preds,
            truth,
            n_boot,
            q,
            seed,
            out,
            partial_out,
        } => leaderboard_cmd(&preds, &truth, n_boot, q, seed, &out, partial_out.as_deref()),
        Command::Ensemble { preds, out } => {
            let members = preds.iter().map(|p| read_predictions(p)).collect::<CmdResult<Vec<_>>>()?;
            ensemble_average(&members)?.write_csv(&out)?;
            Ok(())
        }
        Command::Audit {
            preds,
            data,
            schema,
            out,
        } => {
            let schema = load_schema(&schema)?;
            let ds = load_data(&data, &schema)?;
            let volumes = ds
                .volumes()
                .ok_or_else(|| Failure::Runtime(anyhow!("audit needs a volume for every record")))?;
            let truth = Truth::from_dataset(&ds);
            let subs = preds
                .iter()
                .map(|p| {
                    Ok(Submission {
                        name: file_stem(p),
                        preds: read_predictions(p)?,
                    })
                })
                .collect::<CmdResult<Vec<_>>>()?;
            let rows = volume_correlation_audit(&subs, &volumes, &truth)?;
            write_audit_csv(&rows, &out)?;
            for r in &rows {
                println!("{}\trho={:.4}\tauroc={:.4}\tc={:.4}", r.name, r.spearman, r.auroc, r.c_index);
            }
            Ok(())
        }
    }
}

fn synth(config: &Path, out: &Path, seed: u64) -> CmdResult {
    let text = fs::read_to_string(config)
        .with_context(|| format!("reading config {}", config.display()))
        .map_err(Failure::Usage)?;
    let cfg = GeneratorConfig::from_toml_str(&text)
        .with_context(|| format!("invalid generator config {}", config.display()))
        .map_err(Failure::Usage)?;
    let ds = synthesize_cohort(&cfg, seed)?;
    write_dataset(&ds, out)?;
    ds.schema.save(sidecar(out, "schema.toml"))?;
    if let Some(truth) = &ds.truth {
        write_json(truth, &sidecar(out, "truth.json"))?;
    }
    Ok(())
}

fn train(
    kind: ModelKind,
    data: &Path,
    schema_path: &Path,
    config: Option<&Path>,
    seed: u64,
    out: &Path,
) -> CmdResult {
    let schema = load_schema(schema_path)?;
    let config = config
        .map(|p| {
            fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))
                .map_err(Failure::Usage)
        })
        .transpose()?;
    let ds = load_data(data, &schema)?;
    let files = train_model::<f64>(kind, &ds, config.as_deref(), seed)?;
    if kind == ModelKind::BaselineSuite {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        for f in &files {
            f.save(out.join(format!("{}.json", f.name)))?;
        }
    } else {
        files[0].save(out)?;
    }
    Ok(())
}

fn predict(model: &Path, data: &Path, schema: Option<&Path>, out: &Path) -> CmdResult {
    let file = SavedModel::load(model).with_context(|| format!("loading model {}", model.display()))?;
    if let Some(path) = schema {
        let schema = load_schema(path)?;
        if schema.hash() != file.schema_hash {
            return Err(SurvError::SchemaMismatch(format!(
                "{} differs from the schema the model was trained on",
                path.display()
            ))
            .into());
        }
    }
    let ds = load_data(data, &file.encoder.schema)?;
    file.predict_dataset(&ds)?.write_csv(out)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct RiskGroups {
    threshold: f64,
    n_low: usize,
    n_high: usize,
    km_low: Option<KaplanMeierCurve<f64>>,
    km_high: Option<KaplanMeierCurve<f64>>,
    hazard_ratio: Option<HazardRatio>,
}

#[derive(Debug, Serialize)]
struct Evaluation {
    n: usize,
    metrics: EvalReport<f64>,
    risk_groups: RiskGroups,
    calibration: Vec<CalibrationBin<f64>>,
}

fn evaluate_cmd(
    preds: &Path,
    truth: &Path,
    opts: &EvalOptions,
    bins: usize,
    out: &Path,
    plots: Option<&Path>,
) -> CmdResult {
    if opts.n_boot == 0 || opts.n_perm == 0 || !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(usage("--n-boot and --n-perm must be positive and --level in (0, 1)"));
    }
    if bins == 0 {
        return Err(usage("--calibration-bins must be positive"));
    }
    let truth = read_truth(truth)?;
    let preds = read_predictions(preds)?.aligned_to(&truth.ids)?;
    let metrics = evaluate(&preds, &truth, opts)?;

    let threshold = 0.5;
    let groups = stratify(&preds.prob_2yr, threshold);
    let km_of = |g: RiskGroup| -> Option<KaplanMeierCurve<f64>> {
        let rows: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
        let part = truth.subset(&rows);
        (!rows.is_empty()).then(|| kaplan_meier(&part.time, &part.event)).and_then(|r| r.ok())
    };
    let hr = match hazard_ratio(&groups, &truth.time, &truth.event) {
        Ok(hr) => Some(hr),
        Err(e) => {
            log::warn!("hazard ratio unavailable: {e}");
            None
        }
    };
    let n_high = groups.iter().filter(|&&g| g == RiskGroup::High).count();
    let report = Evaluation {
        n: truth.len(),
        metrics,
        risk_groups: RiskGroups {
            threshold,
            n_low: groups.len() - n_high,
            n_high,
            km_low: km_of(RiskGroup::Low),
            km_high: km_of(RiskGroup::High),
            hazard_ratio: hr,
        },
        calibration: calibration_curve(&preds.prob_2yr, &truth.label, bins)?,
    };
    write_json(&report, out)?;
    if let Some(dir) = plots {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, km) in [("km_low", &report.risk_groups.km_low), ("km_high", &report.risk_groups.km_high)] {
            if let Some(km) = km {
                km.write_csv_to(fs::File::create(dir.join(format!("{name}.csv"))).map_err(anyhow::Error::from)?)?;
            }
        }
        let mut w = String::from("mean_pred,frac_pos,count\n");
        for b in &report.calibration {
            w.push_str(&format!("{},{},{}\n", b.mean_pred, b.frac_pos, b.count));
        }
        fs::write(dir.join("calibration.csv"), w).map_err(anyhow::Error::from)?;
    }
    let m = &report.metrics;
    println!(
        "auroc {:.4} [{:.4}, {:.4}]  ap {:.4}  c_index {:.4}",
        m.auroc.point, m.auroc.lo, m.auroc.hi, m.ap.point, m.c_index.point
    );
    Ok(())
}

fn leaderboard_cmd(
    dir: &Path,
    truth: &Path,
    n_boot: usize,
    q: f64,
    seed: u64,
    out: &Path,
    partial_out: Option<&Path>,
) -> CmdResult {
    if n_boot == 0 || !(q > 0.0 && q < 1.0) {
        return Err(usage("--n-boot must be positive and --q in (0, 1)"));
    }
    let truth = read_truth(truth)?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Runtime(anyhow!("no prediction files in {}", dir.display())));
    }
    let subs = files
        .iter()
        .map(|p| {
            Ok(Submission {
                name: file_stem(p),
                preds: read_predictions(p)?,
            })
        })
        .collect::<CmdResult<Vec<_>>>()?;
    let rows = leaderboard(&subs, &truth, n_boot, q, seed)?;
    write_leaderboard_csv(&rows, out)?;
    for r in &rows {
        println!(
            "{:>3}  {:<28} auroc {:.4}  ap {:.4}  c {:.4}{}",
            r.rank,
            r.name,
            r.auroc,
            r.ap,
            r.c_index,
            if r.worse_than_best { "  *" } else { "" }
        );
    }
    if let Some(path) = partial_out {
        let ranked: Vec<PredictionSet<f64>> = rows
            .iter()
            .map(|r| subs.iter().find(|s| s.name == r.name).expect("ranked").preds.clone())
            .collect();
        let aurocs = partial_ensembles(&ranked, &truth)?;
        let mut w = String::from("m,auroc\n");
        for (m, a) in aurocs.iter().enumerate() {
            w.push_str(&format!("{},{}\n", m + 1, a));
        }
        fs::write(path, w).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

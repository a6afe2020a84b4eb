//! Campaign files: per-problem CSVs and reference pdf, plus a run manifest.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CampaignSummary, ProblemRun, TrialRecord};
use crate::acquisition::Criterion;
use crate::config::RunConfig;
use crate::error::{Error, Result};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRIALS_FILE: &str = "trials.csv";
pub const REFERENCE_PDF_FILE: &str = "reference_pdf.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

const SUMMARY_HEADER: [&str; 6] = [
    "iteration",
    "criterion",
    "median_error",
    "mad_half",
    "median_cn",
    "trials_ok",
];
const TRIALS_HEADER: [&str; 16] = [
    "criterion",
    "trial",
    "seed",
    "iteration",
    "n_samples",
    "signal_std",
    "lengthscale",
    "noise_std",
    "error",
    "exceedance_error",
    "c_n",
    "selected",
    "observed",
    "acquisition_value",
    "warning",
    "failure",
];

/// One parsed row of a summary CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SummaryCsvRow {
    pub iteration: usize,
    pub criterion: Criterion,
    pub median_error: f64,
    pub mad_half: f64,
    pub median_cn: f64,
    pub trials_ok: usize,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn write_summary(path: &Path, campaigns: &[(CampaignSummary, Vec<TrialRecord>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(SUMMARY_HEADER).map_err(|e| csv_error(path, e))?;
    for (summary, _) in campaigns {
        for r in &summary.rows {
            w.write_record([
                r.iteration.to_string(),
                summary.criterion.to_string(),
                num(r.median_error),
                num(r.mad_half),
                num(r.median_cn),
                r.trials_ok.to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_trials(path: &Path, campaigns: &[(CampaignSummary, Vec<TrialRecord>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(TRIALS_HEADER).map_err(|e| csv_error(path, e))?;
    for (_, records) in campaigns {
        for t in records {
            let failure = t.failure.clone().unwrap_or_default();
            let head = [t.criterion.to_string(), t.trial.to_string(), t.seed.to_string()];
            if t.iterations.is_empty() {
                let mut row: Vec<String> = head.to_vec();
                row.resize(TRIALS_HEADER.len() - 1, String::new());
                row.push(failure.clone());
                w.write_record(&row).map_err(|e| csv_error(path, e))?;
            }
            for it in &t.iterations {
                let selected = it
                    .selected
                    .as_ref()
                    .map(|x| x.iter().map(|v| num(*v)).collect::<Vec<_>>().join(";"))
                    .unwrap_or_default();
                let mut row = head.to_vec();
                row.extend([
                    it.iteration.to_string(),
                    it.n_samples.to_string(),
                    num(it.signal_std),
                    num(it.lengthscale),
                    num(it.noise_std),
                    num(it.error),
                    num(it.exceedance_error),
                    num(it.c_n),
                    selected,
                    opt(it.observed),
                    opt(it.acquisition_value),
                    it.warning.clone().unwrap_or_default(),
                    failure.clone(),
                ]);
                w.write_record(&row).map_err(|e| csv_error(path, e))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CampaignStatus<'a> {
    criterion: Criterion,
    trials: usize,
    failed: usize,
    unreliable: bool,
    median_kappa: Option<f64>,
    failures: Vec<&'a str>,
}

/// Writes `<out>/<problem>/{summary.csv, trials.csv, reference_pdf.txt}` and `<out>/manifest.json`.
pub fn write_run(out: &Path, cfg: &RunConfig, runs: &[ProblemRun]) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut problems = serde_json::Map::new();
    for run in runs {
        let dir = out.join(&run.name);
        fs::create_dir_all(&dir)?;
        write_summary(&dir.join(SUMMARY_FILE), &run.campaigns)?;
        write_trials(&dir.join(TRIALS_FILE), &run.campaigns)?;
        run.reference
            .pdf
            .write_columns(BufWriter::new(File::create(dir.join(REFERENCE_PDF_FILE))?))?;
        let r = &run.reference;
        let campaigns: Vec<CampaignStatus> = run
            .campaigns
            .iter()
            .map(|(s, records)| CampaignStatus {
                criterion: s.criterion,
                trials: s.trials,
                failed: s.failed,
                unreliable: s.unreliable,
                median_kappa: s.median_kappa,
                failures: records.iter().filter_map(|t| t.failure.as_deref()).collect(),
            })
            .collect();
        problems.insert(
            run.name.clone(),
            json!({
                "input_dim": run.input_dim,
                "files": [
                    format!("{}/{SUMMARY_FILE}", run.name),
                    format!("{}/{TRIALS_FILE}", run.name),
                    format!("{}/{REFERENCE_PDF_FILE}", run.name),
                ],
                "reference": {
                    "seed": r.seed,
                    "samples": r.outputs.len(),
                    "failed": r.failed,
                    "kde": {
                        "kernel": "gaussian",
                        "bandwidth_rule": "silverman",
                        "bandwidth": r.bandwidth(),
                        "floor": r.pdf.floor,
                        "grid": { "lo": r.grid().lo, "hi": r.grid().hi, "n_points": r.grid().n_points },
                    },
                    "quantile_level": r.quantile_level,
                    "s_star": r.s_star,
                    "exceedance": r.exceedance,
                },
                "campaigns": campaigns,
            }),
        );
    }
    let manifest = json!({
        "software": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.campaign.seed,
        "config_hash": cfg.hash(),
        "config": cfg.to_json(),
        "problems": problems,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(out.join(MANIFEST_FILE), text + "\n")?;
    Ok(())
}

/// Reads a summary CSV, naming the file on missing columns or bad values.
pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryCsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if let Some(missing) = SUMMARY_HEADER.iter().find(|h| !headers.iter().any(|c| c == **h)) {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: format!("missing column `{missing}`"),
        });
    }
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_error(path, e))
}

//! The `reports/` directory: one JSON file and one reproducer graph per bug,
//! plus a `campaign.json` summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::campaign::{CampaignConfig, CampaignMetrics};
use super::store::BugReport;
use crate::serial;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {cause}")]
    Corrupt { path: PathBuf, cause: String },
    #[error("{0} already contains reports (pass --force to overwrite)")]
    Exists(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    #[serde(flatten)]
    report: BugReport,
    reproducer: String,
    metrics: CampaignMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BugIndexEntry {
    pub key: String,
    pub kind: String,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub config: CampaignConfig,
    pub metrics: CampaignMetrics,
    pub bugs: Vec<BugIndexEntry>,
}

/// File stem for a report: kind plus a short hash of the dedup key.
pub fn report_stem(report: &BugReport) -> String {
    let digest = hex::encode(Sha256::digest(report.key.as_bytes()));
    format!("{}-{}", report.verdict_kind(), &digest[..12])
}

pub fn write_reports(
    dir: &Path,
    config: &CampaignConfig,
    metrics: &CampaignMetrics,
    bugs: &[BugReport],
    force: bool,
) -> Result<CampaignSummary, ReportError> {
    let summary_path = dir.join("campaign.json");
    if !force && summary_path.exists() {
        return Err(ReportError::Exists(dir.to_path_buf()));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut index = Vec::with_capacity(bugs.len());
    for bug in bugs {
        let stem = report_stem(bug);
        let repro_name = format!("{stem}.cg.json");
        let repro_path = dir.join(&repro_name);
        fs::write(
            &repro_path,
            serial::serialize_with_provenance(&bug.reproducer, &bug.provenance),
        )
        .map_err(io_err(&repro_path))?;
        let file = format!("{stem}.json");
        let path = dir.join(&file);
        let doc = ReportFile {
            report: bug.clone(),
            reproducer: repro_name,
            metrics: metrics.clone(),
        };
        let text = serde_json::to_string_pretty(&doc).expect("reports serialize");
        fs::write(&path, text).map_err(io_err(&path))?;
        index.push(BugIndexEntry {
            key: bug.key.clone(),
            kind: bug.verdict_kind().to_string(),
            file,
        });
    }
    let summary = CampaignSummary {
        config: config.clone(),
        metrics: metrics.clone(),
        bugs: index,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&summary_path, text).map_err(io_err(&summary_path))?;
    Ok(summary)
}

/// Loads a bug report and its reproducer graph.
pub fn read_report(path: &Path) -> Result<BugReport, ReportError> {
    let corrupt = |p: &Path, cause: String| ReportError::Corrupt {
        path: p.to_path_buf(),
        cause,
    };
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let doc: ReportFile = serde_json::from_str(&text).map_err(|e| corrupt(path, e.to_string()))?;
    let repro_path = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&doc.reproducer);
    let repro = fs::read_to_string(&repro_path).map_err(io_err(&repro_path))?;
    let graph = serial::parse(&repro).map_err(|e| corrupt(&repro_path, e.to_string()))?;
    let mut report = doc.report;
    report.reproducer = graph;
    Ok(report)
}

pub fn read_summary(dir: &Path) -> Result<CampaignSummary, ReportError> {
    let path = dir.join("campaign.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| ReportError::Corrupt {
        path,
        cause: e.to_string(),
    })
}

//! CSV time series, JSON summaries and run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunSpec;
use crate::error::Result;
use crate::metrics::{compare_online_offline, cost_recovery_report, summarize, CostRecoveryReport, Summary};
use crate::run::RunOutput;
use crate::scenario::RNG_ALGORITHM;
use crate::trajectory::Trajectory;

pub const CSV_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Bumped whenever the column layout changes.
pub const CSV_LAYOUT_VERSION: u32 = 1;

const SIGNIFICANT_DIGITS: i32 = 12;

/// Plain decimal with 12 significant digits, e.g. `27.8898565067`.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // Let the scientific formatter do the rounding, then read off where the
    // leading digit ended up.
    let sci = format!("{:.*e}", (SIGNIFICANT_DIGITS - 1) as usize, x);
    let exp: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .unwrap_or(0);
    let decimals = (SIGNIFICANT_DIGITS - 1 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn csv_header(n_generators: usize, with_offline: bool) -> Vec<String> {
    let mut cols: Vec<String> = ["t", "omega_hz", "freq_hz", "delta_mw", "lambda_rt", "pi"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((1..=n_generators).map(|i| format!("g_{i}")));
    cols.extend((1..=n_generators).map(|i| format!("profit_{i}")));
    if with_offline {
        cols.push("lambda_offline".into());
    }
    cols
}

pub fn write_csv<W: Write>(out: W, traj: &Trajectory, offline: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(traj.n_generators(), offline.is_some()))?;
    let f0 = traj.grid.f_nominal;
    for (k, rec) in traj.records.iter().enumerate() {
        let mut row = vec![
            format_sig(rec.t),
            format_sig(rec.omega),
            format_sig(f0 + rec.omega),
            format_sig(rec.delta),
            format_sig(rec.lambda),
            format_sig(rec.pi),
        ];
        row.extend(rec.g.iter().map(|&v| format_sig(v)));
        row.extend(rec.profit.iter().map(|&v| format_sig(v)));
        if let Some(off) = offline {
            row.push(format_sig(off[k]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_bytes(traj: &Trajectory, offline: Option<&[f64]>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(&mut buf, traj, offline)?;
    Ok(buf)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    /// SHA-256 of the effective configuration and schedule.
    pub config_hash: String,
    pub scenario_id: String,
    pub seed: u64,
    pub mode: String,
    pub tool_version: String,
    pub rng_algorithm: String,
    pub csv_layout: u32,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<String>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn config_hash(spec: &RunSpec) -> String {
    let canonical = serde_json::to_vec(spec).expect("run spec serializes");
    Sha256::digest(&canonical)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl RunManifest {
    pub fn new(spec: &RunSpec, started_unix: f64) -> Self {
        Self {
            config_hash: config_hash(spec),
            scenario_id: spec.config.scenario_id.clone(),
            seed: spec.config.seed,
            mode: spec.config.mode.as_str().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            rng_algorithm: RNG_ALGORITHM.to_string(),
            csv_layout: CSV_LAYOUT_VERSION,
            started_unix,
            finished_unix: started_unix,
            outputs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfflineSummary {
    pub interval: f64,
    pub online_negative_fraction: f64,
    pub offline_negative_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryDocument {
    pub manifest: RunManifest,
    pub lambda_da: f64,
    pub summary: Summary,
    pub cost_recovery: CostRecoveryReport,
    pub offline: Option<OfflineSummary>,
}

pub fn summary_document(manifest: RunManifest, out: &RunOutput) -> Result<SummaryDocument> {
    let traj = &out.trajectory;
    let offline = out
        .baseline
        .as_ref()
        .map(|b| -> Result<OfflineSummary> {
            let cmp = compare_online_offline(traj, b)?;
            Ok(OfflineSummary {
                interval: b.interval,
                online_negative_fraction: cmp.online_negative_fraction(),
                offline_negative_fraction: cmp.offline_negative_fraction(),
            })
        })
        .transpose()?;
    Ok(SummaryDocument {
        manifest,
        lambda_da: traj.lambda_da,
        summary: summarize(traj),
        cost_recovery: cost_recovery_report(traj),
        offline,
    })
}

/// Writes the CSV, summary and manifest into `dir`; returns the manifest.
pub fn write_artifacts(dir: &Path, spec: &RunSpec, out: &RunOutput, started_unix: f64) -> Result<RunManifest> {
    std::fs::create_dir_all(dir)?;
    let paths: Vec<PathBuf> = [CSV_FILE, SUMMARY_FILE, MANIFEST_FILE]
        .iter()
        .map(|f| dir.join(f))
        .collect();

    let offline = out.offline_prices();
    let file = std::fs::File::create(&paths[0])?;
    write_csv(std::io::BufWriter::new(file), &out.trajectory, offline.as_deref())?;

    let mut manifest = RunManifest::new(spec, started_unix);
    manifest.outputs = paths.iter().map(|p| p.display().to_string()).collect();
    manifest.finished_unix = unix_now();

    let doc = summary_document(manifest.clone(), out)?;
    std::fs::write(&paths[1], serde_json::to_vec_pretty(&doc)?)?;
    std::fs::write(&paths[2], serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

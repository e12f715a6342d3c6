//! Result files. Estimates and manifests written by `run` contain no
//! timings or thread counts, so they are byte-identical across thread
//! counts for a fixed seed; timings go to a separate file.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;
use crate::pipeline::{IreTable, PilotOutcome, RunResult};

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    config: RunConfig,
    seeds: Vec<u64>,
    result: &'a T,
}

/// Config with the thread count cleared, for thread-independent manifests.
fn manifest_config(cfg: &RunConfig) -> RunConfig {
    RunConfig { threads: 1, out: None, ..cfg.clone() }
}

pub fn write_estimates<W: std::io::Write>(w: W, r: &RunResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["functional", "estimate", "v_n", "n_v_n", "se_batch"])?;
    for (j, f) in r.functionals.iter().enumerate() {
        w.write_record([
            f.clone(),
            format!("{:e}", r.estimates[j]),
            format!("{:e}", r.v_n[j]),
            format!("{:e}", r.n_v_n[j]),
            format!("{:e}", r.se_batch[j]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `estimates.csv`, `manifest.json` and `timings.json` under `dir`.
pub fn write_run(dir: &Path, cfg: &RunConfig, r: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_estimates(fs::File::create(dir.join("estimates.csv"))?, r)?;
    let mut det = r.clone();
    det.phase1_s = 0.0;
    det.phase2_s = 0.0;
    det.overhead_s = 0.0;
    det.total_s = 0.0;
    let manifest = Manifest { config: manifest_config(cfg), seeds: vec![cfg.seed], result: &det };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    let timings = serde_json::json!({
        "threads": cfg.threads,
        "phase1_s": r.phase1_s,
        "phase2_s": r.phase2_s,
        "overhead_s": r.overhead_s,
        "total_s": r.total_s,
    });
    fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&timings)?)?;
    Ok(())
}

/// One row per replicate and functional.
pub fn write_replicates<W: std::io::Write>(w: W, runs: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["rep", "functional", "estimate", "n_v_n", "phase1_s", "phase2_s", "acc_rate"])?;
    for (rep, r) in runs.iter().enumerate() {
        for (j, f) in r.functionals.iter().enumerate() {
            w.write_record([
                rep.to_string(),
                f.clone(),
                format!("{:e}", r.estimates[j]),
                format!("{:e}", r.n_v_n[j]),
                format!("{}", r.phase1_s),
                format!("{}", r.phase2_s),
                format!("{}", r.acceptance_rate),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_ire_summary<W: std::io::Write>(w: W, table: &IreTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["label", "functional", "mse", "mean_time", "ire", "rescaled"])?;
    for r in &table.rows {
        w.write_record([
            r.label.clone(),
            r.functional.clone(),
            format!("{:e}", r.mse),
            format!("{}", r.mean_time),
            format!("{:e}", r.ire),
            r.rescaled.map(|v| format!("{v:e}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `replicates.csv`, `ire_summary.csv` and `manifest.json` under `dir`.
pub fn write_replicate_set(dir: &Path, cfg: &RunConfig, runs: &[RunResult], table: &IreTable) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_replicates(fs::File::create(dir.join("replicates.csv"))?, runs)?;
    write_ire_summary(fs::File::create(dir.join("ire_summary.csv"))?, table)?;
    let manifest =
        Manifest { config: manifest_config(cfg), seeds: runs.iter().map(|r| r.seed).collect(), result: &table.truth };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn write_pilot(dir: &Path, cfg: &RunConfig, p: &PilotOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest { config: manifest_config(cfg), seeds: vec![cfg.seed], result: p };
    fs::write(dir.join("pilot.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

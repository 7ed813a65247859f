//! CSV curves, the summary file and the provenance manifest.

use std::fs;
use std::path::{Path, PathBuf};

use rpod_core::eval::ComplexityReport;
use rpod_core::io::fmt17;
use rpod_core::rom::PhaseTimings;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::experiment::{log_slope, Evaluation, MethodRun, Model, SweepRow};
use crate::CliError;

fn csv_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

/// Writes `header` then one row per index of `index`, taking column `c` from `columns[c]`.
pub fn write_curves(path: &Path, header: &[String], index: &[String], columns: &[&[f64]]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for (k, idx) in index.iter().enumerate() {
        let mut row = Vec::with_capacity(columns.len() + 1);
        row.push(idx.clone());
        row.extend(columns.iter().map(|c| fmt17(c[k])));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| csv_err(path, e))?;
    Ok(())
}

fn header(first: &str, truth: bool, runs: &[MethodRun]) -> Vec<String> {
    let mut h = vec![first.to_string()];
    if truth {
        h.push("full".into());
    }
    h.extend(runs.iter().map(|r| r.label.clone()));
    h
}

fn with_truth<'a>(truth: &'a [f64], rest: &'a [Vec<f64>]) -> Vec<&'a [f64]> {
    std::iter::once(truth)
        .chain(rest.iter().map(|v| v.as_slice()))
        .collect()
}

fn slices(rest: &[Vec<f64>]) -> Vec<&[f64]> {
    rest.iter().map(|v| v.as_slice()).collect()
}

/// The evaluation curves; returns the file names written.
pub fn write_evaluation(dir: &Path, runs: &[MethodRun], ev: &Evaluation) -> Result<Vec<String>, CliError> {
    let steps: Vec<String> = (1..=ev.horizon).map(|i| i.to_string()).collect();
    let ksteps: Vec<String> = (1..=ev.excitation_steps).map(|i| i.to_string()).collect();
    let omegas: Vec<String> = ev.grid.iter().map(|w| fmt17(*w)).collect();
    let files = [
        (
            "markov_error.csv",
            header("step", false, runs),
            &steps,
            slices(&ev.markov_error),
        ),
        (
            "markov_norm.csv",
            header("step", true, runs),
            &steps,
            with_truth(&ev.truth_markov_norm, &ev.markov_norm),
        ),
        (
            "output_error.csv",
            header("step", false, runs),
            &ksteps,
            slices(&ev.output_error),
        ),
        (
            "output_norm.csv",
            header("step", true, runs),
            &ksteps,
            with_truth(&ev.truth_output_norm, &ev.output_norm),
        ),
        (
            "frequency_error.csv",
            header("omega", false, runs),
            &omegas,
            slices(&ev.e_fre),
        ),
        (
            "frequency_response.csv",
            header("omega", true, runs),
            &omegas,
            with_truth(&ev.truth_response, &ev.response),
        ),
    ];
    let mut names = Vec::new();
    for (name, h, index, cols) in files {
        write_curves(&dir.join(name), &h, index, &cols)?;
        names.push(name.to_string());
    }
    let path = dir.join("scalars.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record([
        "method",
        "kind",
        "order",
        "e_output",
        "max_markov_error",
        "max_e_fre",
        "sigma_next",
        "hankel_rows",
        "hankel_cols",
    ])
    .map_err(|e| csv_err(&path, e))?;
    for (k, r) in runs.iter().enumerate() {
        let p = &r.rom.provenance;
        w.write_record([
            r.label.clone(),
            r.rom.method.name().to_string(),
            r.rom.order().to_string(),
            fmt17(ev.e_output[k]),
            fmt17(ev.markov_error[k].iter().copied().fold(0.0, f64::max)),
            fmt17(ev.e_fre[k].iter().copied().fold(0.0, f64::max)),
            fmt17(p.sigma_next),
            p.hankel_dims.0.to_string(),
            p.hankel_dims.1.to_string(),
        ])
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| csv_err(&path, e))?;
    names.push("scalars.csv".into());
    Ok(names)
}

pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> Result<String, CliError> {
    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["method", "eps", "order", "markov_error", "sigma_next"])
        .map_err(|e| csv_err(&path, e))?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            fmt17(r.eps),
            r.order.to_string(),
            fmt17(r.markov_error),
            fmt17(r.sigma_next),
        ])
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| csv_err(&path, e))?;
    Ok("sweep.csv".into())
}

#[derive(Serialize)]
pub struct ModelSummary {
    pub kind: String,
    pub description: String,
    pub states: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub dt: f64,
    pub settling_steps: usize,
}

impl ModelSummary {
    pub fn new(m: &Model, settling: usize) -> Self {
        Self {
            kind: m.kind.into(),
            description: m.description.clone(),
            states: m.system.n(),
            inputs: m.system.p(),
            outputs: m.system.q(),
            dt: m.dt,
            settling_steps: settling,
        }
    }
}

#[derive(Serialize)]
pub struct TimingSummary {
    pub generate_x: f64,
    pub generate_z: f64,
    pub output_projection: f64,
    pub construct_hankel: f64,
    pub svd: f64,
    pub assemble: f64,
    pub phase_sum: f64,
    pub total: f64,
}

impl From<&PhaseTimings> for TimingSummary {
    fn from(t: &PhaseTimings) -> Self {
        let r = rpod_core::eval::timing_report(t);
        Self {
            generate_x: t.generate_x,
            generate_z: t.generate_z,
            output_projection: t.projection,
            construct_hankel: t.construct_hankel,
            svd: t.svd,
            assemble: t.assemble,
            phase_sum: r.phase_sum,
            total: r.total,
        }
    }
}

#[derive(Serialize)]
pub struct MethodSummary {
    pub label: String,
    pub method: String,
    pub order: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub requested_order: Option<usize>,
    pub numerical_rank: usize,
    pub hankel: String,
    pub sigma_next: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_output: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_markov_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_e_fre: Option<f64>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_seconds: Option<TimingSummary>,
}

impl MethodSummary {
    pub fn new(run: &MethodRun, ev: Option<(&Evaluation, usize)>) -> Self {
        let p = &run.rom.provenance;
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        Self {
            label: run.label.clone(),
            method: run.rom.method.name().into(),
            order: run.rom.order(),
            requested_order: p.requested_order,
            numerical_rank: p.numerical_rank,
            hankel: format!("{} x {}", p.hankel_dims.0, p.hankel_dims.1),
            sigma_next: p.sigma_next,
            e_output: ev.map(|(e, k)| e.e_output[k]),
            max_markov_error: ev.map(|(e, k)| max(&e.markov_error[k])),
            max_e_fre: ev.map(|(e, k)| max(&e.e_fre[k])),
            warnings: p.warnings.clone(),
            timings_seconds: run.timings.as_ref().map(TimingSummary::from),
        }
    }
}

#[derive(Serialize)]
pub struct ComplexitySummary {
    pub rpod_star_hankel: String,
    pub output_projection_hankel: String,
    pub rpod_star_build_flops: f64,
    pub rpod_star_svd_flops: f64,
    pub output_projection_build_flops: f64,
    pub output_projection_svd_flops: f64,
}

impl From<&ComplexityReport> for ComplexitySummary {
    fn from(c: &ComplexityReport) -> Self {
        Self {
            rpod_star_hankel: format!("{} x {}", c.rpod_hankel.0, c.rpod_hankel.1),
            output_projection_hankel: format!("{} x {}", c.op_hankel.0, c.op_hankel.1),
            rpod_star_build_flops: c.rpod_build_flops,
            rpod_star_svd_flops: c.rpod_svd_flops,
            output_projection_build_flops: c.op_build_flops,
            output_projection_svd_flops: c.op_svd_flops,
        }
    }
}

#[derive(Serialize)]
pub struct SweepSlope {
    pub label: String,
    pub markov_error_slope: Option<f64>,
    pub sigma_next_slope: Option<f64>,
}

pub fn sweep_slopes(rows: &[SweepRow]) -> Vec<SweepSlope> {
    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    labels
        .into_iter()
        .map(|l| {
            let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.label == l).collect();
            let eps: Vec<f64> = mine.iter().map(|r| r.eps).collect();
            let err: Vec<f64> = mine.iter().map(|r| r.markov_error).collect();
            let sig: Vec<f64> = mine.iter().map(|r| r.sigma_next).collect();
            SweepSlope {
                label: l.to_string(),
                markov_error_slope: log_slope(&eps, &err),
                sigma_next_slope: log_slope(&eps, &sig),
            }
        })
        .collect()
}

/// Human-oriented digest; timings make it the only non-reproducible artifact.
#[derive(Serialize)]
pub struct Summary {
    pub command: String,
    pub model: ModelSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excitation_steps: Option<usize>,
    pub methods: Vec<MethodSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complexity: Option<ComplexitySummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepSlope>,
}

#[derive(Serialize)]
pub struct SeedRecord {
    pub method: String,
    pub seed: u64,
}

#[derive(Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: String,
    pub config_sha256: String,
    pub seed: u64,
    pub excitation_seed: u64,
    pub method_seeds: Vec<SeedRecord>,
    pub threads: String,
    pub artifacts: Vec<String>,
}

pub fn sha256_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_toml<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let text = toml::to_string(v).map_err(|e| CliError::Config(format!("encoding {}: {e}", path.display())))?;
    fs::write(path, text).map_err(|e| csv_err(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| csv_err(dir, e))?;
    Ok(dir.to_path_buf())
}

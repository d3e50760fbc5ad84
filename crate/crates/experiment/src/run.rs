//! Sweep orchestration and the CSV and manifest outputs.

use std::fs;
use std::path::{Path, PathBuf};

use fdd_core::metrics::MeanStderr;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pipeline::{evaluate_point, PointResult, SampleSet, METRIC_CORRELATION, METRIC_EFFECTIVE_RATE, METRIC_SPECTRAL_EFFICIENCY};
use crate::plan::ExperimentPlan;
use crate::{ExperimentError, Result, Stage};

/// Bumped whenever the CSV columns or their meaning change.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment_id: String,
    pub sweep_name: String,
    pub sweep_value: f64,
    pub method: String,
    pub n_bs: usize,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PointSeeds {
    sweep_value: f64,
    n_bs: usize,
    geometry: usize,
    scenario_seed: u64,
    split_seed: u64,
    noise_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    csv_schema_version: u32,
    generator_version: String,
    experiment_id: String,
    csv: String,
    complete: bool,
    rows: usize,
    points: Vec<PointSeeds>,
    plan: ExperimentPlan,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    point: usize,
    value: f64,
    n_bs: usize,
    geometry: usize,
}

fn jobs(plan: &ExperimentPlan) -> Vec<Job> {
    // R sweeps evaluate every R from one trained model, so there is a single
    // point per antenna count.
    let values = if plan.experiment_id.sweeps_r() { vec![f64::NAN] } else { plan.sweep_values.clone() };
    let mut out = Vec::new();
    let mut point = 0;
    for &value in &values {
        for n_bs in plan.antenna_counts() {
            for geometry in 0..plan.geometries {
                out.push(Job { point, value, n_bs, geometry });
            }
            point += 1;
        }
    }
    out
}

/// Pools geometries of one point into rows, in sweep then series order.
fn point_rows(plan: &ExperimentPlan, n_bs: usize, results: Vec<Vec<PointResult>>) -> Vec<ResultRow> {
    let mut pooled: Vec<PointResult> = Vec::new();
    for res in results.into_iter().flatten() {
        match pooled.iter_mut().find(|p| p.sweep_value.to_bits() == res.sweep_value.to_bits() && p.label == res.label) {
            Some(p) => {
                p.samples.correlation.extend(res.samples.correlation);
                p.samples.spectral_efficiency.extend(res.samples.spectral_efficiency);
                p.samples.effective_rate.extend(res.samples.effective_rate);
            }
            None => pooled.push(res),
        }
    }
    let position = |v: f64| plan.sweep_values.iter().position(|&s| s == v).unwrap_or(usize::MAX);
    pooled.sort_by_key(|p| position(p.sweep_value));
    let mut rows = Vec::new();
    for p in pooled {
        for (metric, samples) in [
            (METRIC_CORRELATION, &p.samples.correlation),
            (METRIC_SPECTRAL_EFFICIENCY, &p.samples.spectral_efficiency),
            (METRIC_EFFECTIVE_RATE, &p.samples.effective_rate),
        ] {
            let s = MeanStderr::from_samples(samples);
            rows.push(ResultRow {
                experiment_id: plan.experiment_id.as_str().into(),
                sweep_name: plan.experiment_id.sweep_name().into(),
                sweep_value: p.sweep_value,
                method: p.label.clone(),
                n_bs,
                metric: metric.into(),
                mean: s.mean,
                stderr: s.stderr,
                n: s.n,
            });
        }
    }
    rows
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?)
}

/// Runs every sweep point (in parallel on the current rayon pool), writes
/// `<experiment_id>.csv` and `<experiment_id>_manifest.json` under `out_dir`.
///
/// On failure, rows of the sweep points preceding the failing one are still
/// written and the error reports whether any were.
pub fn run_experiment(plan: &ExperimentPlan, out_dir: &Path) -> Result<RunSummary> {
    plan.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| ExperimentError::stage(Stage::Output, format!("{}: {e}", out_dir.display())))?;
    let id = plan.experiment_id.as_str();
    let csv_path = out_dir.join(format!("{id}.csv"));
    let manifest_path = out_dir.join(format!("{id}_manifest.json"));

    let jobs = jobs(plan);
    log::info!("{id}: {} jobs", jobs.len());
    let mut outcomes: Vec<Option<Result<Vec<PointResult>>>> = jobs
        .par_iter()
        .map(|j| {
            log::info!("{id}: value {} N_BS {} geometry {}", j.value, j.n_bs, j.geometry);
            Some(evaluate_point(plan, j.value, j.n_bs, j.geometry))
        })
        .collect();

    let mut rows = Vec::new();
    let mut failure = None;
    let mut points = Vec::new();
    let mut i = 0;
    while i < jobs.len() {
        let point = jobs[i].point;
        let mut group = Vec::new();
        while i < jobs.len() && jobs[i].point == point {
            let j = jobs[i];
            let (scenario, _) = plan.point(j.value, j.n_bs, j.geometry);
            let seeds = SampleSet::new(plan, &scenario, j.geometry);
            points.push(PointSeeds {
                sweep_value: j.value,
                n_bs: j.n_bs,
                geometry: j.geometry,
                scenario_seed: seeds.scenario_seed,
                split_seed: seeds.split_seed,
                noise_seed: seeds.noise_seed,
            });
            group.push(outcomes[i].take().expect("each job is visited once"));
            i += 1;
        }
        if failure.is_some() {
            continue;
        }
        match group.into_iter().collect::<Result<Vec<_>>>() {
            Ok(ok) => rows.extend(point_rows(plan, jobs[i - 1].n_bs, ok)),
            Err(e) => failure = Some(e),
        }
    }

    write_csv(&csv_path, &rows)?;
    let manifest = Manifest {
        csv_schema_version: CSV_SCHEMA_VERSION,
        generator_version: env!("CARGO_PKG_VERSION").into(),
        experiment_id: id.into(),
        csv: csv_path.file_name().unwrap().to_string_lossy().into_owned(),
        complete: failure.is_none(),
        rows: rows.len(),
        points,
        plan: plan.clone(),
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    if let Some(e) = failure {
        return Err(ExperimentError::Aborted { source: Box::new(e), partial: !rows.is_empty() });
    }
    Ok(RunSummary { csv_path, manifest_path, rows })
}

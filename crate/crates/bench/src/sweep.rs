use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use hybrid_demix::subspace::BasisCache;
use hybrid_demix::{Error, Result};

use crate::config::{ExperimentConfig, SweepPoint};
use crate::trial::{run_trial, sweep_value, trial_seed, TrialContext, TrialRecord};

pub const CSV_HEADER: &str = "config_hash,sweep_axis,sweep_value,trial,seed,method,nmse,\
angle_rmse_rad,range_rel_err,misses,false_alarms,solver_status,iters,wall_ms";

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "hybrid-demix-run-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPoint {
    pub index: usize,
    pub value: String,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format: String,
    pub library_version: String,
    pub config_hash: String,
    /// Whether `wall_ms` holds measured times (otherwise zeros).
    pub timing: bool,
    pub results: String,
    pub points: Vec<ManifestPoint>,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig, timing: bool) -> Self {
        let points = config
            .points()
            .iter()
            .map(|p| ManifestPoint {
                index: p.index,
                value: sweep_value(config, p),
                seeds: (0..config.trials)
                    .map(|t| trial_seed(config.base_seed, p.index, t))
                    .collect(),
            })
            .collect();
        Self {
            format: MANIFEST_FORMAT.into(),
            library_version: hybrid_demix::VERSION.into(),
            config_hash: config.hash(),
            timing,
            results: RESULTS_FILE.into(),
            points,
            config: config.clone(),
        }
    }
}

/// Parse either a bare config or a run manifest (whose embedded config is returned).
pub fn load_config(text: &str) -> Result<ExperimentConfig> {
    match ExperimentConfig::from_json(text) {
        Ok(c) => Ok(c),
        Err(config_err) => match serde_json::from_str::<RunManifest>(text) {
            Ok(m) => {
                m.config.validate()?;
                Ok(m.config)
            }
            Err(_) => Err(config_err),
        },
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Worker threads; 0 uses rayon's default.
    pub jobs: usize,
    /// Record measured wall time; when false `wall_ms` is zero so reruns are bitwise equal.
    pub timing: bool,
    pub basis_cache: Option<PathBuf>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            jobs: 0,
            timing: true,
            basis_cache: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub records: Vec<TrialRecord>,
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

/// Serialize records in the results schema, one row per (trial, method).
pub fn write_csv<W: Write>(records: &[TrialRecord], timing: bool, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        for o in &r.outcomes {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.config_hash,
                r.sweep_axis,
                r.sweep_value,
                r.trial,
                r.seed,
                o.method.as_str(),
                fmt_f64(o.nmse),
                fmt_f64(o.angle_rmse_rad),
                fmt_f64(o.range_rel_err),
                o.misses,
                o.false_alarms,
                o.solver_status,
                o.iters,
                if timing { format!("{:.3}", o.wall_ms) } else { "0".into() },
            )?;
        }
    }
    Ok(())
}

/// Run every `(point, trial)` cell and collect records sorted by point, then trial.
pub fn collect_records(ctx: &TrialContext, jobs: usize) -> Result<Vec<TrialRecord>> {
    let cells: Vec<(SweepPoint, usize)> = ctx
        .config
        .points()
        .into_iter()
        .flat_map(|p| (0..ctx.config.trials).map(move |t| (p, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut records = pool.install(|| {
        cells
            .par_iter()
            .map(|(p, t)| run_trial(ctx, p, *t))
            .collect::<Result<Vec<_>>>()
    })?;
    records.sort_by_key(|r| (r.point, r.trial));
    Ok(records)
}

/// Execute the sweep and write `results.csv` and `manifest.json` into `out_dir`.
pub fn run_sweep(config: &ExperimentConfig, out_dir: &Path, opts: &SweepOptions) -> Result<SweepOutput> {
    let cache = opts.basis_cache.as_ref().map(BasisCache::new);
    let ctx = TrialContext::new(config, cache.as_ref())?;
    let records = collect_records(&ctx, opts.jobs)?;
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(RESULTS_FILE);
    let mut buf = Vec::new();
    write_csv(&records, opts.timing, &mut buf)?;
    fs::write(&csv_path, buf)?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let manifest = RunManifest::new(config, opts.timing);
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(SweepOutput {
        records,
        csv_path,
        manifest_path,
    })
}

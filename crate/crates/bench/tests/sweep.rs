use std::fs;

use hybrid_demix_bench::config::{ExperimentConfig, Method, SplitRule, Sweep};
use hybrid_demix_bench::sweep::{load_config, run_sweep, RunManifest, SweepOptions, CSV_HEADER};

fn small() -> ExperimentConfig {
    let mut c = ExperimentConfig::desk();
    c.name = "small".into();
    c.system.num_antennas = 16;
    c.subspace.rank = 4;
    c.subspace.grid_points = 512;
    c.channel.num_paths = 2;
    c.sweep = Sweep::SnrDb {
        values: vec![Some(10.0), Some(20.0)],
    };
    c.trials = 3;
    c.methods = vec![Method::Anm, Method::Omp];
    c
}

fn opts() -> SweepOptions {
    SweepOptions {
        jobs: 1,
        timing: false,
        basis_cache: None,
    }
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn sweep_writes_one_row_per_trial_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let out = run_sweep(&cfg, dir.path(), &opts()).unwrap();
    let csv = fs::read_to_string(&out.csv_path).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    let rows = rows(&csv);
    assert_eq!(rows.len(), 2 * 3 * 2);
    for r in &rows {
        assert_eq!(r.len(), 14);
        assert_eq!(r[0], cfg.hash());
        assert_eq!(r[1], "snr_db");
        assert!(r[6].parse::<f64>().unwrap() >= 0.0);
        assert_eq!(r[13], "0");
    }
    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(&out.manifest_path).unwrap()).unwrap();
    assert_eq!(manifest.points.len(), 2);
    assert_eq!(manifest.points[0].seeds.len(), 3);
    assert_eq!(manifest.points[1].seeds[2].to_string(), rows[10][4]);
}

#[test]
fn rerun_from_manifest_is_bitwise_identical() {
    let cfg = small();
    let a = tempfile::tempdir().unwrap();
    let first = run_sweep(&cfg, a.path(), &opts()).unwrap();
    let text = fs::read_to_string(&first.manifest_path).unwrap();
    let again = load_config(&text).unwrap();
    assert_eq!(again, cfg);
    let b = tempfile::tempdir().unwrap();
    let second = run_sweep(&again, b.path(), &SweepOptions { jobs: 2, ..opts() }).unwrap();
    assert_eq!(
        fs::read(&first.csv_path).unwrap(),
        fs::read(&second.csv_path).unwrap()
    );
}

#[test]
fn noiseless_far_only_recovers_channel() {
    let mut cfg = small();
    cfg.system.num_antennas = 32;
    cfg.channel.split = SplitRule::FarOnly;
    cfg.channel.sampling.min_separation = 4.0;
    cfg.solver.tau = 10.0;
    cfg.sweep = Sweep::SnrDb { values: vec![None] };
    cfg.methods = vec![Method::Anm];
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep(&cfg, dir.path(), &opts()).unwrap();
    for r in &out.records {
        assert_eq!(r.sweep_value, "inf");
        let o = &r.outcomes[0];
        assert_eq!(o.solver_status, "converged");
        assert!(o.nmse < 1e-4, "trial {}: nmse {}", r.trial, o.nmse);
        assert_eq!(o.misses, 0);
    }
}

#[test]
fn iteration_cap_is_flagged() {
    let mut cfg = small();
    cfg.solver.max_iters = 5;
    cfg.trials = 1;
    cfg.methods = vec![Method::Anm];
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep(&cfg, dir.path(), &opts()).unwrap();
    for r in &out.records {
        assert_eq!(r.outcomes[0].solver_status, "max_iters");
        assert_eq!(r.outcomes[0].iters, 5);
        assert!(r.outcomes[0].nmse.is_finite());
    }
}

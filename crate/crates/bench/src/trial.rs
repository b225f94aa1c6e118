use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hybrid_demix::demix::{estimate_channel, nmse, DemixEstimate};
use hybrid_demix::linalg::C64;
use hybrid_demix::measurement::{noise_bound, observe, random_combiner, MeasurementEnsemble, Snr};
use hybrid_demix::model::{sample_hybrid_channel, HybridChannel, PathKind, SystemConfig};
use hybrid_demix::omp::{build_polar_dictionary, hybrid_omp, PolarDictionary};
use hybrid_demix::params::{extract_paths, match_paths_gated, ExtractionOrders, ModelOrder};
use hybrid_demix::subspace::{BasisCache, PsiGrid, SubspaceBasis};
use hybrid_demix::{Error, Result};

use crate::config::{ExperimentConfig, Method, SweepPoint};

const TAG_CHANNEL: u64 = 0x6368_616e;
const TAG_COMBINER: u64 = 0x636f_6d62;

/// First eight bytes (little endian) of SHA-256 over the little-endian words.
pub fn derive_seed(words: &[u64]) -> u64 {
    let mut h = Sha256::new();
    for w in words {
        h.update(w.to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// Per-cell seed `hash(base, point, trial)`; drives the measurement noise.
pub fn trial_seed(base: u64, point: usize, trial: usize) -> u64 {
    derive_seed(&[base, point as u64, trial as u64])
}

/// Channel and combiner seeds depend on the trial only, so every sweep point of a
/// trial sees the same propagation environment and the same analog combiner.
pub fn channel_seed(base: u64, trial: usize) -> u64 {
    derive_seed(&[base, TAG_CHANNEL, trial as u64])
}

pub fn combiner_seed(base: u64, trial: usize) -> u64 {
    derive_seed(&[base, TAG_COMBINER, trial as u64])
}

/// Data shared read-only by every trial of a sweep.
pub struct TrialContext {
    pub config: ExperimentConfig,
    pub system: SystemConfig,
    pub basis: SubspaceBasis,
    pub dictionary: Option<PolarDictionary>,
    pub config_hash: String,
}

impl TrialContext {
    pub fn new(config: &ExperimentConfig, cache: Option<&BasisCache>) -> Result<Self> {
        config.validate()?;
        let system = config.system.resolve()?;
        let grid = PsiGrid::for_min_range(
            &system,
            config.channel.sampling.range_min,
            config.subspace.grid_points,
        );
        let basis = match cache {
            Some(c) => c.get_or_build(system.num_antennas, &grid, config.subspace.rank)?,
            None => SubspaceBasis::build(system.num_antennas, &grid, config.subspace.rank)?,
        };
        let dictionary = if config.methods.contains(&Method::Omp) {
            Some(build_polar_dictionary(&system, &config.omp.grid)?)
        } else {
            None
        };
        Ok(Self {
            config: config.clone(),
            system,
            basis,
            dictionary,
            config_hash: config.hash(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    /// NaN when the method failed.
    pub nmse: f64,
    pub angle_rmse_rad: f64,
    pub range_rel_err: f64,
    pub misses: usize,
    pub false_alarms: usize,
    pub solver_status: String,
    pub iters: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config_hash: String,
    pub sweep_axis: String,
    pub sweep_value: String,
    pub point: usize,
    pub trial: usize,
    pub seed: u64,
    /// Digest of the `(h, A, y)` triple every method consumed.
    pub input_hash: String,
    pub outcomes: Vec<MethodOutcome>,
}

/// Ground-truth or estimated path in the common evaluation form.
#[derive(Debug, Clone, Copy, PartialEq)]
struct EvalPath {
    phi: f64,
    theta: Option<f64>,
    range: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ParamErrors {
    angle_rmse: f64,
    range_rel: f64,
    misses: usize,
    false_alarms: usize,
}

/// Match within one angular resolution cell `1/N` and score the pairs.
fn score_paths(truth: &[EvalPath], est: &[EvalPath], n: usize) -> ParamErrors {
    let tp: Vec<f64> = truth.iter().map(|p| p.phi).collect();
    let ep: Vec<f64> = est.iter().map(|p| p.phi).collect();
    let m = match_paths_gated(&ep, &tp, 1.0 / n as f64);
    let (mut se, mut na) = (0.0, 0usize);
    let (mut rel, mut nr) = (0.0, 0usize);
    for &(i, j, _) in &m.pairs {
        if let (Some(a), Some(b)) = (est[i].theta, truth[j].theta) {
            se += (a - b).powi(2);
            na += 1;
        }
        if let (Some(a), Some(b)) = (est[i].range, truth[j].range) {
            rel += (a - b).abs() / b;
            nr += 1;
        }
    }
    ParamErrors {
        angle_rmse: if na > 0 { (se / na as f64).sqrt() } else { f64::NAN },
        range_rel: if nr > 0 { rel / nr as f64 } else { f64::NAN },
        misses: m.misses.len(),
        false_alarms: m.false_alarms.len(),
    }
}

fn truth_paths(ch: &HybridChannel, sys: &SystemConfig) -> Vec<EvalPath> {
    ch.paths
        .iter()
        .map(|p| EvalPath {
            phi: p.phi(sys),
            theta: Some(p.theta),
            range: match p.kind {
                PathKind::Far => None,
                PathKind::Near => p.range,
            },
        })
        .collect()
}

fn input_hash(h: &[C64], ens: &MeasurementEnsemble) -> String {
    let mut d = Sha256::new();
    let mut put = |z: &C64| {
        d.update(z.re.to_le_bytes());
        d.update(z.im.to_le_bytes());
    };
    h.iter().for_each(&mut put);
    for j in 0..ens.combiner.ncols() {
        for i in 0..ens.combiner.nrows() {
            put(&ens.combiner[(i, j)]);
        }
    }
    ens.y.iter().for_each(&mut put);
    hex::encode(&d.finalize()[..8])
}

fn failed(method: Method, err: &Error, wall_ms: f64) -> MethodOutcome {
    log::warn!("{} failed: {err}", method.as_str());
    MethodOutcome {
        method,
        nmse: f64::NAN,
        angle_rmse_rad: f64::NAN,
        range_rel_err: f64::NAN,
        misses: 0,
        false_alarms: 0,
        solver_status: "error".into(),
        iters: 0,
        wall_ms,
    }
}

/// The synthesized inputs of one trial cell.
pub struct TrialInputs {
    pub channel: HybridChannel,
    pub ensemble: MeasurementEnsemble,
    pub delta: f64,
    pub seed: u64,
}

pub fn draw_inputs(ctx: &TrialContext, point: &SweepPoint, trial: usize) -> Result<TrialInputs> {
    let cfg = &ctx.config;
    let (kf, kn) = cfg.channel.split.split(point.num_paths);
    let mut rng = ChaCha8Rng::seed_from_u64(channel_seed(cfg.base_seed, trial));
    let channel = sample_hybrid_channel(kf, kn, &ctx.system, &mut rng, &cfg.channel.sampling)?;
    let mut rng = ChaCha8Rng::seed_from_u64(combiner_seed(cfg.base_seed, trial));
    let combiner = random_combiner(&ctx.system, &mut rng);
    let seed = trial_seed(cfg.base_seed, point.index, trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let snr = point.snr_db.map_or(Snr::Noiseless, Snr::Db);
    let ensemble = observe(
        combiner.as_ref(),
        ctx.system.num_rf_chains,
        &channel.h,
        snr,
        &mut rng,
    )?;
    let delta = match snr {
        Snr::Noiseless => 0.0,
        Snr::Db(_) => noise_bound(
            ensemble.noise_sigma_eff,
            ensemble.num_measurements(),
            cfg.solver.noise_tail,
        ),
    };
    Ok(TrialInputs {
        channel,
        ensemble,
        delta,
        seed,
    })
}

/// Solve ANM for prepared inputs.
pub fn run_anm(ctx: &TrialContext, inputs: &TrialInputs) -> Result<DemixEstimate> {
    estimate_channel(
        &inputs.ensemble,
        &ctx.basis,
        ctx.config.solver.tau,
        Some(inputs.delta),
        &ctx.config.solver.options(),
    )
}

fn anm_outcome(
    ctx: &TrialContext,
    inputs: &TrialInputs,
    est: &DemixEstimate,
    method: Method,
    wall_ms: f64,
) -> MethodOutcome {
    let n = ctx.system.num_antennas;
    let h = &inputs.channel.h;
    let orders = match method {
        Method::AnmTrueOrder => ExtractionOrders {
            far: ModelOrder::Fixed(inputs.channel.num_far()),
            near: ModelOrder::Fixed(inputs.channel.num_near()),
        },
        _ => ExtractionOrders {
            far: ModelOrder::Threshold(ctx.config.solver.order_tol),
            near: ModelOrder::Threshold(ctx.config.solver.order_tol),
        },
    };
    let b = &est.solution.blocks;
    let errors = extract_paths(&b.u_far, &b.u_near, b.lifted.as_ref(), &ctx.basis, &ctx.system, orders)
        .map(|paths| {
            let mut est_paths: Vec<EvalPath> = paths
                .far
                .iter()
                .map(|p| EvalPath { phi: p.phi, theta: p.theta, range: None })
                .collect();
            est_paths.extend(paths.near.iter().map(|p| EvalPath {
                phi: p.phi,
                theta: p.theta,
                range: p.range,
            }));
            score_paths(&truth_paths(&inputs.channel, &ctx.system), &est_paths, n)
        });
    let errors = errors.unwrap_or_else(|e| {
        log::warn!("parameter extraction failed: {e}");
        ParamErrors {
            angle_rmse: f64::NAN,
            range_rel: f64::NAN,
            misses: inputs.channel.num_paths(),
            false_alarms: 0,
        }
    });
    MethodOutcome {
        method,
        nmse: nmse(&est.h_hat, h).unwrap_or(f64::NAN),
        angle_rmse_rad: errors.angle_rmse,
        range_rel_err: errors.range_rel,
        misses: errors.misses,
        false_alarms: errors.false_alarms,
        solver_status: est.status().to_string(),
        iters: est.solution.iterations,
        wall_ms,
    }
}

fn omp_outcome(ctx: &TrialContext, inputs: &TrialInputs) -> MethodOutcome {
    let start = Instant::now();
    let dict = match &ctx.dictionary {
        Some(d) => d,
        None => {
            return failed(
                Method::Omp,
                &Error::Config("OMP dictionary not built".into()),
                0.0,
            )
        }
    };
    let ch = &inputs.channel;
    let k = ch.num_paths();
    let gamma = ctx
        .config
        .omp
        .gamma
        .unwrap_or(ch.num_far() as f64 / k as f64);
    let est = match hybrid_omp(
        &inputs.ensemble.y,
        inputs.ensemble.combiner.as_ref(),
        dict,
        k,
        gamma,
    ) {
        Ok(e) => e,
        Err(e) => return failed(Method::Omp, &e, start.elapsed().as_secs_f64() * 1e3),
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut est_paths: Vec<EvalPath> = est
        .far_support
        .iter()
        .map(|&j| {
            let phi = dict.far_phis[j];
            EvalPath { phi, theta: ctx.system.phi_to_theta(phi), range: None }
        })
        .collect();
    est_paths.extend(est.near_support.iter().map(|&j| {
        let (theta, r) = dict.near_grid[j];
        EvalPath { phi: ctx.system.phi(theta), theta: Some(theta), range: Some(r) }
    }));
    let errors = score_paths(&truth_paths(ch, &ctx.system), &est_paths, ctx.system.num_antennas);
    MethodOutcome {
        method: Method::Omp,
        nmse: nmse(&est.h_hat, &ch.h).unwrap_or(f64::NAN),
        angle_rmse_rad: errors.angle_rmse,
        range_rel_err: errors.range_rel,
        misses: errors.misses,
        false_alarms: errors.false_alarms,
        solver_status: "ok".into(),
        iters: k,
        wall_ms,
    }
}

/// Run every enabled method on one `(point, trial)` cell. Method failures are
/// recorded, not propagated; only input synthesis errors abort the cell.
pub fn run_trial(ctx: &TrialContext, point: &SweepPoint, trial: usize) -> Result<TrialRecord> {
    let inputs = draw_inputs(ctx, point, trial)?;
    let mut outcomes = Vec::new();
    let mut anm: Option<(std::result::Result<DemixEstimate, Error>, f64)> = None;
    for &method in &dedup(&ctx.config.methods) {
        match method {
            Method::Anm | Method::AnmTrueOrder => {
                let (res, ms) = anm.get_or_insert_with(|| {
                    let start = Instant::now();
                    let r = run_anm(ctx, &inputs);
                    (r, start.elapsed().as_secs_f64() * 1e3)
                });
                outcomes.push(match res {
                    Ok(est) => anm_outcome(ctx, &inputs, est, method, *ms),
                    Err(e) => failed(method, e, *ms),
                });
            }
            Method::Omp => outcomes.push(omp_outcome(ctx, &inputs)),
        }
    }
    Ok(TrialRecord {
        config_hash: ctx.config_hash.clone(),
        sweep_axis: SweepPoint::axis_name(&ctx.config.sweep).into(),
        sweep_value: sweep_value(&ctx.config, point),
        point: point.index,
        trial,
        seed: inputs.seed,
        input_hash: input_hash(&inputs.channel.h, &inputs.ensemble),
        outcomes,
    })
}

fn dedup(methods: &[Method]) -> Vec<Method> {
    let mut out: Vec<Method> = Vec::new();
    for m in methods {
        if !out.contains(m) {
            out.push(*m);
        }
    }
    out
}

pub fn sweep_value(cfg: &ExperimentConfig, point: &SweepPoint) -> String {
    match &cfg.sweep {
        crate::config::Sweep::SnrDb { .. } => match point.snr_db {
            Some(v) => format!("{v}"),
            None => "inf".into(),
        },
        crate::config::Sweep::NumPaths { .. } => point.num_paths.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(trial_seed(1, 2, 3), trial_seed(1, 2, 3));
        assert_ne!(trial_seed(1, 2, 3), trial_seed(1, 3, 2));
        assert_ne!(channel_seed(1, 0), combiner_seed(1, 0));
        assert_ne!(channel_seed(1, 0), channel_seed(1, 1));
    }

    #[test]
    fn scoring_counts_misses_and_false_alarms() {
        let truth = [
            EvalPath { phi: 0.1, theta: Some(0.2), range: None },
            EvalPath { phi: -0.3, theta: Some(-0.6), range: Some(20.0) },
        ];
        let est = [
            EvalPath { phi: -0.301, theta: Some(-0.602), range: Some(22.0) },
            EvalPath { phi: 0.4, theta: Some(0.9), range: None },
        ];
        let e = score_paths(&truth, &est, 64);
        assert_eq!((e.misses, e.false_alarms), (1, 1));
        assert!((e.angle_rmse - 0.002).abs() < 1e-12);
        assert!((e.range_rel - 0.1).abs() < 1e-12);
        let none = score_paths(&truth, &[], 64);
        assert!(none.angle_rmse.is_nan());
        assert_eq!(none.misses, 2);
    }
}

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hybrid_demix::measurement::DEFAULT_NOISE_TAIL;
use hybrid_demix::model::{ChannelSampling, SystemConfig};
use hybrid_demix::omp::PolarGridSpec;
use hybrid_demix::params::DEFAULT_ORDER_TOL;
use hybrid_demix::solver::SolverOptions;
use hybrid_demix::subspace::PsiGrid;
use hybrid_demix::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Anm,
    /// ANM with the true path counts handed to the Vandermonde step. Same channel
    /// estimate as `anm`; only the parameter errors differ.
    AnmTrueOrder,
    Omp,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Anm => "anm",
            Method::AnmTrueOrder => "anm_true_order",
            Method::Omp => "omp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "anm" => Ok(Method::Anm),
            "anm_true_order" => Ok(Method::AnmTrueOrder),
            "omp" => Ok(Method::Omp),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub num_antennas: usize,
    pub num_rf_chains: usize,
    /// 1 for full sampling (`M = N`), 2 for half.
    pub downsample: usize,
    pub carrier_freq: f64,
}

impl SystemSpec {
    pub fn resolve(&self) -> Result<SystemConfig> {
        SystemConfig::with_downsampling(
            self.num_antennas,
            self.num_rf_chains,
            self.downsample,
            self.carrier_freq,
        )
    }
}

/// How `K` paths are divided between far and near field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum SplitRule {
    /// `K_f = ⌈K/2⌉`.
    Even,
    FarOnly,
    NearOnly,
}

impl SplitRule {
    pub fn split(self, k: usize) -> (usize, usize) {
        match self {
            SplitRule::Even => hybrid_demix::model::even_split(k),
            SplitRule::FarOnly => (k, 0),
            SplitRule::NearOnly => (0, k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    /// Path count for SNR sweeps; ignored by path-count sweeps.
    pub num_paths: usize,
    pub split: SplitRule,
    pub sampling: ChannelSampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceSpec {
    pub rank: usize,
    pub grid_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub tau: f64,
    /// Tail probability of the residual budget.
    pub noise_tail: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iters: usize,
    pub relaxation: f64,
    pub order_tol: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            tau: hybrid_demix::demix::DEFAULT_TAU,
            noise_tail: DEFAULT_NOISE_TAIL,
            eps_abs: o.eps_abs,
            eps_rel: o.eps_rel,
            max_iters: o.max_iters,
            relaxation: o.relaxation,
            order_tol: DEFAULT_ORDER_TOL,
        }
    }
}

impl SolverSpec {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            eps_abs: self.eps_abs,
            eps_rel: self.eps_rel,
            max_iters: self.max_iters,
            relaxation: self.relaxation,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmpSpec {
    pub grid: PolarGridSpec,
    /// Far fraction; `null` hands each trial its true `K_f / K`.
    pub gamma: Option<f64>,
}

/// One sweep axis. SNR values of `null` mean noiseless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "axis", deny_unknown_fields)]
pub enum Sweep {
    SnrDb { values: Vec<Option<f64>> },
    NumPaths { values: Vec<usize>, snr_db: Option<f64> },
}

/// One cell of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub snr_db: Option<f64>,
    pub num_paths: usize,
}

impl SweepPoint {
    pub fn axis_name(sweep: &Sweep) -> &'static str {
        match sweep {
            Sweep::SnrDb { .. } => "snr_db",
            Sweep::NumPaths { .. } => "num_paths",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub system: SystemSpec,
    pub channel: ChannelSpec,
    pub subspace: SubspaceSpec,
    pub solver: SolverSpec,
    pub omp: OmpSpec,
    pub sweep: Sweep,
    pub trials: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
}

impl ExperimentConfig {
    /// N=64, N_RF=4, L=8, K=4, 20 trials, SNR 0–20 dB.
    pub fn desk() -> Self {
        Self {
            name: "desk".into(),
            system: SystemSpec {
                num_antennas: 64,
                num_rf_chains: 4,
                downsample: 1,
                carrier_freq: 30e9,
            },
            channel: ChannelSpec {
                num_paths: 4,
                split: SplitRule::Even,
                sampling: ChannelSampling::default(),
            },
            subspace: SubspaceSpec {
                rank: 8,
                grid_points: PsiGrid::DEFAULT_POINTS,
            },
            solver: SolverSpec::default(),
            omp: OmpSpec {
                grid: PolarGridSpec::default(),
                gamma: None,
            },
            sweep: Sweep::SnrDb {
                values: [0.0, 5.0, 10.0, 15.0, 20.0].map(Some).to_vec(),
            },
            trials: 20,
            base_seed: 20240917,
            methods: vec![Method::Anm, Method::Omp],
        }
    }

    /// N=256, L=10, K=10, 50 trials.
    pub fn paper() -> Self {
        let mut c = Self::desk();
        c.name = "paper".into();
        c.system.num_antennas = 256;
        c.subspace.rank = 10;
        c.channel.num_paths = 10;
        c.trials = 50;
        c
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::Config(format!("unknown profile {other:?}"))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let sys = self.system.resolve()?;
        self.channel.sampling.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods enabled".into()));
        }
        if self.subspace.rank == 0 || self.subspace.rank > sys.num_antennas {
            return Err(Error::Config(format!(
                "subspace rank {} outside 1..={}",
                self.subspace.rank, sys.num_antennas
            )));
        }
        if self.subspace.grid_points < self.subspace.rank {
            return Err(Error::Config("ψ-grid smaller than the subspace rank".into()));
        }
        let s = &self.solver;
        if !(s.tau > 0.0 && s.noise_tail > 0.0 && s.noise_tail < 1.0 && s.order_tol > 0.0) {
            return Err(Error::Config("solver settings out of range".into()));
        }
        if let Some(g) = self.omp.gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Config(format!("γ = {g} outside [0, 1]")));
            }
        }
        let points = self.points();
        if points.is_empty() {
            return Err(Error::Config("empty sweep".into()));
        }
        for p in &points {
            if p.num_paths == 0 {
                return Err(Error::Config("sweep point with zero paths".into()));
            }
            if let Some(db) = p.snr_db {
                if !db.is_finite() {
                    return Err(Error::Config("SNR values must be finite or null".into()));
                }
            }
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<SweepPoint> {
        match &self.sweep {
            Sweep::SnrDb { values } => values
                .iter()
                .enumerate()
                .map(|(index, &snr_db)| SweepPoint {
                    index,
                    snr_db,
                    num_paths: self.channel.num_paths,
                })
                .collect(),
            Sweep::NumPaths { values, snr_db } => values
                .iter()
                .enumerate()
                .map(|(index, &num_paths)| SweepPoint {
                    index,
                    snr_db: *snr_db,
                    num_paths,
                })
                .collect(),
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate_and_round_trip() {
        for cfg in [ExperimentConfig::desk(), ExperimentConfig::paper()] {
            cfg.validate().unwrap();
            let text = serde_json::to_string_pretty(&cfg).unwrap();
            let back = ExperimentConfig::from_json(&text).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.hash(), cfg.hash());
        }
        assert_ne!(ExperimentConfig::desk().hash(), ExperimentConfig::paper().hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = serde_json::to_value(ExperimentConfig::desk()).unwrap();
        v["surprise"] = serde_json::json!(1);
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        let mut v = serde_json::to_value(ExperimentConfig::desk()).unwrap();
        v["solver"]["rho"] = serde_json::json!(1.0);
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut c = ExperimentConfig::desk();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::desk();
        c.system.num_antennas = 63;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::desk();
        c.sweep = Sweep::SnrDb { values: vec![] };
        assert!(c.validate().is_err());
        assert!(Method::parse("sgp").is_err());
    }

    #[test]
    fn path_count_sweep_points() {
        let mut c = ExperimentConfig::desk();
        c.sweep = Sweep::NumPaths {
            values: vec![2, 4, 6],
            snr_db: Some(10.0),
        };
        let pts = c.points();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[2].num_paths, 6);
        assert_eq!(pts[1].snr_db, Some(10.0));
    }
}

//! Array geometry, far/near-field steering vectors and random hybrid-field channels.
//!
//! Antennas sit on the y-axis at `(0, n·d)` for the 0-based index `n`, with `d = λ/2`.
//! All steering vectors use the positive-exponent convention, so the far-field
//! response `a(θ)` and the reparametrized atom `d_vec(φ(θ))` are the same vector.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis, freq_distance, C64, ZERO};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Uniform linear array with hybrid analog/digital combining.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_antennas: usize,
    pub num_rf_chains: usize,
    pub pilot_len: usize,
    /// Carrier frequency in Hz.
    pub carrier_freq: f64,
}

impl SystemConfig {
    pub fn new(
        num_antennas: usize,
        num_rf_chains: usize,
        pilot_len: usize,
        carrier_freq: f64,
    ) -> Result<Self> {
        let cfg = Self {
            num_antennas,
            num_rf_chains,
            pilot_len,
            carrier_freq,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Pilot length chosen so that `N_RF · P = N / downsample`.
    pub fn with_downsampling(
        num_antennas: usize,
        num_rf_chains: usize,
        downsample: usize,
        carrier_freq: f64,
    ) -> Result<Self> {
        if downsample == 0 || num_rf_chains == 0 {
            return Err(Error::Config(
                "downsample factor and RF chain count must be positive".into(),
            ));
        }
        let denom = downsample * num_rf_chains;
        if num_antennas % denom != 0 {
            return Err(Error::Config(format!(
                "N = {num_antennas} is not divisible by downsample·N_RF = {denom}"
            )));
        }
        Self::new(num_antennas, num_rf_chains, num_antennas / denom, carrier_freq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_antennas < 2 {
            return Err(Error::Config("need at least two antennas".into()));
        }
        if self.num_rf_chains == 0 || self.pilot_len == 0 {
            return Err(Error::Config("N_RF and P must be at least 1".into()));
        }
        if !(self.carrier_freq.is_finite() && self.carrier_freq > 0.0) {
            return Err(Error::Config("carrier frequency must be positive".into()));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Half-wavelength element spacing.
    pub fn spacing(&self) -> f64 {
        self.wavelength() / 2.0
    }

    /// Number of stacked measurements `M = N_RF · P`.
    pub fn num_measurements(&self) -> usize {
        self.num_rf_chains * self.pilot_len
    }

    /// Rayleigh distance `2D²/λ` with aperture `D = (N − 1)d`.
    pub fn rayleigh_distance(&self) -> f64 {
        let aperture = (self.num_antennas - 1) as f64 * self.spacing();
        2.0 * aperture * aperture / self.wavelength()
    }

    /// Rayleigh distance with aperture `D = N d`.
    pub fn rayleigh_distance_full_aperture(&self) -> f64 {
        let aperture = self.num_antennas as f64 * self.spacing();
        2.0 * aperture * aperture / self.wavelength()
    }

    /// Spatial frequency `φ = (d/λ) sin θ` in cycles per element.
    pub fn phi(&self, theta: f64) -> f64 {
        self.spacing() / self.wavelength() * theta.sin()
    }

    /// Chirp rate `ψ = −d² cos²θ / (2 λ r)` in cycles per squared element index.
    pub fn psi(&self, theta: f64, range: f64) -> f64 {
        let d = self.spacing();
        let c = theta.cos();
        -d * d * c * c / (2.0 * self.wavelength() * range)
    }

    /// Inverse of [`SystemConfig::phi`]. `None` outside the arcsine domain.
    pub fn phi_to_theta(&self, phi: f64) -> Option<f64> {
        let s = phi * self.wavelength() / self.spacing();
        if s.is_finite() && s.abs() <= 1.0 {
            Some(s.asin())
        } else {
            None
        }
    }

    /// Inverse of [`SystemConfig::psi`] given the angle. `None` unless the range is positive and finite.
    pub fn psi_to_range(&self, theta: f64, psi: f64) -> Option<f64> {
        let d = self.spacing();
        let c = theta.cos();
        let r = -d * d * c * c / (2.0 * self.wavelength() * psi);
        (r.is_finite() && r > 0.0).then_some(r)
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && theta.abs() < FRAC_PI_2 {
        Ok(())
    } else {
        Err(Error::Domain(format!("angle {theta} rad outside (-π/2, π/2)")))
    }
}

fn check_range(range: f64) -> Result<()> {
    if range.is_finite() && range > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("range {range} m must be positive")))
    }
}

/// Far-field response: entry `n` is `exp(j 2π/λ · n d sin θ)`.
pub fn far_steering(theta: f64, cfg: &SystemConfig) -> Result<Vec<C64>> {
    check_theta(theta)?;
    let k = 2.0 * PI / cfg.wavelength() * cfg.spacing() * theta.sin();
    Ok((0..cfg.num_antennas).map(|n| cis(k * n as f64)).collect())
}

/// Exact distance from the scatterer at polar `(r, θ)` to antenna `n` (0-based).
pub fn element_range(theta: f64, range: f64, n: usize, cfg: &SystemConfig) -> Result<f64> {
    check_range(range)?;
    let y = n as f64 * cfg.spacing();
    Ok((range * range + y * y - 2.0 * range * y * theta.sin()).sqrt())
}

/// `r_n − r` evaluated without cancellation at large ranges.
fn range_excess(theta: f64, range: f64, n: usize, cfg: &SystemConfig) -> f64 {
    let y = n as f64 * cfg.spacing();
    let rn = (range * range + y * y - 2.0 * range * y * theta.sin()).sqrt();
    (y * y - 2.0 * range * y * theta.sin()) / (rn + range)
}

/// Spherical-wavefront response: entry `n` is `exp(−j 2π/λ (r_n − r))`.
pub fn near_steering_exact(theta: f64, range: f64, cfg: &SystemConfig) -> Result<Vec<C64>> {
    check_theta(theta)?;
    check_range(range)?;
    let k = 2.0 * PI / cfg.wavelength();
    Ok((0..cfg.num_antennas)
        .map(|n| cis(-k * range_excess(theta, range, n, cfg)))
        .collect())
}

/// Second-order (Fresnel) approximation of [`near_steering_exact`].
pub fn near_steering_approx(theta: f64, range: f64, cfg: &SystemConfig) -> Result<Vec<C64>> {
    check_theta(theta)?;
    check_range(range)?;
    let k = 2.0 * PI / cfg.wavelength();
    let d = cfg.spacing();
    let (s, c) = theta.sin_cos();
    Ok((0..cfg.num_antennas)
        .map(|n| {
            let nd = n as f64 * d;
            cis(k * (nd * s - nd * nd * c * c / (2.0 * range)))
        })
        .collect())
}

/// Line-spectral atom: entry `n` is `exp(j 2π n φ)`.
pub fn d_vec(phi: f64, n: usize) -> Vec<C64> {
    (0..n).map(|i| cis(2.0 * PI * phi * i as f64)).collect()
}

/// Chirp waveform: entry `n` is `exp(j 2π n² ψ)`.
pub fn g_vec(psi: f64, n: usize) -> Vec<C64> {
    (0..n)
        .map(|i| {
            let i = i as f64;
            cis(2.0 * PI * psi * i * i)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Far,
    Near,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub kind: PathKind,
    pub gain: C64,
    /// Angle of arrival in radians.
    pub theta: f64,
    /// Range in meters; only meaningful for near-field paths.
    pub range: Option<f64>,
}

impl PathParams {
    pub fn far(gain: C64, theta: f64) -> Self {
        Self {
            kind: PathKind::Far,
            gain,
            theta,
            range: None,
        }
    }

    pub fn near(gain: C64, theta: f64, range: f64) -> Self {
        Self {
            kind: PathKind::Near,
            gain,
            theta,
            range: Some(range),
        }
    }

    pub fn phi(&self, cfg: &SystemConfig) -> f64 {
        cfg.phi(self.theta)
    }

    pub fn psi(&self, cfg: &SystemConfig) -> Option<f64> {
        self.range.map(|r| cfg.psi(self.theta, r))
    }

    pub fn validate(&self) -> Result<()> {
        check_theta(self.theta)?;
        match (self.kind, self.range) {
            (PathKind::Near, Some(r)) => check_range(r),
            (PathKind::Near, None) => Err(Error::Domain("near-field path without range".into())),
            (PathKind::Far, _) => Ok(()),
        }
    }

    /// Unscaled array response of this path (exact steering).
    pub fn response(&self, cfg: &SystemConfig) -> Result<Vec<C64>> {
        match self.kind {
            PathKind::Far => far_steering(self.theta, cfg),
            PathKind::Near => {
                let r = self
                    .range
                    .ok_or_else(|| Error::Domain("near-field path without range".into()))?;
                near_steering_exact(self.theta, r, cfg)
            }
        }
    }
}

/// Ground-truth paths together with the channel they produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridChannel {
    pub h: Vec<C64>,
    pub paths: Vec<PathParams>,
}

impl HybridChannel {
    /// `h = sqrt(N/K) Σ_k α_k s_k` with exact steering vectors `s_k`.
    pub fn from_paths(paths: Vec<PathParams>, cfg: &SystemConfig) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::Config("a channel needs at least one path".into()));
        }
        let n = cfg.num_antennas;
        let scale = (n as f64 / paths.len() as f64).sqrt();
        let mut h = vec![ZERO; n];
        for p in &paths {
            p.validate()?;
            let resp = p.response(cfg)?;
            for (hi, ri) in h.iter_mut().zip(resp) {
                *hi += p.gain * ri * scale;
            }
        }
        Ok(Self { h, paths })
    }

    pub fn num_far(&self) -> usize {
        self.paths.iter().filter(|p| p.kind == PathKind::Far).count()
    }

    pub fn num_near(&self) -> usize {
        self.paths.iter().filter(|p| p.kind == PathKind::Near).count()
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }
}

/// Distribution of random path parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSampling {
    /// Angle interval in radians.
    pub theta_min: f64,
    pub theta_max: f64,
    /// Near-field range interval in meters.
    pub range_min: f64,
    pub range_max: f64,
    /// Minimum wrap-around φ separation across all paths, in units of `1/N`.
    pub min_separation: f64,
}

impl Default for ChannelSampling {
    fn default() -> Self {
        Self {
            theta_min: -60f64.to_radians(),
            theta_max: 60f64.to_radians(),
            range_min: 10.0,
            range_max: 80.0,
            min_separation: 1.0,
        }
    }
}

impl ChannelSampling {
    pub fn validate(&self) -> Result<()> {
        check_theta(self.theta_min)?;
        check_theta(self.theta_max)?;
        if self.theta_min >= self.theta_max {
            return Err(Error::Config("theta_min must be below theta_max".into()));
        }
        check_range(self.range_min)?;
        if !(self.range_max >= self.range_min) {
            return Err(Error::Config("range_max must be at least range_min".into()));
        }
        if !(self.min_separation >= 0.0) {
            return Err(Error::Config("min_separation must be non-negative".into()));
        }
        Ok(())
    }
}

const MAX_SEPARATION_ATTEMPTS: usize = 10_000;

/// Unit-variance circular complex Gaussian sample.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draw `num_far + num_near` paths and assemble the exact hybrid-field channel.
pub fn sample_hybrid_channel<R: Rng + ?Sized>(
    num_far: usize,
    num_near: usize,
    cfg: &SystemConfig,
    rng: &mut R,
    sampling: &ChannelSampling,
) -> Result<HybridChannel> {
    let k = num_far + num_near;
    if k == 0 {
        return Err(Error::Config("need at least one path".into()));
    }
    cfg.validate()?;
    sampling.validate()?;
    let sep = sampling.min_separation / cfg.num_antennas as f64;
    let span = (cfg.phi(sampling.theta_max) - cfg.phi(sampling.theta_min)).abs();
    // k points with pairwise gap ≥ sep need (k − 1)·sep of room on the interval
    if k > 1 && (k - 1) as f64 * sep >= span.min(1.0) {
        return Err(Error::Config(format!(
            "cannot place {k} paths with φ-separation {sep:.4} in a φ-span of {span:.4}"
        )));
    }

    let mut thetas: Vec<f64> = Vec::with_capacity(k);
    let mut attempts = 0;
    while thetas.len() < k {
        attempts += 1;
        if attempts > MAX_SEPARATION_ATTEMPTS * k {
            return Err(Error::Config(format!(
                "separation constraint unsatisfiable after {attempts} draws"
            )));
        }
        let theta = rng.random_range(sampling.theta_min..sampling.theta_max);
        let phi = cfg.phi(theta);
        if thetas
            .iter()
            .all(|&t| freq_distance(cfg.phi(t), phi) >= sep)
        {
            thetas.push(theta);
        }
    }

    let mut paths = Vec::with_capacity(k);
    for (i, &theta) in thetas.iter().enumerate() {
        let gain = complex_gaussian(rng);
        if i < num_far {
            paths.push(PathParams::far(gain, theta));
        } else {
            let r = if sampling.range_max > sampling.range_min {
                rng.random_range(sampling.range_min..sampling.range_max)
            } else {
                sampling.range_min
            };
            paths.push(PathParams::near(gain, theta, r));
        }
    }
    HybridChannel::from_paths(paths, cfg)
}

/// Even far/near split used by the experiments: `K_f = ⌈K/2⌉`, `K_n = ⌊K/2⌋`.
pub fn even_split(k: usize) -> (usize, usize) {
    (k.div_ceil(2), k / 2)
}

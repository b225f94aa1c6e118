//! Gridless parameter extraction from a demixing solution.
//!
//! Angles come from a Vandermonde decomposition of the Toeplitz blocks (matrix
//! pencil on the signal subspace, powers by non-negative least squares). Ranges
//! come from the lifted block: `Ẑ^T = D^† X̂^T` undoes the angular factor, and the
//! ratio of consecutive entries of `ĝ = B ẑ` cancels the unknown complex scale, so
//! the curvature is the slope of the unwrapped phase against `[1, 3, …, 2N−3]`.
//!
//! The near-field LMI carries `X̂^H`, so its Toeplitz block has lines at `−φ`;
//! [`extract_paths`] flips them back.

use std::f64::consts::PI;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{freq_distance, hermitian_eigen, lstsq, toeplitz, wrap_freq, C64};
use crate::model::{d_vec, SystemConfig};
use crate::subspace::SubspaceBasis;

/// Default relative eigenvalue threshold for model-order selection.
pub const DEFAULT_ORDER_TOL: f64 = 1e-2;

/// Tolerated negative eigenvalue mass relative to `λ_max` before a Toeplitz block is
/// rejected as non-PSD.
pub const PSD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    /// Normalized frequency in `[−1/2, 1/2)`.
    pub phi: f64,
    pub power: f64,
}

/// How many lines to extract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOrder {
    /// Count eigenvalues above `tol · λ_max`.
    Threshold(f64),
    /// Use exactly this many (the known number of paths).
    Fixed(usize),
}

impl Default for ModelOrder {
    fn default() -> Self {
        ModelOrder::Threshold(DEFAULT_ORDER_TOL)
    }
}

/// Decompose `Toep(u) = Σ p_k d(φ_k) d(φ_k)^H` with order chosen by eigenvalue threshold.
///
/// A full-rank Toeplitz matrix (e.g. the identity) has no discrete spectral lines
/// under this rule and yields an empty list.
pub fn vandermonde_decompose(u: &[C64], order_tol: f64) -> Result<Vec<SpectralLine>> {
    vandermonde_decompose_with(u, ModelOrder::Threshold(order_tol))
}

pub fn vandermonde_decompose_with(u: &[C64], order: ModelOrder) -> Result<Vec<SpectralLine>> {
    let n = u.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if u.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Numerical("non-finite Toeplitz generator".into()));
    }
    let tp = toeplitz(u);
    let (vals, vecs) = hermitian_eigen(tp.as_ref())?;
    let lmax = vals[n - 1];
    if lmax <= 0.0 {
        if lmax < 0.0 || vals[0] < 0.0 {
            return Err(Error::Domain("Toeplitz block is negative definite".into()));
        }
        return Ok(Vec::new());
    }
    if vals[0] < -PSD_TOL * lmax {
        return Err(Error::Domain(format!(
            "Toeplitz block is not PSD: λ_min = {:.3e}, λ_max = {:.3e}",
            vals[0], lmax
        )));
    }
    let k = match order {
        ModelOrder::Threshold(tol) => {
            let k = vals.iter().filter(|&&v| v > tol * lmax).count();
            if k == n {
                return Ok(Vec::new());
            }
            k
        }
        ModelOrder::Fixed(k) => {
            if k >= n {
                return Err(Error::Domain(format!("order {k} needs more than {n} samples")));
            }
            k
        }
    };
    if k == 0 {
        return Ok(Vec::new());
    }

    // signal subspace: eigenvectors of the k largest eigenvalues
    let us = Mat::from_fn(n, k, |i, j| vecs[(i, n - k + j)]);
    let u1 = us.as_ref().subrows(0, n - 1);
    let u2 = us.as_ref().subrows(1, n - 1);
    let pencil = lstsq(u1, u2);
    let roots = pencil
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("pencil eigenvalues: {e:?}")))?;
    let mut phis: Vec<f64> = roots.iter().map(|z| wrap_freq(z.arg() / (2.0 * PI))).collect();
    phis.sort_by(f64::total_cmp);

    let atoms: Vec<Vec<C64>> = phis.iter().map(|&p| d_vec(p, n)).collect();
    let gram = Mat::from_fn(k, k, |a, b| {
        let ip: C64 = atoms[a].iter().zip(&atoms[b]).map(|(x, y)| x.conj() * y).sum();
        ip.norm_sqr()
    });
    let rhs: Vec<f64> = atoms
        .iter()
        .map(|d| {
            let td = crate::linalg::matvec(tp.as_ref(), d);
            d.iter().zip(td).map(|(a, b)| a.conj() * b).sum::<C64>().re
        })
        .collect();
    let powers = nnls_normal(gram.as_ref(), &rhs);
    Ok(phis
        .into_iter()
        .zip(powers)
        .filter(|(_, p)| *p > 0.0)
        .map(|(phi, power)| SpectralLine { phi, power })
        .collect())
}

/// `argmin_{p ≥ 0} ½ p^T G p − b^T p` for symmetric PSD `G` (Lawson–Hanson active set).
pub fn nnls_normal(g: MatRef<'_, f64>, b: &[f64]) -> Vec<f64> {
    let k = b.len();
    let mut p = vec![0.0; k];
    let mut passive = vec![false; k];
    let tol = 1e-12 * (1.0 + b.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    for _outer in 0..3 * k + 10 {
        // gradient of the negative objective
        let w: Vec<f64> = (0..k)
            .map(|i| b[i] - (0..k).map(|j| g[(i, j)] * p[j]).sum::<f64>())
            .collect();
        let cand = (0..k)
            .filter(|&i| !passive[i] && w[i] > tol)
            .max_by(|&a, &c| w[a].total_cmp(&w[c]));
        let Some(j) = cand else { break };
        passive[j] = true;
        for _inner in 0..3 * k + 10 {
            let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let s = solve_sub(g, b, &idx);
            if idx.iter().zip(&s).all(|(_, &v)| v > 0.0) {
                for (&i, &v) in idx.iter().zip(&s) {
                    p[i] = v;
                }
                break;
            }
            // step toward s until the first passive variable hits zero
            let mut alpha = 1.0f64;
            for (&i, &v) in idx.iter().zip(&s) {
                if v <= 0.0 {
                    alpha = alpha.min(p[i] / (p[i] - v));
                }
            }
            for (&i, &v) in idx.iter().zip(&s) {
                p[i] += alpha * (v - p[i]);
                if p[i] <= tol {
                    p[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    p
}

fn solve_sub(g: MatRef<'_, f64>, b: &[f64], idx: &[usize]) -> Vec<f64> {
    use faer::linalg::solvers::SolveLstsq;
    let m = idx.len();
    let gs = Mat::from_fn(m, m, |a, c| g[(idx[a], idx[c])]);
    let bs = Mat::from_fn(m, 1, |a, _| b[idx[a]]);
    let sol = gs.as_ref().qr().solve_lstsq(bs.as_ref());
    (0..m).map(|a| sol[(a, 0)]).collect()
}

/// `arcsin(φ λ / d)`, or `None` outside the arcsine domain.
pub fn phi_to_theta(phi: f64, cfg: &SystemConfig) -> Option<f64> {
    cfg.phi_to_theta(phi)
}

/// Column `k` of the result estimates `α_k z_k` from `X̂ ≈ Σ_k α_k z_k d(φ_k)^T`.
pub fn extract_z(lifted: MatRef<'_, C64>, phis: &[f64]) -> Result<Mat<C64>> {
    let (l, n) = (lifted.nrows(), lifted.ncols());
    let k = phis.len();
    if k == 0 {
        return Ok(Mat::zeros(l, 0));
    }
    if k > n {
        return Err(Error::Domain(format!("{k} frequencies exceed {n} samples")));
    }
    for a in 0..k {
        for b in a + 1..k {
            if freq_distance(phis[a], phis[b]) < 1e-9 {
                return Err(Error::Domain(format!(
                    "duplicate frequencies {} and {}",
                    phis[a], phis[b]
                )));
            }
        }
    }
    let d = Mat::from_fn(n, k, |i, j| crate::linalg::cis(2.0 * PI * i as f64 * phis[j]));
    let sv = d
        .as_ref()
        .singular_values()
        .map_err(|e| Error::Numerical(format!("singular values: {e:?}")))?;
    let smax = sv.iter().fold(0.0f64, |m, &v| m.max(v));
    let smin = sv.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if smin <= 1e-10 * smax {
        return Err(Error::Domain("angular factor is rank deficient".into()));
    }
    let xt = lifted.transpose().to_owned();
    let zt = lstsq(d.as_ref(), xt.as_ref());
    Ok(zt.transpose().to_owned())
}

/// Slope fit of `ψ` from a sampled chirp `ĝ ≈ c·g(ψ)`. `None` if any entry vanishes.
pub fn estimate_psi(g: &[C64]) -> Option<f64> {
    let n = g.len();
    if n < 2 {
        return None;
    }
    let gmax = g.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if !(gmax.is_finite() && gmax > 0.0) || g.iter().any(|z| z.norm() <= 1e-12 * gmax) {
        return None;
    }
    let ratios: Vec<C64> = g.windows(2).map(|w| w[1] / w[0]).collect();
    // cumulative unwrapping: successive phases differ by 4πψ
    let mut phase = Vec::with_capacity(n - 1);
    let mut acc = ratios[0].arg();
    phase.push(acc);
    for w in ratios.windows(2) {
        acc += (w[1] / w[0]).arg();
        phase.push(acc);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (i, ph) in phase.iter().enumerate() {
        let n0 = (2 * i + 1) as f64;
        num += n0 * ph;
        den += n0 * n0;
    }
    let psi = num / den / (2.0 * PI);
    psi.is_finite().then_some(psi)
}

/// Range from a lifted column: `r̂ = −d² cos²θ̂ / (2λ ψ̂)` with `ψ̂` fitted on `B ẑ`.
pub fn estimate_range(
    z: &[C64],
    basis: &SubspaceBasis,
    theta: f64,
    cfg: &SystemConfig,
) -> Option<f64> {
    if z.len() != basis.rank() {
        return None;
    }
    let psi = estimate_psi(&basis.synthesize(z))?;
    cfg.psi_to_range(theta, psi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarEstimate {
    pub phi: f64,
    pub power: f64,
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearEstimate {
    pub phi: f64,
    pub power: f64,
    pub theta: Option<f64>,
    pub psi: Option<f64>,
    /// `None` when the fit is degenerate or gives a non-positive range.
    pub range: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimatedPaths {
    pub far: Vec<FarEstimate>,
    pub near: Vec<NearEstimate>,
}

impl EstimatedPaths {
    pub fn num_far(&self) -> usize {
        self.far.len()
    }

    pub fn num_near(&self) -> usize {
        self.near.len()
    }
}

/// Per-block model orders for [`extract_paths`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExtractionOrders {
    pub far: ModelOrder,
    pub near: ModelOrder,
}

/// Angles, powers and ranges from the solved blocks.
pub fn extract_paths(
    u_far: &[C64],
    u_near: &[C64],
    lifted: MatRef<'_, C64>,
    basis: &SubspaceBasis,
    cfg: &SystemConfig,
    orders: ExtractionOrders,
) -> Result<EstimatedPaths> {
    let far = vandermonde_decompose_with(u_far, orders.far)?
        .into_iter()
        .map(|s| FarEstimate {
            phi: s.phi,
            power: s.power,
            theta: cfg.phi_to_theta(s.phi),
        })
        .collect();
    let lines = vandermonde_decompose_with(u_near, orders.near)?;
    let phis: Vec<f64> = lines.iter().map(|s| wrap_freq(-s.phi)).collect();
    let z = extract_z(lifted, &phis)?;
    let near = lines
        .iter()
        .zip(&phis)
        .enumerate()
        .map(|(k, (s, &phi))| {
            let theta = cfg.phi_to_theta(phi);
            let zk: Vec<C64> = (0..z.nrows()).map(|i| z[(i, k)]).collect();
            let psi = estimate_psi(&basis.synthesize(&zk));
            let range = match (theta, psi) {
                (Some(t), Some(p)) => cfg.psi_to_range(t, p),
                _ => None,
            };
            NearEstimate {
                phi,
                power: s.power,
                theta,
                psi,
                range,
            }
        })
        .collect();
    Ok(EstimatedPaths { far, near })
}

/// Result of assigning estimated frequencies to true ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathMatching {
    /// `(estimate index, truth index, wrap-around |Δφ|)`, in assignment order.
    pub pairs: Vec<(usize, usize, f64)>,
    /// Unmatched truth indices.
    pub misses: Vec<usize>,
    /// Unmatched estimate indices.
    pub false_alarms: Vec<usize>,
}

/// Greedy nearest-pair assignment under the wrap-around frequency distance.
pub fn match_paths(estimated: &[f64], truth: &[f64]) -> PathMatching {
    match_paths_gated(estimated, truth, f64::INFINITY)
}

/// As [`match_paths`], but pairs further apart than `gate` are never formed.
pub fn match_paths_gated(estimated: &[f64], truth: &[f64], gate: f64) -> PathMatching {
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &e) in estimated.iter().enumerate() {
        for (j, &t) in truth.iter().enumerate() {
            let dist = freq_distance(e, t);
            if dist <= gate {
                cands.push((dist, i, j));
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = vec![false; estimated.len()];
    let mut used_t = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for (dist, i, j) in cands {
        if !used_e[i] && !used_t[j] {
            used_e[i] = true;
            used_t[j] = true;
            pairs.push((i, j, dist));
        }
    }
    PathMatching {
        pairs,
        misses: (0..truth.len()).filter(|&j| !used_t[j]).collect(),
        false_alarms: (0..estimated.len()).filter(|&i| !used_e[i]).collect(),
    }
}

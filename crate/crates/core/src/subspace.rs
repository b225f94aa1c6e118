//! Low-dimensional subspace for the near-field chirp waveforms `g(ψ)`.
//!
//! A dictionary of chirps on a uniform ψ-grid is compressed by a truncated SVD;
//! the leading `L` left singular vectors form the orthonormal basis `B`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{norm2, C64, ZERO};
use crate::model::{g_vec, SystemConfig};

/// Uniform grid of chirp rates on `[psi_min, psi_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiGrid {
    pub psi_min: f64,
    pub psi_max: f64,
    pub points: usize,
}

impl PsiGrid {
    pub const DEFAULT_POINTS: usize = 4096;

    /// Grid covering every chirp rate reachable for ranges `≥ range_min` (uses `cos²θ ≤ 1`).
    pub fn for_min_range(cfg: &SystemConfig, range_min: f64, points: usize) -> Self {
        let d = cfg.spacing();
        Self {
            psi_min: -d * d / (2.0 * cfg.wavelength() * range_min),
            psi_max: 0.0,
            points,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.psi_max],
            m => (0..m)
                .map(|i| self.psi_min + (self.psi_max - self.psi_min) * i as f64 / (m - 1) as f64)
                .collect(),
        }
    }
}

/// `N × M` matrix whose column `m` is `g_vec(psi_grid[m], N)`.
pub fn build_dictionary(psi_grid: &[f64], n: usize) -> Result<Mat<C64>> {
    if psi_grid.is_empty() {
        return Err(Error::Config("empty ψ-grid".into()));
    }
    if let Some(bad) = psi_grid.iter().find(|p| !(p.is_finite() && **p <= 0.0)) {
        return Err(Error::Config(format!("ψ-grid value {bad} is not ≤ 0")));
    }
    let mut dict = Mat::zeros(n, psi_grid.len());
    for (m, &psi) in psi_grid.iter().enumerate() {
        for (i, v) in g_vec(psi, n).into_iter().enumerate() {
            dict[(i, m)] = v;
        }
    }
    Ok(dict)
}

/// Orthonormal basis `B` (N × L) with the singular spectrum it was cut from.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    basis: Mat<C64>,
    psi_grid: Vec<f64>,
    singular_values: Vec<f64>,
}

impl SubspaceBasis {
    /// Top-`rank` left singular vectors of `dictionary`.
    ///
    /// Each singular pair is rotated so the first non-negligible entry of its right
    /// singular vector is real and positive; this fixes `B` bit-for-bit across runs.
    pub fn from_dictionary(dictionary: MatRef<'_, C64>, psi_grid: Vec<f64>, rank: usize) -> Result<Self> {
        let (n, m) = (dictionary.nrows(), dictionary.ncols());
        if rank == 0 || rank > n.min(m) {
            return Err(Error::Config(format!(
                "subspace rank {rank} outside 1..={}",
                n.min(m)
            )));
        }
        let svd = dictionary
            .thin_svd()
            .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
        let s = svd.S().column_vector();
        let singular_values: Vec<f64> = (0..s.nrows()).map(|i| s[i].re).collect();
        let u = svd.U();
        let v = svd.V();
        let mut basis = Mat::zeros(n, rank);
        for k in 0..rank {
            let col = v.col(k);
            let scale = (0..m).map(|i| col[i].norm()).fold(0.0, f64::max);
            let pivot = (0..m)
                .map(|i| col[i])
                .find(|z| z.norm() > 1e-8 * scale)
                .unwrap_or(C64::new(1.0, 0.0));
            let phase = pivot.conj() / pivot.norm();
            // V → V·e^{-jα} requires U → U·e^{-jα} to keep U S V^H unchanged
            for i in 0..n {
                basis[(i, k)] = u[(i, k)] * phase;
            }
        }
        Ok(Self {
            basis,
            psi_grid,
            singular_values,
        })
    }

    /// Dictionary on `grid` followed by a rank-`rank` truncation.
    pub fn build(n: usize, grid: &PsiGrid, rank: usize) -> Result<Self> {
        let psi = grid.values();
        let dict = build_dictionary(&psi, n)?;
        Self::from_dictionary(dict.as_ref(), psi, rank)
    }

    /// Wrap an externally supplied basis; columns are assumed orthonormal.
    pub fn from_basis(basis: Mat<C64>) -> Self {
        Self {
            basis,
            psi_grid: Vec::new(),
            singular_values: Vec::new(),
        }
    }

    pub fn basis(&self) -> MatRef<'_, C64> {
        self.basis.as_ref()
    }

    pub fn num_antennas(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn psi_grid(&self) -> &[f64] {
        &self.psi_grid
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Fraction of dictionary energy captured by the retained singular values.
    pub fn energy_capture(&self) -> f64 {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        let kept: f64 = self.singular_values[..self.rank().min(self.singular_values.len())]
            .iter()
            .map(|s| s * s)
            .sum();
        if total > 0.0 {
            kept / total
        } else {
            0.0
        }
    }

    /// Coefficients `B^H v`.
    pub fn coefficients(&self, v: &[C64]) -> Vec<C64> {
        crate::linalg::adj_matvec(self.basis(), v)
    }

    /// `B z`.
    pub fn synthesize(&self, z: &[C64]) -> Vec<C64> {
        crate::linalg::matvec(self.basis(), z)
    }

    /// Squared ℓ₂ norms of the rows of `B`.
    pub fn row_norms_sqr(&self) -> Vec<f64> {
        let b = self.basis();
        (0..b.nrows())
            .map(|i| (0..b.ncols()).map(|l| b[(i, l)].norm_sqr()).sum())
            .collect()
    }
}

/// `‖g(ψ) − B B^H g(ψ)‖₂ / sqrt(N)`.
pub fn subspace_residual(basis: &SubspaceBasis, psi: f64) -> f64 {
    let n = basis.num_antennas();
    let g = g_vec(psi, n);
    let proj = basis.synthesize(&basis.coefficients(&g));
    let diff: Vec<C64> = g.iter().zip(&proj).map(|(a, b)| a - b).collect();
    norm2(&diff) / (n as f64).sqrt()
}

/// Metadata sidecar for a cached basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisCacheMeta {
    pub format: String,
    pub num_antennas: usize,
    pub rank: usize,
    pub grid_points: usize,
    pub grid_hash: String,
    pub num_singular_values: usize,
}

const CACHE_FORMAT: &str = "hybrid-demix-basis-v1";

/// Hex SHA-256 of the grid values as little-endian `f64`.
pub fn grid_hash(psi_grid: &[f64]) -> String {
    let mut h = Sha256::new();
    for p in psi_grid {
        h.update(p.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Cache file stem for `(N, grid, L)`.
pub fn cache_stem(n: usize, psi_grid: &[f64], rank: usize) -> String {
    format!("basis_n{n}_l{rank}_{}", &grid_hash(psi_grid)[..16])
}

/// On-disk cache of subspace bases.
///
/// `<stem>.bin` holds little-endian `f64` values: the basis in column-major order as
/// `(re, im)` pairs, then the singular values. `<stem>.json` holds [`BasisCacheMeta`].
/// The grid itself is not stored; callers regenerate it and the hash must match.
pub struct BasisCache {
    dir: PathBuf,
}

impl BasisCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn paths(&self, stem: &str) -> (PathBuf, PathBuf) {
        (
            self.dir.join(format!("{stem}.bin")),
            self.dir.join(format!("{stem}.json")),
        )
    }

    pub fn store(&self, basis: &SubspaceBasis) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let stem = cache_stem(basis.num_antennas(), basis.psi_grid(), basis.rank());
        let (bin, json) = self.paths(&stem);
        let b = basis.basis();
        let mut bytes = Vec::with_capacity(16 * b.nrows() * b.ncols() + 8 * basis.singular_values.len());
        for j in 0..b.ncols() {
            for i in 0..b.nrows() {
                bytes.extend_from_slice(&b[(i, j)].re.to_le_bytes());
                bytes.extend_from_slice(&b[(i, j)].im.to_le_bytes());
            }
        }
        for s in &basis.singular_values {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
        fs::File::create(&bin)?.write_all(&bytes)?;
        let meta = BasisCacheMeta {
            format: CACHE_FORMAT.into(),
            num_antennas: b.nrows(),
            rank: b.ncols(),
            grid_points: basis.psi_grid.len(),
            grid_hash: grid_hash(&basis.psi_grid),
            num_singular_values: basis.singular_values.len(),
        };
        fs::write(&json, serde_json::to_string_pretty(&meta)?)?;
        Ok(bin)
    }

    /// Load a cached basis; `Ok(None)` when absent.
    pub fn load(&self, n: usize, psi_grid: &[f64], rank: usize) -> Result<Option<SubspaceBasis>> {
        let stem = cache_stem(n, psi_grid, rank);
        let (bin, json) = self.paths(&stem);
        if !bin.exists() || !json.exists() {
            return Ok(None);
        }
        let meta: BasisCacheMeta = serde_json::from_str(&fs::read_to_string(&json)?)?;
        if meta.format != CACHE_FORMAT
            || meta.num_antennas != n
            || meta.rank != rank
            || meta.grid_hash != grid_hash(psi_grid)
        {
            return Err(Error::Config(format!("cache entry {stem} does not match request")));
        }
        let mut bytes = Vec::new();
        fs::File::open(&bin)?.read_to_end(&mut bytes)?;
        let expected = 16 * n * rank + 8 * meta.num_singular_values;
        if bytes.len() != expected {
            return Err(Error::Config(format!(
                "cache entry {stem} has {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let mut vals = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let mut basis = Mat::from_fn(n, rank, |_, _| ZERO);
        for j in 0..rank {
            for i in 0..n {
                let re = vals.next().expect("length checked");
                let im = vals.next().expect("length checked");
                basis[(i, j)] = C64::new(re, im);
            }
        }
        let singular_values = vals.collect();
        Ok(Some(SubspaceBasis {
            basis,
            psi_grid: psi_grid.to_vec(),
            singular_values,
        }))
    }

    /// Load from cache or build and store.
    pub fn get_or_build(&self, n: usize, grid: &PsiGrid, rank: usize) -> Result<SubspaceBasis> {
        let psi = grid.values();
        if let Some(b) = self.load(n, &psi, rank)? {
            return Ok(b);
        }
        let b = SubspaceBasis::build(n, grid, rank)?;
        self.store(&b)?;
        Ok(b)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

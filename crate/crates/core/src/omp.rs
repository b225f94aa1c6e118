//! Two-stage hybrid-field OMP baseline over an angular and a polar-domain dictionary.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::linalg::{adj_matvec, lstsq, matvec, norm2, C64, ZERO};
use crate::model::{near_steering_exact, SystemConfig};

/// Grid sizes for the polar dictionary. Zero sizes take the defaults `2N` and `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarGridSpec {
    pub far_points: usize,
    pub angle_points: usize,
    pub range_points: usize,
    pub range_min: f64,
    pub range_max: f64,
}

impl Default for PolarGridSpec {
    fn default() -> Self {
        Self {
            far_points: 0,
            angle_points: 0,
            range_points: 8,
            range_min: 10.0,
            range_max: 80.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolarDictionary {
    /// Unit-norm far atoms, N × G_f.
    pub far: Mat<C64>,
    /// Unit-norm near atoms, N × G_n.
    pub near: Mat<C64>,
    pub far_phis: Vec<f64>,
    /// `(θ, r)` of each near atom.
    pub near_grid: Vec<(f64, f64)>,
}

impl PolarDictionary {
    pub fn num_antennas(&self) -> usize {
        self.far.nrows()
    }
}

/// Far atoms on `φ_k = −1/2 + k/G_f`; near atoms on a `sin θ`-uniform angle grid
/// crossed with a range ladder uniform in `1/r`.
pub fn build_polar_dictionary(cfg: &SystemConfig, spec: &PolarGridSpec) -> Result<PolarDictionary> {
    cfg.validate()?;
    let n = cfg.num_antennas;
    let gf = if spec.far_points == 0 { 2 * n } else { spec.far_points };
    let ga = if spec.angle_points == 0 { n } else { spec.angle_points };
    if spec.range_points == 0 {
        return Err(Error::Config("range ladder is empty".into()));
    }
    if !(spec.range_min > 0.0 && spec.range_max >= spec.range_min && spec.range_max.is_finite()) {
        return Err(Error::Config(format!(
            "invalid range ladder [{}, {}]",
            spec.range_min, spec.range_max
        )));
    }

    let far_phis: Vec<f64> = (0..gf).map(|k| -0.5 + k as f64 / gf as f64).collect();
    let scale = 1.0 / (n as f64).sqrt();
    let far = Mat::from_fn(n, gf, |i, k| {
        crate::linalg::cis(2.0 * std::f64::consts::PI * i as f64 * far_phis[k]) * scale
    });

    let (inv_lo, inv_hi) = (1.0 / spec.range_max, 1.0 / spec.range_min);
    let ranges: Vec<f64> = (0..spec.range_points)
        .map(|j| {
            if spec.range_points == 1 {
                spec.range_min
            } else {
                1.0 / (inv_lo + (inv_hi - inv_lo) * j as f64 / (spec.range_points - 1) as f64)
            }
        })
        .collect();
    let mut near_grid = Vec::with_capacity(ga * ranges.len());
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(ga * ranges.len());
    for a in 0..ga {
        let s = (2.0 * a as f64 + 1.0 - ga as f64) / ga as f64;
        let theta = s.asin();
        for &r in &ranges {
            let v = near_steering_exact(theta, r, cfg)?;
            let norm = norm2(&v);
            cols.push(v.into_iter().map(|z| z / norm).collect());
            near_grid.push((theta, r));
        }
    }
    let near = Mat::from_fn(n, cols.len(), |i, k| cols[k][i]);
    Ok(PolarDictionary {
        far,
        near,
        far_phis,
        near_grid,
    })
}

#[derive(Debug, Clone)]
pub struct OmpEstimate {
    pub h_hat: Vec<C64>,
    /// Selected far columns, in selection order.
    pub far_support: Vec<usize>,
    /// Selected near columns, in selection order.
    pub near_support: Vec<usize>,
    /// `‖r‖` before the first and after every iteration.
    pub residual_norms: Vec<f64>,
}

/// `⌈γK⌉` far iterations, then `K − ⌈γK⌉` near iterations on the residual, then a
/// joint least-squares fit on every selected atom.
pub fn hybrid_omp(
    y: &[C64],
    combiner: MatRef<'_, C64>,
    dict: &PolarDictionary,
    k: usize,
    gamma: f64,
) -> Result<OmpEstimate> {
    let (m, n) = (combiner.nrows(), combiner.ncols());
    dim_check("hybrid_omp: observation length", m, y.len())?;
    dim_check("hybrid_omp: dictionary rows", n, dict.num_antennas())?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("γ = {gamma} outside [0, 1]")));
    }
    let k_far = (gamma * k as f64 - 1e-9).ceil().max(0.0) as usize;
    let k_near = k - k_far;
    if k_far > dict.far.ncols() || k_near > dict.near.ncols() {
        return Err(Error::Config(format!(
            "K = {k} exceeds the dictionary ({} far, {} near atoms)",
            dict.far.ncols(),
            dict.near.ncols()
        )));
    }
    if k > m {
        return Err(Error::Config(format!("K = {k} exceeds {m} measurements")));
    }

    let sense_far = combiner * &dict.far;
    let sense_near = combiner * &dict.near;
    let norms = |s: &Mat<C64>| -> Vec<f64> {
        (0..s.ncols())
            .map(|j| (0..s.nrows()).map(|i| s[(i, j)].norm_sqr()).sum::<f64>().sqrt())
            .collect()
    };
    let far_norms = norms(&sense_far);
    let near_norms = norms(&sense_near);

    let mut selected: Vec<Vec<C64>> = Vec::new();
    let mut atoms: Vec<Vec<C64>> = Vec::new();
    let mut far_support = Vec::new();
    let mut near_support = Vec::new();
    let mut residual = y.to_vec();
    let mut residual_norms = vec![norm2(y)];
    let mut coeffs: Vec<C64> = Vec::new();

    for step in 0..k {
        let (sense, col_norms, dict_block, support) = if step < k_far {
            (&sense_far, &far_norms, &dict.far, &mut far_support)
        } else {
            (&sense_near, &near_norms, &dict.near, &mut near_support)
        };
        let corr = adj_matvec(sense.as_ref(), &residual);
        let best = (0..corr.len())
            .filter(|j| !support.contains(j) && col_norms[*j] > 0.0)
            .max_by(|&a, &b| {
                (corr[a].norm() / col_norms[a]).total_cmp(&(corr[b].norm() / col_norms[b]))
            })
            .ok_or_else(|| Error::Degenerate("no admissible OMP atom left".into()))?;
        support.push(best);
        selected.push((0..m).map(|i| sense[(i, best)]).collect());
        atoms.push((0..n).map(|i| dict_block[(i, best)]).collect());

        let phi = Mat::from_fn(m, selected.len(), |i, j| selected[j][i]);
        let rhs = Mat::from_fn(m, 1, |i, _| y[i]);
        let sol = lstsq(phi.as_ref(), rhs.as_ref());
        coeffs = (0..selected.len()).map(|j| sol[(j, 0)]).collect();
        let fit = matvec(phi.as_ref(), &coeffs);
        residual = y.iter().zip(fit).map(|(a, b)| a - b).collect();
        let rn = norm2(&residual);
        debug_assert!(rn <= residual_norms.last().copied().unwrap_or(f64::INFINITY) * (1.0 + 1e-9) + 1e-12);
        residual_norms.push(rn);
    }

    let mut h_hat = vec![ZERO; n];
    for (atom, c) in atoms.iter().zip(&coeffs) {
        for (h, a) in h_hat.iter_mut().zip(atom) {
            *h += a * c;
        }
    }
    Ok(OmpEstimate {
        h_hat,
        far_support,
        near_support,
        residual_norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2_sqr;
    use crate::measurement::random_combiner;
    use crate::model::far_steering;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn nmse(a: &[C64], b: &[C64]) -> f64 {
        let e: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        norm2_sqr(&e) / norm2_sqr(b)
    }

    fn identity(n: usize) -> Mat<C64> {
        Mat::from_fn(n, n, |i, j| if i == j { C64::new(1.0, 0.0) } else { ZERO })
    }

    #[test]
    fn dft_far_block_and_unit_columns() {
        let cfg = SystemConfig::new(16, 4, 4, 30e9).unwrap();
        let spec = PolarGridSpec { far_points: 16, ..Default::default() };
        let dict = build_polar_dictionary(&cfg, &spec).unwrap();
        let gram = dict.far.adjoint() * &dict.far;
        for i in 0..16 {
            for j in 0..16 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)].norm() - want).abs() < 1e-12);
            }
        }
        for j in 0..dict.near.ncols() {
            let c: f64 = (0..16).map(|i| dict.near[(i, j)].norm_sqr()).sum();
            assert!((c - 1.0).abs() < 1e-12);
        }
        assert_eq!(dict.far.ncols(), 16);
        assert_eq!(dict.near.ncols(), 16 * 8);
    }

    #[test]
    fn farthest_ladder_rung_is_nearly_far() {
        let cfg = SystemConfig::new(64, 4, 16, 30e9).unwrap();
        let dict = build_polar_dictionary(&cfg, &PolarGridSpec::default()).unwrap();
        for (k, &(theta, r)) in dict.near_grid.iter().enumerate() {
            if r < 79.9 {
                continue;
            }
            let far = far_steering(theta, &cfg).unwrap();
            let fnorm = norm2(&far);
            let near: Vec<C64> = (0..64).map(|i| dict.near[(i, k)]).collect();
            let ip: C64 = far.iter().zip(&near).map(|(a, b)| a.conj() * b).sum::<C64>() / fnorm;
            let dist = (2.0 - 2.0 * ip.norm()).max(0.0).sqrt();
            assert!(dist < 0.2, "θ = {theta}: {dist}");
        }
    }

    #[test]
    fn on_grid_single_atoms_are_exact() {
        let cfg = SystemConfig::new(32, 4, 8, 30e9).unwrap();
        let dict = build_polar_dictionary(&cfg, &PolarGridSpec::default()).unwrap();
        let a = identity(32);
        let h: Vec<C64> = (0..32).map(|i| dict.far[(i, 17)] * C64::new(2.0, -1.0)).collect();
        let est = hybrid_omp(&h, a.as_ref(), &dict, 1, 1.0).unwrap();
        assert!(nmse(&est.h_hat, &h) < 1e-10);
        assert_eq!(est.far_support, vec![17]);

        let h: Vec<C64> = (0..32).map(|i| dict.near[(i, 101)] * C64::new(-0.3, 0.8)).collect();
        let est = hybrid_omp(&h, a.as_ref(), &dict, 1, 0.0).unwrap();
        assert!(nmse(&est.h_hat, &h) < 1e-10);
        assert_eq!(est.near_support, vec![101]);
    }

    #[test]
    fn on_grid_support_recovery_and_monotone_residual() {
        let cfg = SystemConfig::new(64, 4, 16, 30e9).unwrap();
        // adjacent rungs of the default ladder are highly coherent at this aperture,
        // so well-separated near atoms use a two-rung ladder
        let spec = PolarGridSpec { range_points: 2, ..Default::default() };
        let dict = build_polar_dictionary(&cfg, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let a = random_combiner(&cfg, &mut rng);
            // two far atoms and two near atoms on well-separated grid angles
            // φ bands: far in [−1/2, −1/4) and [0, 1/4), near in [−1/4, 0) and [1/4, 1/2)
            let f1 = rng.random_range(4..28);
            let f2 = rng.random_range(68..92);
            let n1 = rng.random_range(18..30) * 2 + 1;
            let n2 = rng.random_range(50..62) * 2 + 1;
            let mut h = vec![ZERO; 64];
            for (col, far) in [(f1, true), (f2, true), (n1, false), (n2, false)] {
                // far paths dominate so the far stage cannot lock onto a near path
                let mag = if far { rng.random_range(1.5..2.0) } else { rng.random_range(0.5..1.0) };
                let g = crate::linalg::cis(rng.random_range(0.0..std::f64::consts::TAU)) * mag;
                for i in 0..64 {
                    h[i] += g * if far { dict.far[(i, col)] } else { dict.near[(i, col)] };
                }
            }
            let y = matvec(a.as_ref(), &h);
            let est = hybrid_omp(&y, a.as_ref(), &dict, 4, 0.5).unwrap();
            assert!(est.residual_norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
            let mut fs = est.far_support.clone();
            fs.sort();
            assert_eq!(fs, vec![f1, f2]);
            let mut ns = est.near_support.clone();
            ns.sort();
            assert_eq!(ns, vec![n1, n2]);
            assert!(nmse(&est.h_hat, &h) < 1e-10);
        }
    }

    #[test]
    fn off_grid_floor() {
        let cfg = SystemConfig::new(64, 4, 16, 30e9).unwrap();
        let dict = build_polar_dictionary(&cfg, &PolarGridSpec::default()).unwrap();
        let a = identity(64);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut total = 0.0;
        for _ in 0..20 {
            let theta = rng.random_range(-1.0..1.0);
            let h = far_steering(theta, &cfg).unwrap();
            let est = hybrid_omp(&h, a.as_ref(), &dict, 1, 1.0).unwrap();
            total += nmse(&est.h_hat, &h);
        }
        assert!(total / 20.0 >= 1e-3);
    }

    #[test]
    fn config_errors() {
        let cfg = SystemConfig::new(8, 2, 4, 30e9).unwrap();
        let spec = PolarGridSpec { range_points: 1, ..Default::default() };
        let dict = build_polar_dictionary(&cfg, &spec).unwrap();
        let a = identity(8);
        let y = vec![C64::new(1.0, 0.0); 8];
        assert!(matches!(hybrid_omp(&y, a.as_ref(), &dict, 9, 1.0), Err(Error::Config(_))));
        assert!(matches!(hybrid_omp(&y, a.as_ref(), &dict, 2, 1.5), Err(Error::Config(_))));
        assert!(matches!(
            hybrid_omp(&y[..7], a.as_ref(), &dict, 1, 1.0),
            Err(Error::Dimension { .. })
        ));
    }
}

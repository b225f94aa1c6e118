//! Pilot measurements through constant-modulus analog combiners, and the lifting
//! operator that maps the near-field coefficient matrix `X` (L × N) to a channel vector.

use std::f64::consts::PI;

use faer::{Mat, MatRef};
use rand::Rng;

use crate::error::{dim_check, Error, Result};
use crate::linalg::{cis, matvec, norm2_sqr, C64, ZERO};
use crate::model::{complex_gaussian, SystemConfig};
use crate::subspace::SubspaceBasis;

/// Tail probability used by the default noise-budget rule.
pub const DEFAULT_NOISE_TAIL: f64 = 0.05;

/// Stacked combiner `A = [A_1; …; A_P]` with entries `exp(jω)/sqrt(N)`, `ω ~ U[0, 2π)`.
pub fn random_combiner<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Mat<C64> {
    let (m, n) = (cfg.num_measurements(), cfg.num_antennas);
    let amp = 1.0 / (n as f64).sqrt();
    // row-major draw order: slot, RF chain, antenna
    let mut a = Mat::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            a[(i, j)] = cis(rng.random_range(0.0..2.0 * PI)) * amp;
        }
    }
    a
}

/// Signal-to-noise ratio after combining.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Noiseless,
    Db(f64),
}

impl Snr {
    /// `+∞` dB maps to [`Snr::Noiseless`].
    pub fn from_db(db: f64) -> Self {
        if db == f64::INFINITY {
            Snr::Noiseless
        } else {
            Snr::Db(db)
        }
    }
}

/// `δ = σ_eff sqrt(M + 2 sqrt(M ln(1/ε)))`.
pub fn noise_bound(sigma_eff: f64, m: usize, tail: f64) -> f64 {
    let m = m as f64;
    sigma_eff * (m + 2.0 * (m * (1.0 / tail).ln()).sqrt()).sqrt()
}

/// Combiner, observation and noise statistics for one trial.
#[derive(Debug, Clone)]
pub struct MeasurementEnsemble {
    pub combiner: Mat<C64>,
    pub y: Vec<C64>,
    /// Per-antenna noise standard deviation before combining.
    pub noise_sigma: f64,
    /// Per-entry standard deviation of the combined noise `A_p n_p`.
    pub noise_sigma_eff: f64,
    /// ℓ₂ budget for the residual constraint.
    pub noise_bound: f64,
    pub num_rf_chains: usize,
}

impl MeasurementEnsemble {
    pub fn num_measurements(&self) -> usize {
        self.combiner.nrows()
    }

    pub fn num_antennas(&self) -> usize {
        self.combiner.ncols()
    }
}

/// `y = A h + n_eff` where slot `p` contributes `A_p n_p`, `n_p ~ CN(0, σ² I_N)`.
///
/// Pilots are unit symbols, so the de-rotation `s̄_p/|s_p|²` is the identity. σ is set
/// from the post-combining SNR `‖A h‖² / E‖n_eff‖²`.
pub fn observe<R: Rng + ?Sized>(
    combiner: MatRef<'_, C64>,
    num_rf_chains: usize,
    h: &[C64],
    snr: Snr,
    rng: &mut R,
) -> Result<MeasurementEnsemble> {
    let (m, n) = (combiner.nrows(), combiner.ncols());
    dim_check("observe: channel length", n, h.len())?;
    if num_rf_chains == 0 || m % num_rf_chains != 0 {
        return Err(Error::Config(format!(
            "{m} measurement rows do not split into slots of {num_rf_chains} RF chains"
        )));
    }
    let clean = matvec(combiner, h);
    let signal = norm2_sqr(&clean);
    let a_fro: f64 = (0..n)
        .map(|j| (0..m).map(|i| combiner[(i, j)].norm_sqr()).sum::<f64>())
        .sum();

    let snr_db = match snr {
        Snr::Noiseless => {
            return Ok(MeasurementEnsemble {
                combiner: combiner.to_owned(),
                y: clean,
                noise_sigma: 0.0,
                noise_sigma_eff: 0.0,
                noise_bound: 0.0,
                num_rf_chains,
            })
        }
        Snr::Db(db) => db,
    };
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("SNR {snr_db} dB is not finite")));
    }
    if signal == 0.0 {
        return Err(Error::Degenerate("zero channel at finite SNR".into()));
    }
    let snr_lin = 10f64.powf(snr_db / 10.0);
    let sigma = (signal / (a_fro * snr_lin)).sqrt();
    let mut y = clean;
    let slots = m / num_rf_chains;
    for p in 0..slots {
        let noise: Vec<C64> = (0..n).map(|_| complex_gaussian(rng) * sigma).collect();
        let rows = p * num_rf_chains..(p + 1) * num_rf_chains;
        for i in rows {
            let acc: C64 = (0..n).map(|j| combiner[(i, j)] * noise[j]).sum();
            y[i] += acc;
        }
    }
    // every combiner row has unit norm for constant-modulus 1/sqrt(N) entries
    let sigma_eff = sigma * (a_fro / m as f64).sqrt();
    Ok(MeasurementEnsemble {
        combiner: combiner.to_owned(),
        y,
        noise_sigma: sigma,
        noise_sigma_eff: sigma_eff,
        noise_bound: noise_bound(sigma_eff, m, DEFAULT_NOISE_TAIL),
        num_rf_chains,
    })
}

/// Lifting operator: `[lift(X)]_n = Σ_l B[n, l] X[l, n]`.
///
/// For a rank-one `X = z d(φ)^T` this gives `(B z) ⊙ d(φ)`; for `X = z d(φ)^H`
/// it gives `(B z) ⊙ d(−φ)`.
pub fn lift_apply(basis: &SubspaceBasis, x: MatRef<'_, C64>) -> Result<Vec<C64>> {
    let b = basis.basis();
    dim_check("lift_apply: rows of X", b.ncols(), x.nrows())?;
    dim_check("lift_apply: columns of X", b.nrows(), x.ncols())?;
    Ok(lift_apply_unchecked(b, x))
}

pub(crate) fn lift_apply_unchecked(b: MatRef<'_, C64>, x: MatRef<'_, C64>) -> Vec<C64> {
    (0..b.nrows())
        .map(|n| (0..b.ncols()).map(|l| b[(n, l)] * x[(l, n)]).sum())
        .collect()
}

/// Adjoint of [`lift_apply`]: `X[l, n] = conj(B[n, l]) v_n`.
pub fn lift_adjoint(basis: &SubspaceBasis, v: &[C64]) -> Result<Mat<C64>> {
    let b = basis.basis();
    dim_check("lift_adjoint: vector length", b.nrows(), v.len())?;
    Ok(lift_adjoint_unchecked(b, v))
}

pub(crate) fn lift_adjoint_unchecked(b: MatRef<'_, C64>, v: &[C64]) -> Mat<C64> {
    Mat::from_fn(b.ncols(), b.nrows(), |l, n| b[(n, l)].conj() * v[n])
}

/// `X = z d(φ)^T`, the lifted form of one near-field atom.
pub fn lifted_atom(z: &[C64], phi: f64, n: usize) -> Mat<C64> {
    let d = crate::model::d_vec(phi, n);
    Mat::from_fn(z.len(), n, |l, i| z[l] * d[i])
}

pub fn zero_lifted(l: usize, n: usize) -> Mat<C64> {
    Mat::from_fn(l, n, |_, _| ZERO)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{inner, inner_mat, norm2};
    use crate::model::{d_vec, ChannelSampling};
    use crate::subspace::PsiGrid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg64() -> SystemConfig {
        SystemConfig::new(64, 4, 16, 30e9).unwrap()
    }

    fn basis(n: usize, l: usize) -> SubspaceBasis {
        let cfg = SystemConfig::new(n, 1, n, 30e9).unwrap();
        SubspaceBasis::build(n, &PsiGrid::for_min_range(&cfg, 10.0, 512), l).unwrap()
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n).map(|_| complex_gaussian(rng)).collect()
    }

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat<C64> {
        Mat::from_fn(r, c, |_, _| complex_gaussian(rng))
    }

    #[test]
    fn combiner_shape_and_modulus() {
        let cfg = cfg64();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_combiner(&cfg, &mut rng);
        assert_eq!((a.nrows(), a.ncols()), (64, 64));
        for j in 0..64 {
            for i in 0..64 {
                assert!((a[(i, j)].norm() - 0.125).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn combiner_is_reproducible() {
        let cfg = cfg64();
        let a = random_combiner(&cfg, &mut ChaCha8Rng::seed_from_u64(77));
        let b = random_combiner(&cfg, &mut ChaCha8Rng::seed_from_u64(77));
        assert_eq!(a, b);
    }

    #[test]
    fn downsampled_row_count() {
        let cfg = SystemConfig::with_downsampling(64, 4, 2, 30e9).unwrap();
        let a = random_combiner(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a.nrows(), 32);
        let h = vec![C64::new(1.0, 0.0); 64];
        let obs = observe(a.as_ref(), 4, &h, Snr::Db(10.0), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(obs.y.len(), 32);
    }

    #[test]
    fn noiseless_observation() {
        let cfg = cfg64();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_combiner(&cfg, &mut rng);
        let h = rand_vec(&mut rng, 64);
        let obs = observe(a.as_ref(), 4, &h, Snr::from_db(f64::INFINITY), &mut rng).unwrap();
        assert_eq!(obs.y, matvec(a.as_ref(), &h));
        assert_eq!(obs.noise_bound, 0.0);
    }

    #[test]
    fn zero_channel_with_noise_is_degenerate() {
        let cfg = cfg64();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_combiner(&cfg, &mut rng);
        let h = vec![ZERO; 64];
        assert!(matches!(
            observe(a.as_ref(), 4, &h, Snr::Db(5.0), &mut rng),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn empirical_snr_matches_request() {
        let cfg = cfg64();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_combiner(&cfg, &mut rng);
        let ch = crate::model::sample_hybrid_channel(2, 2, &cfg, &mut rng, &ChannelSampling::default()).unwrap();
        let clean = matvec(a.as_ref(), &ch.h);
        let signal = norm2_sqr(&clean);
        let target_db = 7.0;
        let draws = 500;
        let noise: f64 = (0..draws)
            .map(|_| {
                let obs = observe(a.as_ref(), 4, &ch.h, Snr::Db(target_db), &mut rng).unwrap();
                obs.y.iter().zip(&clean).map(|(y, c)| (y - c).norm_sqr()).sum::<f64>()
            })
            .sum::<f64>()
            / draws as f64;
        let got_db = 10.0 * (signal / noise).log10();
        assert!((got_db - target_db).abs() < 0.2, "empirical SNR {got_db} dB");
    }

    #[test]
    fn noise_bound_covers_most_draws() {
        for cfg in [cfg64(), SystemConfig::with_downsampling(64, 4, 2, 30e9).unwrap()] {
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let a = random_combiner(&cfg, &mut rng);
            let h = rand_vec(&mut rng, 64);
            let clean = matvec(a.as_ref(), &h);
            let inside = (0..1000)
                .filter(|_| {
                    let obs = observe(a.as_ref(), 4, &h, Snr::Db(3.0), &mut rng).unwrap();
                    let r: Vec<C64> = obs.y.iter().zip(&clean).map(|(y, c)| y - c).collect();
                    norm2(&r) <= obs.noise_bound
                })
                .count();
            assert!(inside >= 950, "only {inside}/1000 inside the noise ball");
        }
    }

    #[test]
    fn lift_of_rank_one_atoms() {
        let b = basis(32, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let z = rand_vec(&mut rng, 6);
            let phi = rng.random_range(-0.5..0.5);
            let got = lift_apply(&b, lifted_atom(&z, phi, 32).as_ref()).unwrap();
            let bz = b.synthesize(&z);
            let d = d_vec(phi, 32);
            for n in 0..32 {
                assert!((got[n] - bz[n] * d[n]).norm() < 1e-10);
            }
            // the conjugate-transposed atom lands on the mirrored frequency
            let xh = Mat::from_fn(6, 32, |l, i| z[l] * d[i].conj());
            let got = lift_apply(&b, xh.as_ref()).unwrap();
            for n in 0..32 {
                assert!((got[n] - bz[n] * d[n].conj()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn lift_trivial_cases() {
        let b = basis(16, 4);
        let zero = lift_apply(&b, zero_lifted(4, 16).as_ref()).unwrap();
        assert!(zero.iter().all(|z| *z == ZERO));
        let z = vec![C64::new(0.3, -1.0), C64::new(2.0, 0.5), ZERO, C64::new(-1.0, 0.0)];
        let got = lift_apply(&b, lifted_atom(&z, 0.0, 16).as_ref()).unwrap();
        let bz = b.synthesize(&z);
        assert!(got.iter().zip(&bz).all(|(a, c)| (a - c).norm() < 1e-12));
        assert!(lift_adjoint(&b, &vec![ZERO; 16]).unwrap().as_ref() == zero_lifted(4, 16).as_ref());
    }

    #[test]
    fn lift_superposition() {
        let b = basis(32, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut x = zero_lifted(8, 32);
        let mut want = vec![ZERO; 32];
        for _ in 0..3 {
            let z = rand_vec(&mut rng, 8);
            let phi = rng.random_range(-0.5..0.5);
            x += lifted_atom(&z, phi, 32);
            let bz = b.synthesize(&z);
            for (n, (w, dn)) in want.iter_mut().zip(d_vec(phi, 32)).enumerate() {
                *w += bz[n] * dn;
            }
        }
        let got = lift_apply(&b, x.as_ref()).unwrap();
        assert!(got.iter().zip(&want).all(|(a, c)| (a - c).norm() < 1e-10));
    }

    #[test]
    fn lift_is_linear() {
        let b = basis(16, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x1 = rand_mat(&mut rng, 4, 16);
        let x2 = rand_mat(&mut rng, 4, 16);
        let (ca, cb) = (C64::new(0.7, -0.2), C64::new(-1.3, 2.0));
        let comb = Mat::from_fn(4, 16, |i, j| ca * x1[(i, j)] + cb * x2[(i, j)]);
        let lhs = lift_apply(&b, comb.as_ref()).unwrap();
        let l1 = lift_apply(&b, x1.as_ref()).unwrap();
        let l2 = lift_apply(&b, x2.as_ref()).unwrap();
        for n in 0..16 {
            assert!((lhs[n] - (ca * l1[n] + cb * l2[n])).norm() < 1e-12);
        }
    }

    #[test]
    fn adjoint_identity() {
        let b = basis(32, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let x = rand_mat(&mut rng, 6, 32);
            let v = rand_vec(&mut rng, 32);
            let lhs = inner(&lift_apply(&b, x.as_ref()).unwrap(), &v);
            let rhs = inner_mat(x.as_ref(), lift_adjoint(&b, &v).unwrap().as_ref());
            assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
        }
    }

    #[test]
    fn composition_spectral_norm_by_power_iteration() {
        let b = basis(32, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut v = rand_vec(&mut rng, 32);
        let mut est = 0.0;
        for _ in 0..2000 {
            let w = lift_apply(&b, lift_adjoint(&b, &v).unwrap().as_ref()).unwrap();
            est = norm2(&w) / norm2(&v);
            let s = norm2(&w);
            v = w.into_iter().map(|z| z / s).collect();
        }
        let want = b.row_norms_sqr().into_iter().fold(0.0, f64::max);
        assert!((est - want).abs() < 1e-6, "{est} vs {want}");
    }

    #[test]
    fn dimension_errors() {
        let b = basis(16, 4);
        assert!(matches!(lift_apply(&b, zero_lifted(3, 16).as_ref()), Err(Error::Dimension { .. })));
        assert!(matches!(lift_adjoint(&b, &[ZERO; 15]), Err(Error::Dimension { .. })));
    }
}

//! The demixing semidefinite program and a first-order solver for it.
//!
//! ```text
//! minimize   (1/2N) tr Toep(u_far) + t/2 + (τ/2N) tr Toep(u_near) + (τ/2) tr T
//! subject to ‖y − A(x + lift(X))‖₂ ≤ δ
//!            [Toep(u_far)  x ]            [Toep(u_near)  X^H]
//!            [x^H          t ] ⪰ 0,       [X             T  ] ⪰ 0
//! ```
//!
//! The solver is ADMM on the splitting `S_far(v) = Z_far`, `S_near(v) = Z_near`,
//! `A(x + lift(X)) = w`, where `v` collects the structured variables and
//! `(Z_far, Z_near, w)` live in the two PSD cones and the ℓ₂ ball around `y`.
//! The `v`-step is closed form: Toeplitz blocks are diagonal averages, and the
//! coupled `(x, X)` least-squares problem is solved through the Woodbury identity
//! with a Cholesky factor of the `M × M` matrix `2I + A D A^H` computed once per
//! program. The cone steps are an eigenvalue clip and a ball projection.
//!
//! The data are normalized by `‖y‖` before iterating (the program is positively
//! homogeneous), and the final iterate is polished to exact feasibility: a
//! minimum-norm correction puts the residual on the ball, and each LMI block is
//! shifted by `|λ_min|·I` through its diagonal variables if needed.

use std::io::Write;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::linalg::{
    adj_matvec, fro_norm_sqr, hermitian_eigen, hermitian_eigenvalues, hermitian_part,
    is_finite_mat, matvec, norm2, toeplitz, HpdSolver, C64, ZERO,
};
use crate::measurement::{lift_adjoint_unchecked, lift_apply_unchecked};
use crate::subspace::SubspaceBasis;

/// The compiled program: data, dimensions and the factorizations the solver reuses.
pub struct ConicProgram {
    combiner: Mat<C64>,
    y: Vec<C64>,
    basis: Mat<C64>,
    tau: f64,
    delta: f64,
    /// `2I + A D A^H` with `D = diag(1 + ‖row_n(B)‖²)`.
    woodbury: HpdSolver,
    /// `A D A^H`, used to land exactly on the residual ball when polishing.
    range: HpdSolver,
}

impl std::fmt::Debug for ConicProgram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConicProgram")
            .field("n", &self.n())
            .field("l", &self.l())
            .field("m", &self.m())
            .field("tau", &self.tau)
            .field("delta", &self.delta)
            .finish()
    }
}

/// Assemble the demixing program for measurements `y = A h + n`.
pub fn compile(
    combiner: MatRef<'_, C64>,
    y: &[C64],
    basis: &SubspaceBasis,
    tau: f64,
    delta: f64,
) -> Result<ConicProgram> {
    let (m, n) = (combiner.nrows(), combiner.ncols());
    dim_check("compile: observation length", m, y.len())?;
    dim_check("compile: basis rows", n, basis.num_antennas())?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Config(format!("τ = {tau} must be positive")));
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::Config(format!("δ = {delta} must be non-negative")));
    }
    if m == 0 {
        return Err(Error::Config("no measurements".into()));
    }
    let lev: Vec<f64> = basis.row_norms_sqr().into_iter().map(|r| 1.0 + r).collect();
    let ada = Mat::from_fn(m, m, |i, k| {
        (0..n)
            .map(|j| combiner[(i, j)] * lev[j] * combiner[(k, j)].conj())
            .sum::<C64>()
    });
    let woodbury = HpdSolver::new(
        Mat::from_fn(m, m, |i, k| {
            ada[(i, k)] + if i == k { C64::new(2.0, 0.0) } else { ZERO }
        })
        .as_ref(),
    )?;
    let ridge = 1e-13 * (0..m).map(|i| ada[(i, i)].re).sum::<f64>() / m as f64;
    let range = HpdSolver::new(
        Mat::from_fn(m, m, |i, k| {
            ada[(i, k)] + if i == k { C64::new(ridge, 0.0) } else { ZERO }
        })
        .as_ref(),
    )?;
    Ok(ConicProgram {
        combiner: combiner.to_owned(),
        y: y.to_vec(),
        basis: basis.basis().to_owned(),
        tau,
        delta,
        woodbury,
        range,
    })
}

/// Variable blocks of the program.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpBlocks {
    pub x: Vec<C64>,
    /// `X`, L × N.
    pub lifted: Mat<C64>,
    pub u_far: Vec<C64>,
    pub u_near: Vec<C64>,
    pub t: f64,
    /// `T`, Hermitian L × L.
    pub t_mat: Mat<C64>,
}

impl SdpBlocks {
    pub fn zeros(n: usize, l: usize) -> Self {
        Self {
            x: vec![ZERO; n],
            lifted: Mat::zeros(l, n),
            u_far: vec![ZERO; n],
            u_near: vec![ZERO; n],
            t: 0.0,
            t_mat: Mat::zeros(l, l),
        }
    }

    fn scaled(&self, s: f64) -> Self {
        Self {
            x: self.x.iter().map(|z| z * s).collect(),
            lifted: Mat::from_fn(self.lifted.nrows(), self.lifted.ncols(), |i, j| {
                self.lifted[(i, j)] * s
            }),
            u_far: self.u_far.iter().map(|z| z * s).collect(),
            u_near: self.u_near.iter().map(|z| z * s).collect(),
            t: self.t * s,
            t_mat: Mat::from_fn(self.t_mat.nrows(), self.t_mat.ncols(), |i, j| {
                self.t_mat[(i, j)] * s
            }),
        }
    }
}

/// `[[Toep(u_far), x], [x^H, t]]`.
pub fn far_lmi(blocks: &SdpBlocks) -> Mat<C64> {
    let n = blocks.x.len();
    let tp = toeplitz(&blocks.u_far);
    Mat::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
        (true, true) => tp[(i, j)],
        (true, false) => blocks.x[i],
        (false, true) => blocks.x[j].conj(),
        (false, false) => C64::new(blocks.t, 0.0),
    })
}

/// `[[Toep(u_near), X^H], [X, T]]`.
pub fn near_lmi(blocks: &SdpBlocks) -> Mat<C64> {
    let n = blocks.u_near.len();
    let l = blocks.t_mat.nrows();
    let tp = toeplitz(&blocks.u_near);
    Mat::from_fn(n + l, n + l, |i, j| match (i < n, j < n) {
        (true, true) => tp[(i, j)],
        (true, false) => blocks.lifted[(j - n, i)].conj(),
        (false, true) => blocks.lifted[(i - n, j)],
        (false, false) => blocks.t_mat[(i - n, j - n)],
    })
}

impl ConicProgram {
    pub fn n(&self) -> usize {
        self.combiner.ncols()
    }

    pub fn l(&self) -> usize {
        self.basis.ncols()
    }

    pub fn m(&self) -> usize {
        self.combiner.nrows()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn observation(&self) -> &[C64] {
        &self.y
    }

    pub fn combiner(&self) -> MatRef<'_, C64> {
        self.combiner.as_ref()
    }

    pub fn basis(&self) -> MatRef<'_, C64> {
        self.basis.as_ref()
    }

    /// Objective value at `blocks`.
    pub fn objective(&self, b: &SdpBlocks) -> f64 {
        let trace_t: f64 = (0..b.t_mat.nrows()).map(|i| b.t_mat[(i, i)].re).sum();
        0.5 * b.u_far[0].re + 0.5 * b.t + 0.5 * self.tau * (b.u_near[0].re + trace_t)
    }

    /// `x + lift(X)`.
    pub fn channel(&self, b: &SdpBlocks) -> Vec<C64> {
        let near = lift_apply_unchecked(self.basis.as_ref(), b.lifted.as_ref());
        b.x.iter().zip(near).map(|(a, c)| a + c).collect()
    }

    /// `‖y − A(x + lift(X))‖₂`.
    pub fn residual_norm(&self, b: &SdpBlocks) -> f64 {
        let ah = matvec(self.combiner.as_ref(), &self.channel(b));
        let r: Vec<C64> = self.y.iter().zip(ah).map(|(y, a)| y - a).collect();
        norm2(&r)
    }

    /// Constraint violations `(−λ_min(far), −λ_min(near), ‖resid‖ − δ)`, clipped at zero.
    pub fn violations(&self, b: &SdpBlocks) -> Result<(f64, f64, f64)> {
        let lf = hermitian_eigenvalues(far_lmi(b).as_ref())?[0];
        let ln = hermitian_eigenvalues(near_lmi(b).as_ref())?[0];
        Ok((
            (-lf).max(0.0),
            (-ln).max(0.0),
            (self.residual_norm(b) - self.delta).max(0.0),
        ))
    }

    fn apply_measure(&self, x: &[C64], lifted: MatRef<'_, C64>) -> Vec<C64> {
        let near = lift_apply_unchecked(self.basis.as_ref(), lifted);
        let h: Vec<C64> = x.iter().zip(near).map(|(a, c)| a + c).collect();
        matvec(self.combiner.as_ref(), &h)
    }

    fn apply_measure_adj(&self, v: &[C64]) -> (Vec<C64>, Mat<C64>) {
        let ahv = adj_matvec(self.combiner.as_ref(), v);
        let lifted = lift_adjoint_unchecked(self.basis.as_ref(), &ahv);
        (ahv, lifted)
    }
}

/// Orthogonal projection onto the Hermitian PSD cone (eigenvalues clipped at zero).
pub fn psd_project(h: MatRef<'_, C64>) -> Result<Mat<C64>> {
    if !is_finite_mat(h) {
        return Err(Error::Numerical("non-finite entry in PSD projection input".into()));
    }
    let herm = hermitian_part(h);
    Ok(psd_project_hermitian(herm.as_ref())?.0)
}

/// Projection of an already Hermitian matrix; also returns the number of kept eigenvalues.
fn psd_project_hermitian(h: MatRef<'_, C64>) -> Result<(Mat<C64>, usize)> {
    let n = h.nrows();
    let (vals, vecs) = hermitian_eigen(h)?;
    let first_pos = vals.iter().position(|&v| v > 0.0).unwrap_or(n);
    let k = n - first_pos;
    if k == 0 {
        return Ok((Mat::zeros(n, n), 0));
    }
    if k == n {
        return Ok((h.to_owned(), n));
    }
    let w = Mat::from_fn(n, k, |i, c| vecs[(i, first_pos + c)] * vals[first_pos + c].sqrt());
    let mut out = &w * w.adjoint();
    for i in 0..n {
        out[(i, i)] = C64::new(out[(i, i)].re, 0.0);
    }
    Ok((out, k))
}

/// Projection onto the ball `{v : ‖v − center‖ ≤ radius}`.
pub fn soc_project(v: &[C64], center: &[C64], radius: f64) -> Vec<C64> {
    let diff: Vec<C64> = v.iter().zip(center).map(|(a, c)| a - c).collect();
    let dist = norm2(&diff);
    if dist <= radius {
        return v.to_vec();
    }
    let s = radius / dist;
    center.iter().zip(diff).map(|(c, d)| c + d * s).collect()
}

/// First column of the nearest Hermitian Toeplitz matrix (Frobenius norm) to `p`.
pub fn toeplitz_average(p: MatRef<'_, C64>) -> Vec<C64> {
    let n = p.nrows();
    let mut u = vec![ZERO; n];
    u[0] = C64::new((0..n).map(|i| p[(i, i)].re).sum::<f64>() / n as f64, 0.0);
    for (k, uk) in u.iter_mut().enumerate().skip(1) {
        let mut acc = ZERO;
        for i in 0..n - k {
            acc += p[(i + k, i)] + p[(i, i + k)].conj();
        }
        *uk = acc / (2 * (n - k)) as f64;
    }
    u
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    InfeasibleSuspected,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::InfeasibleSuspected => "infeasible_suspected",
        })
    }
}

/// ADMM iterate in normalized units (data divided by `‖y‖`), usable as a warm start.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub z_far: Mat<C64>,
    pub z_near: Mat<C64>,
    pub w: Vec<C64>,
    pub dual_far: Mat<C64>,
    pub dual_near: Mat<C64>,
    pub dual_w: Vec<C64>,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Initial penalty.
    pub rho: f64,
    pub adaptive_rho: bool,
    /// Residual ratio that triggers a penalty update.
    pub rho_ratio: f64,
    pub rho_factor: f64,
    /// Minimum number of iterations between penalty updates.
    pub rho_interval: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iters: usize,
    /// Over-relaxation parameter in `(0, 2)`; 1 is plain ADMM.
    pub relaxation: f64,
    /// Record a trace row every this many iterations.
    pub trace_every: Option<usize>,
    pub warm_start: Option<SolverState>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rho: 1.0,
            adaptive_rho: true,
            rho_ratio: 10.0,
            rho_factor: 2.0,
            rho_interval: 50,
            eps_abs: 1e-5,
            eps_rel: 1e-4,
            max_iters: 50_000,
            relaxation: 1.6,
            trace_every: None,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub objective: f64,
}

/// Write trace rows as CSV with header `iter,primal_res,dual_res,objective`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iter,primal_res,dual_res,objective")?;
    for r in rows {
        writeln!(out, "{},{:e},{:e},{:e}", r.iter, r.primal_res, r.dual_res, r.objective)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub blocks: SdpBlocks,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Final primal and dual residuals, in normalized units.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    /// `‖y − A(x̂ + lift(X̂))‖₂` after polishing.
    pub residual_norm: f64,
    /// Diagonal shift applied to each LMI block by the final polish.
    pub polish_shift: (f64, f64),
    pub trace: Vec<TraceRow>,
    pub state: Option<SolverState>,
}

struct Iterate {
    blocks: SdpBlocks,
    s_far: Mat<C64>,
    s_near: Mat<C64>,
    meas: Vec<C64>,
}

/// Elementwise `a − b`.
fn sub(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Mat<C64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}

/// `α a + (1 − α) b`.
fn blend(alpha: f64, a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Mat<C64> {
    if alpha == 1.0 {
        return a.to_owned();
    }
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * alpha + b[(i, j)] * (1.0 - alpha))
}

fn blend_vec(alpha: f64, a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x * alpha + y * (1.0 - alpha)).collect()
}

fn vec_dist_sqr(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// Run ADMM on `program`.
pub fn solve(program: &ConicProgram, opts: &SolverOptions) -> Result<SdpSolution> {
    let (n, l, m) = (program.n(), program.l(), program.m());
    if !(opts.rho > 0.0 && opts.relaxation > 0.0 && opts.relaxation < 2.0) {
        return Err(Error::Config("ρ must be positive and relaxation in (0, 2)".into()));
    }
    let y_norm = norm2(&program.y);
    if !y_norm.is_finite() {
        return Err(Error::Numerical("non-finite observation".into()));
    }
    // the objective is non-negative on the feasible set, so the origin is optimal here
    if y_norm <= program.delta {
        let blocks = SdpBlocks::zeros(n, l);
        return Ok(SdpSolution {
            residual_norm: y_norm,
            blocks,
            status: SolveStatus::Converged,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            objective: 0.0,
            polish_shift: (0.0, 0.0),
            trace: Vec::new(),
            state: None,
        });
    }

    let scale = y_norm;
    let y: Vec<C64> = program.y.iter().map(|v| v / scale).collect();
    let delta = program.delta / scale;
    let tau = program.tau;
    let nf = n as f64;

    let (mut z_far, mut z_near, mut w, mut u_far, mut u_near, mut u_w, mut rho) =
        match &opts.warm_start {
            Some(s) => {
                dim_check("warm start: far block", n + 1, s.z_far.nrows())?;
                dim_check("warm start: near block", n + l, s.z_near.nrows())?;
                dim_check("warm start: residual block", m, s.w.len())?;
                (
                    s.z_far.clone(),
                    s.z_near.clone(),
                    s.w.clone(),
                    s.dual_far.clone(),
                    s.dual_near.clone(),
                    s.dual_w.clone(),
                    s.rho,
                )
            }
            None => (
                Mat::zeros(n + 1, n + 1),
                Mat::zeros(n + l, n + l),
                y.clone(),
                Mat::zeros(n + 1, n + 1),
                Mat::zeros(n + l, n + l),
                vec![ZERO; m],
                opts.rho,
            ),
        };

    let dim_total = ((n + 1) * (n + 1) + (n + l) * (n + l) + m) as f64;
    let alpha = opts.relaxation;
    let mut trace = Vec::new();
    let mut last_rho_change = 0usize;
    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut current: Option<Iterate> = None;
    let mut soc_share = 0.0;

    for iter in 1..=opts.max_iters {
        iterations = iter;
        let it = v_update(program, &y, tau, nf, rho, &z_far, &z_near, &w, &u_far, &u_near, &u_w);

        let r_far = blend(alpha, it.s_far.as_ref(), z_far.as_ref());
        let r_near = blend(alpha, it.s_near.as_ref(), z_near.as_ref());
        let r_meas = blend_vec(alpha, &it.meas, &w);

        let far_in = Mat::from_fn(n + 1, n + 1, |i, j| r_far[(i, j)] + u_far[(i, j)]);
        let near_in = Mat::from_fn(n + l, n + l, |i, j| r_near[(i, j)] + u_near[(i, j)]);
        let far_in = hermitian_part(far_in.as_ref());
        let near_in = hermitian_part(near_in.as_ref());
        if !(is_finite_mat(far_in.as_ref()) && is_finite_mat(near_in.as_ref())) {
            return Err(Error::Numerical(format!("non-finite iterate at iteration {iter}")));
        }
        let (z_far_new, _) = psd_project_hermitian(far_in.as_ref())?;
        let (z_near_new, _) = psd_project_hermitian(near_in.as_ref())?;
        let meas_in: Vec<C64> = r_meas.iter().zip(&u_w).map(|(a, b)| a + b).collect();
        let w_new = soc_project(&meas_in, &y, delta);

        u_far = Mat::from_fn(n + 1, n + 1, |i, j| far_in[(i, j)] - z_far_new[(i, j)]);
        u_near = Mat::from_fn(n + l, n + l, |i, j| near_in[(i, j)] - z_near_new[(i, j)]);
        u_w = meas_in.iter().zip(&w_new).map(|(a, b)| a - b).collect();

        let pf = fro_norm_sqr(sub(it.s_far.as_ref(), z_far_new.as_ref()).as_ref());
        let pn = fro_norm_sqr(sub(it.s_near.as_ref(), z_near_new.as_ref()).as_ref());
        let pw = vec_dist_sqr(&it.meas, &w_new);
        primal = (pf + pn + pw).sqrt();
        soc_share = if primal > 0.0 { pw.sqrt() / primal } else { 0.0 };
        let df = fro_norm_sqr(sub(z_far_new.as_ref(), z_far.as_ref()).as_ref());
        let dn = fro_norm_sqr(sub(z_near_new.as_ref(), z_near.as_ref()).as_ref());
        let dw = vec_dist_sqr(&w_new, &w);
        dual = rho * (df + dn + dw).sqrt();

        z_far = z_far_new;
        z_near = z_near_new;
        w = w_new;

        if !(primal.is_finite() && dual.is_finite()) {
            return Err(Error::Numerical(format!("non-finite residual at iteration {iter}")));
        }

        let lv = (fro_norm_sqr(it.s_far.as_ref())
            + fro_norm_sqr(it.s_near.as_ref())
            + crate::linalg::norm2_sqr(&it.meas))
        .sqrt();
        let zv = (fro_norm_sqr(z_far.as_ref())
            + fro_norm_sqr(z_near.as_ref())
            + crate::linalg::norm2_sqr(&w))
        .sqrt();
        let uv = rho
            * (fro_norm_sqr(u_far.as_ref())
                + fro_norm_sqr(u_near.as_ref())
                + crate::linalg::norm2_sqr(&u_w))
            .sqrt();
        let eps_pri = dim_total.sqrt() * opts.eps_abs + opts.eps_rel * lv.max(zv);
        let eps_dual = dim_total.sqrt() * opts.eps_abs + opts.eps_rel * uv;

        if let Some(every) = opts.trace_every {
            if every > 0 && (iter % every == 0 || iter == 1) {
                trace.push(TraceRow {
                    iter,
                    primal_res: primal,
                    dual_res: dual,
                    objective: program.objective(&it.blocks) * scale,
                });
            }
        }
        current = Some(it);

        if primal <= eps_pri && dual <= eps_dual {
            status = SolveStatus::Converged;
            break;
        }

        if opts.adaptive_rho && iter - last_rho_change >= opts.rho_interval {
            let factor = if primal > opts.rho_ratio * dual {
                opts.rho_factor
            } else if dual > opts.rho_ratio * primal {
                1.0 / opts.rho_factor
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                // scaled duals are Λ/ρ
                let inv = 1.0 / factor;
                u_far = Mat::from_fn(n + 1, n + 1, |i, j| u_far[(i, j)] * inv);
                u_near = Mat::from_fn(n + l, n + l, |i, j| u_near[(i, j)] * inv);
                u_w.iter_mut().for_each(|v| *v *= inv);
                last_rho_change = iter;
            }
        }
    }

    let it = match current {
        Some(it) => it,
        None => return Err(Error::Config("max_iters must be at least 1".into())),
    };
    if status == SolveStatus::MaxIters && soc_share > 0.9 && dual < primal * 1e-3 {
        status = SolveStatus::InfeasibleSuspected;
    }

    let mut blocks = it.blocks.scaled(scale);
    let polish_shift = polish(program, &mut blocks)?;
    let objective = program.objective(&blocks);
    let residual_norm = program.residual_norm(&blocks);
    Ok(SdpSolution {
        blocks,
        status,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        objective,
        residual_norm,
        polish_shift,
        trace,
        state: Some(SolverState {
            z_far,
            z_near,
            w,
            dual_far: u_far,
            dual_near: u_near,
            dual_w: u_w,
            rho,
        }),
    })
}

/// Closed-form minimization over the structured variables.
#[allow(clippy::too_many_arguments)]
fn v_update(
    program: &ConicProgram,
    _y: &[C64],
    tau: f64,
    nf: f64,
    rho: f64,
    z_far: &Mat<C64>,
    z_near: &Mat<C64>,
    w: &[C64],
    u_far: &Mat<C64>,
    u_near: &Mat<C64>,
    u_w: &[C64],
) -> Iterate {
    let n = program.n();
    let l = program.l();
    let tf = sub(z_far.as_ref(), u_far.as_ref());
    let tn = sub(z_near.as_ref(), u_near.as_ref());

    let mut uf = toeplitz_average(tf.as_ref().submatrix(0, 0, n, n));
    uf[0].re -= 1.0 / (2.0 * rho * nf);
    let t = tf[(n, n)].re - 1.0 / (2.0 * rho);

    let mut un = toeplitz_average(tn.as_ref().submatrix(0, 0, n, n));
    un[0].re -= tau / (2.0 * rho * nf);
    let tt = hermitian_part(tn.as_ref().submatrix(n, n, l, l));
    let t_mat = Mat::from_fn(l, l, |i, j| {
        if i == j {
            tt[(i, i)] - tau / (2.0 * rho)
        } else {
            tt[(i, j)]
        }
    });

    // min ‖x − q‖² + ‖X − Q‖² + ½‖C(x, X) − r‖² via (2I + C^H C)^{-1} = ½(I − C^H (2I + C C^H)^{-1} C)
    let q: Vec<C64> = (0..n).map(|i| (tf[(i, n)] + tf[(n, i)].conj()) * 0.5).collect();
    let qq = Mat::from_fn(l, n, |a, j| (tn[(n + a, j)] + tn[(j, n + a)].conj()) * 0.5);
    let r: Vec<C64> = w.iter().zip(u_w).map(|(a, b)| a - b).collect();
    let (cr_x, cr_lift) = program.apply_measure_adj(&r);
    let sx: Vec<C64> = q.iter().zip(&cr_x).map(|(a, b)| a * 2.0 + b).collect();
    let s_lift = Mat::from_fn(l, n, |a, j| qq[(a, j)] * 2.0 + cr_lift[(a, j)]);
    let cs = program.apply_measure(&sx, s_lift.as_ref());
    let k = program.woodbury.solve_vec(&cs);
    let (ck_x, ck_lift) = program.apply_measure_adj(&k);
    let x: Vec<C64> = sx.iter().zip(&ck_x).map(|(a, b)| (a - b) * 0.5).collect();
    let lifted = Mat::from_fn(l, n, |a, j| (s_lift[(a, j)] - ck_lift[(a, j)]) * 0.5);

    let blocks = SdpBlocks {
        x,
        lifted,
        u_far: uf,
        u_near: un,
        t,
        t_mat,
    };
    let meas = program.apply_measure(&blocks.x, blocks.lifted.as_ref());
    Iterate {
        s_far: far_lmi(&blocks),
        s_near: near_lmi(&blocks),
        meas,
        blocks,
    }
}

/// Move `blocks` onto the feasible set; returns the diagonal shifts applied to the LMIs.
fn polish(program: &ConicProgram, blocks: &mut SdpBlocks) -> Result<(f64, f64)> {
    let (n, l) = (program.n(), program.l());
    let meas = program.apply_measure(&blocks.x, blocks.lifted.as_ref());
    let target = soc_project(&meas, &program.y, program.delta);
    let gap: Vec<C64> = target.iter().zip(&meas).map(|(a, b)| a - b).collect();
    if norm2(&gap) > 0.0 {
        // minimum-norm (x, X) correction with C·Δ = gap
        let g = program.range.solve_vec(&gap);
        let (dx, dlift) = program.apply_measure_adj(&g);
        for (xi, d) in blocks.x.iter_mut().zip(dx) {
            *xi += d;
        }
        for j in 0..n {
            for a in 0..l {
                blocks.lifted[(a, j)] += dlift[(a, j)];
            }
        }
    }
    let mut shifts = (0.0, 0.0);
    let lf = hermitian_eigenvalues(far_lmi(blocks).as_ref())?[0];
    if lf < 0.0 {
        let s = -lf * (1.0 + 1e-12) + f64::MIN_POSITIVE;
        blocks.u_far[0].re += s;
        blocks.t += s;
        shifts.0 = s;
    }
    let ln = hermitian_eigenvalues(near_lmi(blocks).as_ref())?[0];
    if ln < 0.0 {
        let s = -ln * (1.0 + 1e-12) + f64::MIN_POSITIVE;
        blocks.u_near[0].re += s;
        for i in 0..l {
            blocks.t_mat[(i, i)].re += s;
        }
        shifts.1 = s;
    }
    Ok(shifts)
}

//! WMMSE block-coordinate descent for the joint hologram/precoder design.
//!
//! One outer iteration cycles through four blocks:
//! 1. MMSE equalizers `g` and weights `w` (closed forms),
//! 2. per-subband precoders `V_u` via the KKT system `(A_u + λI) V_u = B_u`
//!    with the BS-power dual `λ` found by bisection,
//! 3. a feasibility restoration that shrinks the hologram when the new
//!    precoders push the loaded surface power past its budget,
//! 4. the hologram step: a box-constrained quadratic model (coupling-freeze
//!    or Jacobian-aided first-order surrogate) minimized by projected
//!    gradient descent with power backtracking, wrapped in a monotone
//!    safeguard that re-evaluates the exact objective.
//!
//! The internal objective is `J = Σ_{k,u} (1 - ln(1 + SINR_{k,u}))`, which is
//! the WMMSE value at the closed-form equalizers and decreases exactly when
//! the sum rate increases; reported rates use `log₂` and the subband width.

use crate::channel::ChannelSet;
use crate::error::{CoreError, Result};
use crate::rhs_operator::{
    coupled_operator, rhs_power, surrogate_anchor, CoupledOperator, HologramState,
    SurrogateOperator,
};
use crate::scenario::Scenario;
use crate::{cr, CMat, CVec, RMat, RVec, C64};

/// Per-subband precoder matrices V_u (L×K) with their cached total power.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub v: Vec<CMat>,
    /// Σ_u Tr(V_u V_uᴴ).
    pub total_power: f64,
}

impl PrecoderSet {
    pub fn new(v: Vec<CMat>) -> Self {
        let total_power = v.iter().map(|m| m.norm_squared()).sum();
        PrecoderSet { v, total_power }
    }
}

/// MMSE equalizers, MSE values and WMMSE weights, indexed `[k][u]`.
#[derive(Debug, Clone)]
pub struct EqualizerState {
    pub g: Vec<Vec<C64>>,
    pub w: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
}

/// Hologram update flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HologramMode {
    /// Hold C_u fixed; M becomes affine in the absolute amplitudes m.
    Freeze,
    /// First-order coupling-consistent surrogate over the step Δm.
    Jacobian,
}

/// Quadratic hologram subproblem: minimize `xᵀ Q x - 2 ℜ(q)ᵀ x` over the box,
/// subject to the quadratic power model `η Σ_u (xᵀ R_u x + 2 b_uᵀx + c_u) ≤ P`.
///
/// In freeze mode the variable x is the absolute amplitude vector (anchor 0,
/// box [0,1], b_u = 0, c_u = 0); in jacobian mode x is the step Δm around
/// `anchor` with box [-anchor, 1-anchor].
#[derive(Debug, Clone)]
pub struct HologramQP {
    pub q_mat: RMat,
    pub q_vec: CVec,
    pub r_pow: Vec<RMat>,
    pub b_pow: Vec<RVec>,
    pub c_pow: Vec<f64>,
    pub anchor: RVec,
    pub mode: HologramMode,
}

/// Knobs of the outer loop and its subproblem solvers.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Maximum outer iterations T.
    pub max_iter: usize,
    /// Relative |ΔJ| termination threshold (0 disables early stopping).
    pub stop_threshold: f64,
    /// Projected-gradient step size ρ.
    pub step_size: f64,
    /// Inner projected-gradient iterations per hologram step.
    pub inner_iters: usize,
    /// Relative power tolerance of the dual bisection.
    pub bisection_tol: f64,
    /// Hologram update flavor.
    pub variant: HologramMode,
    /// Re-evaluate the exact objective and shrink/reject ascent steps.
    pub monotone_safeguard: bool,
    /// Run the hologram block at all (fixed-hologram schemes disable it).
    pub update_hologram: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 100,
            stop_threshold: 1e-4,
            step_size: 0.05,
            inner_iters: 50,
            bisection_tol: 1e-8,
            variant: HologramMode::Freeze,
            monotone_safeguard: true,
            update_hologram: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(CoreError::invalid("max_iter", "must be positive"));
        }
        if !(self.step_size > 0.0) {
            return Err(CoreError::invalid("step_size", "must be positive"));
        }
        if self.stop_threshold < 0.0 {
            return Err(CoreError::invalid("stop_threshold", "must be nonnegative"));
        }
        if !(self.bisection_tol > 0.0) {
            return Err(CoreError::invalid("bisection_tol", "must be positive"));
        }
        Ok(())
    }
}

/// One recorded outer iteration.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iter: usize,
    pub sum_rate_bps: f64,
    pub sum_se_bpshz: f64,
    pub j: f64,
    pub rhs_power: f64,
    pub bs_power: f64,
    pub lambda: f64,
    pub step_norm: f64,
    pub backtracks: usize,
    pub restored: bool,
}

/// Full per-iteration record of a solve.
#[derive(Debug, Clone, Default)]
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
}

impl SolverTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

/// Result of [`bcd_solve`].
#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub hologram: HologramState,
    pub precoders: PrecoderSet,
    pub trace: SolverTrace,
}

/// Effective channels h̄_u = H_u M_u, one K×L matrix per subband.
pub fn effective_channels(channels: &ChannelSet, operators: &[CoupledOperator]) -> Vec<CMat> {
    let k_users = channels.k_users();
    (0..channels.subbands())
        .map(|u| {
            let n = channels.rows[0][u].len();
            let h = CMat::from_fn(k_users, n, |k, i| channels.rows[k][u][i]);
            &h * &operators[u].m_op
        })
        .collect()
}

fn stream_gains(hbar: &CMat, v: &CMat) -> CMat {
    hbar * v
}

/// SINR table γ[k][u] for the current precoders.
pub fn sinr(hbar: &[CMat], precoders: &PrecoderSet, noise: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k_users = hbar[0].nrows();
    let subbands = hbar.len();
    let mut gamma = vec![vec![0.0; subbands]; k_users];
    for u in 0..subbands {
        let z = stream_gains(&hbar[u], &precoders.v[u]);
        for k in 0..k_users {
            let sig = z[(k, k)].norm_sqr();
            let mut interference = 0.0;
            for i in 0..z.ncols() {
                if i != k {
                    interference += z[(k, i)].norm_sqr();
                }
            }
            gamma[k][u] = sig / (noise[k][u] + interference);
        }
    }
    gamma
}

/// Sum rate (bit/s, scaled by the subband width) and the surrogate objective
/// `J = Σ (1 - ln(1+γ))`.
pub fn objectives(gamma: &[Vec<f64>], b_g: f64) -> (f64, f64) {
    let mut log_sum = 0.0;
    let mut count = 0usize;
    for row in gamma {
        for &g in row {
            log_sum += g.ln_1p();
            count += 1;
        }
    }
    let sum_rate = b_g * log_sum / std::f64::consts::LN_2;
    let j = count as f64 - log_sum;
    (sum_rate, j)
}

/// Direct evaluation of the per-stream MSE at equalizer `g`:
/// `e = 1 - 2ℜ(ḡ z_k) + |g|² (Σ_i |z_i|² + σ²)` where `z_i = h̄ v_i`.
pub fn mse_direct(z_row: &[C64], k: usize, g: C64, sigma2: f64) -> f64 {
    let z_energy: f64 = z_row.iter().map(|z| z.norm_sqr()).sum();
    1.0 - 2.0 * (g.conj() * z_row[k]).re + g.norm_sqr() * (z_energy + sigma2)
}

/// Closed-form MMSE equalizers, MSEs and weights:
/// `g* = z_k / (Σ_i |z_i|² + σ²)`, `e* = 1/(1+γ)`, `w* = 1/e* = 1+γ`.
pub fn mmse_update(hbar: &[CMat], precoders: &PrecoderSet, noise: &[Vec<f64>]) -> EqualizerState {
    let k_users = hbar[0].nrows();
    let subbands = hbar.len();
    let mut g = vec![vec![C64::new(0.0, 0.0); subbands]; k_users];
    let mut w = vec![vec![1.0; subbands]; k_users];
    let mut e = vec![vec![1.0; subbands]; k_users];
    for u in 0..subbands {
        let z = stream_gains(&hbar[u], &precoders.v[u]);
        for k in 0..k_users {
            let mut total = noise[k][u];
            for i in 0..z.ncols() {
                total += z[(k, i)].norm_sqr();
            }
            let sig = z[(k, k)].norm_sqr();
            let gamma = sig / (total - sig);
            g[k][u] = z[(k, k)] / cr(total);
            e[k][u] = 1.0 / (1.0 + gamma);
            w[k][u] = 1.0 + gamma;
        }
    }
    EqualizerState { g, w, e }
}

/// Precoder subproblem data: `A_u = Σ_k w|g|² h̃ h̃ᴴ` (Hermitian PSD) and
/// `B_u` with column k equal to `w_k g_k h̃_k`, where `h̃_k = h̄_kᴴ`.
pub fn precoder_qp_assemble(hbar: &[CMat], eq: &EqualizerState) -> (Vec<CMat>, Vec<CMat>) {
    let k_users = hbar[0].nrows();
    let l = hbar[0].ncols();
    let subbands = hbar.len();
    let mut a_mats = Vec::with_capacity(subbands);
    let mut b_mats = Vec::with_capacity(subbands);
    for (u, h_u) in hbar.iter().enumerate() {
        let mut a = CMat::zeros(l, l);
        let mut b = CMat::zeros(l, k_users);
        for k in 0..k_users {
            let htilde = CVec::from_fn(l, |j, _| h_u[(k, j)].conj());
            let coeff = eq.w[k][u] * eq.g[k][u].norm_sqr();
            a.gerc(cr(coeff), &htilde, &htilde, cr(1.0));
            let scale = cr(eq.w[k][u]) * eq.g[k][u];
            for j in 0..l {
                b[(j, k)] = scale * htilde[j];
            }
        }
        a_mats.push(a);
        b_mats.push(b);
    }
    (a_mats, b_mats)
}

/// Solves `min Σ_u Σ_k w e` over the precoders subject to
/// `Σ_u Tr(V_u V_uᴴ) ≤ p_bs`: `V_u(λ) = (A_u + λI)^{-1} B_u` with λ = 0 when
/// the unconstrained solution is feasible and otherwise the bisected dual.
pub fn precoder_update(
    a_mats: &[CMat],
    b_mats: &[CMat],
    p_bs: f64,
    rel_tol: f64,
) -> Result<(PrecoderSet, f64)> {
    if !(p_bs > 0.0) {
        return Err(CoreError::invalid("p_bs", "power budget must be positive"));
    }
    let factors: Vec<PrecoderFactorData> = a_mats
        .iter()
        .zip(b_mats)
        .map(|(a, b)| factorize(a, b))
        .collect();

    let power_at = |lambda: f64| -> f64 { factors.iter().map(|f| f.power(lambda)).sum() };

    let p0 = power_at(0.0);
    let lambda = if p0 <= p_bs {
        0.0
    } else {
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        let mut doublings = 0;
        while power_at(hi) > p_bs {
            hi *= 2.0;
            doublings += 1;
            if doublings > 200 {
                return Err(CoreError::NumericFailure(
                    "dual bisection failed to bracket the power budget".into(),
                ));
            }
        }
        let mut mid = hi;
        for _ in 0..400 {
            mid = 0.5 * (lo + hi);
            let p = power_at(mid);
            if (p - p_bs).abs() <= rel_tol * p_bs {
                break;
            }
            if p > p_bs {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        mid
    };

    let v: Vec<CMat> = factors.iter().map(|f| f.precoders(lambda)).collect();
    Ok((PrecoderSet::new(v), lambda))
}

struct PrecoderFactorData {
    eigenvalues: RVec,
    eigenvectors: CMat,
    w: CMat,
    zero_modes: Vec<bool>,
    unbounded_at_zero: bool,
}

fn factorize(a: &CMat, b: &CMat) -> PrecoderFactorData {
    let l = a.nrows();
    // Symmetrize before the Hermitian eigensolver to clear rounding skew.
    let sym = (a + a.adjoint()).map(|x| x * cr(0.5));
    let eig = sym.symmetric_eigen();
    let eigenvectors = eig.eigenvectors;
    let eigenvalues = RVec::from_fn(l, |i, _| eig.eigenvalues[i].max(0.0));
    let w = eigenvectors.ad_mul(b);
    let ev_max = eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let b_norm = b.norm();
    let mut zero_modes = vec![false; l];
    let mut unbounded_at_zero = false;
    for i in 0..l {
        if eigenvalues[i] <= ev_max * 1e-12 {
            zero_modes[i] = true;
            let row_norm: f64 = (0..w.ncols()).map(|j| w[(i, j)].norm_sqr()).sum();
            if row_norm.sqrt() > 1e-9 * b_norm.max(1e-300) {
                unbounded_at_zero = true;
            }
        }
    }
    PrecoderFactorData {
        eigenvalues,
        eigenvectors,
        w,
        zero_modes,
        unbounded_at_zero,
    }
}

impl PrecoderFactorData {
    /// P(λ) contribution: Σ_{j,k} |W_{j,k}|² / (ev_j + λ)².
    fn power(&self, lambda: f64) -> f64 {
        if lambda == 0.0 && self.unbounded_at_zero {
            return f64::INFINITY;
        }
        let mut total = 0.0;
        for j in 0..self.w.nrows() {
            if lambda == 0.0 && self.zero_modes[j] {
                continue; // pseudo-inverse convention on the null space
            }
            let denom = self.eigenvalues[j] + lambda;
            if denom <= 0.0 {
                continue;
            }
            for k in 0..self.w.ncols() {
                total += self.w[(j, k)].norm_sqr() / (denom * denom);
            }
        }
        total
    }

    /// V(λ) = Q diag(1/(ev+λ)) W.
    fn precoders(&self, lambda: f64) -> CMat {
        let mut scaled = self.w.clone();
        for j in 0..scaled.nrows() {
            if lambda == 0.0 && self.zero_modes[j] {
                for k in 0..scaled.ncols() {
                    scaled[(j, k)] = C64::new(0.0, 0.0);
                }
                continue;
            }
            let inv = cr(1.0 / (self.eigenvalues[j] + lambda));
            for k in 0..scaled.ncols() {
                scaled[(j, k)] *= inv;
            }
        }
        &self.eigenvectors * scaled
    }
}

/// Shared accumulation for both hologram assemblies. The product vectors
/// `ã_{k,i} = (h_k C) ⊙ (T v_i)` satisfy `z_{k,i} = ãᵀ x` exactly, so the
/// weighted-MSE quadratic has `Q = Σ w|g|² ℜ(ã ãᴴ)` and a linear term built
/// from `w ḡ ã_{k,k}` (minus the anchor cross terms in jacobian mode).
struct QpAccumulator {
    q_complex: CMat,
    q_vec: CVec,
}

impl QpAccumulator {
    fn new(n: usize) -> Self {
        QpAccumulator {
            q_complex: CMat::zeros(n, n),
            q_vec: CVec::zeros(n),
        }
    }

    fn add_stream(&mut self, atilde: &CVec, w: f64, g: C64, diagonal: bool, z_anchor: Option<C64>) {
        let coeff = w * g.norm_sqr();
        self.q_complex.gerc(cr(coeff), atilde, atilde, cr(1.0));
        if diagonal {
            let scale = cr(w) * g.conj();
            self.q_vec.axpy(scale, atilde, cr(1.0));
        }
        if let Some(z) = z_anchor {
            let scale = -cr(coeff) * z.conj();
            self.q_vec.axpy(scale, atilde, cr(1.0));
        }
    }

    fn q_real(&self) -> RMat {
        RMat::from_fn(self.q_complex.nrows(), self.q_complex.ncols(), |i, j| {
            self.q_complex[(i, j)].re
        })
    }
}

/// `R_u = ℜ(G ⊙ Sᵀ)` with `G = Cᴴ C` and `S = Y Yᴴ`.
fn power_quadratic(c: &CMat, y: &CMat) -> RMat {
    let g = c.ad_mul(c);
    let s = y * y.adjoint();
    RMat::from_fn(g.nrows(), g.ncols(), |p, q| (g[(p, q)] * s[(q, p)]).re)
}

/// Coupling-freeze hologram QP at the current operators: C_u is held fixed,
/// the model variable is the absolute amplitude vector m.
pub fn hologram_qp_freeze_assemble(
    channels: &ChannelSet,
    operators: &[CoupledOperator],
    feeds: &[CMat],
    eq: &EqualizerState,
    precoders: &PrecoderSet,
) -> HologramQP {
    let n = operators[0].c.nrows();
    let k_users = channels.k_users();
    let subbands = channels.subbands();
    let mut acc = QpAccumulator::new(n);
    let mut r_pow = Vec::with_capacity(subbands);
    let mut b_pow = Vec::with_capacity(subbands);
    let mut c_pow = Vec::with_capacity(subbands);
    for u in 0..subbands {
        let c = &operators[u].c;
        let v = &precoders.v[u];
        for k in 0..k_users {
            // r_k = h_k C as a length-N vector (no conjugation).
            let h = &channels.rows[k][u];
            let r_k = c.tr_mul(h);
            for i in 0..k_users {
                let f_i = &feeds[u] * v.column(i);
                let atilde = CVec::from_fn(n, |p, _| r_k[p] * f_i[p]);
                acc.add_stream(&atilde, eq.w[k][u], eq.g[k][u], i == k, None);
            }
        }
        let y = &feeds[u] * v;
        r_pow.push(power_quadratic(c, &y));
        b_pow.push(RVec::zeros(n));
        c_pow.push(0.0);
    }
    HologramQP {
        q_mat: acc.q_real(),
        q_vec: acc.q_vec,
        r_pow,
        b_pow,
        c_pow,
        anchor: RVec::zeros(n),
        mode: HologramMode::Freeze,
    }
}

/// Jacobian-aided hologram QCQP over the step Δm around the surrogate anchor.
pub fn hologram_qcqp_jacobian_assemble(
    channels: &ChannelSet,
    surrogates: &[SurrogateOperator],
    eq: &EqualizerState,
    precoders: &PrecoderSet,
) -> HologramQP {
    let n = surrogates[0].c.nrows();
    let k_users = channels.k_users();
    let subbands = channels.subbands();
    let mut acc = QpAccumulator::new(n);
    let mut r_pow = Vec::with_capacity(subbands);
    let mut b_pow = Vec::with_capacity(subbands);
    let mut c_pow = Vec::with_capacity(subbands);
    for (u, sur) in surrogates.iter().enumerate() {
        let v = &precoders.v[u];
        // Anchor stream gains z⁽ᵗ⁾_{k,i} = h_k M⁽ᵗ⁾ v_i.
        let h_mat = CMat::from_fn(k_users, n, |k, p| channels.rows[k][u][p]);
        let z_anchor = &h_mat * &sur.m_op * v;
        for k in 0..k_users {
            let h = &channels.rows[k][u];
            let r_k = sur.c.tr_mul(h);
            for i in 0..k_users {
                let f_i = &sur.t * v.column(i);
                let atilde = CVec::from_fn(n, |p, _| r_k[p] * f_i[p]);
                acc.add_stream(
                    &atilde,
                    eq.w[k][u],
                    eq.g[k][u],
                    i == k,
                    Some(z_anchor[(k, i)]),
                );
            }
        }
        let x = &sur.m_op * v;
        let y = &sur.t * v;
        r_pow.push(power_quadratic(&sur.c, &y));
        // b_u = ℜ(diag(Y Xᴴ C)).
        let xc = x.ad_mul(&sur.c);
        b_pow.push(RVec::from_fn(n, |p, _| {
            let mut acc_d = C64::new(0.0, 0.0);
            for k in 0..y.ncols() {
                acc_d += y[(p, k)] * xc[(k, p)];
            }
            acc_d.re
        }));
        c_pow.push(x.norm_squared());
    }
    HologramQP {
        q_mat: acc.q_real(),
        q_vec: acc.q_vec,
        r_pow,
        b_pow,
        c_pow,
        anchor: surrogates[0].anchor.clone(),
        mode: HologramMode::Jacobian,
    }
}

/// Quadratic power model of a QP at variable value `x`.
pub fn qp_power_model(qp: &HologramQP, x: &RVec, eta: f64) -> f64 {
    let mut total = 0.0;
    for u in 0..qp.r_pow.len() {
        total += (&qp.r_pow[u] * x).dot(x) + 2.0 * qp.b_pow[u].dot(x) + qp.c_pow[u];
    }
    eta * total
}

/// Surrogate objective `f(x) = xᵀ Q x - 2 ℜ(q)ᵀ x`.
pub fn qp_objective(qp: &HologramQP, x: &RVec) -> f64 {
    let q_re = RVec::from_fn(x.len(), |i, _| qp.q_vec[i].re);
    (&qp.q_mat * x).dot(x) - 2.0 * q_re.dot(x)
}

/// Outcome of one hologram step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub m_next: RVec,
    /// Safeguard shrink count (0 when the full step was accepted).
    pub backtracks: usize,
    /// True when every shrink failed and the anchor was kept.
    pub fell_back: bool,
}

/// Exact-objective callback: maps a candidate hologram to its (J, loaded
/// power) pair under the caller's coupling model, or `None` when the
/// candidate is numerically unusable.
pub type ExactEval<'a> = &'a dyn Fn(&RVec) -> Option<(f64, f64)>;

/// Projected-gradient descent on the hologram QP with power backtracking,
/// optionally wrapped in the exact-objective monotone safeguard.
///
/// The anchor must be power-feasible (the caller restores feasibility before
/// assembling the QP). `exact_eval`, when provided, rejects any candidate the
/// closure maps to `None` outright.
pub fn hologram_step(
    qp: &HologramQP,
    m_t: &RVec,
    p_rhs: f64,
    eta: f64,
    options: &SolverOptions,
    exact_eval: Option<ExactEval<'_>>,
) -> Result<StepResult> {
    let n = m_t.len();
    let (mut x, lo, hi) = match qp.mode {
        HologramMode::Freeze => (m_t.clone(), RVec::zeros(n), RVec::from_element(n, 1.0)),
        HologramMode::Jacobian => (RVec::zeros(n), m_t.map(|v| -v), m_t.map(|v| 1.0 - v)),
    };
    if qp_power_model(qp, &x, eta) > p_rhs * (1.0 + 1e-6) {
        return Err(CoreError::NumericFailure(
            "hologram anchor is power-infeasible; restore feasibility first".into(),
        ));
    }
    let q_re = RVec::from_fn(n, |i, _| qp.q_vec[i].re);
    let clamp_box = |v: &RVec| RVec::from_fn(n, |i, _| v[i].clamp(lo[i], hi[i]));

    let mut f_x = qp_objective(qp, &x);
    for _ in 0..options.inner_iters {
        let grad = &qp.q_mat * &x * 2.0 - &q_re * 2.0;
        let mut step = options.step_size;
        let mut accepted = None;
        for _ in 0..40 {
            let candidate = clamp_box(&(&x - &grad * step));
            let f_c = qp_objective(qp, &candidate);
            if qp_power_model(qp, &candidate, eta) <= p_rhs * (1.0 + 1e-12)
                && f_c <= f_x + 1e-15 * (1.0 + f_x.abs())
            {
                accepted = Some((candidate, f_c));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, f_c)) = accepted else {
            break;
        };
        let moved = (&candidate - &x).norm();
        x = candidate;
        f_x = f_c;
        if moved < 1e-12 {
            break;
        }
    }

    let m_cand = match qp.mode {
        HologramMode::Freeze => x,
        HologramMode::Jacobian => m_t + &x,
    };

    let Some(eval) = exact_eval.filter(|_| options.monotone_safeguard) else {
        return Ok(StepResult {
            m_next: m_cand,
            backtracks: 0,
            fell_back: false,
        });
    };

    let Some((j_ref, _)) = eval(m_t) else {
        return Err(CoreError::NumericFailure(
            "safeguard could not evaluate the anchor hologram".into(),
        ));
    };
    let dir = &m_cand - m_t;
    let mut scale = 1.0_f64;
    for backtracks in 0..=20 {
        let candidate = m_t + &dir * scale;
        if let Some((j_c, p_c)) = eval(&candidate) {
            if j_c <= j_ref + 1e-12 * j_ref.abs().max(1.0) && p_c <= p_rhs * (1.0 + 1e-9) {
                return Ok(StepResult {
                    m_next: candidate,
                    backtracks,
                    fell_back: false,
                });
            }
        }
        scale *= 0.5;
    }
    Ok(StepResult {
        m_next: m_t.clone(),
        backtracks: 20,
        fell_back: true,
    })
}

/// Inputs of one solver run: the physical scenario plus the coupling model
/// the optimizer is allowed to use (which the coupling-unaware baseline
/// deliberately zeroes out).
pub struct BcdProblem<'a> {
    pub scenario: &'a Scenario,
    /// Per-subband coupling matrices used during the design.
    pub xi_design: Vec<&'a CMat>,
    /// True when `xi_design` is the scenario's true coupling (lets the trace
    /// reuse design operators instead of rebuilding).
    pub design_is_true: bool,
    /// Starting hologram.
    pub initial_m: RVec,
}

impl<'a> BcdProblem<'a> {
    /// Coupling-aware problem: design model equals the true coupling.
    pub fn coupling_aware(scenario: &'a Scenario, initial_m: RVec) -> Self {
        BcdProblem {
            xi_design: scenario.coupling.iter().map(|c| &c.total).collect(),
            design_is_true: true,
            scenario,
            initial_m,
        }
    }
}

fn build_operators(
    xi: &[&CMat],
    feeds: &[CMat],
    m: &RVec,
    margin: f64,
) -> Result<Vec<CoupledOperator>> {
    xi.iter()
        .zip(feeds)
        .map(|(x, f)| coupled_operator(m, x, f, margin))
        .collect()
}

/// Matched-filter precoder initialization scaled to the full BS budget.
fn matched_filter_init(hbar: &[CMat], p_bs: f64) -> PrecoderSet {
    let mut v: Vec<CMat> = hbar
        .iter()
        .map(|h| {
            let l = h.ncols();
            let k_users = h.nrows();
            CMat::from_fn(l, k_users, |j, k| {
                let row_norm: f64 = (0..l).map(|p| h[(k, p)].norm_sqr()).sum::<f64>().sqrt();
                if row_norm > 0.0 {
                    h[(k, j)].conj() / cr(row_norm)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        })
        .collect();
    let total: f64 = v.iter().map(|m| m.norm_squared()).sum();
    if total > 0.0 {
        let scale = cr((p_bs / total).sqrt());
        for m in &mut v {
            *m *= scale;
        }
    }
    PrecoderSet::new(v)
}

/// The outer WMMSE block-coordinate loop (Algorithm-style):
/// rebuild operators → MMSE equalizers/weights → precoder KKT update →
/// feasibility restoration → hologram step → record exact metrics under the
/// true coupling. Terminates at `max_iter` or when the relative change of J
/// drops below `stop_threshold`.
pub fn bcd_solve(problem: &BcdProblem, options: &SolverOptions) -> Result<SolverOutput> {
    options.validate()?;
    let scn = problem.scenario;
    let feeds = &scn.feeds;
    let noise = &scn.channels.noise;
    let margin = scn.spectral_margin;
    let b_g = scn.plan.b_g;
    let bandwidth = scn.plan.bandwidth;

    let mut m = problem.initial_m.clone();
    let mut ops_d = build_operators(&problem.xi_design, feeds, &m, margin)?;
    let mut hbar_d = effective_channels(&scn.channels, &ops_d);
    let mut precoders = matched_filter_init(&hbar_d, scn.p_bs);

    let xi_true: Vec<&CMat> = scn.coupling.iter().map(|c| &c.total).collect();
    let mut trace = SolverTrace::default();
    let mut prev_j: Option<f64> = None;

    for iter in 1..=options.max_iter {
        let eq = mmse_update(&hbar_d, &precoders, noise);
        let (a_mats, b_mats) = precoder_qp_assemble(&hbar_d, &eq);
        let (new_v, lambda) = precoder_update(&a_mats, &b_mats, scn.p_bs, options.bisection_tol)?;
        precoders = new_v;

        let mut restored = false;
        let mut backtracks = 0usize;
        let mut step_norm = 0.0;
        if options.update_hologram {
            // Restoration: the precoder block ignores the surface budget, so
            // shrink the hologram if the new precoders overload it.
            let mut power_d = rhs_power(&ops_d, &precoders.v, scn.eta);
            if power_d > scn.p_rhs * (1.0 + 1e-9) {
                restored = true;
                let mut halvings = 0;
                while power_d > scn.p_rhs * (1.0 + 1e-9) {
                    m *= 0.5;
                    ops_d = build_operators(&problem.xi_design, feeds, &m, margin)?;
                    power_d = rhs_power(&ops_d, &precoders.v, scn.eta);
                    halvings += 1;
                    if halvings > 200 {
                        return Err(CoreError::NumericFailure(
                            "feasibility restoration failed to reach the surface budget".into(),
                        ));
                    }
                }
            }

            let qp = match options.variant {
                HologramMode::Freeze => {
                    hologram_qp_freeze_assemble(&scn.channels, &ops_d, feeds, &eq, &precoders)
                }
                HologramMode::Jacobian => {
                    let surrogates: Vec<SurrogateOperator> = ops_d
                        .iter()
                        .enumerate()
                        .map(|(u, op)| surrogate_anchor(op, problem.xi_design[u], &feeds[u], &m))
                        .collect();
                    hologram_qcqp_jacobian_assemble(&scn.channels, &surrogates, &eq, &precoders)
                }
            };

            let exact_eval = |candidate: &RVec| -> Option<(f64, f64)> {
                let ops = build_operators(&problem.xi_design, feeds, candidate, margin).ok()?;
                let hbar = effective_channels(&scn.channels, &ops);
                let gamma = sinr(&hbar, &precoders, noise);
                let (_, j) = objectives(&gamma, b_g);
                Some((j, rhs_power(&ops, &precoders.v, scn.eta)))
            };
            let step = hologram_step(&qp, &m, scn.p_rhs, scn.eta, options, Some(&exact_eval))?;
            step_norm = (&step.m_next - &m).norm();
            backtracks = step.backtracks;
            m = step.m_next;
            ops_d = build_operators(&problem.xi_design, feeds, &m, margin)?;
            hbar_d = effective_channels(&scn.channels, &ops_d);
        }

        // Exact metrics under the true coupling, whatever the design model.
        let (gamma, rhs_pow) = if problem.design_is_true {
            let gamma = sinr(&hbar_d, &precoders, noise);
            (gamma, rhs_power(&ops_d, &precoders.v, scn.eta))
        } else {
            let ops_t = build_operators(&xi_true, feeds, &m, margin)?;
            let hbar_t = effective_channels(&scn.channels, &ops_t);
            let gamma = sinr(&hbar_t, &precoders, noise);
            (gamma, rhs_power(&ops_t, &precoders.v, scn.eta))
        };
        let (sum_rate, j) = objectives(&gamma, b_g);
        trace.rows.push(TraceRow {
            iter,
            sum_rate_bps: sum_rate,
            sum_se_bpshz: sum_rate / bandwidth,
            j,
            rhs_power: rhs_pow,
            bs_power: precoders.total_power,
            lambda,
            step_norm,
            backtracks,
            restored,
        });

        if let Some(prev) = prev_j {
            if options.stop_threshold > 0.0
                && (j - prev).abs() / prev.abs().max(1.0) < options.stop_threshold
            {
                break;
            }
        }
        prev_j = Some(j);
    }

    Ok(SolverOutput {
        hologram: HologramState { m, weights: None },
        precoders,
        trace,
    })
}

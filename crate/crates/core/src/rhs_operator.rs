//! The coupled surface operator and its differential structure.
//!
//! Feeders launch a guided reference wave; element n sees the pure phase
//! `exp(-j k_s ‖r_n - r_l‖)` with guided wavenumber `k_s = n_eff·k`. The
//! hologram amplitudes m act as a diagonal modulation D(m), and mutual
//! coupling closes the loop: induced moments satisfy
//! `p = D(m)(F q + Ξ p)`, so the feeder-to-moment map is
//!
//! ```text
//! M(m) = (I - D(m) Ξ)^{-1} D(m) F       (with C(m) = (I - D(m) Ξ)^{-1})
//! ```
//!
//! Differentiating the fixed point gives the exact per-element Jacobian
//! `∂M/∂m_n = C E_n (Ξ M + F)`, and the first-order surrogate
//! `M̃(Δm) = M + C D(Δm) T` with `T = Ξ M + F`, which the coupling-consistent
//! hologram update builds on.

use crate::channel::UserLocation;
use crate::em_coupling::wavenumber;
use crate::error::{CoreError, Result};
use crate::geometry::{ArrayGeometry, MediumParams};
use crate::{cj, cr, CMat, RMat, RVec};

/// Default spectral-radius safety margin for the operator inverse.
pub const DEFAULT_SPECTRAL_MARGIN: f64 = 0.05;

/// Guided reference-wave parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedConfig {
    /// Effective refractive index of the guided mode; k_s = n_eff · k.
    pub n_eff: f64,
}

impl FeedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.n_eff >= 1.0) {
            return Err(CoreError::invalid("n_eff", "must be at least 1"));
        }
        Ok(())
    }
}

impl Default for FeedConfig {
    fn default() -> Self {
        // Typical substrate permittivity ε_r = 3 → n_eff = √3.
        FeedConfig { n_eff: 3f64.sqrt() }
    }
}

/// N×L feed matrix: entry (n, l) = exp(-j n_eff k ‖r_n - r_l‖).
pub fn build_feed_matrix(
    geom: &ArrayGeometry,
    feed: &FeedConfig,
    f: f64,
    medium: &MediumParams,
) -> Result<CMat> {
    feed.validate()?;
    let k_s = feed.n_eff * wavenumber(f, medium)?;
    let n = geom.n();
    let l = geom.l();
    Ok(CMat::from_fn(n, l, |i, j| {
        let path = (geom.element_positions[i] - geom.feeder_positions[j]).norm();
        (-cj() * cr(k_s * path)).exp()
    }))
}

/// Hologram amplitudes with the HDMA weights they were built from (absent
/// for uniform or externally supplied holograms).
#[derive(Debug, Clone)]
pub struct HologramState {
    /// Amplitude vector m ∈ [0,1]^N.
    pub m: RVec,
    /// HDMA superposition weights a[k][l], nonnegative and summing to 1.
    pub weights: Option<RMat>,
}

impl HologramState {
    pub fn validate(&self) -> Result<()> {
        if self.m.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(CoreError::invalid("m", "entries must lie in [0,1]"));
        }
        if let Some(w) = &self.weights {
            if w.iter().any(|&x| x < 0.0) {
                return Err(CoreError::invalid("hdma_weights", "must be nonnegative"));
            }
            if (w.sum() - 1.0).abs() > 1e-12 {
                return Err(CoreError::invalid("hdma_weights", "must sum to 1"));
            }
        }
        Ok(())
    }
}

/// Interference-pattern (HDMA) hologram built at the reference frequency:
///
/// `m_n = Σ_{k,l} a_{k,l} (cos(k_s ‖r_n - r_l‖ - k ψ_k δ_n d) + 1)/2`
///
/// The object wave uses the far-field wavevector of each user direction; the
/// optimizer refines m afterwards, so this is an initialization device.
pub fn init_hologram_hdma(
    geom: &ArrayGeometry,
    users: &[UserLocation],
    feed: &FeedConfig,
    f_ref: f64,
    medium: &MediumParams,
    weights: &RMat,
) -> Result<HologramState> {
    feed.validate()?;
    let k = wavenumber(f_ref, medium)?;
    let k_s = feed.n_eff * k;
    let k_users = users.len();
    let l = geom.l();
    if weights.nrows() != k_users || weights.ncols() != l {
        return Err(CoreError::invalid(
            "hdma_weights",
            format!("expected {k_users}×{l} weights"),
        ));
    }
    if weights.iter().any(|&x| x < 0.0) {
        return Err(CoreError::invalid("hdma_weights", "must be nonnegative"));
    }
    if (weights.sum() - 1.0).abs() > 1e-9 {
        return Err(CoreError::invalid("hdma_weights", "must sum to 1"));
    }
    let n = geom.n();
    let d = geom.spacing;
    let mut m = RVec::zeros(n);
    for i in 0..n {
        let delta = geom.index_offsets[i];
        let mut acc = 0.0;
        for (ku, user) in users.iter().enumerate() {
            for li in 0..l {
                let ref_phase =
                    k_s * (geom.element_positions[i] - geom.feeder_positions[li]).norm();
                let obj_phase = k * user.psi * delta * d;
                acc += weights[(ku, li)] * ((ref_phase - obj_phase).cos() + 1.0) / 2.0;
            }
        }
        // Convex combination of values in [0,1]; clamp only sweeps rounding.
        m[i] = acc.clamp(0.0, 1.0);
    }
    Ok(HologramState {
        m,
        weights: Some(weights.clone()),
    })
}

/// Uniform hologram at a constant level.
pub fn uniform_hologram(n: usize, level: f64) -> Result<HologramState> {
    if n == 0 {
        return Err(CoreError::invalid(
            "n",
            "surface needs at least one element",
        ));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(CoreError::invalid("level", "must lie in [0,1]"));
    }
    Ok(HologramState {
        m: RVec::from_element(n, level),
        weights: None,
    })
}

/// Power-iteration estimate of the spectral radius of `a` (50 iterations,
/// relative tolerance 1e-6). The start vector is deterministic with a mild
/// index tilt so symmetric structures cannot hide the dominant mode.
pub fn spectral_radius_estimate(a: &CMat) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = crate::CVec::from_fn(n, |i, _| cr(1.0 + i as f64 / n as f64));
    v /= cr(v.norm());
    let mut rho = 0.0_f64;
    for _ in 0..50 {
        let w = a * &v;
        let norm = w.norm();
        if norm <= 1e-300 {
            return 0.0;
        }
        let prev = rho;
        rho = norm;
        v = w / cr(norm);
        if (rho - prev).abs() <= 1e-6 * rho.max(1e-300) {
            break;
        }
    }
    rho
}

/// The coupled operator at a fixed hologram.
#[derive(Debug, Clone)]
pub struct CoupledOperator {
    /// C = (I - D(m) Ξ)^{-1}, cached because the QP assembly and the
    /// Jacobian both reuse it.
    pub c: CMat,
    /// M = C D(m) F.
    pub m_op: CMat,
    /// Power-iteration estimate of ρ(D(m) Ξ).
    pub spectral_radius: f64,
}

/// Builds the coupled operator for one subband; errors out when the
/// estimated spectral radius of D(m)Ξ reaches `1 - margin`.
pub fn coupled_operator(m: &RVec, xi: &CMat, f_mat: &CMat, margin: f64) -> Result<CoupledOperator> {
    let n = xi.nrows();
    if m.len() != n || f_mat.nrows() != n {
        return Err(CoreError::invalid("m", "dimension mismatch with Ξ and F"));
    }
    // D(m) Ξ: row n of Ξ scaled by m_n.
    let dxi = CMat::from_fn(n, n, |i, j| cr(m[i]) * xi[(i, j)]);
    let rho = spectral_radius_estimate(&dxi);
    let limit = 1.0 - margin;
    if rho >= limit {
        return Err(CoreError::IllConditionedCoupling { rho, limit });
    }
    let mut a = -dxi;
    for i in 0..n {
        a[(i, i)] += cr(1.0);
    }
    let c = a
        .lu()
        .try_inverse()
        .ok_or_else(|| CoreError::NumericFailure("coupling system is singular".into()))?;
    let df = CMat::from_fn(n, f_mat.ncols(), |i, j| cr(m[i]) * f_mat[(i, j)]);
    let m_op = &c * df;
    Ok(CoupledOperator {
        c,
        m_op,
        spectral_radius: rho,
    })
}

/// Exact Jacobian slice `∂M/∂m_n = C E_n (Ξ M + F)`: the outer product of
/// column n of C with row n of `Ξ M + F`.
pub fn operator_jacobian(op: &CoupledOperator, xi: &CMat, f_mat: &CMat, n: usize) -> Result<CMat> {
    let dim = op.c.nrows();
    if n >= dim {
        return Err(CoreError::invalid("n", "element index out of range"));
    }
    let l = f_mat.ncols();
    // Row n of T = Ξ M + F without forming all of T.
    let mut t_row = crate::CVec::zeros(l);
    for j in 0..l {
        let mut acc = f_mat[(n, j)];
        for p in 0..dim {
            acc += xi[(n, p)] * op.m_op[(p, j)];
        }
        t_row[j] = acc;
    }
    let c_col = op.c.column(n);
    Ok(CMat::from_fn(dim, l, |i, j| c_col[i] * t_row[j]))
}

/// Anchor data for the first-order coupling-consistent surrogate.
#[derive(Debug, Clone)]
pub struct SurrogateOperator {
    /// Hologram the expansion is anchored at.
    pub anchor: RVec,
    /// C at the anchor.
    pub c: CMat,
    /// M at the anchor.
    pub m_op: CMat,
    /// T = Ξ M + F: the coupling-feedback sensitivity factor.
    pub t: CMat,
}

/// Builds the surrogate anchor from an operator evaluated at `anchor`.
pub fn surrogate_anchor(
    op: &CoupledOperator,
    xi: &CMat,
    f_mat: &CMat,
    anchor: &RVec,
) -> SurrogateOperator {
    let t = xi * &op.m_op + f_mat;
    SurrogateOperator {
        anchor: anchor.clone(),
        c: op.c.clone(),
        m_op: op.m_op.clone(),
        t,
    }
}

/// Evaluates the surrogate `M̃(Δm) = M + C D(Δm) T`; affine in Δm and exact
/// through first order at Δm = 0.
pub fn surrogate_operator(surrogate: &SurrogateOperator, dm: &RVec) -> CMat {
    let n = surrogate.c.nrows();
    let l = surrogate.t.ncols();
    let dt = CMat::from_fn(n, l, |i, j| cr(dm[i]) * surrogate.t[(i, j)]);
    &surrogate.m_op + &surrogate.c * dt
}

/// Loaded surface power η Σ_u ‖M_u V_u‖_F².
pub fn rhs_power(operators: &[CoupledOperator], precoders: &[CMat], eta: f64) -> f64 {
    operators
        .iter()
        .zip(precoders)
        .map(|(op, v)| (&op.m_op * v).norm_squared())
        .sum::<f64>()
        * eta
}

//! Wideband subband plan and near-field LoS channels.
//!
//! Each user sits at distance r and angle θ from the array axis. With
//! ψ = cos θ and curvature ν = (1 - ψ²)/r, the per-element path-length
//! deviation is the second-order expansion
//! `Δr_n = -δ_n d ψ + δ_n² d² ν / 2`, which recovers the far-field steering
//! vector as ν → 0. The row for user k at subband u is
//! `h = β √N b(ψ, ν)` with the spreading/absorption gain β and the unit-norm
//! response b.

use crate::em_coupling::wavenumber;
use crate::error::{CoreError, Result};
use crate::geometry::{ArrayGeometry, MediumParams};
use crate::{cj, cr, CVec};

/// Uniform subband grid around a carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandPlan {
    /// Carrier frequency f_c (Hz).
    pub f_c: f64,
    /// Total bandwidth B (Hz).
    pub bandwidth: f64,
    /// Number of subbands U.
    pub subbands: usize,
    /// Subband width B_g = B/U (Hz).
    pub b_g: f64,
    /// Center frequencies f_u = f_c + (u - (U+1)/2) B_g, u = 1..U.
    pub centers: Vec<f64>,
}

/// Builds the subband plan; centers are symmetric about f_c.
pub fn subband_centers(f_c: f64, bandwidth: f64, subbands: usize) -> Result<SubbandPlan> {
    if subbands == 0 {
        return Err(CoreError::invalid("U", "subband count must be at least 1"));
    }
    if !(bandwidth > 0.0) {
        return Err(CoreError::invalid("B", "bandwidth must be positive"));
    }
    if !(f_c > bandwidth / 2.0) {
        return Err(CoreError::invalid(
            "f_c",
            "carrier must exceed half the bandwidth",
        ));
    }
    let b_g = bandwidth / subbands as f64;
    let centers = (1..=subbands)
        .map(|u| f_c + (u as f64 - (subbands as f64 + 1.0) / 2.0) * b_g)
        .collect();
    Ok(SubbandPlan {
        f_c,
        bandwidth,
        subbands,
        b_g,
        centers,
    })
}

/// User placement in the array plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserLocation {
    /// Distance from the array center (m).
    pub r: f64,
    /// Angle from the array axis (rad).
    pub theta: f64,
    /// Directional cosine ψ = cos θ.
    pub psi: f64,
    /// Near-field curvature ν = (1 - ψ²)/r (1/m).
    pub nu: f64,
}

impl UserLocation {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        let (psi, nu) = user_params(r, theta)?;
        Ok(UserLocation { r, theta, psi, nu })
    }

    /// Canonical position in the xy-plane: r (cos θ, sin θ, 0).
    pub fn position(&self) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(self.r * self.theta.cos(), self.r * self.theta.sin(), 0.0)
    }
}

/// Directional cosine and curvature for a user at (r, θ).
pub fn user_params(r: f64, theta: f64) -> Result<(f64, f64)> {
    if !(r > 0.0) {
        return Err(CoreError::invalid("r", "user distance must be positive"));
    }
    let psi = theta.cos();
    let nu = (1.0 - psi * psi) / r;
    Ok((psi, nu))
}

/// Molecular absorption coefficient κ_abs(f) ≥ 0 (1/m).
///
/// The default is the flat Table-level constant; a piecewise-linear table is
/// available as a hook for measured profiles (no database is bundled).
#[derive(Debug, Clone)]
pub enum AbsorptionModel {
    /// Frequency-flat coefficient.
    Flat(f64),
    /// Piecewise-linear interpolation over (frequency Hz, κ) knots sorted by
    /// frequency; clamped at the ends.
    Table(Vec<(f64, f64)>),
}

impl AbsorptionModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            AbsorptionModel::Flat(k) => {
                if *k < 0.0 {
                    return Err(CoreError::invalid("kappa_abs", "must be nonnegative"));
                }
            }
            AbsorptionModel::Table(knots) => {
                if knots.is_empty() {
                    return Err(CoreError::invalid("kappa_abs", "table must be nonempty"));
                }
                if knots.iter().any(|&(_, k)| k < 0.0) {
                    return Err(CoreError::invalid("kappa_abs", "must be nonnegative"));
                }
                if knots.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(CoreError::invalid(
                        "kappa_abs",
                        "table frequencies must be strictly increasing",
                    ));
                }
            }
        }
        Ok(())
    }

    /// κ_abs at frequency `f`.
    pub fn kappa(&self, f: f64) -> f64 {
        match self {
            AbsorptionModel::Flat(k) => *k,
            AbsorptionModel::Table(knots) => {
                if f <= knots[0].0 {
                    return knots[0].1;
                }
                if f >= knots[knots.len() - 1].0 {
                    return knots[knots.len() - 1].1;
                }
                let i = knots.partition_point(|&(fk, _)| fk <= f) - 1;
                let (f0, k0) = knots[i];
                let (f1, k1) = knots[i + 1];
                k0 + (k1 - k0) * (f - f0) / (f1 - f0)
            }
        }
    }
}

impl Default for AbsorptionModel {
    fn default() -> Self {
        AbsorptionModel::Flat(0.1)
    }
}

/// Unit-norm near-field array response b(ψ, ν) at frequency `f`:
/// entries `(1/√N) exp(-j k Δr_n)` with `Δr_n = -δ_n d ψ + δ_n² d² ν / 2`.
pub fn array_response(
    geom: &ArrayGeometry,
    psi: f64,
    nu: f64,
    f: f64,
    medium: &MediumParams,
) -> Result<CVec> {
    let k = wavenumber(f, medium)?;
    let n = geom.n();
    let d = geom.spacing;
    let scale = cr(1.0 / (n as f64).sqrt());
    Ok(CVec::from_fn(n, |i, _| {
        let delta = geom.index_offsets[i];
        let dr = -delta * d * psi + delta * delta * d * d * nu / 2.0;
        scale * (-cj() * cr(k * dr)).exp()
    }))
}

/// Complex LoS path gain β = (λ/4πr) exp(-κ r/2) exp(-j k r).
pub fn path_gain(
    r: f64,
    f: f64,
    absorption: &AbsorptionModel,
    medium: &MediumParams,
) -> Result<crate::C64> {
    if !(r > 0.0) {
        return Err(CoreError::invalid("r", "distance must be positive"));
    }
    let k = wavenumber(f, medium)?;
    let lambda = medium.wavelength(f);
    let amplitude =
        lambda / (4.0 * std::f64::consts::PI * r) * (-absorption.kappa(f) * r / 2.0).exp();
    Ok(cr(amplitude) * (-cj() * cr(k * r)).exp())
}

/// Per-user, per-subband channel rows with noise powers.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// rows[k][u] is the 1×N channel stored as a length-N vector.
    pub rows: Vec<Vec<CVec>>,
    /// noise[k][u] is the noise power σ² (W).
    pub noise: Vec<Vec<f64>>,
    /// User placements.
    pub users: Vec<UserLocation>,
    /// Subband plan the rows were built for.
    pub plan: SubbandPlan,
}

impl ChannelSet {
    pub fn k_users(&self) -> usize {
        self.rows.len()
    }

    pub fn subbands(&self) -> usize {
        self.plan.subbands
    }
}

/// Options for channel construction.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChannelBuildOptions {
    /// Replace the common-amplitude approximation with per-element spreading
    /// and absorption amplitudes (used by the Taylor-consistency oracle).
    pub elementwise_amplitude: bool,
}

/// Builds all K×U channel rows: `h[k][u] = β_{k,u} √N b_u(ψ_k, ν_k)`.
pub fn build_channels(
    geom: &ArrayGeometry,
    users: &[UserLocation],
    plan: &SubbandPlan,
    absorption: &AbsorptionModel,
    noise_power: f64,
    medium: &MediumParams,
    options: ChannelBuildOptions,
) -> Result<ChannelSet> {
    if users.is_empty() {
        return Err(CoreError::invalid("users", "at least one user is required"));
    }
    if !(noise_power > 0.0) {
        return Err(CoreError::invalid("sigma2", "noise power must be positive"));
    }
    absorption.validate()?;
    let n = geom.n();
    let sqrt_n = cr((n as f64).sqrt());
    let mut rows = Vec::with_capacity(users.len());
    for user in users {
        let mut per_user = Vec::with_capacity(plan.subbands);
        for &f_u in &plan.centers {
            let b = array_response(geom, user.psi, user.nu, f_u, medium)?;
            let beta = path_gain(user.r, f_u, absorption, medium)?;
            let mut row = b.map(|x| beta * sqrt_n * x);
            if options.elementwise_amplitude {
                // Swap the common amplitude |β| for the exact per-element
                // spreading/absorption amplitude; phases are untouched.
                let lambda = medium.wavelength(f_u);
                let kappa = absorption.kappa(f_u);
                let common =
                    lambda / (4.0 * std::f64::consts::PI * user.r) * (-kappa * user.r / 2.0).exp();
                let upos = user.position();
                for (i, pos) in geom.element_positions.iter().enumerate() {
                    let r_n = (upos - pos).norm();
                    let exact =
                        lambda / (4.0 * std::f64::consts::PI * r_n) * (-kappa * r_n / 2.0).exp();
                    row[i] *= cr(exact / common);
                }
            }
            per_user.push(row);
        }
        rows.push(per_user);
    }
    let noise = vec![vec![noise_power; plan.subbands]; users.len()];
    Ok(ChannelSet {
        rows,
        noise,
        users: users.to_vec(),
        plan: plan.clone(),
    })
}

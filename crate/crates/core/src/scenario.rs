//! Scenario assembly: bundles geometry, subband plan, users, channels,
//! feed matrices, per-subband coupling and the HDMA starting hologram into
//! one immutable struct the solver and baselines consume.

use nalgebra::Vector3;

use crate::channel::{
    build_channels, subband_centers, AbsorptionModel, ChannelBuildOptions, ChannelSet, SubbandPlan,
    UserLocation,
};
use crate::em_coupling::{
    assemble_coupling, coupling_fs, coupling_wg, CouplingConfig, CouplingMatrix,
};
use crate::error::Result;
use crate::geometry::{ArrayGeometry, MediumParams};
use crate::rhs_operator::{
    build_feed_matrix, coupled_operator, init_hologram_hdma, CoupledOperator, FeedConfig,
    HologramState, DEFAULT_SPECTRAL_MARGIN,
};
use crate::{CMat, RMat};

/// Everything needed to pose one optimization instance.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub medium: MediumParams,
    pub plan: SubbandPlan,
    pub users: Vec<UserLocation>,
    pub channels: ChannelSet,
    /// Reference-wave matrices F_u, one N×L per subband.
    pub feeds: Vec<CMat>,
    /// True (ground-truth) coupling per subband.
    pub coupling: Vec<CouplingMatrix>,
    pub feed_cfg: FeedConfig,
    /// HDMA-initialized hologram at the carrier.
    pub hdma: HologramState,
    pub p_bs: f64,
    pub p_rhs: f64,
    pub eta: f64,
    pub noise_power: f64,
    pub spectral_margin: f64,
    /// Amplitude used by the uniform-hologram baselines.
    pub uniform_level: f64,
}

/// Raw inputs for [`build_scenario`]. `Default` reproduces the reference
/// desk-scale setup: a 32-element, 4-feeder surface at 28 GHz with a 1 GHz
/// band split into 8 subbands serving 4 near-field users.
#[derive(Debug, Clone)]
pub struct ScenarioParams {
    pub f_c: f64,
    pub bandwidth: f64,
    pub subbands: usize,
    pub medium: MediumParams,
    pub n_elements: usize,
    pub spacing: f64,
    pub feeders: usize,
    pub feeder_spacing: f64,
    pub dipole_orientation: Vector3<f64>,
    pub feed: FeedConfig,
    /// Users as (range m, polar angle rad) pairs in the array plane.
    pub users: Vec<(f64, f64)>,
    pub absorption: AbsorptionModel,
    pub noise_power: f64,
    pub coupling: CouplingConfig,
    pub p_bs: f64,
    pub p_rhs: f64,
    pub eta: f64,
    pub spectral_margin: f64,
    pub uniform_level: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            f_c: 28e9,
            bandwidth: 1e9,
            subbands: 8,
            medium: MediumParams::free_space(),
            n_elements: 32,
            spacing: 2.68e-3,
            feeders: 4,
            feeder_spacing: 10.70e-3,
            dipole_orientation: Vector3::z(),
            feed: FeedConfig::default(),
            users: vec![
                (3.0, 75f64.to_radians()),
                (4.5, 85f64.to_radians()),
                (6.0, 95f64.to_radians()),
                (7.5, 105f64.to_radians()),
            ],
            absorption: AbsorptionModel::default(),
            noise_power: 1.0,
            coupling: CouplingConfig::default(),
            p_bs: 10.0,
            p_rhs: 50.0,
            eta: 1.0,
            spectral_margin: DEFAULT_SPECTRAL_MARGIN,
            uniform_level: 0.5,
        }
    }
}

/// Builds the full scenario: geometry and plan validation, per-subband
/// channels, feeds and coupling, plus the HDMA hologram at the carrier.
pub fn build_scenario(params: &ScenarioParams) -> Result<Scenario> {
    params.medium.validate()?;
    params.feed.validate()?;
    params.coupling.validate()?;
    let geometry = ArrayGeometry::ula(
        params.n_elements,
        params.spacing,
        params.feeders,
        params.feeder_spacing,
        params.dipole_orientation,
    )?;
    let plan = subband_centers(params.f_c, params.bandwidth, params.subbands)?;
    let users: Vec<UserLocation> = params
        .users
        .iter()
        .map(|&(r, theta)| UserLocation::new(r, theta))
        .collect::<Result<_>>()?;
    if users.is_empty() {
        return Err(crate::error::CoreError::invalid(
            "users",
            "at least one user required",
        ));
    }
    params.absorption.validate()?;
    let channels = build_channels(
        &geometry,
        &users,
        &plan,
        &params.absorption,
        params.noise_power,
        &params.medium,
        ChannelBuildOptions::default(),
    )?;
    let feeds: Vec<CMat> = plan
        .centers
        .iter()
        .map(|&f| build_feed_matrix(&geometry, &params.feed, f, &params.medium))
        .collect::<Result<_>>()?;
    let coupling: Vec<CouplingMatrix> = plan
        .centers
        .iter()
        .map(|&f| {
            let fs = coupling_fs(&geometry, f, &params.medium)?;
            let wg = coupling_wg(&geometry, f, &params.coupling)?;
            assemble_coupling(fs, wg, &params.coupling)
        })
        .collect::<Result<_>>()?;
    let k = users.len();
    let l = geometry.l();
    let weights = RMat::from_element(k, l, 1.0 / (k * l) as f64);
    let hdma = init_hologram_hdma(
        &geometry,
        &users,
        &params.feed,
        params.f_c,
        &params.medium,
        &weights,
    )?;
    if !(params.p_bs > 0.0) {
        return Err(crate::error::CoreError::invalid("p_bs", "must be positive"));
    }
    if !(params.p_rhs > 0.0) {
        return Err(crate::error::CoreError::invalid(
            "p_rhs",
            "must be positive",
        ));
    }
    if !(params.eta > 0.0) {
        return Err(crate::error::CoreError::invalid("eta", "must be positive"));
    }
    if !(params.noise_power > 0.0) {
        return Err(crate::error::CoreError::invalid(
            "noise_power",
            "must be positive",
        ));
    }
    if !(0.0..=1.0).contains(&params.uniform_level) {
        return Err(crate::error::CoreError::invalid(
            "uniform_level",
            "must lie in [0, 1]",
        ));
    }
    Ok(Scenario {
        geometry,
        medium: params.medium,
        plan,
        users,
        channels,
        feeds,
        coupling,
        feed_cfg: params.feed,
        hdma,
        p_bs: params.p_bs,
        p_rhs: params.p_rhs,
        eta: params.eta,
        noise_power: params.noise_power,
        spectral_margin: params.spectral_margin,
        uniform_level: params.uniform_level,
    })
}

impl Scenario {
    /// Operators under the true coupling at hologram `m`.
    pub fn true_operators(&self, m: &crate::RVec) -> Result<Vec<CoupledOperator>> {
        self.coupling
            .iter()
            .zip(&self.feeds)
            .map(|(xi, f)| coupled_operator(m, &xi.total, f, self.spectral_margin))
            .collect()
    }
}

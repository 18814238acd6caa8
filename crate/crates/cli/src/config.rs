//! JSON configuration: schema, Table-style defaults, validation that names
//! the offending field, and the FNV-1a hash stamped into every CSV.

use holobeam_core::baselines::SchemeTag;
use holobeam_core::channel::AbsorptionModel;
use holobeam_core::cr;
use holobeam_core::em_coupling::CouplingConfig;
use holobeam_core::geometry::MediumParams;
use holobeam_core::rhs_operator::FeedConfig;
use holobeam_core::scenario::ScenarioParams;
use holobeam_core::wmmse::{HologramMode, SolverOptions};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub r_m: f64,
    pub theta_deg: f64,
}

/// Full experiment configuration. Every field has a default, so an empty
/// JSON object reproduces the reference desk-scale scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    // RF plan
    pub f_c_hz: f64,
    pub bandwidth_hz: f64,
    pub subbands: usize,
    // Array
    pub n_elements: usize,
    pub element_spacing_m: f64,
    pub feeders: usize,
    pub feeder_spacing_m: f64,
    pub dipole_orientation: [f64; 3],
    pub n_eff: f64,
    // Users and per-seed placement jitter
    pub users: Vec<UserSpec>,
    pub jitter_r_rel: f64,
    pub jitter_theta_deg: f64,
    // Channel
    pub kappa_abs: f64,
    pub noise_power_w: f64,
    // Coupling model
    pub xi_fs_target: f64,
    pub xi_wg_target: f64,
    pub alpha_wg: f64,
    pub beta_wg: f64,
    // Power budgets
    pub p_bs_w: f64,
    pub p_rhs_w: f64,
    pub eta: f64,
    pub uniform_level: f64,
    // Solver
    pub max_iter: usize,
    pub stop_threshold: f64,
    pub step_size: f64,
    pub inner_iters: usize,
    pub bisection_tol: f64,
    pub monotone_safeguard: bool,
    // Harness
    pub schemes: Vec<String>,
    pub seeds: Vec<u64>,
    pub sweep_pbs_w: Vec<f64>,
    pub sweep_xi_fs: Vec<f64>,
    pub sweep_n_elements: Vec<usize>,
    pub pattern_subband: Option<usize>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            f_c_hz: 28e9,
            bandwidth_hz: 1e9,
            subbands: 8,
            n_elements: 32,
            element_spacing_m: 2.68e-3,
            feeders: 4,
            feeder_spacing_m: 10.70e-3,
            dipole_orientation: [0.0, 0.0, 1.0],
            n_eff: 3f64.sqrt(),
            users: vec![
                UserSpec {
                    r_m: 3.0,
                    theta_deg: 75.0,
                },
                UserSpec {
                    r_m: 4.5,
                    theta_deg: 85.0,
                },
                UserSpec {
                    r_m: 6.0,
                    theta_deg: 95.0,
                },
                UserSpec {
                    r_m: 7.5,
                    theta_deg: 105.0,
                },
            ],
            jitter_r_rel: 0.0,
            jitter_theta_deg: 0.0,
            kappa_abs: 0.1,
            noise_power_w: 1.0,
            xi_fs_target: 0.02,
            xi_wg_target: 0.02,
            alpha_wg: 0.15,
            beta_wg: 1.0,
            p_bs_w: 10.0,
            p_rhs_w: 50.0,
            eta: 1.0,
            uniform_level: 0.5,
            max_iter: 100,
            stop_threshold: 1e-4,
            step_size: 0.05,
            inner_iters: 50,
            bisection_tol: 1e-8,
            monotone_safeguard: true,
            schemes: SchemeTag::ALL
                .iter()
                .map(|t| t.name().to_string())
                .collect(),
            seeds: vec![1],
            sweep_pbs_w: vec![2.0, 5.0, 10.0, 20.0],
            sweep_xi_fs: vec![0.0, 0.01, 0.02, 0.05, 0.1],
            sweep_n_elements: vec![8, 16, 32, 64],
            pattern_subband: None,
        }
    }
}

/// A configuration problem, reported with the offending field's name.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: &str, why: impl AsRef<str>) -> ConfigError {
    ConfigError(format!("field `{field}`: {}", why.as_ref()))
}

impl SystemConfig {
    pub fn load(path: &Path) -> std::result::Result<SystemConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("reading config {}: {e}", path.display())))?;
        let cfg: SystemConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("parse error in {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        if !(self.f_c_hz > 0.0) {
            return Err(bad("f_c_hz", "must be positive"));
        }
        if !(self.bandwidth_hz > 0.0) || self.bandwidth_hz >= 2.0 * self.f_c_hz {
            return Err(bad("bandwidth_hz", "must be positive and below 2·f_c"));
        }
        if self.subbands == 0 {
            return Err(bad("subbands", "must be at least 1"));
        }
        if self.n_elements == 0 {
            return Err(bad("n_elements", "must be at least 1"));
        }
        if !(self.element_spacing_m > 0.0) {
            return Err(bad("element_spacing_m", "must be positive"));
        }
        if self.feeders == 0 {
            return Err(bad("feeders", "must be at least 1"));
        }
        if !(self.feeder_spacing_m > 0.0) {
            return Err(bad("feeder_spacing_m", "must be positive"));
        }
        if self.dipole_orientation.iter().map(|x| x * x).sum::<f64>() <= 0.0 {
            return Err(bad("dipole_orientation", "must be a nonzero vector"));
        }
        if !(self.n_eff >= 1.0) {
            return Err(bad("n_eff", "must be at least 1"));
        }
        if self.users.is_empty() {
            return Err(bad("users", "at least one user required"));
        }
        for (i, u) in self.users.iter().enumerate() {
            if !(u.r_m > 0.0) {
                return Err(bad("users", format!("user {i}: r_m must be positive")));
            }
            if !(0.0..180.0).contains(&u.theta_deg) || u.theta_deg <= 0.0 {
                return Err(bad(
                    "users",
                    format!("user {i}: theta_deg must lie in (0, 180)"),
                ));
            }
        }
        if !(self.jitter_r_rel >= 0.0 && self.jitter_r_rel < 1.0) {
            return Err(bad("jitter_r_rel", "must lie in [0, 1)"));
        }
        if self.jitter_theta_deg < 0.0 {
            return Err(bad("jitter_theta_deg", "must be nonnegative"));
        }
        if self.kappa_abs < 0.0 {
            return Err(bad("kappa_abs", "must be nonnegative"));
        }
        if !(self.noise_power_w > 0.0) {
            return Err(bad("noise_power_w", "must be positive"));
        }
        if self.xi_fs_target < 0.0 {
            return Err(bad("xi_fs_target", "must be nonnegative"));
        }
        if self.xi_wg_target < 0.0 {
            return Err(bad("xi_wg_target", "must be nonnegative"));
        }
        if self.alpha_wg < 0.0 {
            return Err(bad("alpha_wg", "must be nonnegative"));
        }
        if !(self.p_bs_w > 0.0) {
            return Err(bad("p_bs_w", "must be positive"));
        }
        if !(self.p_rhs_w > 0.0) {
            return Err(bad("p_rhs_w", "must be positive"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(bad("eta", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.uniform_level) {
            return Err(bad("uniform_level", "must lie in [0, 1]"));
        }
        if self.max_iter == 0 {
            return Err(bad("max_iter", "must be at least 1"));
        }
        if self.stop_threshold < 0.0 {
            return Err(bad("stop_threshold", "must be nonnegative"));
        }
        if !(self.step_size > 0.0) {
            return Err(bad("step_size", "must be positive"));
        }
        if self.inner_iters == 0 {
            return Err(bad("inner_iters", "must be at least 1"));
        }
        if !(self.bisection_tol > 0.0) {
            return Err(bad("bisection_tol", "must be positive"));
        }
        if self.schemes.is_empty() {
            return Err(bad("schemes", "at least one scheme required"));
        }
        let mut tags = Vec::new();
        for s in &self.schemes {
            let tag = SchemeTag::parse(s)
                .ok_or_else(|| bad("schemes", format!("unknown scheme `{s}`")))?;
            tags.push(tag);
        }
        let wants_zf = tags
            .iter()
            .any(|t| matches!(t, SchemeTag::HoloZf | SchemeTag::UniformZf));
        if wants_zf && self.users.len() > self.feeders {
            return Err(bad(
                "users",
                format!(
                    "K = {} exceeds L = {} but a zero-forcing scheme is requested",
                    self.users.len(),
                    self.feeders
                ),
            ));
        }
        if self.seeds.is_empty() {
            return Err(bad("seeds", "at least one seed required"));
        }
        if let Some(p) = self.pattern_subband {
            if p >= self.subbands {
                return Err(bad("pattern_subband", "must index an existing subband"));
            }
        }
        if self.sweep_pbs_w.iter().any(|&v| !(v > 0.0)) {
            return Err(bad("sweep_pbs_w", "all values must be positive"));
        }
        if self.sweep_xi_fs.iter().any(|&v| v < 0.0) {
            return Err(bad("sweep_xi_fs", "all values must be nonnegative"));
        }
        if self.sweep_n_elements.contains(&0) {
            return Err(bad("sweep_n_elements", "all values must be at least 1"));
        }
        Ok(())
    }

    pub fn scheme_tags(&self) -> Vec<SchemeTag> {
        self.schemes
            .iter()
            .filter_map(|s| SchemeTag::parse(s))
            .collect()
    }

    /// Physical scenario for one seed. The seed drives only the optional
    /// user-placement jitter; with both jitters at zero every seed produces
    /// the same deterministic layout.
    pub fn scenario_params(&self, seed: u64) -> ScenarioParams {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let users = self
            .users
            .iter()
            .map(|u| {
                // Always consume two draws so layouts for a given seed stay
                // comparable when jitter amplitudes change.
                let dr: f64 = rng.gen();
                let dt: f64 = rng.gen();
                let r = u.r_m * (1.0 + self.jitter_r_rel * (2.0 * dr - 1.0));
                let theta = u.theta_deg + self.jitter_theta_deg * (2.0 * dt - 1.0);
                (r, theta.to_radians())
            })
            .collect();
        ScenarioParams {
            f_c: self.f_c_hz,
            bandwidth: self.bandwidth_hz,
            subbands: self.subbands,
            medium: MediumParams::free_space(),
            n_elements: self.n_elements,
            spacing: self.element_spacing_m,
            feeders: self.feeders,
            feeder_spacing: self.feeder_spacing_m,
            dipole_orientation: Vector3::new(
                self.dipole_orientation[0],
                self.dipole_orientation[1],
                self.dipole_orientation[2],
            ),
            feed: FeedConfig { n_eff: self.n_eff },
            users,
            absorption: AbsorptionModel::Flat(self.kappa_abs),
            noise_power: self.noise_power_w,
            coupling: CouplingConfig {
                rho_plus: cr(1.0),
                rho_minus: cr(1.0),
                alpha_wg: self.alpha_wg,
                beta_wg: self.beta_wg,
                physical_distance: false,
                target_xi_fs: Some(self.xi_fs_target),
                target_xi_wg: Some(self.xi_wg_target),
            },
            p_bs: self.p_bs_w,
            p_rhs: self.p_rhs_w,
            eta: self.eta,
            spectral_margin: holobeam_core::rhs_operator::DEFAULT_SPECTRAL_MARGIN,
            uniform_level: self.uniform_level,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            max_iter: self.max_iter,
            stop_threshold: self.stop_threshold,
            step_size: self.step_size,
            inner_iters: self.inner_iters,
            bisection_tol: self.bisection_tol,
            variant: HologramMode::Freeze,
            monotone_safeguard: self.monotone_safeguard,
            update_hologram: true,
        }
    }
}

/// FNV-1a over the canonical JSON encoding; stable across runs for identical
/// configurations and stamped into every CSV as a `# config_hash=` comment.
pub fn config_hash(cfg: &SystemConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in json.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

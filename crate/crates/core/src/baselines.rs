//! Benchmark schemes around the joint solver: coupling-aware/unaware joint
//! designs, fixed-hologram WMMSE, and one-shot zero-forcing variants.
//!
//! Every scheme is *evaluated* under the true coupling; schemes differ only
//! in what they optimize and which coupling model the optimizer may see.

use crate::error::{CoreError, Result};
use crate::rhs_operator::{rhs_power, uniform_hologram, HologramState};
use crate::scenario::Scenario;
use crate::wmmse::{
    bcd_solve, effective_channels, objectives, sinr, BcdProblem, HologramMode, PrecoderSet,
    SolverOptions, SolverOutput, SolverTrace, TraceRow,
};
use crate::{cr, CMat, RVec};

/// The seven benchmark schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeTag {
    /// Coupling-aware joint design, coupling-freeze hologram step.
    CaJoint,
    /// Coupling-aware joint design, Jacobian-aided hologram step.
    CaJointJac,
    /// Coupling-unaware joint design (optimizer assumes Ξ = 0).
    CuJoint,
    /// HDMA hologram held fixed, WMMSE precoding only.
    HoloWmmse,
    /// Uniform hologram held fixed, WMMSE precoding only.
    UniformWmmse,
    /// HDMA hologram, one-shot zero-forcing precoders.
    HoloZf,
    /// Uniform hologram, one-shot zero-forcing precoders.
    UniformZf,
}

impl SchemeTag {
    pub const ALL: [SchemeTag; 7] = [
        SchemeTag::CaJoint,
        SchemeTag::CaJointJac,
        SchemeTag::CuJoint,
        SchemeTag::HoloWmmse,
        SchemeTag::UniformWmmse,
        SchemeTag::HoloZf,
        SchemeTag::UniformZf,
    ];

    /// Canonical name used in CSV output and CLI arguments.
    pub fn name(self) -> &'static str {
        match self {
            SchemeTag::CaJoint => "CA-Joint",
            SchemeTag::CaJointJac => "CA-Joint-Jac",
            SchemeTag::CuJoint => "CU-Joint",
            SchemeTag::HoloWmmse => "Holo+WMMSE",
            SchemeTag::UniformWmmse => "Uniform+WMMSE",
            SchemeTag::HoloZf => "Holo+ZF",
            SchemeTag::UniformZf => "Uniform+ZF",
        }
    }

    pub fn parse(s: &str) -> Option<SchemeTag> {
        SchemeTag::ALL.iter().copied().find(|t| t.name() == s)
    }

    /// Schemes that iterate the full joint loop.
    pub fn is_joint(self) -> bool {
        matches!(
            self,
            SchemeTag::CaJoint | SchemeTag::CaJointJac | SchemeTag::CuJoint
        )
    }
}

/// Final-state metrics of a scheme run.
#[derive(Debug, Clone, Copy)]
pub struct SchemeMetrics {
    pub sum_rate_bps: f64,
    pub sum_se_bpshz: f64,
    pub j: f64,
    pub rhs_power_w: f64,
}

/// One completed scheme run.
#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub tag: SchemeTag,
    pub metrics: SchemeMetrics,
    pub trace: SolverTrace,
    pub hologram: HologramState,
    pub precoders: PrecoderSet,
}

/// Zero-forcing precoders on the effective channels: each subband uses the
/// right pseudo-inverse H̄ᴴ(H̄ H̄ᴴ)⁻¹ with equal per-column power P/(U·K).
pub fn zf_precoders(hbar: &[CMat], p_bs: f64) -> Result<PrecoderSet> {
    if !(p_bs > 0.0) {
        return Err(CoreError::invalid("p_bs", "power budget must be positive"));
    }
    let subbands = hbar.len();
    let k = hbar[0].nrows();
    let l = hbar[0].ncols();
    if k > l {
        return Err(CoreError::RankDeficient(format!(
            "zero-forcing needs K <= L, got K={k}, L={l}"
        )));
    }
    let per_column = p_bs / (subbands * k) as f64;
    let mut v = Vec::with_capacity(subbands);
    for (u, h) in hbar.iter().enumerate() {
        let sv = h.clone().singular_values();
        let s_max = sv.max();
        let s_min = sv.min();
        if !(s_min > 1e-10 * s_max) {
            return Err(CoreError::RankDeficient(format!(
                "effective channel of subband {u} is rank deficient \
                 (min/max singular value {s_min:.3e}/{s_max:.3e})"
            )));
        }
        let gram = h * h.adjoint();
        let gram_inv = gram.lu().try_inverse().ok_or_else(|| {
            CoreError::RankDeficient(format!("Gram matrix of subband {u} is singular"))
        })?;
        let mut p = h.adjoint() * gram_inv;
        for c in 0..k {
            let norm = p.column(c).norm();
            if norm <= 0.0 {
                return Err(CoreError::RankDeficient(format!(
                    "zero-forcing column {c} of subband {u} vanished"
                )));
            }
            let scale = cr(per_column.sqrt() / norm);
            for r in 0..l {
                p[(r, c)] *= scale;
            }
        }
        v.push(p);
    }
    Ok(PrecoderSet::new(v))
}

fn zero_coupling(scn: &Scenario) -> Vec<CMat> {
    let n = scn.geometry.n();
    (0..scn.plan.subbands).map(|_| CMat::zeros(n, n)).collect()
}

fn one_shot_run(tag: SchemeTag, scn: &Scenario, m: RVec, max_iter: usize) -> Result<SchemeRun> {
    let ops = scn.true_operators(&m)?;
    let hbar = effective_channels(&scn.channels, &ops);
    let precoders = zf_precoders(&hbar, scn.p_bs)?;
    let gamma = sinr(&hbar, &precoders, &scn.channels.noise);
    let (sum_rate, j) = objectives(&gamma, scn.plan.b_g);
    let rhs_pow = rhs_power(&ops, &precoders.v, scn.eta);
    let row = TraceRow {
        iter: 0,
        sum_rate_bps: sum_rate,
        sum_se_bpshz: sum_rate / scn.plan.bandwidth,
        j,
        rhs_power: rhs_pow,
        bs_power: precoders.total_power,
        lambda: 0.0,
        step_norm: 0.0,
        backtracks: 0,
        restored: false,
    };
    let rows = (1..=max_iter)
        .map(|iter| TraceRow {
            iter,
            ..row.clone()
        })
        .collect();
    Ok(SchemeRun {
        tag,
        metrics: SchemeMetrics {
            sum_rate_bps: sum_rate,
            sum_se_bpshz: sum_rate / scn.plan.bandwidth,
            j,
            rhs_power_w: rhs_pow,
        },
        trace: SolverTrace { rows },
        hologram: HologramState { m, weights: None },
        precoders,
    })
}

/// Runs one scheme on the scenario. `options.variant` and
/// `options.update_hologram` are overridden per scheme; the remaining knobs
/// (iteration budget, tolerances, step size) apply as given.
pub fn run_scheme(tag: SchemeTag, scn: &Scenario, options: &SolverOptions) -> Result<SchemeRun> {
    let hdma = scn.hdma.m.clone();
    let uniform = uniform_hologram(scn.geometry.n(), scn.uniform_level)?.m;
    match tag {
        SchemeTag::HoloZf => return one_shot_run(tag, scn, hdma, options.max_iter),
        SchemeTag::UniformZf => return one_shot_run(tag, scn, uniform, options.max_iter),
        _ => {}
    }

    let mut opts = *options;
    let zero_xi;
    let problem = match tag {
        SchemeTag::CaJoint => {
            opts.variant = HologramMode::Freeze;
            opts.update_hologram = true;
            BcdProblem::coupling_aware(scn, hdma)
        }
        SchemeTag::CaJointJac => {
            opts.variant = HologramMode::Jacobian;
            opts.update_hologram = true;
            BcdProblem::coupling_aware(scn, hdma)
        }
        SchemeTag::CuJoint => {
            opts.variant = HologramMode::Freeze;
            opts.update_hologram = true;
            zero_xi = zero_coupling(scn);
            BcdProblem {
                scenario: scn,
                xi_design: zero_xi.iter().collect(),
                design_is_true: false,
                initial_m: hdma,
            }
        }
        SchemeTag::HoloWmmse => {
            opts.update_hologram = false;
            BcdProblem::coupling_aware(scn, hdma)
        }
        SchemeTag::UniformWmmse => {
            opts.update_hologram = false;
            BcdProblem::coupling_aware(scn, uniform)
        }
        SchemeTag::HoloZf | SchemeTag::UniformZf => unreachable!(),
    };
    let output: SolverOutput = bcd_solve(&problem, &opts)?;
    let last = output
        .trace
        .last()
        .ok_or_else(|| CoreError::NumericFailure("solver produced an empty trace".into()))?;
    Ok(SchemeRun {
        tag,
        metrics: SchemeMetrics {
            sum_rate_bps: last.sum_rate_bps,
            sum_se_bpshz: last.sum_se_bpshz,
            j: last.j,
            rhs_power_w: last.rhs_power,
        },
        trace: output.trace.clone(),
        hologram: output.hologram,
        precoders: output.precoders,
    })
}

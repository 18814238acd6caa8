//! Coupling-aware wideband beamforming for reconfigurable holographic surfaces.
//!
//! The crate models an amplitude-modulated holographic surface fed by a small
//! number of guided-wave feeders. Element-to-element mutual coupling is built
//! from a magnetic-dipole Green's field plus a parametric surface-wave model,
//! the feeder-to-dipole response is the coupled operator
//! `M_u(m) = (I - D(m) Ξ_u)^{-1} D(m) F_u`, and the joint design of the
//! hologram amplitudes `m ∈ [0,1]^N` and per-subband digital precoders `V_u`
//! maximizes the multi-user sum rate via WMMSE block-coordinate descent.
//!
//! Module map:
//! - [`em_coupling`]: Green's field, free-space / surface-wave coupling
//!   matrices, far-field pattern synthesis.
//! - [`channel`]: subband plan, near-field array responses, LoS path gains.
//! - [`rhs_operator`]: feed matrix, hologram initialization, the coupled
//!   operator, its exact Jacobian and the first-order surrogate.
//! - [`wmmse`]: the block-coordinate solver (MMSE closed forms, dual-bisection
//!   precoder update, hologram QP/QCQP with projected gradient).
//! - [`baselines`]: comparison schemes (ZF precoding, fixed holograms,
//!   coupling-unaware design) evaluated under the true coupling.
//! - [`scenario`]: bundles geometry, channels, coupling and budgets into one
//!   solvable description.
//! - [`checks`]: self-contained numerical validation suite.

// Validation guards are written as `!(x > 0.0)` on purpose: unlike
// `x <= 0.0`, the negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod checks;
pub mod em_coupling;
pub mod error;
pub mod geometry;
pub mod rhs_operator;
pub mod scenario;
pub mod wmmse;

pub use error::{CoreError, Result};

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<C64>;
/// Dense real matrix.
pub type RMat = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type RVec = nalgebra::DVector<f64>;

/// `i` as a complex constant.
#[inline]
pub fn cj() -> C64 {
    C64::new(0.0, 1.0)
}

/// Real number promoted to a complex scalar.
#[inline]
pub fn cr(x: f64) -> C64 {
    C64::new(x, 0.0)
}

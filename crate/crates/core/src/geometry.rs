//! Propagation medium and array geometry.
//!
//! The canonical layout places the surface elements on the x-axis (a uniform
//! linear array), feeders on the same axis, the dipole orientation along z,
//! and users in the xy-plane. Angles θ are measured from the array axis, so a
//! user direction is `r̂(θ) = (cos θ, sin θ, 0)` — broadside is θ = 90° and
//! every in-plane direction is perpendicular to the dipole axis.

use nalgebra::Vector3;

use crate::error::{CoreError, Result};

/// Minimum allowed separation between two surface elements (m).
pub const MIN_ELEMENT_SEPARATION: f64 = 1e-6;

/// Homogeneous propagation medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediumParams {
    /// Permeability μ (H/m).
    pub mu: f64,
    /// Permittivity ε (F/m).
    pub eps: f64,
    /// Wave speed c0 (m/s); must agree with `1/sqrt(μ ε)`.
    pub c0: f64,
}

impl MediumParams {
    /// Free-space constants.
    pub fn free_space() -> Self {
        MediumParams {
            mu: 4e-7 * std::f64::consts::PI,
            eps: 8.854_187_817e-12,
            c0: 2.997_924_58e8,
        }
    }

    /// Validates positivity and the μ-ε-c0 consistency relation.
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(CoreError::invalid("mu", "permeability must be positive"));
        }
        if !(self.eps > 0.0) {
            return Err(CoreError::invalid("eps", "permittivity must be positive"));
        }
        if !(self.c0 > 0.0) {
            return Err(CoreError::invalid("c0", "wave speed must be positive"));
        }
        let derived = 1.0 / (self.mu * self.eps).sqrt();
        let rel = (derived - self.c0).abs() / self.c0;
        if rel > 1e-6 {
            return Err(CoreError::invalid(
                "c0",
                format!("1/sqrt(mu*eps) = {derived:.6e} disagrees with c0 by {rel:.2e} relative"),
            ));
        }
        Ok(())
    }

    /// Wavelength at frequency `f` (m).
    pub fn wavelength(&self, f: f64) -> f64 {
        self.c0 / f
    }
}

impl Default for MediumParams {
    fn default() -> Self {
        Self::free_space()
    }
}

/// Positions of surface elements and feeders plus the dipole orientation.
#[derive(Debug, Clone)]
pub struct ArrayGeometry {
    /// Element positions r_n (m), length N.
    pub element_positions: Vec<Vector3<f64>>,
    /// Feeder positions r_l (m), length L.
    pub feeder_positions: Vec<Vector3<f64>>,
    /// Element spacing d (m) of the generating lattice.
    pub spacing: f64,
    /// Centered index offsets δ_n = n - (N+1)/2 for n = 1..N.
    pub index_offsets: Vec<f64>,
    /// Unit dipole orientation ê_m.
    pub dipole_orientation: Vector3<f64>,
}

impl ArrayGeometry {
    /// Builds a uniform linear array of `n` elements with spacing `d` along
    /// the x-axis and `l` feeders with spacing `feeder_spacing` on the same
    /// axis, both centered on the origin.
    pub fn ula(
        n: usize,
        d: f64,
        l: usize,
        feeder_spacing: f64,
        dipole_orientation: Vector3<f64>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(CoreError::invalid("N", "element count must be at least 1"));
        }
        if l == 0 {
            return Err(CoreError::invalid("L", "feeder count must be at least 1"));
        }
        if !(d > 0.0) {
            return Err(CoreError::invalid("d", "element spacing must be positive"));
        }
        if !(feeder_spacing > 0.0) {
            return Err(CoreError::invalid(
                "feeder_spacing",
                "feeder spacing must be positive",
            ));
        }
        let index_offsets: Vec<f64> = (1..=n).map(|i| i as f64 - (n as f64 + 1.0) / 2.0).collect();
        let element_positions = index_offsets
            .iter()
            .map(|&delta| Vector3::new(delta * d, 0.0, 0.0))
            .collect();
        let feeder_positions = (1..=l)
            .map(|i| {
                let delta = i as f64 - (l as f64 + 1.0) / 2.0;
                Vector3::new(delta * feeder_spacing, 0.0, 0.0)
            })
            .collect();
        let geom = ArrayGeometry {
            element_positions,
            feeder_positions,
            spacing: d,
            index_offsets,
            dipole_orientation,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Number of surface elements N.
    pub fn n(&self) -> usize {
        self.element_positions.len()
    }

    /// Number of feeders L.
    pub fn l(&self) -> usize {
        self.feeder_positions.len()
    }

    /// Checks the unit-orientation invariant, index-offset consistency and
    /// the minimum element separation guard.
    pub fn validate(&self) -> Result<()> {
        if (self.dipole_orientation.norm() - 1.0).abs() > 1e-12 {
            return Err(CoreError::invalid(
                "dipole_orientation",
                format!(
                    "must be a unit vector, got norm {:.12}",
                    self.dipole_orientation.norm()
                ),
            ));
        }
        if self.index_offsets.len() != self.element_positions.len() {
            return Err(CoreError::invalid(
                "index_offsets",
                "length must match element count",
            ));
        }
        for (i, a) in self.element_positions.iter().enumerate() {
            for (j, b) in self.element_positions.iter().enumerate().skip(i + 1) {
                if (a - b).norm() < MIN_ELEMENT_SEPARATION {
                    return Err(CoreError::Singularity(format!(
                        "elements {i} and {j} are closer than {MIN_ELEMENT_SEPARATION} m"
                    )));
                }
            }
        }
        Ok(())
    }
}

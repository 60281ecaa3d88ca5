//! Flux bias to qubit energy parameters.
//!
//! All energies are ordinary frequencies in GHz (ω/2π with ħ = 1), flux
//! offsets are in milli-flux-quanta measured from half a flux quantum, and
//! persistent currents are in nanoampere.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Magnetic flux quantum h/2e in weber (CODATA 2018, exact).
pub const FLUX_QUANTUM: f64 = 2.067_833_848_461_929_5e-15;

/// Planck constant in J·s (CODATA 2018, exact).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Offset energy per (nA · mΦ0), in GHz: 2 · 1e-9 A · 1e-3 Φ0 / h / 1e9.
pub const EPSILON_GHZ_PER_NA_MPHI0: f64 = 2.0 * 1e-9 * 1e-3 * FLUX_QUANTUM / PLANCK * 1e-9;

/// Flux-qubit parameters: maximal persistent current and the tunnel gap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitParams<T> {
    /// Maximal persistent current, nA.
    pub persistent_current: T,
    /// Hopping amplitude Δ, GHz.
    pub gap: T,
}

impl<T: Real> QubitParams<T> {
    pub fn new(persistent_current: T, gap: T) -> Result<Self> {
        let params = Self { persistent_current, gap };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.persistent_current.is_finite() || self.persistent_current <= T::zero() {
            return Err(Error::InvalidParameter(format!(
                "persistent current must be finite and > 0, got {}",
                self.persistent_current
            )));
        }
        if !self.gap.is_finite() || self.gap <= T::zero() {
            return Err(Error::InvalidParameter(format!(
                "qubit gap must be finite and > 0, got {}",
                self.gap
            )));
        }
        Ok(())
    }

    /// Offset energy ε (GHz) at `delta_phi` milli-flux-quanta.
    pub fn epsilon(&self, delta_phi: T) -> T {
        T::lit(EPSILON_GHZ_PER_NA_MPHI0) * self.persistent_current * delta_phi
    }
}

/// Qubit quantities at one flux bias.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxPoint<T> {
    /// δΦ_x = Φ_x − Φ0/2 in mΦ0.
    pub delta_phi: T,
    /// ε in GHz.
    pub epsilon: T,
    /// Qubit splitting √(ε² + Δ²) in GHz.
    pub omega_q: T,
    /// Mixing angle with tan θ = Δ/ε, θ ∈ (0, π).
    pub theta: T,
    gap: T,
}

impl<T: Real> FluxPoint<T> {
    /// Builds a point directly from (ε, Δ); used by tests and synthetic models.
    pub fn from_epsilon(epsilon: T, gap: T) -> Result<Self> {
        if !epsilon.is_finite() || !gap.is_finite() || gap <= T::zero() {
            return Err(Error::InvalidParameter(format!(
                "non-finite or non-positive qubit energies (epsilon = {epsilon}, gap = {gap})"
            )));
        }
        Ok(Self {
            delta_phi: T::nan(),
            epsilon,
            omega_q: epsilon.hypot(gap),
            theta: gap.atan2(epsilon),
            gap,
        })
    }

    /// The optimal point ε = 0 of a qubit with gap `gap`.
    pub fn optimal(gap: T) -> Result<Self> {
        let mut fp = Self::from_epsilon(T::zero(), gap)?;
        fp.delta_phi = T::zero();
        Ok(fp)
    }

    pub fn gap(&self) -> T {
        self.gap
    }

    /// sin θ = Δ/ω_q, evaluated without going through θ.
    pub fn sin_theta(&self) -> T {
        self.gap / self.omega_q
    }

    /// cos θ = ε/ω_q.
    pub fn cos_theta(&self) -> T {
        self.epsilon / self.omega_q
    }

    /// Same qubit with the flux sign reversed (θ → π − θ).
    pub fn mirrored(&self) -> Self {
        Self {
            delta_phi: -self.delta_phi,
            epsilon: -self.epsilon,
            omega_q: self.omega_q,
            theta: self.gap.atan2(-self.epsilon),
            gap: self.gap,
        }
    }
}

/// Maps a flux offset (mΦ0) to (ε, ω_q, θ).
pub fn flux_to_qubit<T: Real>(delta_phi: T, params: &QubitParams<T>) -> Result<FluxPoint<T>> {
    params.validate()?;
    if !delta_phi.is_finite() {
        return Err(Error::InvalidParameter(format!("flux offset must be finite, got {delta_phi}")));
    }
    let mut fp = FluxPoint::from_epsilon(params.epsilon(delta_phi), params.gap)?;
    fp.delta_phi = delta_phi;
    Ok(fp)
}

//! Default tolerance constants fixed by the engine contracts. Every check
//! that consumes one also accepts a per-call override.

use crate::scalar::Scalar;

/// Structural checks: Hermiticity, unitarity, PSD gating.
pub const STRUCTURAL: f64 = 1e-10;

/// Relative Frobenius equality assertions.
pub const EQUALITY: f64 = 1e-9;

/// Basis orthonormality and tracelessness.
pub const BASIS: f64 = 1e-12;

/// Gram condition number above which generator decomposition refuses.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;

/// Weight below which ancilla ensemble members are dropped (relative).
pub const ENSEMBLE_WEIGHT_CUTOFF: f64 = 1e-16;

/// Thermal-state tail weight admitted past the Fock cutoff.
pub const THERMAL_TAIL: f64 = 1e-10;

pub fn structural<T: Scalar>() -> T {
    T::from_f64(STRUCTURAL)
}

pub fn equality<T: Scalar>() -> T {
    T::from_f64(EQUALITY)
}

pub fn basis<T: Scalar>() -> T {
    T::from_f64(BASIS)
}

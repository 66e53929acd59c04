//! Truncated bosonic modes and the Gaussian-like states used as entangled
//! ancilla preparations: thermal states, the two-mode squeeze unitary, and
//! two-mode squeezed thermal states.
//!
//! Every constructed state or unitary carries a scalar `truncation_defect`
//! (tail weight / identity residual) so downstream comparisons can budget
//! for the cutoff.

use crate::error::{Error, Result};
use crate::operator::{kron, HilbertDims, Operator};
use crate::ops::annihilation_op;
use crate::scalar::{cre, C, Scalar};
use crate::tol;

/// A bosonic mode truncated at photon number `cutoff` (dimension `cutoff+1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockMode {
    cutoff: usize,
}

impl FockMode {
    pub fn new(cutoff: usize) -> Result<Self> {
        if cutoff < 1 {
            return Err(Error::invalid("Fock cutoff must be at least 1"));
        }
        Ok(FockMode { cutoff })
    }

    /// Smallest cutoff admitting a thermal tail below the gate and at least
    /// `10 * max(1, sinh^2 r)` levels for the squeezing spread.
    pub fn for_state(n_mean: f64, r: f64) -> Result<Self> {
        let from_tail = if n_mean > 0.0 {
            let q = n_mean / (n_mean + 1.0);
            (tol::THERMAL_TAIL.ln() / q.ln()).ceil() as usize
        } else {
            1
        };
        let from_squeeze = (10.0 * r.sinh().powi(2).max(1.0)).ceil() as usize;
        FockMode::new(from_tail.max(from_squeeze).max(1))
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.cutoff + 1
    }

    /// Weight of the truncated thermal tail, `(N/(N+1))^(cutoff+1)`.
    pub fn thermal_tail<T: Scalar>(&self, n_mean: T) -> T {
        if n_mean <= T::zero() {
            return T::zero();
        }
        let q = n_mean / (n_mean + T::one());
        q.powi(self.cutoff as i32 + 1)
    }

    /// Validity gate: the tail past the cutoff must be below the tolerance.
    pub fn check_thermal<T: Scalar>(&self, n_mean: T) -> Result<T> {
        if n_mean < T::zero() {
            return Err(Error::invalid("mean photon number must be non-negative"));
        }
        let tail = self.thermal_tail(n_mean);
        if tail > T::from_f64(tol::THERMAL_TAIL) {
            return Err(Error::CutoffInsufficient {
                detail: format!(
                    "thermal tail {:.3e} above {:.1e} at cutoff {}",
                    tail.to_f64_lossy(),
                    tol::THERMAL_TAIL,
                    self.cutoff
                ),
            });
        }
        Ok(tail)
    }
}

/// Squeeze magnitude and phase; `zeta = r e^{i psi}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezeParams<T: Scalar> {
    r: T,
    psi: T,
}

impl<T: Scalar> SqueezeParams<T> {
    pub fn new(r: T, psi: T) -> Result<Self> {
        if r < T::zero() || !r.is_finite() {
            return Err(Error::invalid("squeeze magnitude must be finite and non-negative"));
        }
        let two_pi = T::PI() + T::PI();
        let mut psi = psi % two_pi;
        if psi < T::zero() {
            psi = psi + two_pi;
        }
        Ok(SqueezeParams { r, psi })
    }

    pub fn r(&self) -> T {
        self.r
    }

    pub fn psi(&self) -> T {
        self.psi
    }

    pub fn zeta(&self) -> C<T> {
        C::new(self.r * self.psi.cos(), self.r * self.psi.sin())
    }
}

/// An operator together with the truncation defect of its construction.
#[derive(Debug, Clone)]
pub struct FockResult<T: Scalar> {
    pub op: Operator<T>,
    pub truncation_defect: T,
}

/// Truncated annihilation operator for the mode.
pub fn annihilation<T: Scalar>(mode: &FockMode) -> Operator<T> {
    annihilation_op(mode.dim()).expect("mode dimension >= 2")
}

/// Thermal state with mean photon number `n_mean`, renormalized after
/// truncation so the trace is exactly one.
pub fn thermal_state<T: Scalar>(mode: &FockMode, n_mean: T) -> Result<FockResult<T>> {
    let tail = mode.check_thermal(n_mean)?;
    let weights = thermal_weights(mode, n_mean);
    let mut op = Operator::zeros(HilbertDims::single(mode.dim())?);
    for (n, w) in weights.iter().enumerate() {
        op.matrix_mut()[(n, n)] = cre(*w);
    }
    Ok(FockResult { op, truncation_defect: tail })
}

/// Renormalized truncated geometric weights `p_n = (1-q) q^n / (1 - q^(c+1))`.
fn thermal_weights<T: Scalar>(mode: &FockMode, n_mean: T) -> Vec<T> {
    let dim = mode.dim();
    if n_mean <= T::zero() {
        let mut w = vec![T::zero(); dim];
        w[0] = T::one();
        return w;
    }
    let q = n_mean / (n_mean + T::one());
    let norm = T::one() - q.powi(dim as i32);
    let mut w = Vec::with_capacity(dim);
    let mut cur = (T::one() - q) / norm;
    for _ in 0..dim {
        w.push(cur);
        cur = cur * q;
    }
    w
}

/// Two-mode squeeze unitary `S = exp(zeta b1^dag b2^dag - zeta^* b1 b2)` on
/// the truncated two-mode space.
///
/// The truncation defect is the larger of the unitarity defect and the
/// residual of `S^dag b1 S = cosh(r) b1 + e^{i psi} sinh(r) b2^dag` on the
/// low-excitation block.
pub fn two_mode_squeeze<T: Scalar>(
    mode1: &FockMode,
    mode2: &FockMode,
    zeta: &SqueezeParams<T>,
) -> Result<FockResult<T>> {
    if mode1.cutoff != mode2.cutoff {
        return Err(Error::invalid("both modes must share one cutoff"));
    }
    let (b1, b2) = two_mode_ladders(mode1);
    let z = zeta.zeta();
    let up = b1.dagger().matmul(&b2.dagger())?.scale(z);
    let down = b1.matmul(&b2)?.scale(z.conj());
    let generator = up.sub(&down)?;
    let s = crate::operator::expm(&generator, cre(T::one()))?;

    let unitarity = s.unitarity_defect();
    if unitarity > T::from_f64(1e-6) {
        return Err(Error::CutoffInsufficient {
            detail: format!("squeeze unitarity defect {:.3e}", unitarity.to_f64_lossy()),
        });
    }
    let bch = squeeze_identity_defect(&s, mode1, zeta)?;
    Ok(FockResult { op: s, truncation_defect: unitarity.max(bch) })
}

/// Total excitation bound of the low-excitation block: the region where
/// truncation leakage from the cutoff boundary stays negligible at the
/// gate-selected cutoffs.
pub fn low_excitation_bound(mode: &FockMode) -> usize {
    mode.cutoff / 5
}

/// Residual of the squeeze transformation identity for `b1`, restricted to
/// the low-excitation block `n1 + n2 <= cutoff/5`.
pub fn squeeze_identity_defect<T: Scalar>(
    s: &Operator<T>,
    mode: &FockMode,
    zeta: &SqueezeParams<T>,
) -> Result<T> {
    squeeze_identity_defect_on_block(s, mode, zeta, low_excitation_bound(mode))
}

/// Same residual with an explicit total-excitation bound.
pub fn squeeze_identity_defect_on_block<T: Scalar>(
    s: &Operator<T>,
    mode: &FockMode,
    zeta: &SqueezeParams<T>,
    max_total: usize,
) -> Result<T> {
    let (b1, b2) = two_mode_ladders(mode);
    let transformed = s.dagger().matmul(&b1)?.matmul(s)?;
    let ch = cre(zeta.r().cosh());
    let sh = C::new(zeta.psi().cos(), zeta.psi().sin()).scale(zeta.r().sinh());
    let expected = b1.scale(ch).add(&b2.dagger().scale(sh))?;
    let diff = transformed.sub(&expected)?;

    let d = mode.dim();
    let mut acc = T::zero();
    for n1 in 0..d {
        for n2 in 0..d {
            if n1 + n2 > max_total {
                continue;
            }
            let row = n1 * d + n2;
            for m1 in 0..d {
                for m2 in 0..d {
                    if m1 + m2 > max_total {
                        continue;
                    }
                    acc = acc + diff.matrix()[(row, m1 * d + m2)].norm_sqr();
                }
            }
        }
    }
    Ok(acc.sqrt())
}

fn two_mode_ladders<T: Scalar>(mode: &FockMode) -> (Operator<T>, Operator<T>) {
    let b = annihilation::<T>(mode);
    let ident = Operator::identity(HilbertDims::single(mode.dim()).unwrap());
    let b1 = kron(&b, &ident).expect("two-mode space fits the budget");
    let b2 = kron(&ident, &b).expect("two-mode space fits the budget");
    (b1, b2)
}

/// Two-mode squeezed thermal state `S (rho_th(N1) x rho_th(N2)) S^dag`.
pub fn entangled_thermal_state<T: Scalar>(
    mode1: &FockMode,
    mode2: &FockMode,
    zeta: &SqueezeParams<T>,
    n1: T,
    n2: T,
) -> Result<FockResult<T>> {
    let t1 = thermal_state(mode1, n1)?;
    let t2 = thermal_state(mode2, n2)?;
    let s = two_mode_squeeze(mode1, mode2, zeta)?;
    let product = kron(&t1.op, &t2.op)?;
    let rotated = s.op.matmul(&product)?.matmul(&s.op.dagger())?;
    let defect = t1
        .truncation_defect
        .max(t2.truncation_defect)
        .max(s.truncation_defect);
    Ok(FockResult { op: rotated, truncation_defect: defect })
}

/// Rank decomposition of the two-mode squeezed thermal state: weighted pure
/// states `S |n1 n2>` with truncated thermal weights. Weights below the
/// ensemble cutoff are dropped and accounted for in the defect.
pub fn entangled_thermal_ensemble<T: Scalar>(
    mode1: &FockMode,
    mode2: &FockMode,
    zeta: &SqueezeParams<T>,
    n1: T,
    n2: T,
) -> Result<(Vec<(T, Vec<C<T>>)>, T)> {
    mode1.check_thermal(n1)?;
    mode2.check_thermal(n2)?;
    let s = two_mode_squeeze(mode1, mode2, zeta)?;
    let w1 = thermal_weights(mode1, n1);
    let w2 = thermal_weights(mode2, n2);
    let d = mode1.dim();
    let drop_below = T::from_f64(tol::ENSEMBLE_WEIGHT_CUTOFF);

    let mut members = Vec::new();
    let mut dropped = T::zero();
    for (i, &wi) in w1.iter().enumerate() {
        for (j, &wj) in w2.iter().enumerate() {
            let w = wi * wj;
            if w < drop_below {
                dropped = dropped + w;
                continue;
            }
            members.push((w, s.op.matrix().column(i * d + j)));
        }
    }
    Ok((members, s.truncation_defect + dropped))
}

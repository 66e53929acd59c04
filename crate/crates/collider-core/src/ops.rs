//! Built-in single-site operators: Pauli matrices, qubit ladder operators,
//! projectors, and truncated bosonic mode operators.

use crate::error::Result;
use crate::operator::{HilbertDims, Operator};
use crate::scalar::{c64, Scalar};

pub fn identity_op<T: Scalar>(d: usize) -> Result<Operator<T>> {
    Ok(Operator::identity(HilbertDims::single(d)?))
}

pub fn sigma_x<T: Scalar>() -> Operator<T> {
    Operator::from_rows_single(vec![
        vec![c64(0., 0.), c64(1., 0.)],
        vec![c64(1., 0.), c64(0., 0.)],
    ])
    .unwrap()
}

pub fn sigma_y<T: Scalar>() -> Operator<T> {
    Operator::from_rows_single(vec![
        vec![c64(0., 0.), c64(0., -1.)],
        vec![c64(0., 1.), c64(0., 0.)],
    ])
    .unwrap()
}

pub fn sigma_z<T: Scalar>() -> Operator<T> {
    Operator::from_rows_single(vec![
        vec![c64(1., 0.), c64(0., 0.)],
        vec![c64(0., 0.), c64(-1., 0.)],
    ])
    .unwrap()
}

/// Lowering operator |g><e| (basis order: |0> = ground, |1> = excited).
pub fn sigma_minus<T: Scalar>() -> Operator<T> {
    Operator::from_rows_single(vec![
        vec![c64(0., 0.), c64(1., 0.)],
        vec![c64(0., 0.), c64(0., 0.)],
    ])
    .unwrap()
}

/// Raising operator |e><g|.
pub fn sigma_plus<T: Scalar>() -> Operator<T> {
    sigma_minus().dagger()
}

/// Projector |0><0| on a d-dimensional factor.
pub fn ground_projector<T: Scalar>(d: usize) -> Result<Operator<T>> {
    Operator::basis_projector(d, 0)
}

/// Projector |1><1| on a qubit.
pub fn excited_projector<T: Scalar>() -> Operator<T> {
    Operator::basis_projector(2, 1).unwrap()
}

/// Truncated bosonic annihilation operator with `<n-1|b|n> = sqrt(n)` on a
/// `dim`-level factor (cutoff `dim - 1`).
pub fn annihilation_op<T: Scalar>(dim: usize) -> Result<Operator<T>> {
    let mut op = Operator::zeros(HilbertDims::single(dim)?);
    for n in 1..dim {
        op.matrix_mut()[(n - 1, n)] = c64((n as f64).sqrt(), 0.);
    }
    Ok(op)
}

/// Number operator `b^dag b` on a truncated mode.
pub fn number_op<T: Scalar>(dim: usize) -> Result<Operator<T>> {
    let mut op = Operator::zeros(HilbertDims::single(dim)?);
    for n in 0..dim {
        op.matrix_mut()[(n, n)] = c64(n as f64, 0.);
    }
    Ok(op)
}

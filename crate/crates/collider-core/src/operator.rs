//! Operators on finite tensor-product Hilbert spaces: construction,
//! Kronecker products, partial traces, local embeddings, and the matrix
//! exponential. The tensor convention is fixed globally: row-major storage,
//! factor 0 slowest.

use crate::cmat::CMat;
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{cre, C, Scalar};

/// Largest dense matrix side the engine accepts.
pub const DIMENSION_BUDGET: usize = 1 << 14;

/// Ordered list of local dimensions of the tensor factors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertDims {
    dims: Vec<usize>,
}

impl HilbertDims {
    /// Each factor dimension must be at least 2; the total must fit the
    /// dense-matrix budget.
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::invalid("every factor dimension must be >= 2"));
        }
        let mut total = 1usize;
        for &d in &dims {
            total = total
                .checked_mul(d)
                .ok_or(Error::CapacityExceeded { total: usize::MAX, budget: DIMENSION_BUDGET })?;
        }
        if total > DIMENSION_BUDGET {
            return Err(Error::CapacityExceeded { total, budget: DIMENSION_BUDGET });
        }
        Ok(HilbertDims { dims })
    }

    /// The zero-factor space of a fully traced-out operator (total dim 1).
    pub fn scalar() -> Self {
        HilbertDims { dims: Vec::new() }
    }

    pub fn single(d: usize) -> Result<Self> {
        Self::new(vec![d])
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn factors(&self) -> &[usize] {
        &self.dims
    }

    pub fn factor(&self, i: usize) -> Result<usize> {
        self.dims
            .get(i)
            .copied()
            .ok_or(Error::InvalidFactor { index: i, nfactors: self.dims.len() })
    }

    pub fn concat(&self, other: &HilbertDims) -> Result<HilbertDims> {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        if dims.is_empty() {
            return Ok(HilbertDims::scalar());
        }
        HilbertDims::new(dims)
    }

    /// Stride of each factor in the row-major index (factor 0 slowest).
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.dims[i + 1];
        }
        strides
    }

    /// Flat offsets of all index combinations of the `subset` factors
    /// (counting in the order given), every other factor index held at 0.
    pub(crate) fn subset_offsets(&self, subset: &[usize]) -> Vec<usize> {
        let strides = self.strides();
        let size: usize = subset.iter().map(|&i| self.dims[i]).product();
        let mut offsets = Vec::with_capacity(size.max(1));
        let mut counters = vec![0usize; subset.len()];
        loop {
            let off = subset
                .iter()
                .zip(counters.iter())
                .map(|(&f, &i)| i * strides[f])
                .sum();
            offsets.push(off);
            // Mixed-radix increment, last factor fastest.
            let mut k = subset.len();
            loop {
                if k == 0 {
                    return offsets;
                }
                k -= 1;
                counters[k] += 1;
                if counters[k] < self.dims[subset[k]] {
                    break;
                }
                counters[k] = 0;
            }
        }
    }

    fn complement(&self, subset: &[usize]) -> Vec<usize> {
        (0..self.dims.len()).filter(|i| !subset.contains(i)).collect()
    }
}

/// Dense operator carrying its tensor-factor structure. The universal value
/// type for Hamiltonians, unitaries, jump operators, and density matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator<T: Scalar> {
    dims: HilbertDims,
    mat: CMat<T>,
}

impl<T: Scalar> Operator<T> {
    pub fn new(dims: HilbertDims, mat: CMat<T>) -> Result<Self> {
        let side = dims.total();
        if mat.rows() != side || mat.cols() != side {
            return Err(Error::DimensionMismatch { expected: side, actual: mat.rows() });
        }
        Ok(Operator { dims, mat })
    }

    pub fn zeros(dims: HilbertDims) -> Self {
        let n = dims.total();
        Operator { dims, mat: CMat::zeros(n, n) }
    }

    pub fn identity(dims: HilbertDims) -> Self {
        let n = dims.total();
        Operator { dims, mat: CMat::identity(n) }
    }

    /// Single-factor operator from nested rows of `(re, im)` pairs.
    pub fn from_rows_single(rows: Vec<Vec<C<T>>>) -> Result<Self> {
        let mat = CMat::from_rows(rows);
        let dims = HilbertDims::single(mat.rows())?;
        Operator::new(dims, mat)
    }

    /// Projector |k><k| on a single factor of dimension `d`.
    pub fn basis_projector(d: usize, k: usize) -> Result<Self> {
        if k >= d {
            return Err(Error::InvalidFactor { index: k, nfactors: d });
        }
        let mut op = Operator::zeros(HilbertDims::single(d)?);
        op.mat[(k, k)] = cre(T::one());
        Ok(op)
    }

    pub fn dims(&self) -> &HilbertDims {
        &self.dims
    }

    pub fn side(&self) -> usize {
        self.mat.rows()
    }

    pub fn matrix(&self) -> &CMat<T> {
        &self.mat
    }

    pub fn matrix_mut(&mut self) -> &mut CMat<T> {
        &mut self.mat
    }

    pub fn into_matrix(self) -> CMat<T> {
        self.mat
    }

    pub fn dagger(&self) -> Self {
        Operator { dims: self.dims.clone(), mat: self.mat.dagger() }
    }

    pub fn trace(&self) -> C<T> {
        self.mat.trace()
    }

    pub fn frobenius_norm(&self) -> T {
        self.mat.frobenius_norm()
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Operator { dims: self.dims.clone(), mat: self.mat.scale(s) }
    }

    pub fn scale_real(&self, s: T) -> Self {
        self.scale(cre(s))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Operator { dims: self.dims.clone(), mat: &self.mat + &other.mat })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Operator { dims: self.dims.clone(), mat: &self.mat - &other.mat })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Operator { dims: self.dims.clone(), mat: self.mat.matmul(&other.mat) })
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        let ab = self.matmul(other)?;
        let ba = other.matmul(self)?;
        ab.sub(&ba)
    }

    pub fn anticommutator(&self, other: &Self) -> Result<Self> {
        let ab = self.matmul(other)?;
        let ba = other.matmul(self)?;
        ab.add(&ba)
    }

    fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                expected: self.side(),
                actual: other.side(),
            });
        }
        Ok(())
    }

    /// `||A - A^dag||_F <= tol * ||A||_F` (zero operators count as Hermitian).
    pub fn is_hermitian(&self, tol: T) -> bool {
        let norm = self.mat.frobenius_norm();
        if norm.is_zero() {
            return true;
        }
        self.mat.hermiticity_defect() <= tol * norm
    }

    /// `||A^dag A - I||_F <= tol`.
    pub fn is_unitary(&self, tol: T) -> bool {
        self.unitarity_defect() <= tol
    }

    pub fn unitarity_defect(&self) -> T {
        let gram = self.mat.dagger().matmul(&self.mat);
        (&gram - &CMat::identity(self.side())).frobenius_norm()
    }

    pub fn min_eigenvalue(&self) -> Result<T> {
        linalg::min_eigenvalue(&self.mat)
    }

    /// Hermitian, unit trace, and min eigenvalue >= -tol.
    pub fn is_density_matrix(&self, tol: T) -> Result<bool> {
        if !self.is_hermitian(tol) {
            return Ok(false);
        }
        let tr = self.trace();
        if (tr.re - T::one()).abs() > tol || tr.im.abs() > tol {
            return Ok(false);
        }
        Ok(self.min_eigenvalue()? >= -tol)
    }
}

/// Kronecker product; `a`'s factors are slowest in the result.
pub fn kron<T: Scalar>(a: &Operator<T>, b: &Operator<T>) -> Result<Operator<T>> {
    let dims = a.dims.concat(&b.dims)?;
    Ok(Operator { dims, mat: a.mat.kron(&b.mat) })
}

/// Kronecker product of a list, left to right.
pub fn kron_all<T: Scalar>(ops: &[&Operator<T>]) -> Result<Operator<T>> {
    let (first, rest) = ops
        .split_first()
        .ok_or_else(|| Error::invalid("kron_all needs at least one operator"))?;
    let mut acc = (*first).clone();
    for op in rest {
        acc = kron(&acc, op)?;
    }
    Ok(acc)
}

/// Partial trace keeping the factors in `keep` (original order).
///
/// An empty keep-set reduces to the full trace as a 1x1 operator.
pub fn partial_trace<T: Scalar>(a: &Operator<T>, keep: &[usize]) -> Result<Operator<T>> {
    let nf = a.dims.len();
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if let Some(&bad) = keep.iter().find(|&&i| i >= nf) {
        return Err(Error::InvalidFactor { index: bad, nfactors: nf });
    }

    let traced = a.dims.complement(&keep);
    let keep_offsets = a.dims.subset_offsets(&keep);
    let traced_offsets = a.dims.subset_offsets(&traced);
    let k = keep_offsets.len();

    let mut out = CMat::zeros(k, k);
    for (i, &ko_i) in keep_offsets.iter().enumerate() {
        for (j, &ko_j) in keep_offsets.iter().enumerate() {
            let mut acc = C::new(T::zero(), T::zero());
            for &t in &traced_offsets {
                acc = acc + a.mat[(ko_i + t, ko_j + t)];
            }
            out[(i, j)] = acc;
        }
    }
    let dims = if keep.is_empty() {
        HilbertDims::scalar()
    } else {
        HilbertDims::new(keep.iter().map(|&i| a.dims.factors()[i]).collect())?
    };
    Operator::new(dims, out)
}

/// `exp(scale * a)`.
pub fn expm<T: Scalar>(a: &Operator<T>, scale: C<T>) -> Result<Operator<T>> {
    let arg = a.mat.scale(scale);
    Ok(Operator { dims: a.dims.clone(), mat: linalg::expm(&arg)? })
}

/// Embed a single-factor operator at `site`, identity elsewhere.
pub fn embed_local<T: Scalar>(
    op: &Operator<T>,
    site: usize,
    dims: &HilbertDims,
) -> Result<Operator<T>> {
    let d = dims.factor(site)?;
    if op.dims.len() != 1 || op.side() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: op.side() });
    }
    embed(op, &[site], dims)
}

/// Embed an operator on an ascending list of factors, identity elsewhere.
///
/// `op`'s factor order must match the order of `sites`.
pub fn embed<T: Scalar>(
    op: &Operator<T>,
    sites: &[usize],
    dims: &HilbertDims,
) -> Result<Operator<T>> {
    check_support(op, sites, dims)?;
    let support_offsets = dims.subset_offsets(sites);
    let complement_offsets = dims.subset_offsets(&dims.complement(sites));
    let n = dims.total();
    let mut out = CMat::zeros(n, n);
    for &t in &complement_offsets {
        for (a, &sa) in support_offsets.iter().enumerate() {
            for (b, &sb) in support_offsets.iter().enumerate() {
                out[(sa + t, sb + t)] = op.mat[(a, b)];
            }
        }
    }
    Operator::new(dims.clone(), out)
}

fn check_support<T: Scalar>(op: &Operator<T>, sites: &[usize], dims: &HilbertDims) -> Result<()> {
    if sites.is_empty() || sites.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("support must be a non-empty ascending factor list"));
    }
    if op.dims.len() != sites.len() {
        return Err(Error::DimensionMismatch { expected: sites.len(), actual: op.dims.len() });
    }
    for (k, &site) in sites.iter().enumerate() {
        let d = dims.factor(site)?;
        if op.dims.factors()[k] != d {
            return Err(Error::DimensionMismatch { expected: d, actual: op.dims.factors()[k] });
        }
    }
    Ok(())
}

/// A small operator bound to a subset of tensor factors, with precomputed
/// offset tables for fast application to full-space states.
#[derive(Debug, Clone)]
pub struct LocalOp<T: Scalar> {
    mat: CMat<T>,
    support_offsets: Vec<usize>,
    complement_offsets: Vec<usize>,
    full_dim: usize,
}

impl<T: Scalar> LocalOp<T> {
    pub fn new(op: &Operator<T>, sites: &[usize], dims: &HilbertDims) -> Result<Self> {
        check_support(op, sites, dims)?;
        Ok(LocalOp {
            mat: op.matrix().clone(),
            support_offsets: dims.subset_offsets(sites),
            complement_offsets: dims.subset_offsets(&dims.complement(sites)),
            full_dim: dims.total(),
        })
    }

    pub fn local_dim(&self) -> usize {
        self.support_offsets.len()
    }

    /// `psi <- (op tensor I) psi`.
    pub fn apply_vec(&self, psi: &mut [C<T>]) {
        assert_eq!(psi.len(), self.full_dim);
        let a = self.support_offsets.len();
        let mut gathered = vec![C::new(T::zero(), T::zero()); a];
        for &base in &self.complement_offsets {
            for (g, &s) in gathered.iter_mut().zip(self.support_offsets.iter()) {
                *g = psi[base + s];
            }
            for (r, &s) in self.support_offsets.iter().enumerate() {
                let row = self.mat.row(r);
                let mut acc = C::new(T::zero(), T::zero());
                for (m, g) in row.iter().zip(gathered.iter()) {
                    acc = acc + *m * *g;
                }
                psi[base + s] = acc;
            }
        }
    }

    /// `rho <- (op tensor I) rho`, processing whole rows for locality.
    fn apply_mat_left(&self, rho: &mut CMat<T>) {
        assert_eq!(rho.rows(), self.full_dim);
        let a = self.support_offsets.len();
        let n = rho.cols();
        let mut block = vec![C::new(T::zero(), T::zero()); a * n];
        for &base in &self.complement_offsets {
            for (bi, &s) in self.support_offsets.iter().enumerate() {
                block[bi * n..(bi + 1) * n].copy_from_slice(rho.row(base + s));
            }
            for (r, &s) in self.support_offsets.iter().enumerate() {
                let out = rho.row_mut(base + s);
                for o in out.iter_mut() {
                    *o = C::new(T::zero(), T::zero());
                }
                for (k, coeff) in self.mat.row(r).iter().enumerate() {
                    if coeff.re.is_zero() && coeff.im.is_zero() {
                        continue;
                    }
                    let src = &block[k * n..(k + 1) * n];
                    for (o, x) in out.iter_mut().zip(src.iter()) {
                        *o = *o + *coeff * *x;
                    }
                }
            }
        }
    }

    /// `rho <- (op tensor I) rho (op tensor I)^dag`.
    pub fn conjugate_density(&self, rho: &mut CMat<T>) {
        self.apply_mat_left(rho);
        adjoint_in_place(rho);
        self.apply_mat_left(rho);
        adjoint_in_place(rho);
    }
}

fn adjoint_in_place<T: Scalar>(m: &mut CMat<T>) {
    let n = m.rows();
    for r in 0..n {
        for c in r..n {
            let a = m[(r, c)].conj();
            let b = m[(c, r)].conj();
            m[(r, c)] = b;
            m[(c, r)] = a;
        }
    }
}

/// Column-stacked vectorization of a square matrix.
pub fn vectorize<T: Scalar>(m: &CMat<T>) -> Vec<C<T>> {
    let n = m.rows();
    let mut v = Vec::with_capacity(n * n);
    for c in 0..n {
        for r in 0..n {
            v.push(m[(r, c)]);
        }
    }
    v
}

/// Inverse of [`vectorize`].
pub fn devectorize<T: Scalar>(v: &[C<T>], n: usize) -> CMat<T> {
    assert_eq!(v.len(), n * n);
    CMat::from_fn(n, n, |r, c| v[c * n + r])
}

//! Dense row-major complex matrices, the storage layer under [`crate::operator::Operator`]
//! and [`crate::gkls::Superoperator`].

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::scalar::{cre, C, Scalar};

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat<T: Scalar> {
    rows: usize,
    cols: usize,
    data: Vec<C<T>>,
}

impl<T: Scalar> CMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            data: vec![C::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = cre(T::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CMat { rows, cols, data }
    }

    /// Build from nested rows; all rows must have equal length.
    pub fn from_rows(rows: Vec<Vec<C<T>>>) -> Self {
        let nr = rows.len();
        let nc = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == nc), "ragged rows");
        CMat {
            rows: nr,
            cols: nc,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C<T>] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[C<T>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [C<T>] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<C<T>> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        for z in &mut out.data {
            *z = z.conj();
        }
        out
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn trace(&self) -> C<T> {
        debug_assert!(self.is_square());
        (0..self.rows).map(|i| self[(i, i)]).fold(C::new(T::zero(), T::zero()), |a, b| a + b)
    }

    pub fn frobenius_norm(&self) -> T {
        self.data
            .iter()
            .map(|z| z.norm_sqr())
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> T {
        (0..self.cols)
            .map(|c| {
                (0..self.rows)
                    .map(|r| self[(r, c)].norm())
                    .fold(T::zero(), |a, b| a + b)
            })
            .fold(T::zero(), |a, b| a.max(b))
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|z| z.norm()).fold(T::zero(), |a, b| a.max(b))
    }

    pub fn scale(&self, s: C<T>) -> Self {
        let mut out = self.clone();
        for z in &mut out.data {
            *z = *z * s;
        }
        out
    }

    pub fn scale_real(&self, s: T) -> Self {
        self.scale(cre(s))
    }

    /// `self += s * other`, entrywise.
    pub fn axpy(&mut self, s: C<T>, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = *a + s * *b;
        }
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        // (i,k,j) loop order keeps the inner accesses contiguous in row-major.
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.re.is_zero() && a.im.is_zero() {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = out.row_mut(i);
                for (o, r) in orow.iter_mut().zip(rrow.iter()) {
                    *o = *o + a * *r;
                }
            }
        }
        out
    }

    /// `self * v` for a column vector.
    pub fn matvec(&self, v: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v.iter())
                    .map(|(a, x)| *a * *x)
                    .fold(C::new(T::zero(), T::zero()), |acc, y| acc + y)
            })
            .collect()
    }

    /// Hilbert-Schmidt inner product `Tr[self^dag rhs]`.
    pub fn hs_inner(&self, rhs: &Self) -> C<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data
            .iter()
            .zip(rhs.data.iter())
            .map(|(a, b)| a.conj() * *b)
            .fold(C::new(T::zero(), T::zero()), |acc, y| acc + y)
    }

    /// Hermiticity defect `||A - A^dag||_F`.
    pub fn hermiticity_defect(&self) -> T {
        debug_assert!(self.is_square());
        let mut acc = T::zero();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let d = self[(r, c)] - self[(c, r)].conj();
                acc = acc + d.norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// Kronecker product with `self`'s indices slowest.
    pub fn kron(&self, rhs: &Self) -> Self {
        let (ar, ac, br, bc) = (self.rows, self.cols, rhs.rows, rhs.cols);
        let mut out = Self::zeros(ar * br, ac * bc);
        for i in 0..ar {
            for j in 0..ac {
                let a = self[(i, j)];
                if a.re.is_zero() && a.im.is_zero() {
                    continue;
                }
                for k in 0..br {
                    let orow = &mut out.row_mut(i * br + k)[j * bc..j * bc + bc];
                    for (o, b) in orow.iter_mut().zip(rhs.row(k).iter()) {
                        *o = a * *b;
                    }
                }
            }
        }
        out
    }
}

impl<T: Scalar> Index<(usize, usize)> for CMat<T> {
    type Output = C<T>;

    fn index(&self, (r, c): (usize, usize)) -> &C<T> {
        &self.data[r * self.cols + c]
    }
}

impl<T: Scalar> IndexMut<(usize, usize)> for CMat<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C<T> {
        &mut self.data[r * self.cols + c]
    }
}

impl<T: Scalar> Add for &CMat<T> {
    type Output = CMat<T>;

    fn add(self, rhs: &CMat<T>) -> CMat<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(rhs.data.iter()) {
            *a = *a + *b;
        }
        out
    }
}

impl<T: Scalar> Sub for &CMat<T> {
    type Output = CMat<T>;

    fn sub(self, rhs: &CMat<T>) -> CMat<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(rhs.data.iter()) {
            *a = *a - *b;
        }
        out
    }
}

impl<T: Scalar> Mul for &CMat<T> {
    type Output = CMat<T>;

    fn mul(self, rhs: &CMat<T>) -> CMat<T> {
        self.matmul(rhs)
    }
}

impl<T: Scalar> Neg for &CMat<T> {
    type Output = CMat<T>;

    fn neg(self) -> CMat<T> {
        self.scale(cre(-T::one()))
    }
}

//! GKLS master equations for multipartite systems: basis of local GKS
//! operators, Liouvillian superoperators, propagation, least-squares
//! decomposition of arbitrary generators into Hamiltonian + Kossakowski
//! parts, and Lamb-shift separation.
//!
//! Vectorization is column-stacking throughout:
//! `L = -i (I x H - H^T x I) + sum_jk gamma_jk (conj(F_k) x F_j
//!  - 1/2 I x F_k^dag F_j - 1/2 (F_k^dag F_j)^T x I)`.

use crate::cmat::CMat;
use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::{devectorize, embed_local, vectorize, HilbertDims, Operator};
use crate::scalar::{cre, minus_i, C, Scalar};
use crate::tol;

/// One GKS operator: local on a single site, traceless, unit-normalized.
#[derive(Debug, Clone)]
pub struct GksEntry<T: Scalar> {
    pub site: usize,
    pub label: String,
    pub op: Operator<T>,
}

/// Orthonormal family of site-local traceless GKS operators on a system.
#[derive(Debug, Clone)]
pub struct GksBasis<T: Scalar> {
    dims: HilbertDims,
    entries: Vec<GksEntry<T>>,
    embedded: Vec<Operator<T>>,
}

impl<T: Scalar> GksBasis<T> {
    pub fn new(dims: HilbertDims, entries: Vec<GksEntry<T>>) -> Result<Self> {
        let btol = tol::basis::<T>();
        let mut per_site = vec![0usize; dims.len()];
        for e in &entries {
            let d = dims.factor(e.site)?;
            if e.op.dims().len() != 1 || e.op.side() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: e.op.side() });
            }
            if e.op.trace().norm() > btol {
                return Err(Error::invalid(format!(
                    "GKS operator {}@{} is not traceless",
                    e.label, e.site
                )));
            }
            per_site[e.site] += 1;
            if per_site[e.site] > d * d - 1 {
                return Err(Error::invalid(format!(
                    "more than d^2-1 GKS operators on site {}",
                    e.site
                )));
            }
        }
        // Orthonormality under the local trace; operators on distinct sites
        // are orthogonal automatically since each is traceless.
        for (j, a) in entries.iter().enumerate() {
            for (k, b) in entries.iter().enumerate() {
                let gram = if a.site == b.site {
                    a.op.matrix().hs_inner(b.op.matrix()).conj()
                } else {
                    C::new(T::zero(), T::zero())
                };
                let expected = if j == k { T::one() } else { T::zero() };
                if (gram - cre(expected)).norm() > btol {
                    return Err(Error::invalid(format!(
                        "GKS basis not orthonormal at pair ({j}, {k})"
                    )));
                }
            }
        }
        let embedded = entries
            .iter()
            .map(|e| embed_local(&e.op, e.site, &dims))
            .collect::<Result<Vec<_>>>()?;
        Ok(GksBasis { dims, entries, embedded })
    }

    /// The sigma-minus / sigma-plus pair on every qubit of an all-qubit
    /// system, in canonical (site, label) order.
    pub fn qubit_sigma_pm(n_sites: usize) -> Result<Self> {
        let dims = HilbertDims::new(vec![2; n_sites])?;
        let mut entries = Vec::new();
        for site in 0..n_sites {
            entries.push(GksEntry {
                site,
                label: "+".into(),
                op: crate::ops::sigma_plus(),
            });
            entries.push(GksEntry {
                site,
                label: "-".into(),
                op: crate::ops::sigma_minus(),
            });
        }
        GksBasis::new(dims, entries)
    }

    /// Complete local basis (generalized Gell-Mann operators per site).
    pub fn local_complete(dims: &HilbertDims) -> Result<Self> {
        let mut entries = Vec::new();
        for (site, &d) in dims.factors().iter().enumerate() {
            for (idx, m) in hermitian_traceless_basis::<T>(d).into_iter().enumerate() {
                entries.push(GksEntry {
                    site,
                    label: format!("g{idx}"),
                    op: Operator::new(HilbertDims::single(d)?, m)?,
                });
            }
        }
        GksBasis::new(dims.clone(), entries)
    }

    pub fn dims(&self) -> &HilbertDims {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[GksEntry<T>] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &GksEntry<T> {
        &self.entries[i]
    }

    /// The operator embedded in the full system space.
    pub fn embedded(&self, i: usize) -> &Operator<T> {
        &self.embedded[i]
    }

    pub fn index_of(&self, site: usize, label: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.site == site && e.label == label)
    }

    /// Expansion coefficients of `F_l^dag` in the basis: `c_k = Tr[F_k^dag
    /// F_l^dag]`, plus the norm of the component outside the span.
    ///
    /// This is the bridge between the undaggered cross-term convention of
    /// entangled-ancilla coefficients and the daggered convention stored
    /// here: `F_j rho F_l = sum_k conj(c_k) F_j rho F_k^dag`.
    pub fn dagger_expansion(&self, l: usize) -> (Vec<C<T>>, T) {
        let target = self.entries[l].op.dagger();
        let site = self.entries[l].site;
        let mut coeffs = vec![C::new(T::zero(), T::zero()); self.entries.len()];
        let mut remainder = target.matrix().clone();
        for (k, e) in self.entries.iter().enumerate() {
            if e.site != site {
                continue;
            }
            let c = e.op.matrix().hs_inner(target.matrix());
            coeffs[k] = c;
            remainder.axpy(-c, e.op.matrix());
        }
        (coeffs, remainder.frobenius_norm())
    }

    /// Permutation sorting entries into canonical (site asc, label asc) order.
    pub fn canonical_permutation(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.entries.len()).collect();
        idx.sort_by(|&a, &b| {
            let ea = &self.entries[a];
            let eb = &self.entries[b];
            (ea.site, ea.label.as_str()).cmp(&(eb.site, eb.label.as_str()))
        });
        idx
    }
}

/// Orthonormal Hermitian traceless basis of d x d matrices (d^2 - 1 of them).
pub fn hermitian_traceless_basis<T: Scalar>(d: usize) -> Vec<CMat<T>> {
    let mut out = Vec::with_capacity(d * d - 1);
    let inv_sqrt2 = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    for p in 0..d {
        for q in (p + 1)..d {
            let mut x = CMat::zeros(d, d);
            x[(p, q)] = cre(inv_sqrt2);
            x[(q, p)] = cre(inv_sqrt2);
            out.push(x);
            let mut y = CMat::zeros(d, d);
            y[(p, q)] = C::new(T::zero(), -inv_sqrt2);
            y[(q, p)] = C::new(T::zero(), inv_sqrt2);
            out.push(y);
        }
    }
    for k in 1..d {
        let norm = T::from_f64((k as f64 * (k as f64 + 1.0)).sqrt());
        let mut z = CMat::zeros(d, d);
        for i in 0..k {
            z[(i, i)] = cre(T::one() / norm);
        }
        z[(k, k)] = cre(-T::from_f64(k as f64) / norm);
        out.push(z);
    }
    out
}

/// Target or predicted master equation: effective Hamiltonian plus a
/// Kossakowski coefficient matrix over a GKS basis.
#[derive(Debug, Clone)]
pub struct GklsSpec<T: Scalar> {
    basis: GksBasis<T>,
    h_eff: Operator<T>,
    kossakowski: CMat<T>,
}

impl<T: Scalar> GklsSpec<T> {
    pub fn new(basis: GksBasis<T>, h_eff: Operator<T>, kossakowski: CMat<T>) -> Result<Self> {
        if h_eff.dims() != basis.dims() {
            return Err(Error::DimensionMismatch {
                expected: basis.dims().total(),
                actual: h_eff.side(),
            });
        }
        let stol = tol::structural::<T>();
        if !h_eff.is_hermitian(stol) {
            return Err(Error::invalid("H_eff is not Hermitian"));
        }
        let k = basis.len();
        if kossakowski.rows() != k || kossakowski.cols() != k {
            return Err(Error::DimensionMismatch { expected: k, actual: kossakowski.rows() });
        }
        let knorm = kossakowski.frobenius_norm();
        if kossakowski.hermiticity_defect() > stol * knorm.max(T::one()) {
            return Err(Error::invalid("Kossakowski matrix is not Hermitian"));
        }
        Ok(GklsSpec { basis, h_eff, kossakowski })
    }

    pub fn basis(&self) -> &GksBasis<T> {
        &self.basis
    }

    pub fn h_eff(&self) -> &Operator<T> {
        &self.h_eff
    }

    pub fn kossakowski(&self) -> &CMat<T> {
        &self.kossakowski
    }

    pub fn kossakowski_min_eigenvalue(&self) -> Result<T> {
        linalg::min_eigenvalue(&self.kossakowski)
    }

    /// PSD flag: a valid GKLS generator requires `gamma >= 0`.
    pub fn is_valid_gkls(&self) -> Result<bool> {
        Ok(self.kossakowski_min_eigenvalue()? >= -tol::structural::<T>())
    }

    /// Coefficient at basis indices `(j, k)` of the daggered dissipator term
    /// `F_j rho F_k^dag`.
    pub fn coefficient(&self, j: usize, k: usize) -> C<T> {
        self.kossakowski[(j, k)]
    }

    /// Largest |coefficient| among same-site pairs and among cross-site
    /// pairs, in that order.
    pub fn max_coefficients_by_locality(&self) -> (T, T) {
        let mut local = T::zero();
        let mut cross = T::zero();
        for j in 0..self.basis.len() {
            for k in 0..self.basis.len() {
                let mag = self.kossakowski[(j, k)].norm();
                if self.basis.entry(j).site == self.basis.entry(k).site {
                    local = local.max(mag);
                } else {
                    cross = cross.max(mag);
                }
            }
        }
        (local, cross)
    }
}

/// Canonically ordered difference between two specs on the same basis set.
#[derive(Debug, Clone, Copy)]
pub struct SpecDiff<T: Scalar> {
    pub hamiltonian: T,
    pub kossakowski: T,
}

/// Frobenius distances between specs after permuting both Kossakowski
/// matrices into canonical (site, label) order. The bases must contain the
/// same (site, label) pairs.
pub fn spec_diff<T: Scalar>(a: &GklsSpec<T>, b: &GklsSpec<T>) -> Result<SpecDiff<T>> {
    let pa = a.basis.canonical_permutation();
    let pb = b.basis.canonical_permutation();
    if pa.len() != pb.len() {
        return Err(Error::DimensionMismatch { expected: pa.len(), actual: pb.len() });
    }
    for (&ia, &ib) in pa.iter().zip(pb.iter()) {
        let ea = a.basis.entry(ia);
        let eb = b.basis.entry(ib);
        if ea.site != eb.site || ea.label != eb.label {
            return Err(Error::invalid("bases do not contain the same (site, label) pairs"));
        }
    }
    let k = pa.len();
    let ga = CMat::from_fn(k, k, |r, c| a.kossakowski[(pa[r], pa[c])]);
    let gb = CMat::from_fn(k, k, |r, c| b.kossakowski[(pb[r], pb[c])]);
    Ok(SpecDiff {
        hamiltonian: a.h_eff.sub(&b.h_eff)?.frobenius_norm(),
        kossakowski: (&ga - &gb).frobenius_norm(),
    })
}

/// Matrix acting on column-stacked density matrices of the system.
#[derive(Debug, Clone)]
pub struct Superoperator<T: Scalar> {
    dims: HilbertDims,
    mat: CMat<T>,
}

impl<T: Scalar> Superoperator<T> {
    pub fn new(dims: HilbertDims, mat: CMat<T>) -> Result<Self> {
        let side = dims.total() * dims.total();
        if mat.rows() != side || mat.cols() != side {
            return Err(Error::DimensionMismatch { expected: side, actual: mat.rows() });
        }
        Ok(Superoperator { dims, mat })
    }

    pub fn identity(dims: HilbertDims) -> Self {
        let side = dims.total() * dims.total();
        Superoperator { dims, mat: CMat::identity(side) }
    }

    pub fn dims(&self) -> &HilbertDims {
        &self.dims
    }

    pub fn matrix(&self) -> &CMat<T> {
        &self.mat
    }

    pub fn matrix_mut(&mut self) -> &mut CMat<T> {
        &mut self.mat
    }

    pub fn apply(&self, rho: &Operator<T>) -> Result<Operator<T>> {
        if rho.dims().total() != self.dims.total() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.total(),
                actual: rho.dims().total(),
            });
        }
        let v = self.mat.matvec(&vectorize(rho.matrix()));
        Operator::new(self.dims.clone(), devectorize(&v, self.dims.total()))
    }

    pub fn compose(&self, inner: &Superoperator<T>) -> Result<Superoperator<T>> {
        Superoperator::new(self.dims.clone(), self.mat.matmul(&inner.mat))
    }

    pub fn add(&self, other: &Superoperator<T>) -> Result<Superoperator<T>> {
        Superoperator::new(self.dims.clone(), &self.mat + &other.mat)
    }

    pub fn sub(&self, other: &Superoperator<T>) -> Result<Superoperator<T>> {
        Superoperator::new(self.dims.clone(), &self.mat - &other.mat)
    }

    pub fn scale_real(&self, s: T) -> Superoperator<T> {
        Superoperator { dims: self.dims.clone(), mat: self.mat.scale_real(s) }
    }

    pub fn frobenius_norm(&self) -> T {
        self.mat.frobenius_norm()
    }

    /// `||vec(I)^dag L||`: zero for generators that annihilate the trace.
    pub fn trace_annihilation_defect(&self) -> T {
        self.row_functional_defect(false)
    }

    /// `||vec(I)^dag M - vec(I)^dag||`: zero for trace-preserving maps.
    pub fn trace_preservation_defect(&self) -> T {
        self.row_functional_defect(true)
    }

    fn row_functional_defect(&self, subtract_identity: bool) -> T {
        let d = self.dims.total();
        let mut acc = T::zero();
        for col in 0..d * d {
            let mut sum = C::new(T::zero(), T::zero());
            // vec(I) has ones at indices i*d + i.
            for i in 0..d {
                sum = sum + self.mat[(i * d + i, col)];
            }
            if subtract_identity {
                let (c_out, r_out) = (col / d, col % d);
                if c_out == r_out {
                    sum = sum - cre(T::one());
                }
            }
            acc = acc + sum.norm_sqr();
        }
        acc.sqrt()
    }

    /// Choi matrix `sum_ij E_ij x Phi(E_ij)` of the map.
    pub fn choi(&self) -> CMat<T> {
        let d = self.dims.total();
        CMat::from_fn(d * d, d * d, |row, col| {
            let (i, k) = (row / d, row % d);
            let (j, l) = (col / d, col % d);
            // Phi(E_ij)[k, l] with column-stacked input/output indices.
            self.mat[(l * d + k, j * d + i)]
        })
    }

    /// Minimum eigenvalue of the (Hermitian part of the) Choi matrix;
    /// `>= -tol` certifies complete positivity for Hermiticity-preserving maps.
    pub fn min_choi_eigenvalue(&self) -> Result<T> {
        linalg::min_eigenvalue(&self.choi())
    }
}

/// Assemble the Liouvillian superoperator of a spec.
pub fn build_liouvillian<T: Scalar>(spec: &GklsSpec<T>) -> Result<Superoperator<T>> {
    let dims = spec.basis().dims().clone();
    let d = dims.total();
    let ident = CMat::identity(d);
    let h = spec.h_eff().matrix();

    // -i (I x H - H^T x I)
    let mut l = ident.kron(h);
    l.axpy(cre(-T::one()), &h.transpose().kron(&ident));
    let mut l = l.scale(minus_i());

    let k = spec.basis().len();
    for j in 0..k {
        for kk in 0..k {
            let g = spec.kossakowski()[(j, kk)];
            if g.norm().is_zero() {
                continue;
            }
            l.axpy(g, &dissipator_superop(spec.basis(), j, kk));
        }
    }
    Superoperator::new(dims, l)
}

/// Superoperator of `rho -> F_j rho F_k^dag - 1/2 {F_k^dag F_j, rho}`.
fn dissipator_superop<T: Scalar>(basis: &GksBasis<T>, j: usize, k: usize) -> CMat<T> {
    let d = basis.dims().total();
    let ident = CMat::identity(d);
    let fj = basis.embedded(j).matrix();
    let fk = basis.embedded(k).matrix();
    let fkd_fj = fk.dagger().matmul(fj);
    let mut out = fk.conj().kron(fj);
    let half = cre(-T::from_f64(0.5));
    out.axpy(half, &ident.kron(&fkd_fj));
    out.axpy(half, &fkd_fj.transpose().kron(&ident));
    out
}

/// Superoperator of `rho -> -i [H, rho]`.
pub fn hamiltonian_superop<T: Scalar>(h: &Operator<T>) -> Superoperator<T> {
    let d = h.side();
    let ident = CMat::identity(d);
    let mut l = ident.kron(h.matrix());
    l.axpy(cre(-T::one()), &h.matrix().transpose().kron(&ident));
    Superoperator { dims: h.dims().clone(), mat: l.scale(minus_i()) }
}

/// `exp(L t)` applied to a density matrix.
pub fn propagate<T: Scalar>(
    l: &Superoperator<T>,
    rho0: &Operator<T>,
    t: T,
) -> Result<Operator<T>> {
    if !t.is_finite() {
        return Err(Error::NonFinite);
    }
    let e = linalg::expm(&l.mat.scale_real(t))?;
    let v = e.matvec(&vectorize(rho0.matrix()));
    Operator::new(l.dims.clone(), devectorize(&v, l.dims.total()))
}

/// Result of projecting a generator onto the GKLS model span.
#[derive(Debug, Clone)]
pub struct Decomposition<T: Scalar> {
    pub spec: GklsSpec<T>,
    /// Frobenius norm of the part of the generator outside the model span.
    pub residual: T,
}

/// Least-squares decomposition of a trace-annihilating generator into
/// `-i[H, .]` (H traceless by gauge) plus a dissipator over `basis`.
pub fn decompose_generator<T: Scalar>(
    l: &Superoperator<T>,
    basis: &GksBasis<T>,
) -> Result<Decomposition<T>> {
    if basis.dims().total() != l.dims().total() {
        return Err(Error::DimensionMismatch {
            expected: basis.dims().total(),
            actual: l.dims().total(),
        });
    }
    let defect = l.trace_annihilation_defect();
    if defect > T::from_f64(1e-6) * l.frobenius_norm().max(T::one()) {
        return Err(Error::invalid(format!(
            "generator does not annihilate the trace (defect {:.3e})",
            defect.to_f64_lossy()
        )));
    }

    let d = l.dims().total();
    let k = basis.len();
    let ham_basis = hermitian_traceless_basis::<T>(d);

    // Real-linear model columns: Hamiltonian directions, diagonal dissipators,
    // and the Hermitian/anti-Hermitian combinations of off-diagonal pairs.
    let mut columns: Vec<CMat<T>> = Vec::with_capacity(ham_basis.len() + k * k);
    for hb in &ham_basis {
        let op = Operator::new(l.dims().clone(), hb.clone())?;
        columns.push(hamiltonian_superop(&op).mat);
    }
    let mut pair_index = Vec::new(); // (j, k, is_imag) per dissipator column
    for j in 0..k {
        columns.push(dissipator_superop(basis, j, j));
        pair_index.push((j, j, false));
    }
    for j in 0..k {
        for kk in (j + 1)..k {
            let djk = dissipator_superop(basis, j, kk);
            let dkj = dissipator_superop(basis, kk, j);
            columns.push(&djk + &dkj);
            pair_index.push((j, kk, false));
            let mut imag = djk.scale(C::new(T::zero(), T::one()));
            imag.axpy(C::new(T::zero(), -T::one()), &dkj);
            // i(D_jk - D_kj); the coefficient is Im(gamma_jk).
            columns.push(imag);
            pair_index.push((j, kk, true));
        }
    }

    let ncols = columns.len();
    let mut gram = CMat::<T>::zeros(ncols, ncols);
    let mut rhs = CMat::<T>::zeros(ncols, 1);
    for a in 0..ncols {
        for b in a..ncols {
            let g = cre(columns[a].hs_inner(&columns[b]).re);
            gram[(a, b)] = g;
            gram[(b, a)] = g;
        }
        rhs[(a, 0)] = cre(columns[a].hs_inner(&l.mat).re);
    }

    let cond = linalg::hermitian_condition(&gram)?;
    if cond > T::from_f64(tol::GRAM_CONDITION_LIMIT) {
        return Err(Error::IllConditioned {
            cond: cond.to_f64_lossy(),
            limit: tol::GRAM_CONDITION_LIMIT,
        });
    }
    let x = linalg::lu_solve(&gram, &rhs)?;

    // Reassemble H and the Kossakowski matrix from real coefficients.
    let nham = ham_basis.len();
    let mut h = CMat::zeros(d, d);
    for (a, hb) in ham_basis.iter().enumerate() {
        h.axpy(cre(x[(a, 0)].re), hb);
    }
    let mut gamma = CMat::zeros(k, k);
    for (c, &(j, kk, is_imag)) in pair_index.iter().enumerate() {
        let coeff = x[(nham + c, 0)].re;
        if j == kk {
            gamma[(j, j)] = gamma[(j, j)] + cre(coeff);
        } else if is_imag {
            gamma[(j, kk)] = gamma[(j, kk)] + C::new(T::zero(), coeff);
            gamma[(kk, j)] = gamma[(kk, j)] + C::new(T::zero(), -coeff);
        } else {
            gamma[(j, kk)] = gamma[(j, kk)] + cre(coeff);
            gamma[(kk, j)] = gamma[(kk, j)] + cre(coeff);
        }
    }

    let mut fit = CMat::zeros(d * d, d * d);
    for (a, col) in columns.iter().enumerate() {
        fit.axpy(cre(x[(a, 0)].re), col);
    }
    let residual = (&l.mat - &fit).frobenius_norm();

    let spec = GklsSpec::new(
        basis.clone(),
        Operator::new(l.dims().clone(), h)?,
        gamma,
    )?;
    Ok(Decomposition { spec, residual })
}

/// Effective Lamb-shift Hamiltonian of a set of cross coefficients:
/// `sum (g_jk F_j F_k^dag - g_jk^* F_k F_j^dag) / (2i)`.
pub fn lamb_shift<T: Scalar>(
    basis: &GksBasis<T>,
    cross: &[(usize, usize, C<T>)],
) -> Result<Operator<T>> {
    let dims = basis.dims().clone();
    let mut h = CMat::zeros(dims.total(), dims.total());
    // 1/(2i) = -i/2
    let half_over_i = C::new(T::zero(), -T::from_f64(0.5));
    for &(j, k, g) in cross {
        if j >= basis.len() || k >= basis.len() {
            return Err(Error::InvalidFactor { index: j.max(k), nfactors: basis.len() });
        }
        let fj = basis.embedded(j).matrix();
        let fk = basis.embedded(k).matrix();
        let forward = fj.matmul(&fk.dagger()).scale(g);
        let backward = fk.matmul(&fj.dagger()).scale(g.conj());
        h.axpy(half_over_i, &(&forward - &backward));
    }
    Operator::new(dims, h)
}

//! Dense complex multilinear algebra.
//!
//! The load-bearing convention is the *cyclic* unfolding: for a tensor of
//! order `P`, the mode-`r` unfolding has `I_r` rows and its columns range
//! over the remaining modes in the order `(r+1, ..., P, 1, ..., r-1)` with
//! the earliest mode in that list varying slowest. Every Kronecker-structured
//! identity downstream (selection matrices, the tensor MSE weight matrix)
//! depends on this exact index map, so it is spelled out in [`ComplexTensor::unfold`]
//! and pinned by a brute-force oracle test.
//!
//! Storage is row-major over the index tuple: the *first* index varies
//! slowest, the last fastest. `vec(·)` of a matrix is column-major stacking.

use crate::{C64, CMat, Error, Result};

/// Dense complex tensor of arbitrary order.
///
/// Immutable after construction; all operations return new values.
#[derive(Debug, Clone)]
pub struct ComplexTensor {
    dims: Vec<usize>,
    data: Vec<C64>,
}

impl ComplexTensor {
    /// All-zero tensor with the given extents.
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(!dims.is_empty() && dims.iter().all(|&d| d > 0), "extents must be positive");
        let len = dims.iter().product();
        Self { dims: dims.to_vec(), data: vec![C64::new(0.0, 0.0); len] }
    }

    /// Build from a function of the (zero-based) multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> C64) -> Self {
        let mut t = Self::zeros(dims);
        let mut idx = vec![0usize; dims.len()];
        for off in 0..t.data.len() {
            t.decode(off, &mut idx);
            t.data[off] = f(&idx);
        }
        t
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Linear offset of a multi-index (first index slowest).
    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        for (k, (&i, &d)) in idx.iter().zip(&self.dims).enumerate() {
            debug_assert!(i < d, "index {i} out of range for mode {k}");
            off = off * d + i;
        }
        off
    }

    /// Inverse of [`Self::offset`].
    fn decode(&self, mut off: usize, idx: &mut [usize]) {
        for k in (0..self.dims.len()).rev() {
            idx[k] = off % self.dims[k];
            off /= self.dims[k];
        }
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: C64) {
        let off = self.offset(idx);
        self.data[off] = v;
    }

    /// Mode-`r` unfolding (`r` is 1-based), cyclic column order.
    pub fn unfold(&self, mode: usize) -> Result<CMat> {
        let p = self.order();
        if mode == 0 || mode > p {
            return Err(Error::Dimension(format!(
                "unfold mode {mode} out of range for order-{p} tensor"
            )));
        }
        let r0 = mode - 1;
        let rows = self.dims[r0];
        let cols = self.data.len() / rows;
        // Modes contributing to the column index, slowest first.
        let seq: Vec<usize> = (r0 + 1..p).chain(0..r0).collect();
        let mut out = CMat::zeros(rows, cols);
        let mut idx = vec![0usize; p];
        for off in 0..self.data.len() {
            self.decode(off, &mut idx);
            let mut col = 0;
            for &m in &seq {
                col = col * self.dims[m] + idx[m];
            }
            out[(idx[r0], col)] = self.data[off];
        }
        Ok(out)
    }

    /// Inverse of [`Self::unfold`]: rebuild a tensor of extents `dims` from
    /// its mode-`r` unfolding.
    pub fn fold(m: &CMat, dims: &[usize], mode: usize) -> Result<ComplexTensor> {
        let p = dims.len();
        if mode == 0 || mode > p {
            return Err(Error::Dimension(format!(
                "fold mode {mode} out of range for order-{p} extents"
            )));
        }
        let r0 = mode - 1;
        let total: usize = dims.iter().product();
        if m.nrows() != dims[r0] || m.nrows() * m.ncols() != total {
            return Err(Error::Dimension(format!(
                "fold: matrix {}x{} incompatible with extents {:?} at mode {}",
                m.nrows(),
                m.ncols(),
                dims,
                mode
            )));
        }
        let seq: Vec<usize> = (r0 + 1..p).chain(0..r0).collect();
        let mut t = ComplexTensor::zeros(dims);
        let mut idx = vec![0usize; p];
        for off in 0..t.data.len() {
            t.decode(off, &mut idx);
            let mut col = 0;
            for &mm in &seq {
                col = col * dims[mm] + idx[mm];
            }
            t.data[off] = m[(idx[r0], col)];
        }
        Ok(t)
    }

    /// n-mode product: multiplies every mode-`r` vector by `u`.
    /// Defined by `unfold(result, r) == u * unfold(self, r)`.
    pub fn n_mode_product(&self, u: &CMat, mode: usize) -> Result<ComplexTensor> {
        let p = self.order();
        if mode == 0 || mode > p {
            return Err(Error::Dimension(format!(
                "n-mode product mode {mode} out of range for order-{p} tensor"
            )));
        }
        if u.ncols() != self.dims[mode - 1] {
            return Err(Error::Dimension(format!(
                "n-mode product: {}x{} factor does not match extent {} of mode {}",
                u.nrows(),
                u.ncols(),
                self.dims[mode - 1],
                mode
            )));
        }
        let unf = self.unfold(mode)?;
        let prod = u * &unf;
        let mut dims = self.dims.clone();
        dims[mode - 1] = u.nrows();
        Self::fold(&prod, &dims, mode)
    }

    pub fn add(&self, other: &ComplexTensor) -> Result<ComplexTensor> {
        if self.dims != other.dims {
            return Err(Error::Dimension("tensor addition with mismatched extents".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(ComplexTensor { dims: self.dims.clone(), data })
    }

    pub fn sub(&self, other: &ComplexTensor) -> Result<ComplexTensor> {
        if self.dims != other.dims {
            return Err(Error::Dimension("tensor subtraction with mismatched extents".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(ComplexTensor { dims: self.dims.clone(), data })
    }

    pub fn scale(&self, s: C64) -> ComplexTensor {
        ComplexTensor { dims: self.dims.clone(), data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// HOSVD factorization: `t = core ×₁ U₁ ×₂ U₂ ... ×_P U_P` (exact when
/// untruncated; best multilinear projection otherwise).
#[derive(Debug, Clone)]
pub struct HosvdFactors {
    pub core: ComplexTensor,
    /// One orthonormal-column factor per mode.
    pub factors: Vec<CMat>,
    /// Full singular-value spectrum of each unfolding (not truncated).
    pub mode_singular_values: Vec<Vec<f64>>,
}

/// Truncated HOSVD: factor `n` holds the dominant `ranks[n]` left singular
/// vectors of the mode-`n` unfolding; the core is the multilinear projection
/// of `t` onto those factors.
pub fn hosvd_truncated(t: &ComplexTensor, ranks: &[usize]) -> Result<HosvdFactors> {
    let p = t.order();
    if ranks.len() != p {
        return Err(Error::Dimension(format!(
            "hosvd: {} ranks given for an order-{} tensor",
            ranks.len(),
            p
        )));
    }
    let mut factors = Vec::with_capacity(p);
    let mut spectra = Vec::with_capacity(p);
    for mode in 1..=p {
        let extent = t.dims()[mode - 1];
        let rank = ranks[mode - 1];
        if rank == 0 || rank > extent {
            return Err(Error::Dimension(format!(
                "hosvd: rank {} invalid for extent {} in mode {}",
                rank, extent, mode
            )));
        }
        let unf = t.unfold(mode)?;
        let svd = unf
            .thin_svd()
            .map_err(|e| Error::IllPosed(format!("mode-{mode} SVD failed: {e:?}")))?;
        let sv: Vec<f64> = (0..svd.S().dim()).map(|i| svd.S()[i].re).collect();
        if rank > sv.len() {
            return Err(Error::Dimension(format!(
                "hosvd: rank {} exceeds unfolding rank bound {} in mode {}",
                rank,
                sv.len(),
                mode
            )));
        }
        let u = svd.U().get(.., 0..rank).to_owned();
        factors.push(u);
        spectra.push(sv);
    }
    let mut core = t.clone();
    for (mode, u) in factors.iter().enumerate() {
        core = core.n_mode_product(&u.adjoint().to_owned(), mode + 1)?;
    }
    Ok(HosvdFactors { core, factors, mode_singular_values: spectra })
}

/// Identity matrix.
pub fn eye(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
}

/// Exchange (flip) matrix: ones on the anti-diagonal.
pub fn exchange_matrix(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| {
        if i + j == n - 1 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
    })
}

/// Commutation matrix `K_{m×n}`: the permutation with `K · vec(Aᵀ) = vec(A)`
/// for every `m×n` matrix `A`.
pub fn commutation_matrix(m: usize, n: usize) -> CMat {
    let mut k = CMat::zeros(m * n, m * n);
    // vec(A) entry (j*m + i) comes from vec(Aᵀ) entry (i*n + j).
    for i in 0..m {
        for j in 0..n {
            k[(j * m + i, i * n + j)] = C64::new(1.0, 0.0);
        }
    }
    k
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    CMat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Khatri-Rao product: column-wise Kronecker product.
pub fn khatri_rao(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "khatri-rao: column counts differ ({} vs {})",
            a.ncols(),
            b.ncols()
        )));
    }
    let (ar, br, c) = (a.nrows(), b.nrows(), a.ncols());
    Ok(CMat::from_fn(ar * br, c, |i, j| a[(i / br, j)] * b[(i % br, j)]))
}

/// Column-major vectorization as a column vector.
pub fn vec_mat(a: &CMat) -> CMat {
    let (r, c) = (a.nrows(), a.ncols());
    CMat::from_fn(r * c, 1, |i, _| a[(i % r, i / r)])
}

/// Inverse of [`vec_mat`].
pub fn unvec(v: &CMat, rows: usize, cols: usize) -> Result<CMat> {
    if v.ncols() != 1 || v.nrows() != rows * cols {
        return Err(Error::Dimension(format!(
            "unvec: {}x{} vector incompatible with {}x{}",
            v.nrows(),
            v.ncols(),
            rows,
            cols
        )));
    }
    Ok(CMat::from_fn(rows, cols, |i, j| v[(j * rows + i, 0)]))
}

/// Frobenius norm of a matrix.
pub fn frob(a: &CMat) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Largest absolute entry difference between two equally sized matrices.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(dims: &[usize], rng: &mut ChaCha8Rng) -> ComplexTensor {
        ComplexTensor::from_fn(dims, |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn random_mat(r: usize, c: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_fn(r, c, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn unfold_fold_round_trip_all_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dims in [vec![4], vec![2, 3], vec![2, 3, 4], vec![2, 3, 2, 3]] {
            let t = random_tensor(&dims, &mut rng);
            for mode in 1..=dims.len() {
                let u = t.unfold(mode).unwrap();
                let back = ComplexTensor::fold(&u, &dims, mode).unwrap();
                assert!(t.sub(&back).unwrap().frob_norm() == 0.0, "round trip mode {mode} of {dims:?}");
            }
        }
    }

    #[test]
    fn unfold_one_way_is_identity_column() {
        let t = ComplexTensor::from_fn(&[3], |i| C64::new(i[0] as f64, 0.0));
        let u = t.unfold(1).unwrap();
        assert_eq!((u.nrows(), u.ncols()), (3, 1));
        for i in 0..3 {
            assert_eq!(u[(i, 0)].re, i as f64);
        }
    }

    #[test]
    fn n_mode_identity_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_tensor(&[2, 3, 4], &mut rng);
        for mode in 1..=3 {
            let r = t.n_mode_product(&eye(t.dims()[mode - 1]), mode).unwrap();
            assert!(t.sub(&r).unwrap().frob_norm() < 1e-14);
        }
    }

    #[test]
    fn n_mode_composition() {
        // (t ×ᵣ U) ×ᵣ V == t ×ᵣ (V·U)
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_tensor(&[2, 2, 2], &mut rng);
        let u = random_mat(3, 2, &mut rng);
        let v = random_mat(2, 3, &mut rng);
        for mode in 1..=3 {
            let lhs = t.n_mode_product(&u, mode).unwrap().n_mode_product(&v, mode).unwrap();
            let rhs = t.n_mode_product(&(&v * &u), mode).unwrap();
            assert!(lhs.sub(&rhs).unwrap().frob_norm() < 1e-12);
        }
    }

    #[test]
    fn multi_mode_product_matches_kronecker_formula() {
        // unfold(t ×₁U₁ ×₂U₂ ×₃U₃, r) == U_r · unfold(t,r) · (U_{r+1} ⊗ ... ⊗ U_{r-1})ᵀ
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random_tensor(&[2, 3, 2], &mut rng);
        let us = [
            random_mat(3, 2, &mut rng),
            random_mat(2, 3, &mut rng),
            random_mat(4, 2, &mut rng),
        ];
        let mut prod = t.clone();
        for (m, u) in us.iter().enumerate() {
            prod = prod.n_mode_product(u, m + 1).unwrap();
        }
        for r in 0..3 {
            let lhs = prod.unfold(r + 1).unwrap();
            // cyclic order of the remaining factors
            let others: Vec<usize> = (r + 1..3).chain(0..r).collect();
            let mut k = us[others[0]].clone();
            for &o in &others[1..] {
                k = kron(&k, &us[o]);
            }
            let rhs = &us[r] * &t.unfold(r + 1).unwrap() * k.transpose();
            assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
        }
    }

    #[test]
    fn vec_identity() {
        // vec(A·X·B) == (Bᵀ ⊗ A)·vec(X)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_mat(3, 2, &mut rng);
        let x = random_mat(2, 4, &mut rng);
        let b = random_mat(4, 3, &mut rng);
        let lhs = vec_mat(&(&a * &x * &b));
        let rhs = &kron(&b.transpose().to_owned(), &a) * &vec_mat(&x);
        assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn commutation_defining_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_mat(3, 5, &mut rng);
        let k = commutation_matrix(3, 5);
        let lhs = &k * &vec_mat(&a.transpose().to_owned());
        let rhs = vec_mat(&a);
        assert!(max_abs_diff(&lhs, &rhs) < 1e-14);
    }

    #[test]
    fn commutation_kron_swap() {
        // Kᵀ_{P×M} (A ⊗ B) K_{Q×N} == B ⊗ A for A: M×N, B: P×Q
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_mat(2, 3, &mut rng);
        let b = random_mat(2, 2, &mut rng);
        let kl = commutation_matrix(2, 2); // K_{P×M}
        let kr = commutation_matrix(2, 3); // K_{Q×N}
        let lhs = kl.transpose() * kron(&a, &b) * &kr;
        let rhs = kron(&b, &a);
        assert!(max_abs_diff(&lhs.to_owned(), &rhs) < 1e-14);
    }

    #[test]
    fn khatri_rao_matches_columnwise_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_mat(2, 2, &mut rng);
        let b = random_mat(3, 2, &mut rng);
        let kr = khatri_rao(&a, &b).unwrap();
        for j in 0..2 {
            for ia in 0..2 {
                for ib in 0..3 {
                    let got = kr[(ia * 3 + ib, j)];
                    let want = a[(ia, j)] * b[(ib, j)];
                    assert!((got - want).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn hosvd_rank1_exact() {
        let a = CMat::from_fn(3, 1, |i, _| C64::new(1.0 + i as f64, 0.5));
        let b = CMat::from_fn(4, 1, |i, _| C64::new(0.3 * i as f64 - 1.0, -0.2));
        let t = ComplexTensor::from_fn(&[3, 4], |idx| a[(idx[0], 0)] * b[(idx[1], 0)]);
        let h = hosvd_truncated(&t, &[1, 1]).unwrap();
        let mut rec = h.core.clone();
        for (m, u) in h.factors.iter().enumerate() {
            rec = rec.n_mode_product(u, m + 1).unwrap();
        }
        assert!(rec.sub(&t).unwrap().frob_norm() / t.frob_norm() < 1e-12);
    }

    #[test]
    fn hosvd_orthonormal_factors_and_all_orthogonal_core() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = random_tensor(&[3, 4, 5], &mut rng);
        let h = hosvd_truncated(&t, &[3, 4, 5]).unwrap();
        for u in &h.factors {
            let g = u.adjoint() * u;
            assert!(max_abs_diff(&g.to_owned(), &eye(u.ncols())) < 1e-10);
        }
        // all-orthogonality: distinct same-mode slices of the core are orthogonal,
        // equivalently the rows of each core unfolding are mutually orthogonal
        for mode in 1..=3 {
            let unf = h.core.unfold(mode).unwrap();
            let g = &unf * unf.adjoint();
            for i in 0..g.nrows() {
                for j in 0..g.ncols() {
                    if i != j {
                        assert!(g[(i, j)].norm() < 1e-10, "mode {mode} core slices not orthogonal");
                    }
                }
            }
        }
        // untruncated reconstruction is exact
        let mut rec = h.core.clone();
        for (m, u) in h.factors.iter().enumerate() {
            rec = rec.n_mode_product(u, m + 1).unwrap();
        }
        assert!(rec.sub(&t).unwrap().frob_norm() / t.frob_norm() < 1e-10);
    }

    #[test]
    fn hosvd_rejects_bad_rank() {
        let t = ComplexTensor::zeros(&[2, 2]);
        assert!(hosvd_truncated(&t, &[3, 1]).is_err());
        assert!(t.unfold(3).is_err());
    }
}

//! Signal subspace estimation.
//!
//! Matrix path: truncated SVD of the `M × N` observation. Tensor path: the
//! HOSVD-based estimate, computed through the identity
//! `combined = (T̂₁ ⊗ ... ⊗ T̂_R) · Ûs` where `T̂_r` projects onto the
//! dominant mode-`r` subspace — numerically equivalent to the core-tensor
//! construction but cheaper and better conditioned. Forward-backward
//! averaging doubles the snapshots with a conjugated, doubly flipped copy.

use crate::tensor::{eye, exchange_matrix, kron, ComplexTensor};
use crate::{C64, CMat, Error, Result};
use faer::linalg::solvers::Solve;

/// Partitioned SVD of an observation matrix.
#[derive(Debug, Clone)]
pub struct SubspaceSet {
    /// Dominant left singular vectors, `M × d`.
    pub us: CMat,
    /// Orthogonal complement, `M × (M−d)`.
    pub un: CMat,
    /// Dominant right singular vectors, `N × d`.
    pub vs: CMat,
    /// Orthogonal complement, `N × (N−d)`.
    pub vn: CMat,
    /// Dominant singular values, descending.
    pub sigma_s: Vec<f64>,
}

impl SubspaceSet {
    /// `Un · Unᴴ`, the projector onto the noise subspace.
    pub fn noise_projector(&self) -> CMat {
        (&self.un * self.un.adjoint()).to_owned()
    }
}

/// Partition the full SVD of `x` at index `d`.
pub fn svd_subspace(x: &CMat, d: usize) -> Result<SubspaceSet> {
    let (m, n) = (x.nrows(), x.ncols());
    if d == 0 || d > m.min(n) {
        return Err(Error::Dimension(format!(
            "subspace dimension {d} invalid for a {m}x{n} matrix"
        )));
    }
    let svd = x
        .svd()
        .map_err(|e| Error::IllPosed(format!("SVD failed: {e:?}")))?;
    let k = m.min(n);
    let sv: Vec<f64> = (0..k).map(|i| svd.S()[i].re).collect();
    if d < k {
        let gap = sv[d - 1] - sv[d];
        if gap.abs() <= 1e-12 * sv[0].max(1e-300) {
            return Err(Error::DegenerateGap(format!(
                "singular values {} and {} coincide ({:.3e})",
                d,
                d + 1,
                sv[d - 1]
            )));
        }
    }
    if sv[d - 1] <= 0.0 {
        return Err(Error::IllPosed(format!("matrix rank below requested dimension {d}")));
    }
    let u = svd.U();
    let v = svd.V();
    Ok(SubspaceSet {
        us: u.get(.., 0..d).to_owned(),
        un: u.get(.., d..m).to_owned(),
        vs: v.get(.., 0..d).to_owned(),
        vn: v.get(.., d..n).to_owned(),
        sigma_s: sv[..d].to_vec(),
    })
}

/// HOSVD-based subspace estimate.
#[derive(Debug, Clone)]
pub struct TensorSubspaceSet {
    /// Per-spatial-mode SVD partitions of the mode unfoldings, truncated at
    /// `p_r = min(M_r, d)` (or the override).
    pub mode_sets: Vec<SubspaceSet>,
    /// Per-mode projectors `T_r = U_r U_rᴴ` onto the dominant mode subspace.
    pub projections: Vec<CMat>,
    /// The matrix-SVD partition of the matrix view (its `us` is the plain
    /// SVD estimate the projections are applied to).
    pub matrix_set: SubspaceSet,
    /// `M × d` combined estimate `(T₁ ⊗ ... ⊗ T_R) · Us`.
    pub combined: CMat,
}

/// HOSVD subspace with default mode ranks `p_r = min(M_r, d)`.
pub fn hosvd_subspace(x: &ComplexTensor, d: usize) -> Result<TensorSubspaceSet> {
    let r = x.order() - 1;
    let ranks: Vec<usize> = (0..r).map(|i| x.dims()[i].min(d)).collect();
    hosvd_subspace_with_ranks(x, d, &ranks)
}

/// HOSVD subspace with explicit per-mode ranks (mode `r` rank defaults to
/// the r-rank bound `min(M_r, d)`, but the true r-rank is not observable
/// from data, hence the override).
pub fn hosvd_subspace_with_ranks(
    x: &ComplexTensor,
    d: usize,
    ranks: &[usize],
) -> Result<TensorSubspaceSet> {
    let p = x.order();
    if p < 2 {
        return Err(Error::Dimension("observation tensor must have at least 2 modes".into()));
    }
    let r = p - 1;
    if ranks.len() != r {
        return Err(Error::Dimension(format!("{} mode ranks given, expected {}", ranks.len(), r)));
    }
    let mut mode_sets = Vec::with_capacity(r);
    let mut projections = Vec::with_capacity(r);
    for mode in 1..=r {
        let unf = x.unfold(mode)?;
        let set = svd_subspace(&unf, ranks[mode - 1])?;
        projections.push((&set.us * set.us.adjoint()).to_owned());
        mode_sets.push(set);
    }
    let xm = crate::model::last_mode_matrix(x);
    let matrix_set = svd_subspace(&xm, d)?;
    let mut t = projections[0].clone();
    for proj in &projections[1..] {
        t = kron(&t, proj);
    }
    let combined = &t * &matrix_set.us;
    Ok(TensorSubspaceSet { mode_sets, projections, matrix_set, combined })
}

/// Forward-backward averaging: `[X, Π_M X* Π_N]`, `M × 2N`.
pub fn fba_extend(x: &CMat) -> CMat {
    let (m, n) = (x.nrows(), x.ncols());
    let mut z = CMat::zeros(m, 2 * n);
    for j in 0..n {
        for i in 0..m {
            z[(i, j)] = x[(i, j)];
            // Π_M X* Π_N flips both indices and conjugates
            z[(i, n + j)] = x[(m - 1 - i, n - 1 - j)].conj();
        }
    }
    z
}

/// Forward-backward averaging on the tensor: flips every spatial mode, so the
/// matrix view of the result equals [`fba_extend`] of the matrix view.
pub fn fba_extend_tensor(x: &ComplexTensor) -> ComplexTensor {
    let p = x.order();
    let spatial = &x.dims()[..p - 1];
    let n = x.dims()[p - 1];
    let xm = crate::model::last_mode_matrix(x);
    let z = fba_extend(&xm);
    crate::model::matrix_to_tensor(&z, spatial, 2 * n).expect("shapes consistent")
}

/// Per-column phase alignment of an estimated basis against a reference:
/// `Δuₙ = ûₙ·(ûₙᴴuₙ)/|ûₙᴴuₙ| − uₙ`.
pub fn align_subspace_error(us_hat: &CMat, us: &CMat) -> Result<CMat> {
    if us_hat.nrows() != us.nrows() || us_hat.ncols() != us.ncols() {
        return Err(Error::Dimension("aligned bases must have equal shapes".into()));
    }
    let (m, d) = (us.nrows(), us.ncols());
    let mut delta = CMat::zeros(m, d);
    for k in 0..d {
        let mut ip = C64::new(0.0, 0.0);
        for i in 0..m {
            ip += us_hat[(i, k)].conj() * us[(i, k)];
        }
        let mag = ip.norm();
        if mag < 1e-12 {
            return Err(Error::AlignmentUndefined { column: k });
        }
        let phase = ip / mag;
        for i in 0..m {
            delta[(i, k)] = us_hat[(i, k)] * phase - us[(i, k)];
        }
    }
    Ok(delta)
}

/// Centro-Hermitian test: `Π_M · Z* · Π_{2N} == Z` within `tol` (absolute,
/// scaled by the largest entry).
pub fn is_centro_hermitian(z: &CMat, tol: f64) -> bool {
    let (m, n) = (z.nrows(), z.ncols());
    let mut scale = 0.0f64;
    for j in 0..n {
        for i in 0..m {
            scale = scale.max(z[(i, j)].norm());
        }
    }
    for j in 0..n {
        for i in 0..m {
            let flipped = z[(m - 1 - i, n - 1 - j)].conj();
            if (z[(i, j)] - flipped).norm() > tol * scale.max(1.0) {
                return false;
            }
        }
    }
    true
}

/// Eq.-style direct construction of the HOSVD subspace through the truncated
/// core (`core ×₁U₁…×_R U_R ×_{R+1} Σ̂s⁻¹`, then matrix view). Exists as the
/// cross-check twin of the projection identity used by [`hosvd_subspace`];
/// the two agree to working precision.
pub fn hosvd_subspace_via_core(x: &ComplexTensor, d: usize) -> Result<CMat> {
    let p = x.order();
    let r = p - 1;
    let mut ranks: Vec<usize> = (0..r).map(|i| x.dims()[i].min(d)).collect();
    ranks.push(d);
    let h = crate::tensor::hosvd_truncated(x, &ranks)?;
    // rebuild spatial modes, then scale the snapshot mode by Σs⁻¹
    let mut u = h.core.clone();
    for (mode, f) in h.factors.iter().take(r).enumerate() {
        u = u.n_mode_product(f, mode + 1)?;
    }
    let sigma_inv = CMat::from_fn(d, d, |i, j| {
        if i == j {
            C64::new(1.0 / h.mode_singular_values[r][i], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    u = u.n_mode_product(&sigma_inv, p)?;
    // the snapshot-mode core factor and Σ̂s⁻¹ jointly reproduce Ûs with its
    // phases intact, so the matrix view is directly comparable
    Ok(crate::model::last_mode_matrix(&u))
}

/// Solve `A·X = B` in the least-squares sense through the thin SVD
/// pseudo-inverse; errors when `A` is rank deficient.
pub fn pinv_solve(a: &CMat, b: &CMat) -> Result<CMat> {
    let svd = a
        .thin_svd()
        .map_err(|e| Error::IllPosed(format!("SVD failed in pseudo-inverse: {e:?}")))?;
    let k = svd.S().dim();
    let smax = svd.S()[0].re;
    let smin = svd.S()[k - 1].re;
    if smin <= 1e-10 * smax.max(1e-300) {
        return Err(Error::IllPosed(format!(
            "rank-deficient least-squares system (sigma_min/sigma_max = {:.3e})",
            smin / smax
        )));
    }
    let ub = svd.U().adjoint() * b;
    let mut scaled = ub.to_owned();
    for i in 0..k {
        let inv = C64::new(1.0 / svd.S()[i].re, 0.0);
        for j in 0..scaled.ncols() {
            scaled[(i, j)] *= inv;
        }
    }
    Ok(svd.V() * &scaled)
}

/// Inverse of a square matrix via partial-pivoting LU.
pub fn inverse(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension("inverse of a non-square matrix".into()));
    }
    let lu = a.partial_piv_lu();
    Ok(lu.solve(eye(n)))
}

/// Exchange matrix Π of the given size (re-export for FBA callers).
pub fn flip(n: usize) -> CMat {
    exchange_matrix(n)
}

//! ESPRIT-type estimators.
//!
//! All variants share the same skeleton: obtain an `M × d` signal subspace
//! basis, solve the shift-invariance equation `J̃₁·Us·Ψ = J̃₂·Us` per spatial
//! mode in the least-squares sense, and read the spatial frequencies from the
//! eigenvalues of `Ψ`. They differ only in where the basis comes from:
//!
//! - standard: truncated SVD of the matrix view;
//! - unitary: truncated SVD after forward-backward averaging (the subsequent
//!   real-valued transformation is deliberately skipped — it has no effect on
//!   the asymptotic performance, so the complex FBA subspace is equivalent);
//! - tensor variants: HOSVD-projected subspace of the (possibly
//!   FBA-extended) tensor;
//! - sls: standard subspace refined by a single structured-least-squares
//!   iteration that corrects `Ψ` and the subspace jointly (1-D only).
//!
//! Cross-mode pairing diagonalizes every mode's `Ψ^(r)` with the mode-1
//! eigenvectors; a large off-diagonal residual raises a warning flag.

use crate::model::{ObservationSet, Scenario};
use crate::subspace::{fba_extend, fba_extend_tensor, hosvd_subspace, pinv_solve, svd_subspace};
use crate::tensor::{eye, kron, unvec, vec_mat};
use crate::{C64, CMat, Error, Result};
use faer::linalg::solvers::Solve;
use serde::{Deserialize, Serialize};

/// Estimator selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Standard,
    Unitary,
    StandardTensor,
    UnitaryTensor,
    /// Structured least squares refinement of the 1-D standard estimator
    /// (falls back to the FBA subspace when `N < d` makes the plain SVD
    /// infeasible).
    Sls,
}

impl Variant {
    pub fn is_tensor(self) -> bool {
        matches!(self, Variant::StandardTensor | Variant::UnitaryTensor)
    }

    pub fn is_fba(self) -> bool {
        matches!(self, Variant::Unitary | Variant::UnitaryTensor)
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::Unitary => "unitary",
            Variant::StandardTensor => "standard_tensor",
            Variant::UnitaryTensor => "unitary_tensor",
            Variant::Sls => "sls",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Variant::Standard),
            "unitary" => Ok(Variant::Unitary),
            "standard_tensor" => Ok(Variant::StandardTensor),
            "unitary_tensor" => Ok(Variant::UnitaryTensor),
            "sls" => Ok(Variant::Sls),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

/// Subarray selection matrices for one mode, plain and effective R-D.
#[derive(Debug, Clone)]
pub struct SelectionPair {
    /// `(M_r − 1) × M_r`, keeps the first `M_r − 1` sensors.
    pub j1: CMat,
    /// `(M_r − 1) × M_r`, keeps the last `M_r − 1` sensors.
    pub j2: CMat,
    /// `I ⊗ J₁ ⊗ I` acting on the full `M`-element grid.
    pub j1_eff: CMat,
    /// `I ⊗ J₂ ⊗ I`.
    pub j2_eff: CMat,
}

/// Maximum-overlap selection matrices for spatial mode `mode` (0-based) of a
/// grid with extents `m`.
pub fn selection_matrices(m: &[usize], mode: usize) -> SelectionPair {
    assert!(mode < m.len(), "mode out of range");
    let mr = m[mode];
    assert!(mr >= 2, "need at least two sensors for a shift invariance");
    let j1 = CMat::from_fn(mr - 1, mr, |i, j| {
        if j == i { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
    });
    let j2 = CMat::from_fn(mr - 1, mr, |i, j| {
        if j == i + 1 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
    });
    let before: usize = m[..mode].iter().product();
    let after: usize = m[mode + 1..].iter().product();
    let j1_eff = kron(&kron(&eye(before), &j1), &eye(after));
    let j2_eff = kron(&kron(&eye(before), &j2), &eye(after));
    SelectionPair { j1, j2, j1_eff, j2_eff }
}

/// Solution of one shift-invariance equation plus its eigenstructure.
#[derive(Debug, Clone)]
pub struct EigenStructure {
    /// `d × d` solution `Ψ`.
    pub psi: CMat,
    pub eigenvalues: Vec<C64>,
    /// Right eigenvectors (columns).
    pub q: CMat,
    /// `Q⁻¹`; its rows are the left eigenvector rows `p_kᵀ`.
    pub p: CMat,
    /// Set when the eigenvector matrix is so ill conditioned that the
    /// eigenstructure (and hence pairing) is unreliable.
    pub conditioning_warning: bool,
}

/// Eigendecomposition `Ψ = Q·diag(λ)·Q⁻¹` with a conditioning check.
pub fn eigen_structure(psi: &CMat) -> Result<EigenStructure> {
    let d = psi.nrows();
    if d != psi.ncols() {
        return Err(Error::Dimension("eigenstructure of a non-square matrix".into()));
    }
    let evd = psi
        .eigen()
        .map_err(|e| Error::IllPosed(format!("eigendecomposition failed: {e:?}")))?;
    let q = evd.U().to_owned();
    let eigenvalues: Vec<C64> = (0..d).map(|i| evd.S()[i]).collect();
    let svd = q
        .thin_svd()
        .map_err(|e| Error::IllPosed(format!("eigenvector SVD failed: {e:?}")))?;
    let smax = svd.S()[0].re;
    let smin = svd.S()[d - 1].re;
    if smin <= 0.0 {
        return Err(Error::IllPosed("defective eigenvector matrix".into()));
    }
    let conditioning_warning = smax / smin > 1e8;
    let p = q.partial_piv_lu().solve(eye(d));
    Ok(EigenStructure { psi: psi.clone(), eigenvalues, q, p, conditioning_warning })
}

/// Least-squares solution of `J₁·Us·Ψ = J₂·Us` with eigenstructure.
pub fn ls_solve_invariance(us: &CMat, j1: &CMat, j2: &CMat) -> Result<EigenStructure> {
    let psi = pinv_solve(&(j1 * us), &(j2 * us))?;
    eigen_structure(&psi)
}

/// Frequency estimates with pairing metadata.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    /// `mu_hat[k][r]`: frequency of source `k` in mode `r`, consistently
    /// paired across modes.
    pub mu_hat: Vec<Vec<f64>>,
    /// Mode-1 eigenstructure (pairing reference) followed by the remaining
    /// modes' invariance solutions.
    pub modes: Vec<EigenStructure>,
    pub variant: Variant,
    /// Largest off-diagonal residual of `Q₁⁻¹·Ψ^(r)·Q₁` relative to `‖Ψ^(r)‖`.
    pub pairing_residual: f64,
    /// Residual exceeded a tenth of the scale: pairing may be unreliable.
    pub pairing_warning: bool,
}

/// Pair the modes of a subspace basis: diagonalize every `Ψ^(r)` with the
/// mode-1 eigenvectors and read each mode's frequencies off the diagonal.
pub fn pair_modes(us: &CMat, m: &[usize]) -> Result<EstimateReport> {
    let r_modes = m.len();
    let mut modes = Vec::with_capacity(r_modes);
    for mode in 0..r_modes {
        let sel = selection_matrices(m, mode);
        modes.push(ls_solve_invariance(us, &sel.j1_eff, &sel.j2_eff)?);
    }
    let d = modes[0].psi.nrows();
    let (q1, p1) = (modes[0].q.clone(), modes[0].p.clone());
    let mut mu_hat = vec![vec![0.0; r_modes]; d];
    let mut residual = 0.0f64;
    for (mode, es) in modes.iter().enumerate() {
        let diag = (&p1 * &es.psi * &q1).to_owned();
        let mut scale = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                scale += es.psi[(i, j)].norm_sqr();
            }
        }
        let scale = scale.sqrt().max(1e-300);
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    residual = residual.max(diag[(i, j)].norm() / scale);
                }
            }
        }
        for k in 0..d {
            mu_hat[k][mode] = diag[(k, k)].arg();
        }
    }
    Ok(EstimateReport {
        mu_hat,
        modes,
        variant: Variant::Standard,
        pairing_residual: residual,
        pairing_warning: residual > 0.1,
    })
}

/// Run one estimator on an observation.
pub fn estimate(obs: &ObservationSet, s: &Scenario, variant: Variant) -> Result<EstimateReport> {
    s.validate()?;
    let d = s.d;
    let us = match variant {
        Variant::Standard => svd_subspace(&obs.x_matrix(), d)?.us,
        Variant::Unitary => svd_subspace(&fba_extend(&obs.x_matrix()), d)?.us,
        Variant::StandardTensor => hosvd_subspace(&obs.x, d)?.combined,
        Variant::UnitaryTensor => hosvd_subspace(&fba_extend_tensor(&obs.x), d)?.combined,
        Variant::Sls => {
            if s.r() != 1 {
                return Err(Error::UnsupportedVariant(
                    "structured least squares is implemented for one spatial mode only".into(),
                ));
            }
            let x = obs.x_matrix();
            if d <= x.nrows().min(x.ncols()) {
                svd_subspace(&x, d)?.us
            } else {
                svd_subspace(&fba_extend(&x), d)?.us
            }
        }
    };
    let mut report = if variant == Variant::Sls {
        let sel = selection_matrices(&s.m, 0);
        let ls = ls_solve_invariance(&us, &sel.j1, &sel.j2)?;
        let refined = sls_refine(&us, &sel.j1, &sel.j2, &ls)?;
        let mu_hat = refined.eigenvalues.iter().map(|l| vec![l.arg()]).collect();
        EstimateReport {
            mu_hat,
            modes: vec![refined],
            variant,
            pairing_residual: 0.0,
            pairing_warning: false,
        }
    } else {
        pair_modes(&us, &s.m)?
    };
    report.variant = variant;
    Ok(report)
}

/// One structured-least-squares iteration: linearize the invariance residual
/// jointly in `ΔΨ` and the subspace perturbation and take the minimum-norm
/// correction (no regularization). Returns the eigenstructure of the
/// refined `Ψ`.
pub fn sls_refine(
    us_hat: &CMat,
    j1: &CMat,
    j2: &CMat,
    psi_ls: &EigenStructure,
) -> Result<EigenStructure> {
    let d = psi_ls.psi.nrows();
    let msel = j1.nrows();
    let m = j1.ncols();
    if us_hat.ncols() != d || us_hat.nrows() != m {
        return Err(Error::Dimension("subspace and selection shapes disagree".into()));
    }
    let j1u = (j1 * us_hat).to_owned();
    let j2u = (j2 * us_hat).to_owned();
    let resid = (&j1u * &psi_ls.psi - &j2u).to_owned();
    let r_ls = vec_mat(&resid);
    // F = [ I_d ⊗ (J₁Ûs) , (Ψᵀ ⊗ J₁) − (I_d ⊗ J₂) ]
    let id = eye(d);
    let left = kron(&id, &j1u);
    let right = (kron(&psi_ls.psi.transpose().to_owned(), j1) - kron(&id, j2)).to_owned();
    let rows = msel * d;
    let cols = d * d + d * m;
    let mut f = CMat::zeros(rows, cols);
    for jc in 0..d * d {
        for ir in 0..rows {
            f[(ir, jc)] = left[(ir, jc)];
        }
    }
    for jc in 0..d * m {
        for ir in 0..rows {
            f[(ir, d * d + jc)] = right[(ir, jc)];
        }
    }
    // minimum-norm solution of F·δ = −r through the right pseudo-inverse
    let ffh = (&f * f.adjoint()).to_owned();
    let svd = ffh
        .thin_svd()
        .map_err(|e| Error::IllPosed(format!("SVD failed in SLS normal matrix: {e:?}")))?;
    let smax = svd.S()[0].re;
    let smin = svd.S()[rows - 1].re;
    if smin <= 1e-12 * smax.max(1e-300) {
        return Err(Error::IllPosed("degenerate geometry: SLS normal matrix is singular".into()));
    }
    let y = ffh.partial_piv_lu().solve(&r_ls);
    let delta = (f.adjoint() * &y).to_owned();
    let mut dpsi_vec = CMat::zeros(d * d, 1);
    for i in 0..d * d {
        dpsi_vec[(i, 0)] = -delta[(i, 0)];
    }
    let dpsi = unvec(&dpsi_vec, d, d)?;
    eigen_structure(&(&psi_ls.psi + &dpsi).to_owned())
}

/// Principal-branch wrap of an angle difference to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut v = a % two_pi;
    if v > std::f64::consts::PI {
        v -= two_pi;
    } else if v <= -std::f64::consts::PI {
        v += two_pi;
    }
    v
}

/// Sum of squared frequency errors under the best source-to-source
/// assignment (all `d!` permutations; `d ≤ 8` keeps this cheap).
pub fn squared_error_best_permutation(mu_hat: &[Vec<f64>], mu: &[Vec<f64>]) -> f64 {
    let d = mu.len();
    debug_assert_eq!(mu_hat.len(), d);
    let mut perm: Vec<usize> = (0..d).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let mut acc = 0.0;
        for (k, &pk) in p.iter().enumerate() {
            for r in 0..mu[k].len() {
                let e = wrap_angle(mu_hat[pk][r] - mu[k][r]);
                acc += e * e;
            }
        }
        if acc < best {
            best = acc;
        }
    });
    best
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

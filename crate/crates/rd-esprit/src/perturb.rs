//! First-order perturbation expansions of the subspace and frequency errors.
//!
//! Everything here is explicit in a concrete noise realization `N` and makes
//! no distributional assumptions:
//!
//! - `svd_expansion`: `ΔUs = Un·Γn + Us·Γs` for a perturbed SVD, with
//!   `Γn = Unᴴ·N·Vs·Σs⁻¹` and the in-span part `Γs` weighted by inverse
//!   squared singular-value gaps;
//! - `hosvd_expansion`: the HOSVD-based subspace error — the projected SVD
//!   term plus one correction per spatial mode built from that mode's
//!   unfolding of the noise;
//! - `ExactModel::dmu_first_order`: the induced frequency error
//!   `Δμ_k^(r) = Im{p_kᵀ(J̃₁Us)⁺[J̃₂/λ_k − J̃₁]·ΔU·q_k}` per estimator
//!   variant, where the eigenvector matrix `Q` is chosen so the sources come
//!   out in scenario order (`Us·Q = A` makes `P·Ψ^(r)·Q` exactly diagonal
//!   with the true phase factors).
//!
//! The in-span term `Γs` never influences the frequency error (the bracket
//! annihilates anything in the column space of `Us`), so the frequency paths
//! use only the `Un·Γn` part.

use crate::esprit::{selection_matrices, SelectionPair, Variant};
use crate::model::{
    last_mode_matrix, matrix_to_tensor, noise_free, steering_matrix, Scenario,
};
use crate::subspace::{
    fba_extend, fba_extend_tensor, hosvd_subspace, inverse, pinv_solve, svd_subspace,
    SubspaceSet, TensorSubspaceSet,
};
use crate::tensor::{eye, kron, ComplexTensor};
use crate::{C64, CMat, Error, RMat, Result};

/// First-order SVD subspace error decomposition.
#[derive(Debug, Clone)]
pub struct FirstOrderSubspaceError {
    /// `Un·Γn + Us·Γs` (or just the first term when `Γs` was not requested).
    pub delta_us: CMat,
    /// Out-of-span coefficient `Γn = Unᴴ·N·Vs·Σs⁻¹`, `(M−d) × d`.
    pub gamma_n: CMat,
    /// In-span coefficient (skew-Hermitian), `d × d`.
    pub gamma_s: Option<CMat>,
    /// Gap weights `D_{k,ℓ} = 1/(σ_ℓ² − σ_k²)`, zero diagonal.
    pub d_matrix: Option<RMat>,
}

/// First-order expansion of the dominant left singular vectors of `X₀ + N`
/// around the partitioned SVD `sub` of `X₀`.
pub fn svd_expansion(
    sub: &SubspaceSet,
    n: &CMat,
    include_in_span: bool,
) -> Result<FirstOrderSubspaceError> {
    let d = sub.us.ncols();
    if n.nrows() != sub.us.nrows() || n.ncols() != sub.vs.nrows() {
        return Err(Error::Dimension("noise shape does not match the subspace set".into()));
    }
    let nvs = (n * &sub.vs).to_owned();
    let mut gamma_n = (sub.un.adjoint() * &nvs).to_owned();
    for j in 0..d {
        let inv = 1.0 / sub.sigma_s[j];
        for i in 0..gamma_n.nrows() {
            gamma_n[(i, j)] *= inv;
        }
    }
    let mut delta_us = (&sub.un * &gamma_n).to_owned();
    let (gamma_s, d_matrix) = if include_in_span {
        let mut dmat = RMat::zeros(d, d);
        for k in 0..d {
            for l in 0..d {
                if k != l {
                    let gap = sub.sigma_s[l] * sub.sigma_s[l] - sub.sigma_s[k] * sub.sigma_s[k];
                    if gap.abs() <= 1e-12 * sub.sigma_s[0] * sub.sigma_s[0] {
                        return Err(Error::DegenerateGap(format!(
                            "signal singular values {k} and {l} coincide; in-span \
                             expansion undefined"
                        )));
                    }
                    dmat[(k, l)] = 1.0 / gap;
                }
            }
        }
        let a = (sub.us.adjoint() * &nvs).to_owned();
        let mut h = CMat::zeros(d, d);
        for k in 0..d {
            for l in 0..d {
                // Usᴴ·N·Vs·Σs + Σs·Vsᴴ·Nᴴ·Us, written entrywise
                h[(k, l)] = a[(k, l)] * sub.sigma_s[l] + a[(l, k)].conj() * sub.sigma_s[k];
            }
        }
        let mut gs = CMat::zeros(d, d);
        for k in 0..d {
            for l in 0..d {
                gs[(k, l)] = h[(k, l)] * dmat[(k, l)];
            }
        }
        delta_us = (&delta_us + &sub.us * &gs).to_owned();
        (Some(gs), Some(dmat))
    } else {
        (None, None)
    };
    Ok(FirstOrderSubspaceError { delta_us, gamma_n, gamma_s, d_matrix })
}

/// First-order error of the dominant mode-`r` left singular vectors:
/// `ΔU_r = U_r^[n]·U_r^[n]ᴴ·N_(r)·V_r^[s]·Σ_r^[s]⁻¹` (the in-span part
/// cancels because the mode subspaces only enter through projectors).
pub fn mode_expansion(mode_set: &SubspaceSet, n_unf: &CMat) -> Result<CMat> {
    let err = svd_expansion(mode_set, n_unf, false)?;
    Ok(err.delta_us)
}

/// First-order error of the HOSVD-based subspace estimate for a noise
/// tensor `noise` with the same layout as the observation:
/// the projected SVD error plus one mode-subspace correction per spatial
/// dimension.
pub fn hosvd_expansion(ts: &TensorSubspaceSet, noise: &ComplexTensor) -> Result<CMat> {
    let r = ts.projections.len();
    let n_mat = last_mode_matrix(noise);
    let svd_err = svd_expansion(&ts.matrix_set, &n_mat, false)?.delta_us;
    let mut t_all = ts.projections[0].clone();
    for proj in &ts.projections[1..] {
        t_all = kron(&t_all, proj);
    }
    let mut total = (&t_all * &svd_err).to_owned();
    for mode in 0..r {
        let set = &ts.mode_sets[mode];
        if set.un.ncols() == 0 {
            continue; // mode rank equals the mode size: projector is exact
        }
        let n_unf = noise.unfold(mode + 1)?;
        let du = mode_expansion(set, &n_unf)?;
        let du_uh = (&du * set.us.adjoint()).to_owned();
        let mut factor: Option<CMat> = None;
        for j in 0..r {
            let blk = if j == mode { &du_uh } else { &ts.projections[j] };
            factor = Some(match factor {
                None => blk.clone(),
                Some(f) => kron(&f, blk),
            });
        }
        total = (&total + factor.unwrap() * &ts.matrix_set.us).to_owned();
    }
    Ok(total)
}

/// Noise-free reference quantities for the first-order analysis of one
/// scenario/variant pair.
#[derive(Debug, Clone)]
pub struct ExactModel {
    pub scenario: Scenario,
    pub variant: Variant,
    /// Noise-free symbol matrix the model was linearized around.
    pub symbols: CMat,
    /// Partitioned SVD of the (FBA-extended, for unitary variants)
    /// noise-free observation matrix.
    pub subspace: SubspaceSet,
    /// HOSVD partition for the tensor variants.
    pub tensor_subspace: Option<TensorSubspaceSet>,
    /// Per-mode selection matrices.
    pub selections: Vec<SelectionPair>,
    /// Eigenvector matrix with `Us·Q = A`: sources in scenario order.
    pub q: CMat,
    /// `Q⁻¹`.
    pub p: CMat,
    /// Exact invariance solutions `Ψ^(r)`.
    pub psi: Vec<CMat>,
    /// `p_kᵀ·(J̃₁^(r)·Us)⁺·[J̃₂^(r)/λ_k^(r) − J̃₁^(r)]` stacked as rows, per mode.
    row_factors: Vec<CMat>,
    /// SLS-corrected row vectors `r_{k,SLS}ᵀ` (length `d·M` each), 1-D only.
    sls_rows: Option<CMat>,
}

impl ExactModel {
    /// Linearize `variant` around the noise-free observation generated by
    /// `symbols`.
    pub fn new(s: &Scenario, symbols: &CMat, variant: Variant) -> Result<Self> {
        s.validate()?;
        if variant == Variant::Sls && s.r() != 1 {
            return Err(Error::UnsupportedVariant(
                "structured least squares is one-dimensional only".into(),
            ));
        }
        let obs0 = noise_free(s, symbols)?;
        let x0 = obs0.x0_matrix();
        let subspace = match variant {
            Variant::Standard | Variant::StandardTensor => svd_subspace(&x0, s.d)?,
            Variant::Unitary | Variant::UnitaryTensor => svd_subspace(&fba_extend(&x0), s.d)?,
            Variant::Sls => {
                if s.d <= x0.nrows().min(x0.ncols()) {
                    svd_subspace(&x0, s.d)?
                } else {
                    svd_subspace(&fba_extend(&x0), s.d)?
                }
            }
        };
        let tensor_subspace = if variant.is_tensor() {
            let t0 = if variant.is_fba() { fba_extend_tensor(&obs0.x0) } else { obs0.x0.clone() };
            Some(hosvd_subspace(&t0, s.d)?)
        } else {
            None
        };
        let a = steering_matrix(s);
        // Us·Q = A fixes the eigenvector scaling and orders the sources.
        let q = pinv_solve(&subspace.us, &a)?;
        let p = inverse(&q)?;
        let r_modes = s.r();
        let selections: Vec<SelectionPair> =
            (0..r_modes).map(|mode| selection_matrices(&s.m, mode)).collect();
        let mut psi = Vec::with_capacity(r_modes);
        let mut row_factors = Vec::with_capacity(r_modes);
        for (mode, sel) in selections.iter().enumerate() {
            let j1u = (&sel.j1_eff * &subspace.us).to_owned();
            psi.push(pinv_solve(&j1u, &(&sel.j2_eff * &subspace.us))?);
            let pinv = pinv_solve(&j1u, &eye(j1u.nrows()))?;
            let mut rows = CMat::zeros(s.d, subspace.us.nrows());
            for k in 0..s.d {
                let lam_inv = C64::from_polar(1.0, -s.mu[k][mode]);
                // p_kᵀ·(J̃₁Us)⁺·[J̃₂/λ_k − J̃₁]
                let pk_pinv = {
                    let mut v = CMat::zeros(1, pinv.ncols());
                    for c in 0..pinv.ncols() {
                        let mut acc = C64::new(0.0, 0.0);
                        for i in 0..s.d {
                            acc += p[(k, i)] * pinv[(i, c)];
                        }
                        v[(0, c)] = acc;
                    }
                    v
                };
                let bracket =
                    (CMat::from_fn(sel.j2_eff.nrows(), sel.j2_eff.ncols(), |i, j| {
                        sel.j2_eff[(i, j)] * lam_inv
                    }) - &sel.j1_eff)
                        .to_owned();
                let row = (&pk_pinv * &bracket).to_owned();
                for c in 0..row.ncols() {
                    rows[(k, c)] = row[(0, c)];
                }
            }
            row_factors.push(rows);
        }
        let sls_rows = if variant == Variant::Sls {
            Some(build_sls_rows(s, &subspace, &selections[0], &psi[0], &q, &p, &row_factors[0])?)
        } else {
            None
        };
        Ok(ExactModel {
            scenario: s.clone(),
            variant,
            symbols: symbols.clone(),
            subspace,
            tensor_subspace,
            selections,
            q,
            p,
            psi,
            row_factors,
            sls_rows,
        })
    }

    /// Extend a raw `M × N` noise matrix the same way the variant extends the
    /// observation (FBA doubling for the unitary variants).
    pub fn effective_noise(&self, n: &CMat) -> CMat {
        let needs_fba = self.variant.is_fba()
            || (self.variant == Variant::Sls
                && self.subspace.vs.nrows() != self.scenario.n_snapshots);
        if needs_fba { fba_extend(n) } else { n.clone() }
    }

    /// First-order subspace error (out-of-span part only) for a raw noise
    /// matrix, respecting the variant's preprocessing and subspace type.
    pub fn delta_us(&self, n: &CMat) -> Result<CMat> {
        let n_eff = self.effective_noise(n);
        match &self.tensor_subspace {
            Some(ts) => {
                let spatial = self.scenario.m.clone();
                let n_ten = matrix_to_tensor(&n_eff, &spatial, n_eff.ncols())?;
                hosvd_expansion(ts, &n_ten)
            }
            None => Ok(svd_expansion(&self.subspace, &n_eff, false)?.delta_us),
        }
    }

    /// First-order frequency errors `Δμ[k][r]` induced by a raw `M × N`
    /// noise matrix, sources in scenario order.
    pub fn dmu_first_order(&self, n: &CMat) -> Result<Vec<Vec<f64>>> {
        let du = self.delta_us(n)?;
        let d = self.scenario.d;
        if self.variant == Variant::Sls {
            let rows = self.sls_rows.as_ref().expect("constructed for SLS");
            // Δμ_k = Im{r_kᵀ·vec(ΔUs)}; vec is column-major over the M × d error
            let m = du.nrows();
            let mut out = vec![vec![0.0; 1]; d];
            for k in 0..d {
                let mut acc = C64::new(0.0, 0.0);
                for c in 0..d {
                    for i in 0..m {
                        acc += rows[(k, c * m + i)] * du[(i, c)];
                    }
                }
                out[k][0] = acc.im;
            }
            return Ok(out);
        }
        let r_modes = self.scenario.r();
        let mut out = vec![vec![0.0; r_modes]; d];
        for mode in 0..r_modes {
            let rows = &self.row_factors[mode];
            let core = (rows * &du * &self.q).to_owned();
            for k in 0..d {
                out[k][mode] = core[(k, k)].im;
            }
        }
        Ok(out)
    }

    /// The per-mode row factors `p_kᵀ(J̃₁Us)⁺[J̃₂/λ_k − J̃₁]` (row `k` of the
    /// `mode`-th matrix), needed by the covariance-based error expressions.
    pub fn row_factor(&self, mode: usize) -> &CMat {
        &self.row_factors[mode]
    }

    /// SLS row vectors `r_{k,SLS}ᵀ` stacked as rows (`d × dM`), 1-D only.
    pub fn sls_row_vectors(&self) -> Option<&CMat> {
        self.sls_rows.as_ref()
    }
}

/// Rows `r_{k,SLS}ᵀ` of the structured-least-squares error expansion:
/// the plain least-squares row minus the correction through the SLS normal
/// matrix.
fn build_sls_rows(
    s: &Scenario,
    sub: &SubspaceSet,
    sel: &SelectionPair,
    psi: &CMat,
    q: &CMat,
    p: &CMat,
    ls_rows: &CMat,
) -> Result<CMat> {
    let d = s.d;
    let m = sub.us.nrows();
    let j1u = (&sel.j1_eff * &sub.us).to_owned();
    let msel = j1u.nrows();
    let id = eye(d);
    let f_left = kron(&id, &j1u);
    let f_right =
        (kron(&psi.transpose().to_owned(), &sel.j1_eff) - kron(&id, &sel.j2_eff)).to_owned();
    let rows_f = msel * d;
    let mut f = CMat::zeros(rows_f, d * d + d * m);
    for jc in 0..d * d {
        for ir in 0..rows_f {
            f[(ir, jc)] = f_left[(ir, jc)];
        }
    }
    for jc in 0..d * m {
        for ir in 0..rows_f {
            f[(ir, d * d + jc)] = f_right[(ir, jc)];
        }
    }
    let ffh = (&f * f.adjoint()).to_owned();
    let ffh_inv = inverse(&ffh)?;
    let pinv = pinv_solve(&j1u, &eye(msel))?;
    let proj = (&j1u * &pinv).to_owned(); // J₁Us·(J₁Us)⁺
    let w_ru = (kron(&psi.transpose().to_owned(), &sel.j1_eff)
        + kron(&id, &(&proj * &sel.j2_eff).to_owned())
        - kron(&psi.transpose().to_owned(), &(&proj * &sel.j1_eff).to_owned())
        - kron(&id, &sel.j2_eff))
    .to_owned();
    let correction = (&ffh_inv * &w_ru).to_owned();
    let mut out = CMat::zeros(d, d * m);
    for k in 0..d {
        let lam_inv = C64::from_polar(1.0, -s.mu[k][0]);
        // first term: q_kᵀ ⊗ ls-row k
        for c in 0..d {
            for i in 0..m {
                out[(k, c * m + i)] = q[(c, k)] * ls_rows[(k, i)];
            }
        }
        // left vector (q_kᵀ ⊗ [p_kᵀ·(J₁Us)ᴴ/λ_k]) of length d·msel
        let mut pk_j1uh = CMat::zeros(1, msel);
        for cc in 0..msel {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..d {
                acc += p[(k, i)] * j1u[(cc, i)].conj();
            }
            pk_j1uh[(0, cc)] = acc * lam_inv;
        }
        let mut left = CMat::zeros(1, d * msel);
        for c in 0..d {
            for i in 0..msel {
                left[(0, c * msel + i)] = q[(c, k)] * pk_j1uh[(0, i)];
            }
        }
        let corr_row = (&left * &correction).to_owned();
        for c in 0..d * m {
            out[(k, c)] -= corr_row[(0, c)];
        }
    }
    Ok(out)
}
